"""Command-line front end: ``adiabatic-lab <subcommand> [--config F] [--out DIR] [--seed N]``.

Exit codes: 0 every check passed, 2 some check failed, 1 usage, config or
sweep-precondition error.  stdout carries a single summary line; logs go to
stderr.

Config files are flat ``key = value`` lines with ``#`` comments; lists are
comma separated.  Unknown keys are rejected.  Tolerance overrides use
``tol.<report label> = value``.
"""

import argparse
from dataclasses import asdict, dataclass, field
import logging
import math
import os
import sys

import numpy as np

from . import harness
from .errors import AdiabaticLabError, ConfigError, NotApplicableError, SweepError
from .operators import build_rank_one_grid, build_rotating_two_level, load_model_file
from .propagate import FrameCache, evolve_adiabatic, evolve_true, save_trace, step_rule
from .spectral import projector_derivative_fd, projector_frame

log = logging.getLogger("adiabatic_lab")

SUBCOMMANDS = ("identities", "sweep", "phase", "projectors", "all")
MODELS = ("rotating", "rank_one", "from_file")
PHASE_RATIO_WINDOW = (1.6, 2.4)


@dataclass
class RunConfig:
    model: str = "rotating"
    gap: float = 2.0
    rate: float = 1.0
    h1_diag: tuple = (0.3, -0.2)
    h1_offdiag: float = 0.5
    n: int = 64
    L: float = 10.0
    w0: float = 1.0
    kappa: float = 1.0
    x0: float = 1.0
    beta0: float = 1.0
    beta1: float = 0.5
    model_file: str = ""
    epsilons: tuple = (0.1, 0.05, 0.025, 0.0125)
    step_constant: float = 200.0
    nodes: int = 64
    out_dir: str = "out"
    seed: int = 0
    n_random: int = 20
    identity_epsilon: float = 0.05
    save_traces: bool = False
    tolerances: dict = field(default_factory=dict)


def _real(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not a finite number")
    return v


def _int(s):
    v = float(s)
    if not v.is_integer():
        raise ValueError("not an integer")
    return int(v)


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _reals(s):
    return tuple(_real(x) for x in s.split(",") if x.strip())


def _positive(v):
    return v > 0 if not isinstance(v, tuple) else all(x > 0 for x in v)


# key -> (parser, check, message)
_SPEC = {
    "model": (str, lambda v: v in MODELS, f"must be one of {', '.join(MODELS)}"),
    "gap": (_real, _positive, "must be positive"),
    "rate": (_real, None, None),
    "h1_diag": (_reals, lambda v: len(v) == 2, "needs two values"),
    "h1_offdiag": (_real, None, None),
    "n": (_int, lambda v: v >= 8, "must be an integer >= 8"),
    "L": (_real, _positive, "must be positive"),
    "w0": (_real, None, None),
    "kappa": (_real, None, None),
    "x0": (_real, None, None),
    "beta0": (_real, _positive, "must be positive"),
    "beta1": (_real, None, None),
    "model_file": (str, None, None),
    "epsilons": (_reals, lambda v: len(v) > 0 and _positive(v), "must be a nonempty list of positive values"),
    "step_constant": (_real, _positive, "must be positive"),
    "nodes": (_int, lambda v: v >= 16 and v % 2 == 0, "must be an even integer >= 16"),
    "out_dir": (str, lambda v: bool(v), "must not be empty"),
    "seed": (_int, lambda v: v >= 0, "must be a nonnegative integer"),
    "n_random": (_int, lambda v: v >= 0, "must be a nonnegative integer"),
    "identity_epsilon": (_real, _positive, "must be positive"),
    "save_traces": (_bool, None, None),
}


def parse_config(text):
    """Parse flat ``key = value`` text into a validated :class:`RunConfig`."""
    values = {}
    tolerances = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key (first on line {seen[key]})", line=lineno, key=key)
        seen[key] = lineno
        if key.startswith("tol."):
            label = key[4:]
            try:
                tol = _real(val)
            except ValueError as exc:
                raise ConfigError(f"malformed value {val!r}: {exc}", line=lineno, key=key) from None
            if not label or not tol > 0:
                raise ConfigError("tolerance override must name a label and be positive", line=lineno, key=key)
            tolerances[label] = tol
            continue
        if key not in _SPEC:
            raise ConfigError("unknown key", line=lineno, key=key)
        parse, check, msg = _SPEC[key]
        try:
            v = parse(val)
        except ValueError as exc:
            raise ConfigError(f"malformed value {val!r}: {exc}", line=lineno, key=key) from None
        if check is not None and not check(v):
            raise ConfigError(f"{msg}, got {val!r}", line=lineno, key=key)
        values[key] = v
    cfg = RunConfig(**values, tolerances=tolerances)
    if cfg.beta0 + min(0.0, cfg.beta1) <= 0:
        raise ConfigError("beta0 + min(0, beta1) must be positive", line=seen.get("beta1", seen.get("beta0")), key="beta1")
    if cfg.model == "from_file" and not cfg.model_file:
        raise ConfigError("model = from_file needs model_file", line=seen.get("model"), key="model_file")
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def build_model(cfg):
    if cfg.model == "rotating":
        a, d = cfg.h1_diag
        h1 = [[a, cfg.h1_offdiag], [cfg.h1_offdiag, d]]
        return build_rotating_two_level(cfg.gap, cfg.rate, h1, nodes=cfg.nodes)
    if cfg.model == "rank_one":
        return build_rank_one_grid(
            cfg.n, cfg.L, beta0=cfg.beta0, beta1=cfg.beta1, x0=cfg.x0, kappa=cfg.kappa, w0=cfg.w0, nodes=cfg.nodes
        )
    return load_model_file(cfg.model_file, nodes=cfg.nodes)


def settings_dict(cfg):
    d = asdict(cfg)
    d.pop("out_dir")
    return d


class Run:
    """State shared by the subcommands of one invocation."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = build_model(cfg)
        self.cache = FrameCache(self.model)
        self.report = {
            "model": self.model.label,
            "settings": settings_dict(cfg),
            "rows": [],
            "slope": None,
            "ci": None,
            "accepted": None,
            "identity_reports": [],
        }
        self.failures = []
        self.summary = []
        self.traces = {}
        os.makedirs(cfg.out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.cfg.out_dir, name)

    def identities(self):
        reps = harness.identity_suite(
            self.model,
            eps=self.cfg.identity_epsilon,
            n_random=self.cfg.n_random,
            seed=self.cfg.seed,
            cache=self.cache,
            tolerances=self.cfg.tolerances,
        )
        dicts = harness.identity_reports_json(reps)
        self.report["identity_reports"] = dicts
        harness.write_json({"model": self.model.label, "seed": self.cfg.seed, "identity_reports": dicts}, self.path("identities.json"))
        bad = [r.label for r in reps if not r.passed]
        for r in reps:
            log.info("identity %-40s defect %.3e tol %.0e %s", r.label, r.defect, r.tolerance, "pass" if r.passed else "FAIL")
        self.failures += [f"identity {b}" for b in bad]
        self.summary.append(f"identities {len(reps) - len(bad)}/{len(reps)} pass")

    def sweep(self):
        keep = self.model.known_closed_form is not None
        rep = harness.epsilon_sweep(self.model, self.cfg.epsilons, self.cfg.step_constant, cache=self.cache, keep_traces=keep)
        self.traces = {p.epsilon: p.traces for p in rep.points if p.traces}
        self.report.update({k: v for k, v in rep.to_dict().items() if k not in ("model", "settings")})
        harness.write_sweep_csv([rep], self.path("sweep.csv"))
        if self.cfg.save_traces:
            self._save_traces()
        if not rep.accepted:
            self.failures.append("sweep slope")
        if rep.verdict == "exact":
            self.summary.append("sweep exact")
        else:
            self.summary.append(f"slope {rep.slope:.3f}+-{rep.slope_ci:.3f} {'accepted' if rep.accepted else 'rejected'}")

    def _save_traces(self):
        tdir = self.path("traces")
        os.makedirs(tdir, exist_ok=True)
        for eps in self.cfg.epsilons:
            n = step_rule(eps, self.cfg.step_constant)
            save_trace(evolve_true(self.model, eps, n), os.path.join(tdir, f"U_eps{eps:g}.trace"))
            save_trace(evolve_adiabatic(self.model, eps, n, cache=self.cache), os.path.join(tdir, f"V_eps{eps:g}.trace"))

    def phase(self):
        eps_list = sorted(self.cfg.epsilons, reverse=True)
        records, rows = [], []
        for eps in eps_list:
            r = harness.rank_one_phase_check(
                self.model, eps, step_constant=self.cfg.step_constant, cache=self.cache, traces=self.traces.pop(eps, None)
            )
            records += r.records
            rows.append(r.summary())
            if not r.sup_phase_deviation <= 10 * r.integrator_tolerance + 1e-12:
                self.failures.append(f"phase overlap at eps={eps}")
        harness.write_phases_csv(records, self.path("phases.csv"))
        ratios = [a["sup_true_deviation"] / b["sup_true_deviation"] for a, b in zip(rows, rows[1:])]
        for (e1, e2), q in zip(zip(eps_list, eps_list[1:]), ratios):
            if abs(e1 / e2 - 2) < 1e-9 and not PHASE_RATIO_WINDOW[0] <= q <= PHASE_RATIO_WINDOW[1]:
                self.failures.append(f"phase halving ratio {q:.3f} at eps={e2}")
        self.report["phase"] = {"rows": rows, "halving_ratios": ratios}
        self.summary.append("phase " + " ".join(f"{q:.2f}" for q in ratios))

    def projectors(self, n_grid=101, fd_tol=1e-6):
        rows = []
        for t in np.linspace(0.0, 1.0, n_grid):
            t = float(t)
            fr = projector_frame(self.model, t, method="solve")
            fd = float(np.linalg.norm(fr.p_dot - projector_derivative_fd(self.model, t), 2))
            rows.append({"t": t, "rank": fr.rank, "gap_margin": fr.gap_margin, "fd_defect": fd})
        ranks = {r["rank"] for r in rows}
        worst_fd = max(r["fd_defect"] for r in rows)
        if len(ranks) != 1:
            self.failures.append("projector rank changes")
        if worst_fd > fd_tol:
            self.failures.append("contour vs finite-difference P0'")
        self.report["projectors"] = {"rows": rows, "worst_fd_defect": worst_fd, "min_gap_margin": min(r["gap_margin"] for r in rows)}
        self.summary.append(f"projectors rank {sorted(ranks)} fd {worst_fd:.1e}")

    def finish(self):
        self.report["failures"] = self.failures
        harness.write_json(self.report, self.path("report.json"))


def dispatch(subcommand, cfg):
    """Run ``subcommand`` and return its exit code."""
    if subcommand not in SUBCOMMANDS:
        log.error("unknown subcommand %r", subcommand)
        return 1
    try:
        run = Run(cfg)
        if subcommand in ("projectors", "all"):
            run.projectors()
        if subcommand in ("identities", "all"):
            run.identities()
        if subcommand in ("sweep", "all"):
            run.sweep()
        if subcommand == "phase" or (subcommand == "all" and run.model.known_closed_form is not None):
            run.phase()
        run.finish()
    except (SweepError, NotApplicableError, ConfigError) as exc:
        log.error("%s", exc)
        print(f"{subcommand}: error: {exc}")
        return 1
    except AdiabaticLabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"{subcommand}: error: {exc}")
        return 1
    status = 2 if run.failures else 0
    for f in run.failures:
        log.error("failed: %s", f)
    print(f"{subcommand} {run.model.label}: " + "; ".join(run.summary) + (" FAIL" if status else " PASS"))
    return status


def make_parser():
    p = argparse.ArgumentParser(prog="adiabatic-lab", description="Adiabatic approximant checks.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("config: %s", exc)
        print(f"config error: {exc}")
        return 1
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        if args.seed < 0:
            print("config error: seed must be nonnegative")
            return 1
        cfg.seed = args.seed
    return dispatch(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
