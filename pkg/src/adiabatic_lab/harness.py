"""Epsilon sweeps, slope fits, the rank-one phase check and the identity suite."""

import csv
from dataclasses import asdict, dataclass, field
import json
import logging
import math
from typing import Optional

import numpy as np

from ._linalg import commutator, dagger, opnorm
from .calculus import (
    IdentityReport,
    TOLERANCES,
    check_interaction_identity,
    reduced_resolvent_defects,
    make_report,
    propagate_u1,
    reduced_resolvent_oracle,
    worst,
)
from .errors import DomainError, NotApplicableError, SweepError
from .generators import kato_generator, offdiag_part, phase_table
from .operators import eval_family
from .propagate import (
    DEFAULT_OUT_POINTS,
    DEFAULT_STEP_CONSTANT,
    ComparatorDiagnostics,
    FrameCache,
    comparator,
    evolve_adiabatic,
    evolve_phase,
    evolve_transport,
    evolve_true,
    grid_projectors,
    step_rule,
)
from .spectral import ContourSpec, policy_contour, projector_frame, quadrature_kernel, sandwich, split_spectrum

log = logging.getLogger(__name__)

SLOPE_WINDOW = (0.85, 1.15)
GUARD_LIMIT = 0.1
EXACT_THRESHOLD = 1e-9
#: smallest eps_max / eps_min accepted for a sweep (the default ladder has 8)
MIN_SPAN = 8.0
DEFAULT_EPSILONS = (0.1, 0.05, 0.025, 0.0125)
SWEEP_COLUMNS = (
    "model",
    "epsilon",
    "n_steps",
    "sup_error",
    "intertwine_defect",
    "q_block_defect",
    "p_block_defect",
    "guard_ratio",
)


def fit_loglog_slope(xs, ys):
    """OLS fit of ``log y = slope log x + intercept``; ``ci`` is twice the slope's standard error."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError("xs and ys must be 1-d arrays of equal length")
    if xs.size < 3:
        raise DomainError(f"a slope fit needs at least 3 points, got {xs.size}")
    if np.any(~np.isfinite(xs)) or np.any(~np.isfinite(ys)) or np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("log-log fit needs finite positive data")
    lx, ly = np.log(xs), np.log(ys)
    a = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ np.array([slope, intercept])
    dof = xs.size - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    return float(slope), float(intercept), 2.0 * se


@dataclass
class SweepPoint:
    epsilon: float
    n_steps: int
    diagnostics: ComparatorDiagnostics
    guard_estimate: float
    guard_ratio: float
    exact: bool
    excluded: Optional[str] = None
    traces: Optional[dict] = field(default=None, repr=False)

    def row(self, model):
        d = self.diagnostics
        return {
            "model": model,
            "epsilon": self.epsilon,
            "n_steps": self.n_steps,
            "sup_error": d.sup_error,
            "intertwine_defect": d.intertwine_defect,
            "q_block_defect": d.q_block_defect,
            "p_block_defect": d.p_block_defect,
            "guard_ratio": self.guard_ratio,
        }


@dataclass
class ScalingReport:
    model_label: str
    epsilons: list
    sup_errors: list
    intertwine_defects: list
    comparator_rows: list
    slope: Optional[float]
    slope_ci: Optional[float]
    accepted: bool
    verdict: str = "fit"
    intercept: Optional[float] = None
    points: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    block_slopes: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    @property
    def guard_ratios(self):
        return [p.guard_ratio for p in self.points if p.excluded is None]

    def rows(self):
        return [p.row(self.model_label) for p in self.points]

    def to_dict(self):
        return {
            "model": self.model_label,
            "settings": self.settings,
            "rows": self.rows(),
            "slope": self.slope,
            "ci": self.slope_ci,
            "accepted": self.accepted,
            "verdict": self.verdict,
            "block_slopes": self.block_slopes,
            "excluded": [{"epsilon": e, "reason": r} for e, r in self.excluded],
        }


def _check_ladder(epsilons):
    eps = [float(e) for e in epsilons]
    if any(not e > 0 for e in eps):
        raise SweepError(f"every epsilon must be positive, got {eps}")
    if len(set(eps)) != len(eps):
        raise SweepError("epsilon ladder contains duplicates")
    if len(eps) < 3:
        raise SweepError(f"a sweep needs at least 3 epsilon values, got {len(eps)}")
    eps = sorted(eps, reverse=True)
    if eps[0] / eps[-1] < MIN_SPAN * (1 - 1e-12):
        raise SweepError(f"epsilon ladder spans a factor {eps[0] / eps[-1]:.3g}, need at least {MIN_SPAN:g}")
    return eps


def sweep_point(
    m, eps, step_constant=DEFAULT_STEP_CONSTANT, cache=None, out_points=DEFAULT_OUT_POINTS, guard=True, keep_traces=False
):
    """One ladder point: ``U`` and ``V`` at ``n`` steps, plus the ``n/2`` guard run.

    With ``keep_traces`` the traces are kept under keys ``u``, ``v``, ``u2``, ``v2``.
    """
    cache = FrameCache(m) if cache is None else cache
    n = step_rule(eps, step_constant, out_points)
    p0 = cache.projector(0)
    u = evolve_true(m, eps, n, out_points)
    v = evolve_adiabatic(m, eps, n, out_points, cache=cache)
    diag = comparator(u, v, p0, grid_projectors(cache, u))
    exact = diag.sup_error <= EXACT_THRESHOLD
    est, ratio = float("nan"), float("nan")
    traces = {"u": u, "v": v} if keep_traces else None
    if guard:
        u2 = evolve_true(m, eps, n // 2, out_points)
        v2 = evolve_adiabatic(m, eps, n // 2, out_points, cache=cache)
        dd = (u.unitaries - v.unitaries) - (u2.unitaries - v2.unitaries)
        est = float(np.max(np.linalg.norm(dd, 2, axis=(-2, -1)))) / 3.0
        if keep_traces:
            traces.update(u2=u2, v2=v2)
        if not exact:
            ratio = est / diag.sup_error
    excluded = None
    if guard and not exact and not ratio <= GUARD_LIMIT:
        excluded = f"integrator guard ratio {ratio:.3g} exceeds {GUARD_LIMIT}"
    log.info("%s eps=%g n=%d sup=%.4g guard=%.3g", m.label, eps, n, diag.sup_error, ratio)
    return SweepPoint(float(eps), n, diag, est, ratio, exact, excluded, traces)


def epsilon_sweep(
    m,
    epsilons=DEFAULT_EPSILONS,
    step_constant=DEFAULT_STEP_CONSTANT,
    cache=None,
    out_points=DEFAULT_OUT_POINTS,
    keep_traces=False,
):
    """Measure ``sup_t ||U_eps - V||`` along a ladder and fit its log-log slope.

    Points whose step-halving Richardson estimate exceeds ``GUARD_LIMIT`` of
    the measured error are excluded (with the reason recorded), never
    adjusted.  If every point is below ``EXACT_THRESHOLD`` the verdict is
    ``"exact"`` and no slope is fitted.
    """
    eps = _check_ladder(epsilons)
    cache = FrameCache(m) if cache is None else cache
    points = [sweep_point(m, e, step_constant, cache, out_points, keep_traces=keep_traces) for e in eps]
    settings = {"epsilons": eps, "step_constant": step_constant, "out_points": out_points, "guard_limit": GUARD_LIMIT}
    kept = [p for p in points if p.excluded is None]
    excluded = [(p.epsilon, p.excluded) for p in points if p.excluded is not None]
    for e, why in excluded:
        log.warning("%s: epsilon %g excluded: %s", m.label, e, why)
    common = dict(
        model_label=m.label,
        epsilons=[p.epsilon for p in kept],
        sup_errors=[p.diagnostics.sup_error for p in kept],
        intertwine_defects=[p.diagnostics.intertwine_defect for p in kept],
        comparator_rows=[p.diagnostics for p in kept],
        points=points,
        excluded=excluded,
        settings=settings,
    )
    if kept and all(p.exact for p in kept) and len(kept) >= 3:
        return ScalingReport(slope=None, slope_ci=None, accepted=True, verdict="exact", **common)
    if len(kept) < 3:
        raise SweepError(f"{m.label}: only {len(kept)} epsilon values survived the integrator guard")
    xs = common["epsilons"]
    slope, intercept, ci = fit_loglog_slope(xs, common["sup_errors"])
    blocks = {}
    for key in ("q_block_defect", "p_block_defect"):
        ys = [getattr(p.diagnostics, key) for p in kept]
        blocks[key] = fit_loglog_slope(xs, ys)[0] if min(ys) > 0 else None
    accepted = SLOPE_WINDOW[0] <= slope <= SLOPE_WINDOW[1]
    return ScalingReport(
        slope=slope, slope_ci=ci, accepted=bool(accepted), verdict="fit", intercept=intercept, block_slopes=blocks, **common
    )


@dataclass
class PhaseCheckReport:
    model_label: str
    epsilon: float
    n_steps: int
    times: np.ndarray
    v_deviation: np.ndarray
    true_deviation: np.ndarray
    phase_deviation: np.ndarray
    commutation_defect: float
    transport_defect: float
    integrator_tolerance: float
    records: list

    @property
    def sup_v_deviation(self):
        return float(np.max(self.v_deviation))

    @property
    def sup_true_deviation(self):
        return float(np.max(self.true_deviation))

    @property
    def sup_phase_deviation(self):
        return float(np.max(self.phase_deviation))

    def summary(self):
        return {
            "model": self.model_label,
            "epsilon": self.epsilon,
            "n_steps": self.n_steps,
            "sup_v_deviation": self.sup_v_deviation,
            "sup_true_deviation": self.sup_true_deviation,
            "sup_phase_deviation": self.sup_phase_deviation,
            "commutation_defect": self.commutation_defect,
            "transport_defect": self.transport_defect,
            "integrator_tolerance": self.integrator_tolerance,
        }


def rank_one_phase_check(
    m, eps, n_steps=None, step_constant=DEFAULT_STEP_CONSTANT, cache=None, phase_intervals=2000, traces=None
):
    """Compare ``V phi(0)``, ``psi_true`` and ``Phi`` with the closed-form phase.

    Per output time:

    * ``v_deviation = ||V(t) phi(0) - exp(-i lam) phi(t)||``, exact up to
      integrator error;
    * ``true_deviation = ||U(t) phi(0) - exp(-i lam) phi(t)||``, ``O(eps)``;
    * ``phase_deviation = |<phi(0)|Phi(t) phi(0)> - exp(-i lam_dyn)|`` with
      ``lam_dyn`` the integral of ``e0/eps + e1`` only (``W`` already carries
      the geometric part).

    ``integrator_tolerance`` is the step-halving Richardson estimate of the
    ``V`` and ``W`` snapshots.  ``traces`` may supply ``u``, ``v`` and ``v2``
    (for example from a sweep point) to avoid recomputing them.
    """
    cf = m.known_closed_form
    if cf is None:
        raise NotApplicableError(f"{m.label}: phase check needs a closed form")
    cache = FrameCache(m) if cache is None else cache
    if cache.vectors(0, 1).shape[1] != 1:
        raise NotApplicableError(f"{m.label}: phase check needs rank(P0) = 1")
    n = step_rule(eps, step_constant) if n_steps is None else int(n_steps)
    out = DEFAULT_OUT_POINTS
    traces = dict(traces or {})
    if "v" in traces:
        n = traces["v"].n_steps
    u = traces.get("u") or evolve_true(m, eps, n, out)
    v = traces.get("v") or evolve_adiabatic(m, eps, n, out, cache=cache)
    w = evolve_transport(m, n, out, cache=cache)
    phi_tr = evolve_phase(m, eps, w_trace=w, v_trace=v, cache=cache)
    v2 = traces.get("v2") or evolve_adiabatic(m, eps, n // 2, out, cache=cache)
    w2 = evolve_transport(m, n // 2, out, cache=cache)
    tol = max(
        float(np.max(np.linalg.norm(v.unitaries - v2.unitaries, 2, axis=(-2, -1)))),
        float(np.max(np.linalg.norm(w.unitaries - w2.unitaries, 2, axis=(-2, -1)))),
    ) / 3.0

    stride = phase_intervals // (out - 1)
    records = phase_table(m, eps, phase_intervals, stride)
    if not np.allclose([r.t for r in records], v.times, rtol=0, atol=1e-14):
        raise NotApplicableError("phase table and trace grids disagree")
    phi0 = np.asarray(cf.phi(0.0), dtype=complex)
    v_dev, u_dev, ph_dev = [], [], []
    for k, rec in enumerate(records):
        target = np.exp(-1j * rec.lam) * np.asarray(cf.phi(rec.t), dtype=complex)
        v_dev.append(np.linalg.norm(v.unitaries[k] @ phi0 - target))
        u_dev.append(np.linalg.norm(u.unitaries[k] @ phi0 - target))
        overlap = np.vdot(phi0, phi_tr.unitaries[k] @ phi0)
        ph_dev.append(abs(overlap - np.exp(-1j * rec.dynamical)))
    p_grid = grid_projectors(cache, w)
    p0 = cache.projector(0)
    transport = float(np.max(np.linalg.norm(w.unitaries @ p0 @ dagger(w.unitaries) - p_grid, 2, axis=(-2, -1))))
    return PhaseCheckReport(
        m.label,
        float(eps),
        n,
        v.times,
        np.array(v_dev),
        np.array(u_dev),
        np.array(ph_dev),
        phi_tr.step_stats["commutation_defect"],
        transport,
        tol,
        records,
    )


def random_gapped_instance(rng, dim_range=(2, 16), nodes=128):
    """Random Hermitian ``H`` with a separated inside group, a contour for it and a random ``B``.

    Inside eigenvalues lie in ``[-0.5, 0.5]``; outside ones have modulus in
    ``[3, 6]``.
    """
    d = int(rng.integers(dim_range[0], dim_range[1] + 1))
    r = int(rng.integers(1, d))
    e_in = rng.uniform(-0.5, 0.5, r)
    e_out = rng.uniform(3.0, 6.0, d - r) * rng.choice([-1.0, 1.0], d - r)
    e = np.concatenate([e_in, e_out])
    inside = np.arange(d) < r
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, _ = np.linalg.qr(z)
    h = (q * e) @ dagger(q)
    h = 0.5 * (h + dagger(h))
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return h, b, policy_contour(e, inside, nodes)


def oracle_agreement(n_instances=100, seed=0, nodes=128):
    """Worst ``||R_quadrature(B) - R_residue(B)||`` over seeded random instances."""
    rng = np.random.default_rng(seed)
    worst_defect = 0.0
    for _ in range(n_instances):
        h, b, c = random_gapped_instance(rng, nodes=nodes)
        diff = opnorm(sandwich(h, b, c, method="solve") - reduced_resolvent_oracle(h, b, c))
        worst_defect = max(worst_defect, diff)
    return make_report("quadrature_vs_residue_oracle", worst_defect, float("nan"), "structural")


def _tol(overrides, label, cls):
    return overrides.get(label, TOLERANCES[cls])


def identity_suite(
    m,
    eps=0.05,
    n_grid=101,
    n_random=20,
    seed=0,
    method="spectral",
    interaction_points=11,
    dynamics=True,
    n_steps=None,
    cache=None,
    tolerances=None,
    oracle_instances=100,
):
    """One worst-case :class:`IdentityReport` per identity for model ``m``.

    Gap violations propagate as exceptions rather than being turned into
    reports, so a broken contour can never pass.
    """
    over = dict(tolerances or {})
    rng = np.random.default_rng(seed)
    dim = m.dim
    rand_b = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)) for _ in range(n_random)]
    ts = np.linspace(0.0, 1.0, n_grid)
    acc = {}

    def put(label, defect, t, cls):
        acc.setdefault(label, []).append(make_report(label, defect, t, cls, _tol(over, label, cls)))

    for t in ts:
        t = float(t)
        c = m.contour_at(t)
        h0 = eval_family(m.h0, t)
        h1 = eval_family(m.h1, t)
        frame = projector_frame(m, t, c, method=method)
        e, vecs, _ = split_spectrum(h0, c, guard=c.radius * 1e-6)
        kern = quadrature_kernel(e, c)

        def rr(b):
            return vecs @ (kern * (dagger(vecs) @ b @ vecs)) @ dagger(vecs)

        h1a = offdiag_part(h1, frame)
        k0 = kato_generator(frame)
        bs = [("H1a-K0", h1a - k0)] + [("random", b) for b in rand_b]
        worst_abc = {"H1a-K0": [0.0, 0.0, 0.0], "random": [0.0, 0.0, 0.0]}
        for tag, b in bs:
            a, bb, cc = reduced_resolvent_defects(h0, frame.p, rr(b), rr(dagger(b)), b)
            cur = worst_abc[tag]
            worst_abc[tag] = [max(cur[0], a), max(cur[1], bb), max(cur[2], cc)]
        for tag, vals in worst_abc.items():
            if tag == "random" and not n_random:
                continue
            for name, val in zip(("rr_commutator", "rr_offdiagonal", "rr_adjoint"), vals):
                put(f"{name}[B={tag}]", val, t, "quadrature")

        p, q = frame.p, frame.q
        put("proj_p_pdot_p", opnorm(p @ frame.p_dot @ p), t, "structural")
        gen = h0 + eps * (h1 - h1a)
        put("effective_commutation", opnorm(commutator(gen, p)), t, "structural")
        for name, x in (("h1a_hermitian_offdiagonal", h1a), ("k0_hermitian_offdiagonal", k0)):
            d = max(opnorm(x - dagger(x)), opnorm(p @ x @ p), opnorm(q @ x @ q))
            put(name, d, t, "exact")

    # the interaction-picture identity, with U1 carried along a coarse grid
    u1 = np.eye(dim, dtype=complex)
    t_prev = 0.0
    for t in np.linspace(0.0, 1.0, interaction_points):
        t = float(t)
        u1 = propagate_u1(m, t, t0=t_prev, u0=u1)
        t_prev = t
        r = check_interaction_identity(m, t, u1=u1, method=method)
        put(r.label, r.defect, t, "fd")

    # contour quadrature through dense solves agrees with the eigenbasis path
    for t in (0.0, 0.5, 1.0):
        c = m.contour_at(t)
        h0 = eval_family(m.h0, t)
        b = rand_b[0] if rand_b else eval_family(m.h1, t)
        d = opnorm(sandwich(h0, b, c, "solve") - sandwich(h0, b, c, "spectral"))
        put("solve_vs_spectral_quadrature", d, t, "quadrature")

    reports = [worst(v, k) for k, v in acc.items()]

    if oracle_instances:
        r = oracle_agreement(oracle_instances, seed)
        reports.append(make_report(r.label, r.defect, r.t_worst, "structural", _tol(over, r.label, "structural")))

    if dynamics:
        reports.extend(dynamic_reports(m, eps, n_steps, cache, over))
    return reports


def dynamic_reports(m, eps, n_steps=None, cache=None, tolerances=None):
    """Intertwining of ``V``, transport by ``W`` and ``[Phi, P0(0)]``."""
    over = dict(tolerances or {})
    cache = FrameCache(m) if cache is None else cache
    n = step_rule(eps) if n_steps is None else n_steps
    v = evolve_adiabatic(m, eps, n, cache=cache)
    w = evolve_transport(m, n, cache=cache)
    phi = evolve_phase(m, eps, w_trace=w, v_trace=v, cache=cache)
    p0 = cache.projector(0)
    pg = grid_projectors(cache, v)

    def sup_at(stack):
        norms = np.linalg.norm(stack, 2, axis=(-2, -1))
        k = int(np.argmax(norms))
        return float(norms[k]), float(v.times[k])

    out = []
    for label, stack, tol in (
        ("intertwining_V", v.unitaries @ p0 - pg @ v.unitaries, 1e-7),
        ("transport_W", w.unitaries @ p0 @ dagger(w.unitaries) - pg, 1e-8),
        ("phase_commutation_Phi", phi.unitaries @ p0 - p0 @ phi.unitaries, 1e-8),
    ):
        d, t = sup_at(stack)
        out.append(make_report(label, d, t, "structural", over.get(label, tol)))
    return out


def negative_control(m, t=0.0):
    """Run the suite's first step with a contour through an eigenvalue of ``H0(t)``.

    Returns the raised exception; a value would mean the broken contour slipped through.
    """
    e = np.linalg.eigvalsh(eval_family(m.h0, t))
    c = ContourSpec(e[0] + 1.0, 1.0, 64)
    try:
        projector_frame(m, t, c, method="spectral")
    except Exception as exc:  # noqa: BLE001
        return exc
    return None


# --- writers -----------------------------------------------------------


def _clean(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(reports, path):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for rep in reports:
            for row in rep.rows():
                wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_phases_csv(records, path):
    cols = ("t", "epsilon", "e0", "e1", "berry", "lambda")
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        wr.writeheader()
        for rec in records:
            wr.writerow({k: repr(float(v)) for k, v in rec.row().items()})


def identity_reports_json(reports):
    return [r.to_dict() for r in reports]


def comparator_dict(d):
    return asdict(d)


__all__ = [
    "IdentityReport",
    "PhaseCheckReport",
    "ScalingReport",
    "SweepPoint",
    "dynamic_reports",
    "epsilon_sweep",
    "fit_loglog_slope",
    "identity_suite",
    "negative_control",
    "oracle_agreement",
    "rank_one_phase_check",
    "sweep_point",
    "write_json",
    "write_phases_csv",
    "write_sweep_csv",
]
