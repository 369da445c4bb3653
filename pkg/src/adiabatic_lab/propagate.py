"""Unitary propagation of ``U_eps``, ``V``, ``W`` and ``Phi = W^-1 V`` on ``[0, 1]``.

All evolutions step on ``t_k = k/n`` and keep snapshots on a decimated
output grid (101 points by default).  Time points are handled as integer
fractions ``j/d`` so projector frames computed for one step count can be
reused by any other count on a nested grid (see :class:`FrameCache`).

Two integrators produce ``V``:

``"split"`` (default)
    ``V_{k+1} = T(P_mid -> P_{k+1}) exp(-i h G_mid / eps) T(Phat_k -> P_mid) V_k``
    with ``G = H0 + eps H1 - eps H1^a`` (which commutes with ``P0``) and
    ``T`` the direct rotation between projectors.  ``Phat_k = V_k P0(0) V_k*``
    so each step maps ``ran V_k P0(0)`` exactly onto ``ran P0(t_{k+1})`` and
    the intertwining defect stays at roundoff for every ``eps``.  The product
    of direct rotations is a second-order discretization of the transport
    generated by ``K0``.
``"midpoint"``
    Plain midpoint exponentials of the full effective generator
    (``K0`` from the contour formula).  Same limit, but the intertwining
    defect is a discretization error ``O(h^2 / eps)``.
"""

from dataclasses import dataclass, field
import json
from math import gcd
from typing import Optional

import numpy as np

from ._linalg import dagger, direct_rotation, hermitian_part, opnorm
from .errors import GridMismatchError, IntegratorError, ParameterError
from .generators import effective_generator
from .operators import HERMITIAN_ERROR
from .spectral import split_spectrum

DEFAULT_OUT_POINTS = 101
DEFAULT_STEP_CONSTANT = 200.0
CHUNK = 256
UNITARITY_TOL = 1e-9


@dataclass
class EvolutionTrace:
    label: str
    epsilon: Optional[float]
    times: np.ndarray
    unitaries: np.ndarray
    step_stats: dict = field(default_factory=dict)
    unitarity_defect: float = 0.0
    n_steps: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.unitaries = np.asarray(self.unitaries, dtype=complex)
        if self.unitaries.shape[0] != self.times.size:
            raise GridMismatchError("one snapshot per time point required")
        if self.times[0] != 0.0 or self.times[-1] != 1.0 or np.any(np.diff(self.times) <= 0):
            raise GridMismatchError("times must increase from 0 to 1")
        if not self.unitarity_defect:
            self.unitarity_defect = unitarity_defect(self.unitaries)

    @property
    def dim(self):
        return self.unitaries.shape[-1]

    def at(self, t):
        k = int(np.searchsorted(self.times, t))
        if k >= self.times.size or self.times[k] != t:
            raise GridMismatchError(f"t={t} is not on the output grid")
        return self.unitaries[k]


@dataclass(frozen=True)
class ComparatorDiagnostics:
    epsilon: float
    sup_error: float
    q_block_defect: float
    p_block_defect: float
    intertwine_defect: float


def unitarity_defect(us):
    """``max_k || U_k* U_k - I ||`` over a stack."""
    us = np.asarray(us)
    eye = np.eye(us.shape[-1])
    return float(np.max(np.linalg.norm(dagger(us) @ us - eye, 2, axis=(-2, -1))))


def _stack_norms(a):
    return np.linalg.norm(a, 2, axis=(-2, -1))


def step_rule(eps, step_constant=DEFAULT_STEP_CONSTANT, out_points=DEFAULT_OUT_POINTS):
    """``n = ceil(c / eps)`` rounded up to a multiple of ``2 (out_points - 1)``.

    The rounding keeps both ``n`` and the guard run ``n/2`` aligned with the
    output grid.
    """
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if not step_constant > 0:
        raise ParameterError(f"step constant must be positive, got {step_constant}")
    block = 2 * (out_points - 1)
    n = int(np.ceil(step_constant / eps - 1e-9))
    return -(-n // block) * block


def output_indices(n_steps, out_points=DEFAULT_OUT_POINTS):
    """Step indices kept as snapshots: ``k/n`` for an evenly decimated grid."""
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if out_points is None or out_points >= n_steps + 1:
        return np.arange(n_steps + 1)
    if n_steps % (out_points - 1) == 0:
        return np.arange(0, n_steps + 1, n_steps // (out_points - 1))
    return np.unique(np.round(np.linspace(0, n_steps, out_points)).astype(int))


def _canon(j, d):
    g = gcd(int(j), int(d))
    return int(j) // g, int(d) // g


def _expm_stack(g, tau):
    e, v = np.linalg.eigh(g)
    return (v * np.exp(-1j * tau * e)[..., None, :]) @ dagger(v)


def _check_hermitian_stack(g, t_first):
    scale = np.maximum(1.0, np.max(np.abs(g), axis=(-2, -1)))
    defect = np.max(np.abs(g - dagger(g)), axis=(-2, -1)) / scale
    k = int(np.argmax(defect))
    if defect[k] > HERMITIAN_ERROR:
        raise IntegratorError(f"generator is not Hermitian near t={t_first[k]:.6g} (defect {defect[k]:.2e})")


def _run(step_factors, n_steps, dim, out_points, label, epsilon, stats=None):
    """Multiply per-step unitaries produced chunkwise by ``step_factors(k0, k1)``."""
    keep = output_indices(n_steps, out_points)
    snaps = np.empty((keep.size, dim, dim), dtype=complex)
    u = np.eye(dim, dtype=complex)
    snaps[0] = u
    slot = 1
    for k0 in range(0, n_steps, CHUNK):
        k1 = min(n_steps, k0 + CHUNK)
        for k, f in zip(range(k0, k1), step_factors(k0, k1)):
            u = f @ u
            if slot < keep.size and keep[slot] == k + 1:
                snaps[slot] = u
                slot += 1
    times = keep / n_steps
    stats = dict(stats or {})
    stats.setdefault("h", 1.0 / n_steps)
    return EvolutionTrace(label, epsilon, times, snaps, stats, n_steps=n_steps)


def evolve_unitary(gen, eps_scale=1.0, n_steps=100, out_points=DEFAULT_OUT_POINTS, label="custom", epsilon=None):
    """Midpoint exponential stepping ``U_{k+1} = exp(-i h gen(t_mid) / eps_scale) U_k``.

    ``gen`` maps ``t`` to a Hermitian matrix.  Each exponential is formed from
    an eigendecomposition, so every step is unitary up to roundoff; the global
    order is 2 in ``h = 1/n_steps``.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if not eps_scale > 0:
        raise ParameterError(f"eps_scale must be positive, got {eps_scale}")
    h = 1.0 / n_steps
    probe = np.asarray(gen(0.5 * h))
    dim = probe.shape[-1]

    def factors(k0, k1):
        ts = (np.arange(k0, k1) + 0.5) * h
        g = np.stack([np.asarray(gen(t), dtype=complex) for t in ts])
        _check_hermitian_stack(g, ts)
        return _expm_stack(hermitian_part(g), h / eps_scale)

    return _run(factors, n_steps, dim, out_points, label, epsilon)


class FrameCache:
    """Eigenvectors spanning ``ran P0(j/d)``, keyed by the reduced fraction ``j/d``.

    Only the ``dim x rank`` block is stored; projectors are rebuilt on demand.
    One cache serves every step count of a sweep because the midpoint and
    endpoint grids of ``n`` and ``n/2`` steps are nested.
    """

    def __init__(self, m):
        self.m = m
        self._vecs = {}

    def __len__(self):
        return len(self._vecs)

    def _fill(self, keys):
        missing = sorted({k for k in keys if k not in self._vecs})
        for i in range(0, len(missing), CHUNK):
            block = missing[i : i + CHUNK]
            ts = [j / d for j, d in block]
            hs = np.stack([self.m.h0.eval(t) for t in ts])
            es, vs = np.linalg.eigh(hs)
            for key, t, e, v in zip(block, ts, es, vs):
                c = self.m.contour_at(t)
                if np.min(c.distance(e)) <= c.radius * 1e-6:
                    split_spectrum(self.m.h0.eval(t), c, guard=c.radius * 1e-6)
                self._vecs[key] = np.ascontiguousarray(v[:, c.contains(e)])

    def vectors(self, j, d):
        key = _canon(j, d)
        self._fill([key])
        return self._vecs[key]

    def projectors(self, js, d):
        keys = [_canon(j, d) for j in js]
        self._fill(keys)
        vs = np.stack([self._vecs[k] for k in keys])
        return vs @ dagger(vs)

    def projector(self, t_num, t_den=1):
        v = self.vectors(t_num, t_den)
        return v @ dagger(v)


def _frame_cache(m, cache):
    if cache is None:
        return FrameCache(m)
    if cache.m is not m:
        raise ParameterError("frame cache belongs to a different model")
    return cache


def _h_stack(fam, ts):
    return np.stack([fam.eval(t) for t in ts])


def evolve_true(m, eps, n_steps, out_points=DEFAULT_OUT_POINTS):
    """``i eps U' = (H0 + eps H1) U`` by midpoint exponentials."""
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")

    def gen(t):
        return m.h0.eval(t) + eps * m.h1.eval(t)

    return evolve_unitary(gen, eps, n_steps, out_points, label="true_U", epsilon=float(eps))


def _transported(step_factors_fn, m, n_steps, cache, out_points, label, epsilon):
    """Shared driver for the split integrators of ``V`` and ``W``.

    ``step_factors_fn(k0, k1, p_mid, p_end)`` returns per-step pairs
    ``(E_k, T_k)`` so that ``U_{k+1} = T_k E_k T(Phat_k -> P_mid) U_k``.
    """
    d = 2 * n_steps
    dim = m.dim
    v0 = cache.vectors(0, 1)
    keep = output_indices(n_steps, out_points)
    snaps = np.empty((keep.size, dim, dim), dtype=complex)
    eye = np.eye(dim, dtype=complex)
    u = eye.copy()
    snaps[0] = u
    slot = 1
    worst_anchor = 0.0
    for k0 in range(0, n_steps, CHUNK):
        k1 = min(n_steps, k0 + CHUNK)
        ks = np.arange(k0, k1)
        p_mid = cache.projectors(2 * ks + 1, d)
        p_end = cache.projectors(2 * ks + 2, d)
        inner, outer = step_factors_fn(k0, k1, p_mid, p_end)
        for i, k in enumerate(ks):
            # orthonormalize: a slightly non-idempotent anchor makes T non-unitary
            # and the error feeds back through the next anchor
            y = np.linalg.qr(u @ v0)[0]
            p_hat = y @ dagger(y)
            u = outer[i] @ (inner[i] @ (direct_rotation(p_hat, p_mid[i]) @ u))
            # one Newton-Schulz step keeps U*U = I at roundoff instead of letting it drift like n
            u = u @ (1.5 * eye - 0.5 * (dagger(u) @ u))
            if slot < keep.size and keep[slot] == k + 1:
                snaps[slot] = u
                worst_anchor = max(worst_anchor, opnorm(p_hat - cache.projector(2 * k, d)))
                slot += 1
    stats = {"h": 1.0 / n_steps, "integrator": "split", "anchor_drift": worst_anchor}
    return EvolutionTrace(label, epsilon, keep / n_steps, snaps, stats, n_steps=n_steps)


def evolve_adiabatic(m, eps, n_steps, out_points=DEFAULT_OUT_POINTS, method="split", cache=None):
    """Approximant ``V`` generated by ``(H0 + eps H1 - eps H1^a + eps K0) / eps``."""
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if method == "midpoint":

        def gen(t):
            return effective_generator(m, t, eps, method="spectral")

        tr = evolve_unitary(gen, eps, n_steps, out_points, label="adiabatic_V", epsilon=float(eps))
        tr.step_stats["integrator"] = "midpoint"
        return tr
    if method != "split":
        raise ParameterError(f"unknown integrator {method!r}")
    cache = _frame_cache(m, cache)
    h = 1.0 / n_steps
    eye = np.eye(m.dim)

    def factors(k0, k1, p_mid, p_end):
        ts = (np.arange(k0, k1) + 0.5) * h
        h0 = _h_stack(m.h0, ts)
        h1 = _h_stack(m.h1, ts)
        q_mid = eye - p_mid
        h1a = q_mid @ h1 @ p_mid + p_mid @ h1 @ q_mid
        g = hermitian_part(h0 + eps * (h1 - h1a))
        return _expm_stack(g, h / eps), direct_rotation(p_mid, p_end)

    return _transported(factors, m, n_steps, cache, out_points, "adiabatic_V", float(eps))


def evolve_transport(m, n_steps, out_points=DEFAULT_OUT_POINTS, cache=None):
    """Parallel transport ``i W' = K0 W`` as a product of direct rotations."""
    cache = _frame_cache(m, cache)

    def factors(k0, k1, p_mid, p_end):
        return np.broadcast_to(np.eye(m.dim, dtype=complex), p_mid.shape), direct_rotation(p_mid, p_end)

    return _transported(factors, m, n_steps, cache, out_points, "transport_W", None)


def _same_grid(a, b):
    if a.times.shape != b.times.shape or np.any(a.times != b.times):
        raise GridMismatchError(f"{a.label} and {b.label} live on different output grids")


def evolve_phase(m, eps, n_steps=None, w_trace=None, v_trace=None, cache=None, out_points=DEFAULT_OUT_POINTS):
    """``Phi(t) = W(t)^-1 V(t)`` on a common output grid.

    Missing traces are computed with ``n_steps``.  The commutation defect
    ``sup_t ||[Phi(t), P0(0)]||`` is stored in ``step_stats``.
    """
    cache = _frame_cache(m, cache)
    if v_trace is None or w_trace is None:
        if n_steps is None:
            raise ParameterError("n_steps is required when a trace has to be computed")
    if v_trace is None:
        v_trace = evolve_adiabatic(m, eps, n_steps, out_points, cache=cache)
    if w_trace is None:
        w_trace = evolve_transport(m, n_steps, out_points, cache=cache)
    _same_grid(v_trace, w_trace)
    if v_trace.epsilon is not None and v_trace.epsilon != eps:
        raise GridMismatchError(f"V trace is for epsilon={v_trace.epsilon}, not {eps}")
    phi = dagger(w_trace.unitaries) @ v_trace.unitaries
    p0 = cache.projector(0)
    comm = float(np.max(_stack_norms(phi @ p0 - p0 @ phi)))
    stats = {"commutation_defect": comm, "n_steps_V": v_trace.n_steps, "n_steps_W": w_trace.n_steps}
    return EvolutionTrace("phase_Phi", float(eps), v_trace.times, phi, stats, n_steps=v_trace.n_steps)


def comparator(u, v, p0, p_grid):
    """Diagnostics of ``A(t) = V(t)^-1 U(t)`` against the identity.

    ``p0`` is ``P0(0)`` and ``p_grid`` stacks ``P0(t)`` on the output grid.
    Sup norms are taken over the output grid, a lower bound for the sup over
    ``[0, 1]``.
    """
    _same_grid(u, v)
    if u.epsilon != v.epsilon:
        raise GridMismatchError(f"epsilon mismatch: {u.epsilon} vs {v.epsilon}")
    p_grid = np.asarray(p_grid)
    if p_grid.shape[0] != u.times.size:
        raise GridMismatchError("one projector per output time required")
    eye = np.eye(u.dim)
    a = dagger(v.unitaries) @ u.unitaries - eye
    return ComparatorDiagnostics(
        epsilon=float(u.epsilon) if u.epsilon is not None else float("nan"),
        sup_error=float(np.max(_stack_norms(u.unitaries - v.unitaries))),
        q_block_defect=float(np.max(_stack_norms((eye - p0) @ a))),
        p_block_defect=float(np.max(_stack_norms(a @ p0))),
        intertwine_defect=float(np.max(_stack_norms(v.unitaries @ p0 - p_grid @ v.unitaries))),
    )


def grid_projectors(cache, trace):
    """``P0(t)`` on a trace's output grid, from the frame cache."""
    keep = np.round(trace.times * trace.n_steps).astype(int)
    return cache.projectors(keep, trace.n_steps)


def save_trace(trace, path):
    """Write a trace as one JSON header line followed by raw little-endian complex128 data.

    Header keys: ``label``, ``epsilon``, ``dim``, ``n_steps``, ``times``,
    ``unitarity_defect``, ``dtype``.  The payload is the snapshot stack in C
    order, shape ``(len(times), dim, dim)``.
    """
    header = {
        "label": trace.label,
        "epsilon": trace.epsilon,
        "dim": trace.dim,
        "n_steps": trace.n_steps,
        "times": [float(t) for t in trace.times],
        "unitarity_defect": trace.unitarity_defect,
        "dtype": "<c16",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(np.ascontiguousarray(trace.unitaries, dtype="<c16").tobytes())


def load_trace(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype=header["dtype"])
    n, dim = len(header["times"]), header["dim"]
    if data.size != n * dim * dim:
        raise GridMismatchError(f"{path}: payload has {data.size} entries, expected {n * dim * dim}")
    return EvolutionTrace(
        header["label"],
        header["epsilon"],
        np.array(header["times"]),
        data.reshape(n, dim, dim).copy(),
        {},
        header["unitarity_defect"],
        header["n_steps"],
    )

