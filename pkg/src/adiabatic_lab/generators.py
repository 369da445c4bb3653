"""Generators of the approximate evolution and the rank-one phase.

For a frame ``(P0, P0')`` at time ``t``:

* ``H1^a = Q0 H1 P0 + P0 H1 Q0`` is the part of ``H1`` coupling ``ran P0``
  to its complement;
* ``K0 = i [P0', P0]`` generates parallel transport of ``ran P0``;
* ``H0 + eps H1 - eps H1^a + eps K0`` generates the approximant ``V`` (after
  division by ``eps``).
"""

from dataclasses import dataclass
from typing import Callable
import warnings

import numpy as np

from ._linalg import commutator, dagger, hermitian_part, opnorm
from .errors import FrameError, NotApplicableError, ParameterError
from .operators import eval_family
from .spectral import ProjectorFrame, projector_frame


class NonScalarPhaseWarning(UserWarning):
    """``Trace P0 H1 P0`` requested for a projector of rank other than one."""


def _projector(frame):
    return frame.p if isinstance(frame, ProjectorFrame) else np.asarray(frame)


def offdiag_part(h1, frame):
    """``Q0 H1 P0 + P0 H1 Q0``; ``frame`` may be a :class:`ProjectorFrame` or ``P0``."""
    p = _projector(frame)
    q = np.eye(p.shape[0]) - p
    return q @ h1 @ p + p @ h1 @ q


def kato_generator(frame):
    """``K0 = i [P0', P0]``."""
    return 1j * commutator(frame.p_dot, frame.p)


@dataclass(frozen=True)
class GeneratorSet:
    t: float
    h1a: np.ndarray
    k0: np.ndarray
    h_eff: Callable[[float], np.ndarray]
    frame: ProjectorFrame


def generator_set(m, t, c=None, method="solve"):
    frame = projector_frame(m, t, c, method=method)
    h0 = eval_family(m.h0, t)
    h1 = eval_family(m.h1, t)
    h1a = offdiag_part(h1, frame)
    k0 = kato_generator(frame)

    def h_eff(eps):
        return h0 + eps * (h1 - h1a + k0)

    return GeneratorSet(float(t), h1a, k0, h_eff, frame)


def effective_generator(m, t, eps, c=None, method="solve", frame=None):
    """``H0 + eps H1 - eps H1^a + eps K0`` at time ``t``.

    ``P0'`` comes from the contour formula, so no finite differences enter.
    """
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if frame is None:
        frame = projector_frame(m, t, c, method=method)
    h0 = eval_family(m.h0, t)
    h1 = eval_family(m.h1, t)
    return hermitian_part(h0 + eps * (h1 - offdiag_part(h1, frame) + kato_generator(frame)))


def reduced_phase_generator(m, t, eps, w_t, c=None, method="solve", tol=1e-8):
    """``W^-1 (H0 P0 + eps P0 H1 P0) W``, the generator of ``eps Phi'`` on ``ran P0(0)``.

    Raises :class:`FrameError` unless ``W P0(0) W^-1 = P0(t)`` within ``tol``.
    """
    p0 = projector_frame(m, 0.0, method=method).p
    pt = projector_frame(m, t, c, method=method).p
    w_t = np.asarray(w_t)
    defect = opnorm(w_t @ p0 @ dagger(w_t) - pt)
    if defect > tol:
        raise FrameError(f"W does not carry P0(0) onto P0({t}): defect {defect:.2e}")
    h0 = eval_family(m.h0, t)
    h1 = eval_family(m.h1, t)
    return dagger(w_t) @ (h0 @ pt + eps * pt @ h1 @ pt) @ w_t


def first_order_correction(frame, h1):
    """``e1 = Trace P0 H1 P0``.

    Only a scalar eigenvalue shift when ``P0`` has rank one; other ranks
    still return the trace but warn with :class:`NonScalarPhaseWarning`.
    """
    p = _projector(frame)
    rank = int(round(np.real(np.trace(p))))
    if rank != 1:
        warnings.warn(f"Trace P0 H1 P0 for rank {rank} is not a scalar shift", NonScalarPhaseWarning, stacklevel=2)
    return float(np.real(np.trace(p @ h1 @ p)))


@dataclass(frozen=True)
class PhaseRecord:
    t: float
    e0: float
    e1: float
    berry: float
    lam: float
    epsilon: float
    geometric: float = 0.0

    @property
    def dynamical(self):
        """The part of ``lam`` coming from ``e0/eps + e1`` alone."""
        return self.lam - self.geometric

    def row(self):
        return {"t": self.t, "epsilon": self.epsilon, "e0": self.e0, "e1": self.e1, "berry": self.berry, "lambda": self.lam}


def phase_integrand(m, t):
    """``(e0, e1, berry)`` at ``t`` from the model's closed form.

    ``berry = -i <phi|phi'>``, real for a normalized ``phi``; an imaginary part
    above 1e-10 means the closed form is inconsistent.
    """
    cf = m.known_closed_form
    if cf is None:
        raise NotApplicableError(f"{m.label}: no closed form, phase not defined")
    phi = np.asarray(cf.phi(t), dtype=complex)
    h1 = eval_family(m.h1, t)
    e1 = np.vdot(phi, h1 @ phi)
    berry = -1j * np.vdot(phi, cf.phi_derivative(t))
    if abs(berry.imag) > 1e-10 or abs(e1.imag) > 1e-10:
        raise NotApplicableError(f"{m.label}: phase integrand not real at t={t}")
    return float(cf.e0(t)), float(e1.real), float(berry.real)


def _check_rank_one(m):
    if m.known_closed_form is None:
        raise NotApplicableError(f"{m.label}: dynamical phase needs a closed form")
    rank = projector_frame(m, 0.0, method="spectral").rank
    if rank != 1:
        raise NotApplicableError(f"{m.label}: dynamical phase needs rank(P0) = 1, got {rank}")


def phase_table(m, eps, n_intervals, stride=None):
    """Cumulative ``lambda(t, eps)`` by composite Simpson on ``n_intervals`` (even) steps.

    Records are returned at every ``stride``-th grid point (``stride`` even,
    default ``n_intervals // 100`` rounded to even) including ``t = 0`` and
    ``t = 1``.
    """
    if not eps > 0:
        raise ParameterError(f"epsilon must be positive, got {eps}")
    if n_intervals < 2 or n_intervals % 2:
        raise ParameterError("Simpson's rule needs an even number of intervals")
    _check_rank_one(m)
    if stride is None:
        stride = max(2, (n_intervals // 100) // 2 * 2)
    if stride % 2 or n_intervals % stride:
        raise ParameterError("stride must be even and divide n_intervals")
    ts = np.arange(n_intervals + 1) / n_intervals
    vals = np.array([phase_integrand(m, t) for t in ts])
    e0, e1, berry = vals.T
    h = 1.0 / n_intervals

    def cumsimpson(f):
        panels = h / 3 * (f[0:-1:2] + 4 * f[1::2] + f[2::2])
        return np.concatenate([[0.0], np.cumsum(panels)])

    dyn = cumsimpson(e0 / eps + e1)
    geo = cumsimpson(berry)
    out = []
    for k in range(0, n_intervals + 1, stride):
        j = k // 2
        out.append(PhaseRecord(float(ts[k]), e0[k], e1[k], berry[k], dyn[j] + geo[j], float(eps), geo[j]))
    return out


def dynamical_phase(m, t, eps, n_intervals=2000):
    """:class:`PhaseRecord` at a single time ``t``.

    ``lambda(t, eps) = int_0^t (e0/eps + e1 + berry) ds`` by composite Simpson
    on ``n_intervals`` (even) panels of ``[0, t]``.
    """
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t={t} is outside [0, 1]")
    _check_rank_one(m)
    e0, e1, berry = phase_integrand(m, t)
    if t == 0:
        return PhaseRecord(0.0, e0, e1, berry, 0.0, float(eps), 0.0)
    if n_intervals < 2 or n_intervals % 2:
        raise ParameterError("Simpson's rule needs an even number of intervals")
    ss = np.linspace(0.0, t, n_intervals + 1)
    vals = np.array([phase_integrand(m, s) for s in ss])
    wts = np.ones(n_intervals + 1)
    wts[1:-1:2] = 4
    wts[2:-1:2] = 2
    wts *= (t / n_intervals) / 3
    dyn = float(wts @ (vals[:, 0] / eps + vals[:, 1]))
    geo = float(wts @ vals[:, 2])
    return PhaseRecord(float(t), e0, e1, berry, dyn + geo, float(eps), geo)
