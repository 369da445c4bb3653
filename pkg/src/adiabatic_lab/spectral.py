"""Riesz spectral projectors by contour quadrature, and their derivatives.

A :class:`ContourSpec` is a circle sampled by the trapezoid rule.  With nodes
``lam_j = c + r exp(2 pi i j / N)`` the rule reads

    (1 / 2 pi i) \\oint f(lam) dlam  ~=  sum_j w_j f(lam_j),   w_j = (lam_j - c) / N,

which converges geometrically for integrands analytic in an annulus around
the circle.  Every contour integral in the package goes through
:meth:`ContourSpec.quadrature`.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from ._linalg import dagger, hermitian_part, opnorm
from .errors import GapViolationError, ParameterError, RegularityWarning

#: eigenvalues closer than this to the contour make membership ambiguous
MEMBERSHIP_GUARD = 1e-9


@dataclass(frozen=True)
class ContourSpec:
    center: complex = 0.0
    radius: float = 1.0
    nodes: int = 64

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise ParameterError(f"contour radius must be positive, got {self.radius}")
        if self.nodes < 16 or self.nodes % 2:
            raise ParameterError(f"contour needs an even node count >= 16, got {self.nodes}")

    def quadrature(self):
        """Return ``(lam, w)``: trapezoid nodes and weights for ``(1/2 pi i) \\oint``."""
        theta = 2.0 * np.pi * np.arange(self.nodes) / self.nodes
        offsets = self.radius * np.exp(1j * theta)
        return self.center + offsets, offsets / self.nodes

    def distance(self, z):
        """Distance from ``z`` (scalar or array) to the circle."""
        return np.abs(np.abs(np.asarray(z) - self.center) - self.radius)

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius

    def with_nodes(self, nodes):
        return ContourSpec(self.center, self.radius, nodes)


def policy_contour(eigenvalues, inside, nodes=64):
    """Circle around the ``inside`` eigenvalue group.

    Centered at the group's barycenter, with radius halfway between the
    farthest inside eigenvalue and the nearest outside one.  For a single
    (possibly degenerate) inside eigenvalue this is half the distance to the
    rest of the spectrum.
    """
    e = np.asarray(eigenvalues, dtype=float)
    inside = np.asarray(inside, dtype=bool)
    if not inside.any() or inside.all():
        raise GapViolationError("contour policy needs a proper, nonempty inside group")
    center = float(np.mean(e[inside]))
    r_in = float(np.max(np.abs(e[inside] - center)))
    r_out = float(np.min(np.abs(e[~inside] - center)))
    if r_out <= r_in:
        raise GapViolationError(
            "inside and outside eigenvalue groups are not separated by a circle",
            distance=r_out - r_in,
        )
    return ContourSpec(center, 0.5 * (r_in + r_out), nodes)


def gap_margin(h, c):
    """Minimum distance from the eigenvalues of ``h`` to the contour."""
    e = np.linalg.eigvalsh(hermitian_part(np.asarray(h)))
    return float(np.min(c.distance(e)))


def _check_admissible(h, c, guard):
    e = np.linalg.eigvalsh(hermitian_part(h))
    dist = c.distance(e)
    k = int(np.argmin(dist))
    if dist[k] <= guard:
        raise GapViolationError(
            f"eigenvalue {e[k]:.6g} lies {dist[k]:.3g} from the contour "
            f"(center {c.center}, radius {c.radius})",
            eigenvalue=float(e[k]),
            distance=float(dist[k]),
        )
    return e


def resolvent_stack(h, c):
    """Resolvents ``(h - lam_j)^-1`` at all contour nodes, by dense solves.

    Returns ``(R, w)`` with ``R`` of shape ``(nodes, n, n)``.
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    lam, w = c.quadrature()
    shifted = h[None, :, :] - lam[:, None, None] * np.eye(n)[None, :, :]
    eye = np.broadcast_to(np.eye(n, dtype=complex), shifted.shape)
    return np.linalg.solve(shifted, eye), w


def riesz_projector(h, c):
    """``P = -(1/2 pi i) \\oint (h - lam)^-1 dlam`` by trapezoid quadrature.

    Raises :class:`GapViolationError` if an eigenvalue lies within
    ``radius * 1e-6`` of the contour.
    """
    h = np.asarray(h, dtype=complex)
    _check_admissible(h, c, c.radius * 1e-6)
    r, w = resolvent_stack(h, c)
    p = -np.tensordot(w, r, axes=(0, 0))
    return hermitian_part(p)


def split_spectrum(h, c, guard=MEMBERSHIP_GUARD):
    """Eigendecomposition of ``h`` with an inside/outside mask for ``c``.

    Eigenvalues within ``guard`` of the contour raise rather than being
    assigned to either side.
    """
    e, v = np.linalg.eigh(hermitian_part(np.asarray(h, dtype=complex)))
    dist = c.distance(e)
    k = int(np.argmin(dist))
    if dist[k] <= guard:
        raise GapViolationError(
            f"eigenvalue {e[k]:.6g} is within {guard:g} of the contour",
            eigenvalue=float(e[k]),
            distance=float(dist[k]),
        )
    return e, v, c.contains(e)


def eigen_projector(h, c):
    """Sum of eigenprojectors for eigenvalues strictly inside ``c``."""
    _, v, inside = split_spectrum(h, c)
    vin = v[:, inside]
    return vin @ dagger(vin)


def quadrature_kernel(e, c):
    """Trapezoid rule for ``(1/2 pi i) \\oint dlam / ((e_j - lam)(e_k - lam))``.

    This is the contour quadrature of a resolvent sandwich written in the
    eigenbasis of ``h``: ``sum_j w_j R_j B R_j = V (K * (V* B V)) V*``.
    """
    lam, w = c.quadrature()
    inv = 1.0 / (np.asarray(e)[:, None] - lam[None, :])
    return (inv * w[None, :]) @ inv.T


def sandwich(h, b, c, method="solve"):
    """``(1/2 pi i) \\oint (h - lam)^-1 b (h - lam)^-1 dlam`` by trapezoid quadrature.

    ``method="solve"`` forms each resolvent by a dense linear solve;
    ``method="spectral"`` evaluates the identical quadrature sum in the
    eigenbasis of ``h`` (one ``eigh`` instead of ``nodes`` solves).
    """
    h = np.asarray(h, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if method == "solve":
        _check_admissible(h, c, c.radius * 1e-6)
        r, w = resolvent_stack(h, c)
        return np.tensordot(w, r @ b[None] @ r, axes=(0, 0))
    if method == "spectral":
        e, v, _ = split_spectrum(h, c, guard=c.radius * 1e-6)
        k = quadrature_kernel(e, c)
        return v @ (k * (dagger(v) @ b @ v)) @ dagger(v)
    raise ValueError(f"unknown quadrature method {method!r}")


@dataclass(frozen=True)
class ProjectorFrame:
    t: float
    p: np.ndarray
    q: np.ndarray
    p_dot: np.ndarray
    rank: int
    gap_margin: float
    fd_defect: float = field(default=float("nan"))


def _h0_derivative(m, t):
    from .operators import derivative

    return derivative(m.h0, t)


def projector_derivative(m, t, c=None, method="solve"):
    """``P0'(t) = (1/2 pi i) \\oint R0 H0' R0 dlam`` (derivative under the integral)."""
    c = m.contour_at(t) if c is None else c
    return hermitian_part(sandwich(m.h0.eval(t), _h0_derivative(m, t), c, method=method))


def projector_derivative_fd(m, t, c=None, h=1e-5):
    """Richardson-extrapolated central difference of the Riesz projector.

    The contour is frozen at its time-``t`` position for all samples.
    """
    c = m.contour_at(t) if c is None else c

    def diff(step):
        plus = riesz_projector(m.h0.sample(t + step), c)
        minus = riesz_projector(m.h0.sample(t - step), c)
        return (plus - minus) / (2 * step)

    return (4 * diff(h / 2) - diff(h)) / 3


def projector_frame(m, t, c=None, method="solve", fd_check=False, fd_tol=1e-6):
    """Assemble :class:`ProjectorFrame` at time ``t``.

    With ``fd_check`` the contour derivative is compared with a finite
    difference of the Riesz projector; disagreement above ``fd_tol`` emits a
    :class:`RegularityWarning`.
    """
    c = m.contour_at(t) if c is None else c
    h = m.h0.eval(t)
    if method == "solve":
        p = riesz_projector(h, c)
    else:
        p = eigen_projector(h, c)
    p_dot = projector_derivative(m, t, c, method=method)
    fd_defect = float("nan")
    if fd_check:
        fd_defect = opnorm(p_dot - projector_derivative_fd(m, t, c))
        if fd_defect > fd_tol:
            warnings.warn(
                f"contour and finite-difference P0' differ by {fd_defect:.2e} at t={t}",
                RegularityWarning,
                stacklevel=2,
            )
    n = p.shape[0]
    return ProjectorFrame(
        t=float(t),
        p=p,
        q=np.eye(n) - p,
        p_dot=p_dot,
        rank=int(round(np.real(np.trace(p)))),
        gap_margin=gap_margin(h, c),
        fd_defect=fd_defect,
    )
