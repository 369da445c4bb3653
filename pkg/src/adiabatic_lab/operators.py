"""Time-dependent Hermitian operator families and the bundled models."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._linalg import hermitian_part, hermiticity_defect
from .errors import (
    DomainError,
    EvaluationError,
    GapViolationError,
    MissingDerivativeError,
    ModelError,
    ParameterError,
)
from .spectral import ContourSpec, policy_contour

#: symmetrization defects above this are treated as evaluation errors
HERMITIAN_ERROR = 1e-10
#: finite-difference probes may step this far outside [0, 1]
SAMPLE_MARGIN = 1e-3
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class OperatorFamily:
    """``t -> H(t)``, a Hermitian ``dim x dim`` matrix for ``t`` in ``[0, 1]``."""

    dim: int
    func: Callable[[float], np.ndarray]
    deriv: Optional[Callable[[float], np.ndarray]] = None
    smoothness_order: int = 2
    label: str = ""

    def sample(self, t):
        """Evaluate without the ``[0, 1]`` domain check (used by finite differences)."""
        return _checked(self, t)[0]

    def eval(self, t):
        return eval_family(self, t)


def _checked(f, t):
    if not (-SAMPLE_MARGIN <= t <= 1 + SAMPLE_MARGIN):
        raise DomainError(f"t={t} is outside the sampling window of {f.label or 'family'}")
    m = np.asarray(f.func(float(t)), dtype=complex)
    if m.shape != (f.dim, f.dim):
        raise EvaluationError(f"{f.label or 'family'} returned shape {m.shape} at t={t}, expected {(f.dim, f.dim)}")
    if not np.all(np.isfinite(m)):
        raise EvaluationError(f"{f.label or 'family'} returned non-finite entries at t={t}")
    defect = hermiticity_defect(m)
    if defect > HERMITIAN_ERROR:
        raise EvaluationError(f"{f.label or 'family'} is not Hermitian at t={t} (defect {defect:.2e})")
    return hermitian_part(m), defect


def eval_family(f, t, return_defect=False):
    """Evaluate ``f`` at ``t`` in ``[0, 1]``, symmetrized.

    With ``return_defect`` the pre-symmetrization Hermiticity defect is
    returned alongside the matrix.
    """
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t={t} is outside [0, 1]")
    m, defect = _checked(f, t)
    return (m, defect) if return_defect else m


def eval_derivative(f, t, scheme="analytic", h=DEFAULT_FD_STEP):
    """``dH/dt`` at ``t``.

    ``scheme="central_fd"`` uses central differences at ``h`` and ``h/2``
    combined by one Richardson step, so the error is O(h^4) plus roundoff.
    """
    if scheme == "analytic":
        if f.deriv is None:
            raise MissingDerivativeError(f"{f.label or 'family'} has no analytic derivative")
        if not (0.0 <= t <= 1.0):
            raise DomainError(f"t={t} is outside [0, 1]")
        return hermitian_part(np.asarray(f.deriv(float(t)), dtype=complex))
    if scheme in ("central_fd", "fd"):
        if h <= 0:
            raise ParameterError("finite-difference step must be positive")
        if not (0.0 <= t <= 1.0):
            raise DomainError(f"t={t} is outside [0, 1]")
        return hermitian_part(central_fd(f.sample, t, h))
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def central_fd(func, t, h=DEFAULT_FD_STEP):
    """Richardson-extrapolated central difference of an array-valued ``func``."""
    d1 = (func(t + h) - func(t - h)) / (2 * h)
    d2 = (func(t + h / 2) - func(t - h / 2)) / h
    return (4 * d2 - d1) / 3


def derivative(f, t):
    """Analytic derivative if the family has one, else the finite-difference one."""
    return eval_derivative(f, t, "analytic" if f.deriv is not None else "central_fd")


@dataclass(frozen=True)
class ClosedForm:
    """Analytic ingredients of a model with a one-dimensional ``P0``.

    ``phi(t)`` spans ``ran P0(t)`` and ``e0(t)`` is the matching eigenvalue of
    ``H0(t)``.  Grid models also carry ``beta``, ``w``, ``laplacian`` and
    ``grid``.
    """

    e0: Callable[[float], float]
    phi: Callable[[float], np.ndarray]
    phi_dot: Optional[Callable[[float], np.ndarray]] = None
    beta: Optional[Callable[[float], float]] = None
    w: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    laplacian: Optional[np.ndarray] = None
    grid: Optional[np.ndarray] = None

    def phi_derivative(self, t):
        if self.phi_dot is not None:
            return np.asarray(self.phi_dot(t), dtype=complex)
        return central_fd(lambda s: np.asarray(self.phi(s), dtype=complex), t)

    def resolvent(self, t, lam):
        """``R0(t, lam) = beta/((beta - lam) lam) |phi><phi| - I/lam`` for rank-one ``H0``."""
        if self.beta is None:
            raise ModelError("closed-form resolvent needs beta(t)")
        b = self.beta(t)
        p = self.phi(t)
        return b / ((b - lam) * lam) * np.outer(p, p.conj()) - np.eye(p.size) / lam


@dataclass(frozen=True)
class ModelBundle:
    h0: OperatorFamily
    h1: OperatorFamily
    contour_spec: ContourSpec
    label: str
    known_closed_form: Optional[ClosedForm] = None
    contour_fn: Optional[Callable[[float], ContourSpec]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.h0.dim != self.h1.dim:
            raise ModelError(f"dimension mismatch: H0 is {self.h0.dim}, H1 is {self.h1.dim}")

    @property
    def dim(self):
        return self.h0.dim

    def contour_at(self, t):
        """Contour enclosing the followed spectral group at time ``t``."""
        return self.contour_fn(t) if self.contour_fn is not None else self.contour_spec

    def margins(self, n_grid=101):
        ts = np.linspace(0.0, 1.0, n_grid)
        out = np.empty(n_grid)
        for i, t in enumerate(ts):
            c = self.contour_at(t)
            e = np.linalg.eigvalsh(self.h0.eval(t))
            out[i] = float(np.min(c.distance(e)))
        return ts, out

    def validate(self, n_grid=101):
        """Check the contour separates the spectrum on a grid; return the worst margin."""
        ts, margins = self.margins(n_grid)
        k = int(np.argmin(margins))
        if margins[k] <= 0:
            raise GapViolationError(f"{self.label}: contour meets the spectrum at t={ts[k]}", distance=margins[k])
        return float(margins[k])


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def build_rotating_two_level(gap=2.0, rate=1.0, h1_matrix=None, nodes=64):
    """``H0(t) = R(rate t) diag(0, gap) R(rate t)^T`` with a constant ``H1``.

    The followed eigenvalue is 0, enclosed by a circle of radius ``gap/2``.
    """
    if not gap > 0:
        raise ParameterError(f"gap must be positive, got {gap}")
    if h1_matrix is None:
        h1_matrix = [[0.3, 0.5], [0.5, -0.2]]
    h1_matrix = np.asarray(h1_matrix, dtype=complex)
    if h1_matrix.shape != (2, 2) or hermiticity_defect(h1_matrix) > HERMITIAN_ERROR:
        raise ParameterError("h1_matrix must be a Hermitian 2x2 matrix")
    d = np.diag([0.0, gap])

    def h0(t):
        r = _rotation(rate * t)
        return r @ d @ r.T

    def h0_dot(t):
        r = _rotation(rate * t)
        rd = rate * _rotation(rate * t + np.pi / 2)
        return rd @ d @ r.T + r @ d @ rd.T

    def phi(t):
        return _rotation(rate * t)[:, 0].astype(complex)

    def phi_dot(t):
        return rate * _rotation(rate * t + np.pi / 2)[:, 0].astype(complex)

    contour = ContourSpec(0.0, gap / 2, nodes)
    return ModelBundle(
        h0=OperatorFamily(2, h0, h0_dot, smoothness_order=2, label="H0 rotating"),
        h1=OperatorFamily(2, lambda t: h1_matrix, lambda t: np.zeros((2, 2), complex), label="H1 constant"),
        contour_spec=contour,
        label="rotating",
        known_closed_form=ClosedForm(e0=lambda t: 0.0, phi=phi, phi_dot=phi_dot),
    )


def grid_points(n, L):
    """Interior nodes of a Dirichlet grid with ``n`` points on ``[-L, L]``."""
    return np.linspace(-L, L, n + 2)[1:-1]


def dirichlet_laplacian(n, L):
    """Three-point Laplacian on :func:`grid_points`, zero Dirichlet ends."""
    dx = 2 * L / (n + 1)
    off = np.ones(n - 1)
    return (np.diag(off, 1) + np.diag(off, -1) - 2 * np.eye(n)) / dx**2


def gaussian_phi(x, x0=1.0, kappa=1.0):
    """Unnormalized moving Gaussian with a phase ramp and its time derivative.

    ``f(t) = exp(-(x - x0 sin t)^2 / 2 + i kappa t x)``.
    """

    def f(t):
        return np.exp(-((x - x0 * np.sin(t)) ** 2) / 2 + 1j * kappa * t * x)

    def f_dot(t):
        return f(t) * ((x - x0 * np.sin(t)) * x0 * np.cos(t) + 1j * kappa * x)

    return f, f_dot


def _normalized(f, f_dot):
    def phi(t):
        v = np.asarray(f(t), dtype=complex)
        nrm = np.linalg.norm(v)
        if not np.isfinite(nrm) or nrm < 1e-12:
            raise ModelError(f"phi(t={t}) is not normalizable (norm {nrm})")
        return v / nrm

    if f_dot is None:
        return phi, None

    def phi_dot(t):
        v = np.asarray(f(t), dtype=complex)
        vd = np.asarray(f_dot(t), dtype=complex)
        nrm = np.linalg.norm(v)
        return vd / nrm - v * np.real(np.vdot(v, vd)) / nrm**3

    return phi, phi_dot


def build_rank_one_grid(
    n=64,
    L=10.0,
    beta=None,
    phi=None,
    w=None,
    *,
    beta_dot=None,
    phi_dot=None,
    w_dot=None,
    beta0=1.0,
    beta1=0.5,
    x0=1.0,
    kappa=1.0,
    w0=1.0,
    nodes=64,
):
    """Rank-one ``H0 = beta |phi><phi|`` with ``H1 = -Laplacian/2 + w`` on a grid.

    ``beta``, ``phi`` (t -> n-vector) and ``w`` ((x, t) -> array) default to
    ``beta0 + beta1 sin(pi t)``, :func:`gaussian_phi` and
    ``w0 exp(-x^2) sin^2(pi t)``; the defaults come with analytic derivatives.
    ``phi`` is normalized after sampling on the grid.  The followed eigenvalue
    is ``beta(t)``, enclosed by a circle of radius ``beta(t)/2``.
    """
    if n < 8:
        raise ParameterError(f"grid needs n >= 8 points, got {n}")
    if not L > 0:
        raise ParameterError(f"half-length must be positive, got {L}")
    x = grid_points(n, L)
    lap = dirichlet_laplacian(n, L)

    if beta is None:
        beta = lambda t: beta0 + beta1 * np.sin(np.pi * t)  # noqa: E731
        beta_dot = lambda t: beta1 * np.pi * np.cos(np.pi * t)  # noqa: E731
    if phi is None:
        phi, phi_dot = gaussian_phi(x, x0, kappa)
    if w is None:
        w = lambda xs, t: w0 * np.exp(-(xs**2)) * np.sin(np.pi * t) ** 2  # noqa: E731
        w_dot = lambda xs, t: w0 * np.exp(-(xs**2)) * np.pi * np.sin(2 * np.pi * t)  # noqa: E731

    ts = np.linspace(0.0, 1.0, 101)
    bmin = min(float(beta(t)) for t in ts)
    if bmin <= 0:
        raise GapViolationError(f"beta(t) must stay positive, min over grid is {bmin}")

    phi_n, phi_n_dot = _normalized(phi, phi_dot)
    for t in (0.0, 0.5, 1.0):
        phi_n(t)

    def h0(t):
        p = phi_n(t)
        return beta(t) * np.outer(p, p.conj())

    h0_dot = None
    if beta_dot is not None and phi_n_dot is not None:

        def h0_dot(t):
            p = phi_n(t)
            pd = phi_n_dot(t)
            return beta_dot(t) * np.outer(p, p.conj()) + beta(t) * (np.outer(pd, p.conj()) + np.outer(p, pd.conj()))

    kinetic = -0.5 * lap

    def h1(t):
        return kinetic + np.diag(w(x, t))

    h1_dot = (lambda t: np.diag(w_dot(x, t)).astype(complex)) if w_dot is not None else None

    def contour(t):
        b = float(beta(t))
        return ContourSpec(b, b / 2, nodes)

    closed = ClosedForm(
        e0=lambda t: float(beta(t)),
        phi=phi_n,
        phi_dot=phi_n_dot,
        beta=lambda t: float(beta(t)),
        w=w,
        laplacian=lap,
        grid=x,
    )
    return ModelBundle(
        h0=OperatorFamily(n, h0, h0_dot, smoothness_order=2, label="H0 rank-one"),
        h1=OperatorFamily(n, h1, h1_dot, smoothness_order=1, label="H1 grid Schroedinger"),
        contour_spec=contour(0.0),
        label="rank_one",
        known_closed_form=closed,
        contour_fn=contour,
    )


def _lowest_group_contour(h0, rank, nodes):
    def contour(t):
        e = np.linalg.eigvalsh(h0.sample(t))
        inside = np.zeros(e.size, dtype=bool)
        inside[:rank] = True
        return policy_contour(e, inside, nodes)

    return contour


def build_constant(h0_matrix, h1_matrix, rank=1, nodes=64, label="constant", which=None):
    """Time-independent model following the ``rank`` lowest eigenvalues of ``H0``.

    ``which`` (indices into the ascending spectrum) selects another group.
    """
    h0_matrix = np.asarray(h0_matrix, dtype=complex)
    h1_matrix = np.asarray(h1_matrix, dtype=complex)
    n = h0_matrix.shape[0]
    if h0_matrix.shape != (n, n) or h1_matrix.shape != (n, n):
        raise ModelError(f"H0 {h0_matrix.shape} and H1 {h1_matrix.shape} must be square of equal size")
    zero = np.zeros((n, n), dtype=complex)
    h0 = OperatorFamily(n, lambda t: h0_matrix, lambda t: zero, label="H0 constant")
    h1 = OperatorFamily(n, lambda t: h1_matrix, lambda t: zero, label="H1 constant")
    e, v = np.linalg.eigh(hermitian_part(h0_matrix))
    inside = np.zeros(n, dtype=bool)
    if which is None:
        inside[:rank] = True
    else:
        inside[list(which)] = True
    contour = policy_contour(e, inside, nodes)
    closed = None
    if inside.sum() == 1:
        k = int(np.flatnonzero(inside)[0])
        vec = v[:, k].astype(complex)
        closed = ClosedForm(e0=lambda t: float(e[k]), phi=lambda t: vec, phi_dot=lambda t: np.zeros_like(vec))
    return ModelBundle(h0, h1, contour, label, known_closed_form=closed)


def build_from_arrays(times, h0_samples, h1_samples, rank=1, nodes=64, label="from_file"):
    """Cubic-spline model through sampled ``H0`` and ``H1`` matrices.

    The followed group is the ``rank`` lowest eigenvalues of ``H0(t)``.
    """
    from scipy.interpolate import CubicSpline

    times = np.asarray(times, dtype=float)
    h0_samples = np.asarray(h0_samples, dtype=complex)
    h1_samples = np.asarray(h1_samples, dtype=complex)
    if times.ndim != 1 or times.size < 4 or np.any(np.diff(times) <= 0):
        raise ModelError("times must be an increasing grid with at least 4 samples")
    if times[0] > 0 or times[-1] < 1:
        raise ModelError("sample times must cover [0, 1]")
    if h0_samples.shape != h1_samples.shape or h0_samples.shape[0] != times.size:
        raise ModelError("H0 and H1 samples must both have shape (len(times), n, n)")
    n = h0_samples.shape[1]
    h0_samples = hermitian_part(h0_samples)
    h1_samples = hermitian_part(h1_samples)
    s0 = CubicSpline(times, h0_samples, axis=0)
    s1 = CubicSpline(times, h1_samples, axis=0)
    d0 = s0.derivative()
    d1 = s1.derivative()
    h0 = OperatorFamily(n, s0, d0, smoothness_order=2, label="H0 spline")
    h1 = OperatorFamily(n, s1, d1, smoothness_order=2, label="H1 spline")
    contour_fn = _lowest_group_contour(h0, rank, nodes)
    return ModelBundle(h0, h1, contour_fn(0.0), label, contour_fn=contour_fn)


def load_model_file(path, nodes=64):
    """Load a model from an ``.npz`` with arrays ``times``, ``h0``, ``h1`` and optional ``rank``."""
    with np.load(path) as data:
        missing = {"times", "h0", "h1"} - set(data.files)
        if missing:
            raise ModelError(f"{path}: missing arrays {sorted(missing)}")
        rank = int(data["rank"]) if "rank" in data.files else 1
        return build_from_arrays(data["times"], data["h0"], data["h1"], rank=rank, nodes=nodes, label="from_file")


def rank_one_real_gauge(n=64, L=10.0, **kwargs):
    """The default grid model with ``kappa=0``: real ``phi``, vanishing Berry term."""
    kwargs["kappa"] = 0.0
    return build_rank_one_grid(n, L, **kwargs)


__all__ = [
    "ClosedForm",
    "ModelBundle",
    "OperatorFamily",
    "build_constant",
    "build_from_arrays",
    "build_rank_one_grid",
    "build_rotating_two_level",
    "central_fd",
    "derivative",
    "dirichlet_laplacian",
    "eval_derivative",
    "eval_family",
    "gaussian_phi",
    "grid_points",
    "load_model_file",
    "rank_one_real_gauge",
]
