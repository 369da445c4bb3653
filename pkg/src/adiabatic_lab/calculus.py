"""The reduced resolvent ``R(B)`` and numerical checks of operator identities.

Residue oracle
--------------
Write ``H0 = sum_j e_j |j><j|`` and ``B_jk = <j|B|k>``.  Then

    <j| (1/2 pi i) \\oint R0 B R0 dlam |k> = B_jk (1/2 pi i) \\oint dlam / ((e_j - lam)(e_k - lam)).

The scalar integral is the sum of residues of ``1/((lam - e_j)(lam - e_k))``
inside the contour:

* both ``e_j`` and ``e_k`` inside: ``1/(e_j - e_k) + 1/(e_k - e_j) = 0``
  (a double pole with zero residue when ``e_j = e_k``);
* both outside: no poles, 0;
* ``e_j`` inside, ``e_k`` outside: ``1/(e_j - e_k)``; the mirror case gives
  ``1/(e_k - e_j)``.

So ``R(B)`` has vanishing diagonal blocks and mixed entries
``-B_jk / (e_out - e_in)``.  :func:`reduced_resolvent_oracle` evaluates this
formula directly and never touches the contour nodes.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._linalg import commutator, dagger, expm_hermitian, opnorm
from .generators import kato_generator, offdiag_part
from .operators import derivative, eval_family
from .spectral import projector_frame, riesz_projector, sandwich, split_spectrum

#: default tolerance classes
TOLERANCES = {"quadrature": 1e-8, "fd": 1e-6, "structural": 1e-9, "exact": 1e-10}


@dataclass(frozen=True)
class IdentityReport:
    label: str
    defect: float
    tolerance: float
    passed: bool
    t_worst: float
    tolerance_class: str = "quadrature"

    def to_dict(self):
        return {
            "label": self.label,
            "defect": self.defect,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "t_worst": self.t_worst,
            "tolerance_class": self.tolerance_class,
        }


def make_report(label, defect, t, tolerance_class="quadrature", tolerance=None):
    tol = TOLERANCES[tolerance_class] if tolerance is None else tolerance
    defect = float(defect)
    return IdentityReport(label, defect, float(tol), bool(defect <= tol), float(t), tolerance_class)


def worst(reports, label=None):
    """Collapse per-time reports of one identity into its worst case."""
    reports = list(reports)
    top = max(reports, key=lambda r: (math.isnan(r.defect), r.defect))
    return make_report(label or top.label, top.defect, top.t_worst, top.tolerance_class, top.tolerance)


def reduced_resolvent(m, t, b, c=None, method="solve"):
    """``R(B)(t) = (1/2 pi i) \\oint R0(t, lam) B R0(t, lam) dlam`` by trapezoid quadrature."""
    c = m.contour_at(t) if c is None else c
    return sandwich(eval_family(m.h0, t), b, c, method=method)


def reduced_resolvent_oracle(h, b, c):
    """Residue-calculus value of the reduced resolvent (see module docstring)."""
    e, v, inside = split_spectrum(h, c)
    bt = dagger(v) @ np.asarray(b, dtype=complex) @ v
    diff = e[:, None] - e[None, :]
    mixed = inside[:, None] != inside[None, :]
    sign = np.where(inside, 1.0, -1.0)[:, None]
    kernel = np.zeros_like(diff)
    # j inside, k outside: 1/(e_j - e_k); j outside, k inside: 1/(e_k - e_j)
    kernel[mixed] = 1.0 / (sign * diff)[mixed]
    return v @ (kernel * bt) @ dagger(v)


def reduced_resolvent_defects(h, p, rb, rb_star, b):
    """Residual norms of the three reduced-resolvent identities.

    (a) ``[R(B), H0] + [P0, B]``; (b) diagonal blocks ``P0 R P0`` and
    ``Q0 R Q0``; (c) ``R(B)* - R(B*)``.
    """
    q = np.eye(p.shape[0]) - p
    a = opnorm(commutator(rb, h) + commutator(p, b))
    bb = opnorm(p @ rb @ p) + opnorm(q @ rb @ q)
    cc = opnorm(dagger(rb) - rb_star)
    return a, bb, cc


def check_reduced_resolvent_identities(m, t, b, c=None, method="solve", tolerance=None):
    """Three :class:`IdentityReport` s for ``R(B)`` at time ``t``."""
    c = m.contour_at(t) if c is None else c
    h = eval_family(m.h0, t)
    b = np.asarray(b, dtype=complex)
    p = riesz_projector(h, c) if method == "solve" else projector_frame(m, t, c, method=method).p
    rb = sandwich(h, b, c, method=method)
    rb_star = sandwich(h, dagger(b), c, method=method)
    a, bb, cc = reduced_resolvent_defects(h, p, rb, rb_star, b)
    return (
        make_report("rr_commutator", a, t, tolerance=tolerance),
        make_report("rr_offdiagonal", bb, t, tolerance=tolerance),
        make_report("rr_adjoint", cc, t, tolerance=tolerance),
    )


def check_effective_commutation(m, t, eps, c=None, method="solve", frame=None, tolerance=None):
    """``|| [H0 + eps H1 - eps H1^a, P0] ||``."""
    frame = projector_frame(m, t, c, method=method) if frame is None else frame
    h0 = eval_family(m.h0, t)
    h1 = eval_family(m.h1, t)
    gen = h0 + eps * (h1 - offdiag_part(h1, frame))
    return make_report("effective_commutation", opnorm(commutator(gen, frame.p)), t, "structural", tolerance)


def propagate_u1(m, t, n_steps=None, t0=0.0, u0=None):
    """Solve ``i U1' = H1 U1`` from ``t0`` to ``t`` by midpoint exponentials."""
    span = t - t0
    if n_steps is None:
        n_steps = max(1, int(math.ceil(abs(span) * 400)))
    u = np.eye(m.dim, dtype=complex) if u0 is None else np.array(u0, dtype=complex)
    if span == 0:
        return u
    h = span / n_steps
    for k in range(n_steps):
        u = expm_hermitian(m.h1.sample(t0 + (k + 0.5) * h), h) @ u
    return u


def check_interaction_identity(m, t, u1=None, c=None, method="solve", fd_step=1e-5, tolerance=None):
    """Interaction-picture commutator identity at ``t``.

    With ``Pt = U1^-1 P0 U1`` the check compares a Richardson finite difference
    of ``[Pt', Pt]`` against ``U1^-1 ([P0', P0] + i [[H1, P0], P0]) U1``.
    """
    c = m.contour_at(t) if c is None else c
    if u1 is None:
        u1 = propagate_u1(m, t)

    def tilde(s):
        step = expm_hermitian(m.h1.sample(0.5 * (s + t)), s - t)
        us = step @ u1
        return dagger(us) @ riesz_projector(m.h0.sample(s), c) @ us

    d1 = (tilde(t + fd_step) - tilde(t - fd_step)) / (2 * fd_step)
    d2 = (tilde(t + fd_step / 2) - tilde(t - fd_step / 2)) / fd_step
    pt_dot = (4 * d2 - d1) / 3
    p = riesz_projector(eval_family(m.h0, t), c)
    pt = dagger(u1) @ p @ u1
    lhs = commutator(pt_dot, pt)

    frame = projector_frame(m, t, c, method=method)
    h1 = eval_family(m.h1, t)
    rhs = dagger(u1) @ (commutator(frame.p_dot, frame.p) + 1j * commutator(commutator(h1, frame.p), frame.p)) @ u1
    return make_report("interaction_commutator", opnorm(lhs - rhs), t, "fd", tolerance)


def structural_reports(m, t, c=None, method="solve"):
    """Hermiticity / block structure of ``H1^a`` and ``K0`` and the ``P0 P0' P0 = 0`` identity."""
    frame = projector_frame(m, t, c, method=method)
    h1 = eval_family(m.h1, t)
    h1a = offdiag_part(h1, frame)
    k0 = kato_generator(frame)
    p, q = frame.p, frame.q

    def herm_offdiag(x):
        return max(opnorm(x - dagger(x)), opnorm(p @ x @ p), opnorm(q @ x @ q))

    return [
        make_report("proj_p_pdot_p", opnorm(p @ frame.p_dot @ p), t, "structural"),
        make_report("proj_q_pdot_q", opnorm(q @ frame.p_dot @ q), t, "structural"),
        make_report("h1a_hermitian_offdiagonal", herm_offdiag(h1a), t, "exact"),
        make_report("k0_hermitian_offdiagonal", herm_offdiag(k0), t, "exact"),
    ]


def derivative_of_h0(m, t):
    return derivative(m.h0, t)
