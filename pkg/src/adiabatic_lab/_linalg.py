"""Small dense linear-algebra helpers used throughout the package."""

import numpy as np


def opnorm(a):
    """Operator 2-norm (largest singular value)."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def commutator(a, b):
    return a @ b - b @ a


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a):
    return 0.5 * (a + dagger(a))


def hermiticity_defect(a):
    """Max-entry size of ``a - a*`` relative to ``max(1, max|a|)``."""
    scale = max(1.0, float(np.max(np.abs(a)))) if np.size(a) else 1.0
    return float(np.max(np.abs(a - dagger(a)))) / scale if np.size(a) else 0.0


def expm_hermitian(g, tau):
    """``exp(-i tau g)`` for Hermitian ``g`` (or a stack of them) via ``eigh``.

    The result is unitary up to roundoff by construction.
    """
    e, v = np.linalg.eigh(g)
    phase = np.exp(-1j * tau * e)
    return (v * phase[..., None, :]) @ dagger(v)


def _inv_sqrt_one_minus(d2):
    """``(I - d2)^(-1/2)`` for a Hermitian PSD ``d2`` of small norm.

    Uses the binomial series when it reaches roundoff in a few terms and falls
    back to an eigendecomposition otherwise.
    """
    n = d2.shape[-1]
    eye = np.eye(n, dtype=complex)
    size = float(np.max(np.linalg.norm(d2, axis=(-2, -1)))) if d2.ndim > 2 else float(np.linalg.norm(d2))
    if size < 1e-3:
        out = eye + 0.5 * d2
        term = d2
        coef = 0.5
        k = 1
        while True:
            k += 1
            coef *= (2 * k - 1) / (2 * k)
            term = term @ d2
            out = out + coef * term
            if coef * size**k < 1e-18:
                break
        return out
    e, v = np.linalg.eigh(eye - d2)
    if np.any(e <= 0):
        raise np.linalg.LinAlgError("projectors too far apart for a direct rotation")
    return (v * (1.0 / np.sqrt(e))[..., None, :]) @ dagger(v)


def direct_rotation(pa, pb):
    """Unitary ``T`` with ``T pa T* = pb`` closest to the identity.

    ``T = (I - (pb - pa)^2)^(-1/2) (pb pa + qb qa)``; works on stacks too.
    """
    n = pa.shape[-1]
    eye = np.eye(n, dtype=complex)
    d = pb - pa
    s = _inv_sqrt_one_minus(d @ d)
    m = pb @ pa + (eye - pb) @ (eye - pa)
    return s @ m
