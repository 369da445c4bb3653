import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from adiabatic_lab._linalg import (
    commutator,
    dagger,
    direct_rotation,
    expm_hermitian,
    hermiticity_defect,
    opnorm,
)
import scipy.linalg as sl


def _herm(a):
    return a + a.conj().T


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 4, 4), elements=finite), st.floats(-2, 2))
def test_expm_hermitian_matches_scipy_and_is_unitary(parts, tau):
    g = _herm(parts[0] + 1j * parts[1])
    u = expm_hermitian(g, tau)
    assert np.allclose(u, sl.expm(-1j * tau * g), atol=1e-10)
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


def test_expm_hermitian_on_stack():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(5, 3, 3)) + 1j * rng.normal(size=(5, 3, 3))
    g = g + dagger(g)
    out = expm_hermitian(g, 0.3)
    for k in range(5):
        assert np.allclose(out[k], sl.expm(-0.3j * g[k]), atol=1e-12)


def test_opnorm_is_largest_singular_value():
    a = np.array([[3.0, 0], [0, -4.0]])
    assert opnorm(a) == 4.0
    assert opnorm(np.zeros((0, 0))) == 0.0


def test_commutator_and_defect():
    x = np.array([[0, 1], [1, 0]])
    z = np.array([[1, 0], [0, -1]])
    assert np.array_equal(commutator(x, z), np.array([[0, -2], [2, 0]]))
    assert hermiticity_defect(x) == 0.0
    assert hermiticity_defect(np.array([[0, 1], [0, 0]])) == 1.0


def _random_projector(rng, n, r):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q[:, :r] @ q[:, :r].conj().T, q


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.floats(1e-6, 0.3))
def test_direct_rotation_carries_pa_to_pb(seed, n, size):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, n))
    pa, _ = _random_projector(rng, n, r)
    k = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    k = size * (k + dagger(k)) / opnorm(k + dagger(k))
    u = sl.expm(-1j * k)
    pb = u @ pa @ dagger(u)
    t = direct_rotation(pa, pb)
    assert np.allclose(dagger(t) @ t, np.eye(n), atol=1e-12)
    assert np.allclose(t @ pa @ dagger(t), pb, atol=1e-12)


def test_direct_rotation_identity_for_equal_projectors():
    p = np.diag([1.0, 0, 0]).astype(complex)
    assert np.allclose(direct_rotation(p, p), np.eye(3))
