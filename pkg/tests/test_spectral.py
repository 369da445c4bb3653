import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adiabatic_lab.errors import GapViolationError, ParameterError, RegularityWarning
from adiabatic_lab.operators import OperatorFamily, ModelBundle, build_constant
from adiabatic_lab.spectral import (
    ContourSpec,
    eigen_projector,
    gap_margin,
    policy_contour,
    projector_derivative,
    projector_derivative_fd,
    projector_frame,
    riesz_projector,
)

from oracles import rotating_projector, rotating_projector_dot

UNIT = ContourSpec(0.0, 1.0, 64)


def test_contour_validation():
    with pytest.raises(ParameterError):
        ContourSpec(0, -1.0)
    with pytest.raises(ParameterError):
        ContourSpec(0, 1.0, 15)
    with pytest.raises(ParameterError):
        ContourSpec(0, 1.0, 17)


def test_quadrature_integrates_one_over_z():
    lam, w = ContourSpec(0.3, 2.0, 32).quadrature()
    assert np.sum(w / (lam - 0.3)) == pytest.approx(1.0)
    assert abs(np.sum(w)) < 1e-14


def test_riesz_examples():
    assert np.allclose(riesz_projector(np.diag([0.0, 2.0]), UNIT), np.diag([1.0, 0.0]), atol=1e-10)
    h = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(riesz_projector(h, UNIT), 0.5 * np.array([[1, -1], [-1, 1]]), atol=1e-10)
    big = ContourSpec(1.0, 5.0, 64)
    assert np.allclose(riesz_projector(h, big), np.eye(2), atol=1e-10)


def test_eigen_projector_examples():
    assert np.allclose(eigen_projector(np.diag([0.0, 2.0]), UNIT), np.diag([1.0, 0.0]))
    p = eigen_projector(np.diag([0.0, 0.0, 2.0]), UNIT)
    assert np.allclose(p, np.diag([1.0, 1.0, 0.0]))
    assert round(np.trace(p).real) == 2


def _planted(seed, n=8):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, n))
    e = np.concatenate([rng.uniform(-0.5, 0.5, r), rng.uniform(2.0, 4.0, n - r)])
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    inside = np.arange(n) < r
    return (q * e) @ q.conj().T, policy_contour(e, inside, 64)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_riesz_vs_eigen_planted_gap(seed):
    h, c = _planted(seed)
    assert np.abs(riesz_projector(h, c) - eigen_projector(h, c)).max() <= 1e-9


def test_node_doubling_converged():
    h, c = _planted(7)
    p64 = riesz_projector(h, c)
    p128 = riesz_projector(h, c.with_nodes(128))
    assert np.linalg.norm(p64 - p128, 2) <= 1e-10


def test_gap_margin_examples():
    assert gap_margin(np.diag([0.0, 2.0]), UNIT) == pytest.approx(1.0)
    assert gap_margin(np.diag([0.0, 1.0]), UNIT) == pytest.approx(0.0)


def test_gap_violation_raises():
    with pytest.raises(GapViolationError) as info:
        riesz_projector(np.diag([0.0, 1.0]), UNIT)
    assert info.value.eigenvalue == pytest.approx(1.0)
    with pytest.raises(GapViolationError):
        eigen_projector(np.diag([0.0, 1.0 + 1e-12]), UNIT)


def test_policy_contour():
    c = policy_contour([0.0, 2.0], [True, False])
    assert c.center == 0.0 and c.radius == 1.0
    c = policy_contour([-0.5, 0.5, 3.0], [True, True, False])
    assert c.center == 0.0 and c.radius == pytest.approx(0.5 * (0.5 + 3.0))
    with pytest.raises(GapViolationError):
        policy_contour([0.0, 1.0], [True, True])


def test_projector_derivative_rotating(rotating):
    d = projector_derivative(rotating, 0.0)
    assert np.allclose(d, [[0, 1], [1, 0]], atol=1e-12)
    for t in (0.25, 0.8):
        assert np.allclose(projector_derivative(rotating, t), rotating_projector_dot(t), atol=1e-12)
        assert np.allclose(projector_derivative(rotating, t, method="spectral"), rotating_projector_dot(t), atol=1e-12)


def test_projector_derivative_constant_is_zero(block_constant):
    assert np.abs(projector_derivative(block_constant, 0.5)).max() < 1e-15


def test_contour_vs_fd_derivative(rank_one):
    for t in (0.0, 0.5, 1.0):
        d = projector_derivative(rank_one, t)
        assert np.linalg.norm(d - projector_derivative_fd(rank_one, t), 2) < 1e-6


@pytest.mark.parametrize("method", ["solve", "spectral"])
def test_frame_invariants(rotating, rank_one, method):
    for m in (rotating, rank_one):
        for t in np.linspace(0, 1, 7):
            fr = projector_frame(m, t, method=method)
            p, q = fr.p, fr.q
            assert np.linalg.norm(p @ p - p, 2) <= 1e-10
            assert np.abs(p - p.conj().T).max() <= 1e-12
            assert np.allclose(q, np.eye(m.dim) - p)
            assert np.linalg.norm(p @ fr.p_dot @ p, 2) <= 1e-9
            assert np.linalg.norm(q @ fr.p_dot @ q, 2) <= 1e-9
            assert fr.rank == 1


def test_frame_matches_closed_form(rotating):
    fr = projector_frame(rotating, 0.4)
    assert np.allclose(fr.p, rotating_projector(0.4), atol=1e-12)
    assert fr.gap_margin == pytest.approx(1.0)


def test_regularity_warning_on_mismatch():
    # analytic derivative deliberately wrong: FD sees a constant H0
    h = np.diag([0.0, 2.0])
    fam = OperatorFamily(2, lambda t: h, lambda t: np.array([[0.0, 1.0], [1.0, 0.0]]))
    m = ModelBundle(fam, fam, ContourSpec(0.0, 1.0), "liar")
    with pytest.warns(RegularityWarning):
        projector_frame(m, 0.5, fd_check=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        honest = build_constant(h, h)
        projector_frame(honest, 0.5, fd_check=True)
