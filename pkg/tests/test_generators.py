import numpy as np
import pytest

from adiabatic_lab._linalg import commutator
from adiabatic_lab.errors import FrameError, NotApplicableError, ParameterError
from adiabatic_lab.generators import (
    NonScalarPhaseWarning,
    dynamical_phase,
    effective_generator,
    first_order_correction,
    generator_set,
    kato_generator,
    offdiag_part,
    phase_integrand,
    phase_table,
    reduced_phase_generator,
)
from adiabatic_lab.operators import build_constant, eval_family, rank_one_real_gauge
from adiabatic_lab.spectral import projector_frame

from oracles import LAMBDA_ROTATING_AT_1, SIGMA_Y, rotating_kato, rotating_lambda

P = np.diag([1.0, 0.0])


def test_offdiag_extraction():
    h1 = np.array([[0.3, 0.5 - 0.1j], [0.5 + 0.1j, -0.2]])
    assert np.allclose(offdiag_part(h1, P), [[0, 0.5 - 0.1j], [0.5 + 0.1j, 0]])
    assert np.allclose(offdiag_part(np.diag([1.0, 2.0]), P), 0)
    rest = h1 - offdiag_part(h1, P)
    assert np.abs(commutator(rest, P)).max() <= 1e-12


def test_kato_rotating(rotating):
    fr = projector_frame(rotating, 0.0)
    k0 = kato_generator(fr)
    assert np.allclose(k0, [[0, -1j], [1j, 0]], atol=1e-12)
    for t in (0.2, 0.9):
        fr = projector_frame(rotating, t)
        k0 = kato_generator(fr)
        assert np.allclose(k0, rotating_kato(), atol=1e-12)
        assert np.linalg.norm(k0, 2) == pytest.approx(np.linalg.norm(fr.p_dot, 2))


def test_kato_constant_zero(block_constant):
    assert np.abs(kato_generator(projector_frame(block_constant, 0.4))).max() < 1e-15


def test_effective_generator_rotating_t0(rotating):
    h1 = np.array([[0.3, 0.5], [0.5, -0.2]])
    expected = np.diag([0.0, 2.0]) + 0.1 * np.diag(np.diag(h1)) + 0.1 * SIGMA_Y
    assert np.allclose(effective_generator(rotating, 0.0, 0.1), expected, atol=1e-12)


def test_effective_generator_limits(rotating, block_constant):
    assert np.allclose(effective_generator(rotating, 0.4, 1e-12), eval_family(rotating.h0, 0.4), atol=1e-11)
    g = effective_generator(block_constant, 0.4, 0.3)
    assert np.allclose(g, eval_family(block_constant.h0, 0.4) + 0.3 * eval_family(block_constant.h1, 0.4))
    with pytest.raises(ParameterError):
        effective_generator(rotating, 0.1, 0.0)


def test_generator_set_invariants(rank_one):
    gs = generator_set(rank_one, 0.3, method="spectral")
    p, q = gs.frame.p, gs.frame.q
    for x in (gs.h1a, gs.k0):
        assert np.abs(x - x.conj().T).max() <= 1e-12
        assert np.allclose(x, p @ x @ q + q @ x @ p, atol=1e-12)
    eps = 0.05
    assert np.linalg.norm(commutator(gs.h_eff(eps) - eps * gs.k0, p), 2) <= 1e-9


def test_reduced_phase_generator(rotating, rank_one):
    fr0 = projector_frame(rotating, 0.0)
    g = reduced_phase_generator(rotating, 0.0, 0.1, np.eye(2))
    h0 = eval_family(rotating.h0, 0.0)
    h1 = eval_family(rotating.h1, 0.0)
    assert np.allclose(g, h0 @ fr0.p + 0.1 * fr0.p @ h1 @ fr0.p)
    with pytest.raises(FrameError):
        reduced_phase_generator(rotating, 0.5, 0.1, np.eye(2))

    # rank-one: W maps phi(0) to phi(t); the restriction is beta + eps e1
    t, eps = 0.6, 0.05
    cf = rank_one.known_closed_form
    a, b = cf.phi(0.0), cf.phi(t)
    wt = _unitary_mapping(a, b)
    g = reduced_phase_generator(rank_one, t, eps, wt)
    p0 = np.outer(a, a.conj())
    scalar = np.vdot(a, g @ a)
    e1 = np.vdot(b, eval_family(rank_one.h1, t) @ b).real
    assert scalar == pytest.approx(cf.beta(t) + eps * e1, abs=1e-9)
    assert np.linalg.norm(commutator(g, p0), 2) <= 1e-9


def _unitary_mapping(a, b):
    """A unitary sending unit vector ``a`` to unit vector ``b`` (Householder-type)."""
    phase = np.vdot(a, b) / abs(np.vdot(a, b))
    b = b / phase
    v = a - b
    h = np.eye(a.size) - 2 * np.outer(v, v.conj()) / np.vdot(v, v).real
    # h a = b for real <a, b>; the phase is put back afterwards
    return phase * h


def test_first_order_correction():
    assert first_order_correction(P, np.diag([0.7, -3.0])) == pytest.approx(0.7)
    assert first_order_correction(np.eye(1), np.zeros((1, 1))) == 0.0
    with pytest.warns(NonScalarPhaseWarning):
        first_order_correction(np.diag([1.0, 1.0, 0.0]), np.eye(3))


def test_e1_matches_grid_formula(rank_one):
    cf = rank_one.known_closed_form
    t = 0.35
    phi = cf.phi(t)
    lap = cf.laplacian
    e1 = -np.vdot(phi, lap @ phi).real / 2 + np.vdot(phi, cf.w(cf.grid, t) * phi).real
    assert phase_integrand(rank_one, t)[1] == pytest.approx(e1, abs=1e-12)
    fr = projector_frame(rank_one, t)
    assert first_order_correction(fr, eval_family(rank_one.h1, t)) == pytest.approx(e1, abs=1e-9)


def test_dynamical_phase_examples(rotating):
    rec = dynamical_phase(rotating, 0.0, 0.1)
    assert rec.lam == 0.0
    rec = dynamical_phase(rotating, 1.0, 0.1)
    assert rec.lam == pytest.approx(LAMBDA_ROTATING_AT_1, abs=1e-12)
    assert rec.berry == 0.0 and rec.geometric == 0.0
    for t in (0.3, 0.75):
        assert dynamical_phase(rotating, t, 0.02).lam == pytest.approx(rotating_lambda(t), abs=1e-12)


def test_constant_model_phase():
    h1 = np.diag([0.4, -0.3])
    m = build_constant(np.diag([0.0, 2.0]), h1, which=[1])
    eps = 0.05
    rec = dynamical_phase(m, 1.0, eps)
    assert rec.lam == pytest.approx(2 / eps - 0.3, rel=1e-13)


def test_real_gauge_berry_zero():
    m = rank_one_real_gauge()
    for rec in phase_table(m, 0.05, 200, 2):
        assert abs(rec.berry) <= 1e-10


def test_berry_nonzero_with_phase_ramp(rank_one):
    assert abs(phase_integrand(rank_one, 0.5)[2]) > 1e-3


def test_phase_table_matches_pointwise(rank_one):
    table = phase_table(rank_one, 0.1, 200, 20)
    assert [r.t for r in table] == pytest.approx(np.linspace(0, 1, 11))
    rec = dynamical_phase(rank_one, 0.5, 0.1, n_intervals=100)
    assert table[5].lam == pytest.approx(rec.lam, rel=1e-12)


def test_phase_errors(rotating):
    m = build_constant(np.diag([0.0, 0.0, 2.0]), np.eye(3), rank=2)
    with pytest.raises(NotApplicableError):
        dynamical_phase(m, 0.5, 0.1)
    with pytest.raises(ParameterError):
        phase_table(rotating, 0.1, 7)
