import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adiabatic_lab.errors import DomainError, GapViolationError, NotApplicableError, SweepError
from adiabatic_lab.harness import (
    epsilon_sweep,
    fit_loglog_slope,
    identity_suite,
    negative_control,
    rank_one_phase_check,
    sweep_point,
    write_json,
    write_sweep_csv,
)
from adiabatic_lab.operators import build_constant

EPS3 = (0.2, 0.1, 0.025)


def test_slope_examples():
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    s, b, ci = fit_loglog_slope(x, x)
    assert s == pytest.approx(1.0) and b == pytest.approx(0.0, abs=1e-12) and ci < 1e-10
    assert fit_loglog_slope(x, x**2)[0] == pytest.approx(2.0)
    noisy = 3 * x * np.array([1.01, 0.99, 1.0, 1.01])
    s, _, ci = fit_loglog_slope(x, noisy)
    assert abs(s - 1) <= 0.05 and ci > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(1e-3, 10.0))
def test_slope_recovers_power_laws(p, c):
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_loglog_slope(x, c * x**p)[0] == pytest.approx(p, abs=1e-9)


def test_slope_domain_errors():
    with pytest.raises(DomainError):
        fit_loglog_slope([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(DomainError):
        fit_loglog_slope([0.1, 0.05, 0.025], [1.0, 0.0, 0.5])
    with pytest.raises(DomainError):
        fit_loglog_slope([0.1, 0.05, 0.025], [1.0, np.nan, 0.5])


def test_ladder_validation(rotating):
    with pytest.raises(SweepError):
        epsilon_sweep(rotating, (0.1, 0.05))
    with pytest.raises(SweepError):
        epsilon_sweep(rotating, (0.1, 0.05, 0.05))
    with pytest.raises(SweepError):
        epsilon_sweep(rotating, (0.1, 0.05, 0.025))


def test_exact_verdict_block_constant(block_constant):
    rep = epsilon_sweep(block_constant, EPS3, step_constant=20, out_points=11)
    assert rep.verdict == "exact" and rep.accepted and rep.slope is None
    assert all(p.exact for p in rep.points)


def test_sweep_point_traces(rotating):
    pt = sweep_point(rotating, 0.1, step_constant=40, out_points=11, keep_traces=True)
    assert set(pt.traces) == {"u", "v", "u2", "v2"}
    assert pt.n_steps == 400 and pt.traces["u2"].n_steps == 200
    assert pt.excluded is None and pt.guard_ratio <= 0.1
    assert pt.diagnostics.sup_error > 1e-3


def test_rotating_sweep_small(rotating):
    rep = epsilon_sweep(rotating, EPS3, step_constant=40, out_points=11)
    assert rep.verdict == "fit" and not rep.excluded
    assert 0.85 <= rep.slope <= 1.15
    assert [r["epsilon"] for r in rep.rows()] == list(EPS3)
    assert set(rep.block_slopes) == {"q_block_defect", "p_block_defect"}


def test_guard_excludes_underresolved_points(rotating):
    # c = 0.5 leaves a handful of steps per run; every point must be dropped, not adjusted
    with pytest.raises(SweepError):
        epsilon_sweep(rotating, EPS3, step_constant=0.5, out_points=3)


def test_identity_suite_passes(rotating):
    reps = identity_suite(rotating, n_grid=11, n_random=3, interaction_points=3, n_steps=400, oracle_instances=10)
    labels = {r.label for r in reps}
    assert "rr_commutator[B=H1a-K0]" in labels and "intertwining_V" in labels
    assert "quadrature_vs_residue_oracle" in labels
    bad = [r for r in reps if not r.passed]
    assert not bad, bad


def test_identity_suite_tolerance_override(rotating):
    reps = identity_suite(
        rotating, n_grid=3, n_random=0, interaction_points=2, dynamics=False, oracle_instances=0,
        tolerances={"proj_p_pdot_p": 0.0},
    )
    by = {r.label: r for r in reps}
    assert by["proj_p_pdot_p"].tolerance == 0.0
    assert "rr_commutator[B=random]" not in by


def test_negative_control(rotating, rank_one):
    for m in (rotating, rank_one):
        assert isinstance(negative_control(m), GapViolationError)


def test_phase_check_constant_model():
    m = build_constant(np.diag([0.0, 2.0]), np.diag([0.4, -0.3]), which=[1])
    rep = rank_one_phase_check(m, 0.1, n_steps=200)
    assert rep.v_deviation[0] == pytest.approx(0.0, abs=1e-14)
    assert rep.sup_v_deviation <= 1e-10
    assert rep.sup_true_deviation <= 1e-10
    assert rep.sup_phase_deviation <= 1e-10


def test_phase_check_rotating_t0(rotating):
    rep = rank_one_phase_check(rotating, 0.1, n_steps=400)
    assert rep.true_deviation[0] <= 1e-14 and rep.phase_deviation[0] <= 1e-14
    assert rep.sup_v_deviation <= 10 * rep.integrator_tolerance + 1e-12
    assert rep.sup_true_deviation > 1e-3


def test_phase_check_needs_rank_one():
    m = build_constant(np.diag([0.0, 0.1, 2.0]), np.eye(3), rank=2)
    with pytest.raises(NotApplicableError):
        rank_one_phase_check(m, 0.1, n_steps=200)


def test_writers_are_deterministic(tmp_path, block_constant):
    rep = epsilon_sweep(block_constant, EPS3, step_constant=20, out_points=11)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv([rep], a)
    write_sweep_csv([rep], b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 3 and float(rows[0]["epsilon"]) == 0.2
    write_json({"x": float("nan"), "y": np.float64(2.0), "z": np.arange(2)}, tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text() == '{\n  "x": null,\n  "y": 2.0,\n  "z": [\n    0,\n    1\n  ]\n}\n'
