import math

import numpy as np
import pytest

from tvfluid import mms
from tvfluid import solver as slv
from tvfluid import tensor2 as t2
from tvfluid.constitutive import MaterialFunction, MaterialModel, Regime, preset_model
from tvfluid.grid import Grid

P1, P3 = preset_model("P1"), preset_model("P3")
ZERO = mms.ManufacturedCase(a_v=0.0, a_theta=0.0, a_F=0.0)


def test_case_validation():
    with pytest.raises(ValueError):
        mms.ManufacturedCase(a_F=0.3)
    with pytest.raises(ValueError):
        mms.ManufacturedCase(a_theta=0.6)
    with pytest.raises(ValueError):
        mms.ManufacturedCase(k=0)
    assert mms.ManufacturedCase(regime="P3").regime is Regime.P3


def test_zero_amplitude_is_stationary():
    g = Grid(16)
    for t in (0.0, 0.4, 3.0):
        s = mms.exact_solution(ZERO, g, t)
        assert np.all(s.v == 0.0) and np.all(s.theta == 1.0)
        np.testing.assert_array_equal(s.F, slv.make_state(g).F)


def test_perturbations_vanish_at_quarter_period():
    g = Grid(16)
    s = mms.exact_solution(mms.ManufacturedCase(), g, math.pi / 2)
    assert np.max(np.abs(s.v)) <= 1e-16
    assert np.max(np.abs(s.theta - 1.0)) <= 1e-16
    assert np.max(np.abs(s.F - slv.make_state(g).F)) <= 1e-16


def test_exact_velocity_is_discretely_divergence_free_after_projection():
    g = Grid(64)
    s = mms.exact_solution(mms.ManufacturedCase(), g, 0.3)
    # the stream-function field is nearly discretely solenoidal already
    assert np.max(np.abs(g.div(s.v))) <= 1e-2
    w, _ = g.project_div_free(s.v, 1e-12)
    assert np.max(np.abs(g.div(w))) <= 1e-10
    assert np.max(np.abs(w - s.v)) <= 1e-2


def test_exact_solution_keeps_positivity():
    case = mms.ManufacturedCase(a_F=0.29, a_theta=0.49)
    g = Grid(32)
    for t in np.linspace(0, 2 * math.pi, 9):
        s = mms.exact_solution(case, g, t)
        assert np.min(s.theta) > 0.5
        assert np.min(t2.det(s.Fm)) > 0.0


def test_walls_grid_rejected():
    with pytest.raises(ValueError):
        mms.exact_solution(mms.ManufacturedCase(), Grid(16, "walls"), 0.0)


@pytest.mark.parametrize("model,path", [(P1, "theta"), (P3, "energy")])
def test_zero_amplitude_gives_zero_sources(model, path):
    case = mms.ManufacturedCase(a_v=0.0, a_theta=0.0, a_F=0.0, regime=model.regime)
    s_v, s_F, s_q = mms.manufactured_sources(model, case, Grid(16), 0.7, 1e-3, path)
    assert np.max(np.abs(s_v)) <= 1e-14
    assert np.max(np.abs(s_F)) <= 1e-14
    assert np.max(np.abs(s_q)) <= 1e-14


@pytest.mark.parametrize("model,path", [(P1, "theta"), (P3, "energy")])
def test_sources_are_time_periodic(model, path):
    case = mms.ManufacturedCase(regime=model.regime)
    g = Grid(16)
    a = mms.manufactured_sources(model, case, g, 0.4, 1e-3, path)
    b = mms.manufactured_sources(model, case, g, 0.4 + 2 * math.pi, 1e-3, path)
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) <= 1e-12


@pytest.mark.parametrize("model,path", [(P1, "theta"), (P3, "energy")])
def test_source_oracle_is_fourth_order(model, path):
    case = mms.ManufacturedCase(regime=model.regime)
    g = Grid(8)
    vals = {o: mms.manufactured_sources(model, case, g, 0.7, 1e-3, path, oversample=o) for o in (3, 9, 27)}
    for c in range(3):
        d_coarse = np.max(np.abs(vals[3][c] - vals[27][c]))
        d_fine = np.max(np.abs(vals[9][c] - vals[27][c]))
        # a factor of three in spacing is 3^4 = 81 in a fourth-order error
        assert d_coarse / d_fine >= 40.0


def test_temperature_source_heat_oracle():
    """With v = 0 and F = I the temperature source is theta_t - kappa lap theta."""
    one = MaterialFunction.make("constant")
    model = MaterialModel(one, one, one, one, Regime.P1)
    case = mms.ManufacturedCase(a_v=0.0, a_theta=0.3, a_F=0.0, k=1)
    t = 0.7
    errs = []
    for n in (16, 32):
        g = Grid(n)
        x, _ = g.centers()
        X = 2 * math.pi * x
        exact = -0.3 * np.cos(X) * math.sin(t) + 0.3 * (2 * math.pi) ** 2 * np.cos(X) * math.cos(t)
        s_v, s_F, s_q = mms.manufactured_sources(model, case, g, t, 1e-3, "theta")
        assert np.max(np.abs(s_v)) <= 1e-12 and np.max(np.abs(s_F)) <= 1e-12
        errs.append(np.max(np.abs(s_q - exact)) / np.max(np.abs(exact)))
    assert errs[0] <= 1e-4
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.05)


def test_zero_amplitude_forcing_leaves_solver_bit_identical():
    case = mms.ManufacturedCase(a_v=0.0, a_theta=0.0, a_F=0.0)
    g = Grid(16)
    cfg = slv.SolverConfig(dt_policy=slv.FixedDt(1e-3))
    forcing = mms.SourceCache(P1, case, g, cfg.epsilon, "theta")
    s = mms.exact_solution(mms.ManufacturedCase(), g, 0.0)
    s.v, _ = g.project_div_free(s.v, 1e-12)
    a, b = s, s.copy()
    for _ in range(3):
        a = slv.step(P1, cfg, a, None, 1e-3)
        b = slv.step(P1, cfg, b, forcing, 1e-3)
    assert np.array_equal(a.v, b.v) and np.array_equal(a.F, b.F) and np.array_equal(a.theta, b.theta)


def test_source_cache_memoises():
    g = Grid(8)
    c = mms.SourceCache(P1, mms.ManufacturedCase(), g, 1e-3, "theta", size=2)
    a = c(0.1)
    assert c(0.1) is a
    c(0.2)
    c(0.3)
    assert c(0.1) is not a


def test_zero_amplitude_study_reports_exact():
    rep = mms.convergence_study(P1, ZERO, (8, 16, 32), 0.01)
    for r in rep.rows:
        assert r.err_v == 0.0 and r.err_theta == 0.0 and r.err_F == 0.0
    assert rep.within("v", 1.75, 2.25) and rep.within("F", 1.8)
    lines = rep.csv_lines()
    assert lines[0] == "n,err_v,err_theta,err_F,order_v,order_theta,order_F"
    assert lines[2].endswith("exact,exact,exact")


def test_study_needs_three_grids_and_matching_regime():
    with pytest.raises(ValueError):
        mms.convergence_study(P1, mms.ManufacturedCase(), (8, 16), 0.01)
    with pytest.raises(ValueError):
        mms.convergence_study(P3, mms.ManufacturedCase(regime="P1"), (8, 16, 32), 0.01)


@pytest.mark.parametrize("model", [P1, P3])
def test_second_order_on_small_grids(model):
    rep = mms.convergence_study(model, mms.ManufacturedCase(regime=model.regime), (16, 32, 64), 0.002)
    last = rep.rows[-1]
    assert 1.75 <= last.order_v <= 2.25
    assert 1.75 <= last.order_theta <= 2.25
    assert last.order_F >= 1.8
