import numpy as np
import pytest

from hjblab.coefficients import (
    ActionSet,
    CoefficientOracle,
    make_constant_drift,
    make_counterexample,
)
from hjblab.grids import SpaceTimeField, build_grid, field_from_function
from hjblab.hamiltonian import Policy
from hjblab.montecarlo import (
    FeedbackRule,
    GridPolicyControl,
    SimConfig,
    SimulationError,
    constant_control,
    cost_bound_check,
    dpp_residual,
    simulate_cost,
    value_at,
)


def unit_cost_oracle(dim=1):
    return CoefficientOracle(
        "unit", dim,
        lambda t, X, a: (np.zeros(X.shape), np.ones(X.shape[:-1])),
        lambda t, X: np.ones(X.shape[:-1]),
    )


@pytest.fixture
def box():
    return build_grid("box", 1, (-6.0, 6.0), 61, 1.0, 32)


def test_deterministic_integrand_zero_se(box):
    sim = SimConfig(n_paths=500, dt_sim=0.01, seed=1)
    est = simulate_cost(unit_cost_oracle(), constant_control(0.0), sim, box)
    assert est.mean == pytest.approx(box.T, abs=1e-12)
    assert est.se <= 1e-9


def test_reproducibility_and_thread_invariance(box):
    oracle = make_constant_drift(box, c=1.0)
    a = simulate_cost(oracle, constant_control(1.0),
                      SimConfig(n_paths=9000, dt_sim=5e-3, seed=7, block_size=2048), box)
    b = simulate_cost(oracle, constant_control(1.0),
                      SimConfig(n_paths=9000, dt_sim=5e-3, seed=7, block_size=2048), box)
    c = simulate_cost(oracle, constant_control(1.0),
                      SimConfig(n_paths=9000, dt_sim=5e-3, seed=7, block_size=2048,
                                n_threads=2), box)
    assert a.mean == b.mean and a.se == b.se
    assert a.mean == c.mean and a.se == c.se


def test_common_random_numbers(box):
    # same seed, different drift scale: shared noise keeps the A/B gap tight
    o1 = make_constant_drift(box, c=1.0)
    o2 = make_constant_drift(box, c=1.01)
    sim = SimConfig(n_paths=4000, dt_sim=5e-3, seed=11)
    j1 = simulate_cost(o1, constant_control(1.0), sim, box)
    j2 = simulate_cost(o2, constant_control(1.0), sim, box)
    assert abs(j2.mean - j1.mean) < 0.05  # paired gap, far below 3 * (se1 + se2) scale


def test_euler_weak_order(box):
    # drift 1, quadratic cost from (0,0): only quadrature bias, -1.5 dt + O(dt^2)
    oracle = make_constant_drift(box, c=1.0)
    biases = []
    for dt in (0.04, 0.02):
        est = simulate_cost(oracle, constant_control(1.0),
                            SimConfig(n_paths=100_000, dt_sim=dt, seed=3), box)
        biases.append(est.mean - 4.0 / 3.0)
    assert biases[0] / biases[1] == pytest.approx(2.0, abs=0.5)


def test_ci_calibration_zero_drift_quadratic(box):
    # 95 percent CI covers the exact value 1.0 in at least 90 percent of seeds
    ce = make_counterexample(box)
    fb = FeedbackRule(lambda t, X: X[:, 0], name="a_eq_x")
    hits = 0
    n_seeds = 200
    for seed in range(n_seeds):
        est = simulate_cost(ce, fb, SimConfig(n_paths=400, dt_sim=1e-3, seed=seed), box)
        lo, hi = est.ci95()
        hits += int(lo <= 1.0 <= hi)
    assert hits >= 0.90 * n_seeds


def test_policy_lookup_conventions():
    grid = build_grid("torus", 1, (-1.0, 1.0), 4, 1.0, 2)
    aset = ActionSet(np.array([10.0, 20.0, 30.0]))
    idx = np.zeros((3, 4), dtype=int)
    idx[0] = [0, 1, 2, 0]
    idx[1] = [1, 1, 1, 1]
    pol = Policy(grid, idx, aset)
    control = GridPolicyControl(pol)
    X = np.array([[-0.75], [-0.25], [0.25], [0.75]])  # the four cell centers
    assert list(control.values(0.0, X)) == [10.0, 20.0, 30.0, 10.0]
    # left-continuous in time: t inside (0, 0.5) uses the level at t = 0
    assert list(control.values(0.25, X)) == [10.0, 20.0, 30.0, 10.0]
    assert list(control.values(0.5, X)) == [20.0] * 4
    # nearest node in space
    assert control.values(0.0, np.array([[-0.7]]))[0] == 10.0


def test_value_at_linear_exact():
    grid = build_grid("box", 1, (0.0, 1.0), 11, 1.0, 2)
    u = field_from_function(grid, lambda t, X: 3.0 * X[..., 0] + 1.0)
    out = value_at(u, 0.0, np.array([[0.123], [0.87]]))
    assert out == pytest.approx([1.369, 3.61], abs=1e-12)


def test_value_at_torus_wrap():
    grid = build_grid("torus", 1, 1.0, 8, 1.0, 2)
    u = field_from_function(grid, lambda t, X: np.sin(2 * np.pi * X[..., 0]))
    a = value_at(u, 0.0, np.array([[0.1]]))
    b = value_at(u, 0.0, np.array([[1.1]]))  # one period over
    assert a[0] == pytest.approx(b[0], abs=1e-12)


def test_value_at_2d_bilinear_exact():
    grid = build_grid("box", 2, (0.0, 1.0), 6, 1.0, 2)
    u = field_from_function(grid, lambda t, X: 2 * X[..., 0] + 3 * X[..., 1] + X[..., 0] * X[..., 1])
    pts = np.array([[0.31, 0.77], [0.05, 0.5]])
    expect = 2 * pts[:, 0] + 3 * pts[:, 1] + pts[:, 0] * pts[:, 1]
    assert value_at(u, 0.0, pts) == pytest.approx(expect, abs=1e-12)


def test_value_at_requires_grid_time():
    grid = build_grid("box", 1, (0.0, 1.0), 5, 1.0, 4)
    u = field_from_function(grid, lambda t, X: X[..., 0])
    with pytest.raises(SimulationError):
        value_at(u, 0.33, np.array([[0.5]]))


def test_dpp_residual_zero_cost(box):
    zero = CoefficientOracle(
        "z", 1,
        lambda t, X, a: (np.zeros(X.shape), np.zeros(X.shape[:-1])),
        lambda t, X: np.ones(X.shape[:-1]),
    )
    u = SpaceTimeField(box, np.zeros((box.n_levels,) + box.space_shape))
    sim = SimConfig(n_paths=300, dt_sim=0.01, seed=5)
    est = dpp_residual(u, zero, constant_control(0.0), 0.5, sim)
    assert est.mean == 0.0 and est.se == 0.0


def test_dpp_residual_range_check(box):
    u = SpaceTimeField(box, np.zeros((box.n_levels,) + box.space_shape))
    sim = SimConfig(n_paths=10, dt_sim=0.01, seed=5)
    with pytest.raises(SimulationError):
        dpp_residual(u, unit_cost_oracle(), constant_control(0.0), 1.5, sim)


def test_cost_bound_check_saturating(box):
    sim = SimConfig(n_paths=200, dt_sim=0.01, seed=9)
    rep = cost_bound_check(unit_cost_oracle(), [constant_control(0.0)], sim, box)
    assert rep.passed
    name, j, allowance = rep.rows[0]
    assert j == pytest.approx(box.T, abs=1e-12)  # |J| = T - s meets the bound exactly


def test_cost_bound_check_violation(box):
    lying = CoefficientOracle(
        "lying", 1,
        lambda t, X, a: (np.zeros(X.shape), np.ones(X.shape[:-1])),
        lambda t, X: np.zeros(X.shape[:-1]),  # claims Phi = 0 while f = 1
    )
    sim = SimConfig(n_paths=200, dt_sim=0.01, seed=9)
    rep = cost_bound_check(lying, [constant_control(0.0)], sim, box)
    assert not rep.passed


def test_off_box_fraction_reported(box):
    oracle = make_constant_drift(box, c=1.0)
    sim = SimConfig(n_paths=500, dt_sim=0.01, seed=13, start_state=(5.9,))
    est = simulate_cost(oracle, constant_control(1.0), sim, box)
    assert est.extra["off_box_fraction"] > 0.0


def test_sim_config_validation():
    with pytest.raises(SimulationError):
        SimConfig(n_paths=0, dt_sim=0.01, seed=1)
    with pytest.raises(SimulationError):
        SimConfig(n_paths=10, dt_sim=-0.1, seed=1)


def test_simulate_2d_deterministic_cost():
    grid = build_grid("torus", 2, 1.0, 6, 0.5, 4)
    sim = SimConfig(n_paths=200, dt_sim=0.01, seed=21, start_state=(0.2, 0.3))
    est = simulate_cost(unit_cost_oracle(dim=2), constant_control(0.0), sim, grid)
    assert est.mean == pytest.approx(grid.T, abs=1e-12)
    assert est.se <= 1e-9


def test_simulate_accepts_bare_policy():
    grid = build_grid("torus", 1, (-1.0, 1.0), 8, 1.0, 4)
    aset = ActionSet(np.array([0.0, 1.0]))
    pol = Policy(grid, np.zeros((grid.n_levels,) + grid.space_shape, dtype=int), aset)
    oracle = make_constant_drift(grid, c=1.0)
    sim = SimConfig(n_paths=100, dt_sim=0.05, seed=3)
    est = simulate_cost(oracle, pol, sim, grid)  # a = 0 everywhere: zero drift
    est2 = simulate_cost(oracle, constant_control(0.0), sim, grid)
    assert est.mean == est2.mean
