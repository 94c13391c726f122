import numpy as np
import pytest

from hjblab.coefficients import (
    ActionSet,
    CoefficientOracle,
    bang_bang_actions,
    make_bang_bang,
    make_constant_drift,
    sample_all,
)
from hjblab.grids import build_grid, dirichlet_boundary, spatial_gradient
from hjblab.hamiltonian import Policy, constant_policy
from hjblab.hjb import (
    hjb_residual,
    policy_iteration,
    solve_hjb_direct,
    solve_policy_value,
)
from hjblab.parabolic import ParabolicScheme, SchemeError, solve_frozen


@pytest.fixture
def bang(scope="module"):
    grid = build_grid("torus", 1, (-1.0, 1.0), 32, 1.0, 32)
    return grid, make_bang_bang(grid), bang_bang_actions()


def test_single_action_equals_frozen(bang):
    grid, oracle, _ = bang
    single = ActionSet(np.array([1.0]))
    B, F = sample_all(oracle, grid, single)
    frozen = solve_frozen(B[0], F[0], grid)
    u_pi, _, trace = policy_iteration(oracle, single, grid)
    u_dir = solve_hjb_direct(oracle, single, grid)
    assert np.array_equal(u_pi.values, frozen.values)
    assert np.array_equal(u_dir.values, frozen.values)
    assert trace.converged


def test_zero_cost_zero_value(bang):
    grid, _, aset = bang
    zero_cost = CoefficientOracle(
        "zc", 1,
        lambda t, X, a: (np.broadcast_to(np.asarray(a), X.shape[:-1])[..., None] * np.ones(X.shape), np.zeros(X.shape[:-1])),
        lambda t, X: np.ones(X.shape[:-1]),
    )
    u, _, trace = policy_iteration(zero_cost, aset, grid)
    assert np.all(u.values == 0.0)
    assert trace.iterations <= 2


def test_oracle_agreement(bang):
    grid, oracle, aset = bang
    tol = 1e-8
    u_pi, policy, trace = policy_iteration(oracle, aset, grid, tol=tol)
    u_dir = solve_hjb_direct(oracle, aset, grid)
    assert np.max(np.abs(u_pi.values - u_dir.values)) <= 10 * tol
    assert trace.converged and trace.iterations <= 30


def test_monotone_descent_and_adjusted_sequence(bang):
    grid, oracle, aset = bang
    _, _, trace = policy_iteration(oracle, aset, grid)
    assert max(trace.max_pos_diffs[1:], default=0.0) <= 1e-10
    assert max(trace.monotone_violations, default=0.0) <= 1e-12
    assert trace.C_monotone >= 0.0


def test_value_domination(bang):
    grid, oracle, aset = bang
    u_star, _, _ = policy_iteration(oracle, aset, grid)
    rng = np.random.default_rng(13)
    policies = [constant_policy(grid, aset, 0), constant_policy(grid, aset, 1)]
    for _ in range(3):
        idx = rng.integers(0, len(aset), size=(grid.n_levels,) + grid.space_shape)
        policies.append(Policy(grid, idx, aset))
    for pol in policies:
        u_alpha = solve_policy_value(oracle, pol, grid)
        assert np.max(u_star.values - u_alpha.values) <= 1e-10


def test_gradient_convergence_along_iterations(bang):
    grid, oracle, aset = bang
    u_final, _, _ = policy_iteration(oracle, aset, grid, tol=1e-12)
    g_final = spatial_gradient(u_final.values, grid)
    sups = []
    for k in (1, 2, 3):
        u_k, _, _ = policy_iteration(oracle, aset, grid, tol=0.0, max_iters=k)
        g_k = spatial_gradient(u_k.values, grid)
        sups.append(float(np.max(np.abs(g_k - g_final))))
    assert sups[-1] <= sups[0] + 1e-12
    assert sups[-1] < 1e-6


def test_hjb_residual_zero_field(bang):
    grid, oracle, aset = bang
    u0 = np.zeros((grid.n_levels,) + grid.space_shape)
    res = hjb_residual(u0, oracle, aset, grid)
    # with u = 0 the residual is min_a f = dist^2, sup over the grid
    X = grid.points()
    _, f = oracle.eval(0.0, X, 1.0)
    assert res == pytest.approx(float(np.max(f)), rel=1e-12)


def test_residual_bound_at_convergence(bang):
    grid, oracle, aset = bang
    tol = 1e-8
    u_pi, _, trace = policy_iteration(oracle, aset, grid, tol=tol)
    bmax = 1.0
    assert trace.residuals[-1] <= tol * (1.0 + bmax / grid.dx[0])


def test_direct_flags_are_clean(bang):
    grid, oracle, aset = bang
    u = solve_hjb_direct(oracle, aset, grid)
    assert u.meta["converged"]
    assert hasattr(u, "policy")


def test_callable_hamiltonian_p_independent():
    grid = build_grid("box", 1, (-6.0, 6.0), 61, 1.0, 32)
    oracle = make_constant_drift(grid, c=0.0)
    exact = oracle.exact_value
    bc = dirichlet_boundary(lambda t, X: exact(t, X, grid.T))
    u_call = solve_hjb_direct(lambda t, X, P: X[..., 0] ** 2, None, grid, boundary=bc)
    B, F = sample_all(oracle, grid, ActionSet(np.array([1.0])))
    u_oracle = solve_frozen(B[0], F[0], grid, bc)
    assert np.max(np.abs(u_call.values - u_oracle.values)) < 1e-12
    res = hjb_residual(u_call, lambda t, X, P: X[..., 0] ** 2, None, grid)
    assert res < 1e-9


def test_callable_hamiltonian_with_gradient_term():
    grid = build_grid("box", 1, (-6.0, 6.0), 241, 1.0, 256)
    exact_fn = lambda t, X: ((X[..., 0] + grid.T - t) ** 3 - X[..., 0] ** 3) / 3.0 + (grid.T - t) ** 2
    bc = dirichlet_boundary(exact_fn)
    H = lambda t, X, P: P[..., 0] + X[..., 0] ** 2
    u = solve_hjb_direct(H, None, grid, boundary=bc)
    assert u.values[0, 120] == pytest.approx(4.0 / 3.0, rel=0.02)


def test_inadmissible_slack_delta_rejected(bang):
    grid, oracle, aset = bang
    # oracle declares p = d + 3 = 4, so delta must exceed 1/8
    with pytest.raises(SchemeError):
        policy_iteration(oracle, aset, grid, slack_delta=0.05)


def test_direct_rejects_crank_nicolson(bang):
    grid, oracle, aset = bang
    with pytest.raises(SchemeError):
        solve_hjb_direct(oracle, aset, grid,
                         scheme=ParabolicScheme(time_stepping="crank_nicolson"))


def test_2d_agreement():
    grid = build_grid("torus", 2, (-1.0, 1.0), 12, 0.5, 12)
    oracle = make_bang_bang(grid)
    aset = bang_bang_actions()
    u_pi, _, trace = policy_iteration(oracle, aset, grid, tol=1e-8)
    u_dir = solve_hjb_direct(oracle, aset, grid)
    assert np.max(np.abs(u_pi.values - u_dir.values)) <= 1e-7
    assert trace.converged
