import numpy as np
import pytest

from hjblab.coefficients import ActionSet, make_smooth_baseline, sample_all
from hjblab.grids import (
    build_grid,
    constant_field,
    dirichlet_boundary,
    field_from_function,
    periodic_boundary,
)
from hjblab.parabolic import (
    ParabolicScheme,
    SchemeError,
    convergence_order,
    pde_residual,
    solve_frozen,
)


def exact_quadratic(T):
    return lambda t, X: X[..., 0] ** 2 * (T - t) + (T - t) ** 2


def exact_cubic(T):
    return lambda t, X: ((X[..., 0] + T - t) ** 3 - X[..., 0] ** 3) / 3.0 + (T - t) ** 2


def test_space_constant_exact():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)
    u = solve_frozen(constant_field(g, 0.0, components=1), constant_field(g, 1.0), g)
    exact = (g.T - g.times())[:, None] * np.ones(g.space_shape)
    assert np.max(np.abs(u.values - exact)) < 1e-13


def test_space_constant_exact_crank_nicolson():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)
    u = solve_frozen(constant_field(g, 0.0, components=1), constant_field(g, 1.0), g,
                     scheme=ParabolicScheme(time_stepping="crank_nicolson"))
    exact = (g.T - g.times())[:, None] * np.ones(g.space_shape)
    assert np.max(np.abs(u.values - exact)) < 1e-13


def test_solver_residual_roundoff():
    g = build_grid("torus", 1, 1.0, 32, 1.0, 16)
    rng = np.random.default_rng(2)
    b = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape + (1,))
    f = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape)
    u = solve_frozen(b, f, g)
    res = pde_residual(u, b, f, g)
    assert np.max(np.abs(res)) < 1e-10


def test_residual_of_zero_field():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)
    b = constant_field(g, 0.0, components=1)
    f = constant_field(g, 1.0)
    res = pde_residual(np.zeros((g.n_levels,) + g.space_shape), b, f, g)
    assert np.allclose(res, 1.0)


def test_quadratic_closed_form_on_box():
    g = build_grid("box", 1, (-6.0, 6.0), 121, 1.0, 128)
    exact_fn = exact_quadratic(g.T)
    b = constant_field(g, 0.0, components=1)
    f = field_from_function(g, lambda t, X: X[..., 0] ** 2)
    u = solve_frozen(b, f, g, dirichlet_boundary(exact_fn),
                     ParabolicScheme(advection="central"))
    exact = np.stack([exact_fn(t, g.points()) for t in g.times()])
    assert np.max(np.abs(u.values - exact)) < 5 * (g.dx[0] ** 2 + g.dt)


def test_cubic_closed_form_with_drift():
    g = build_grid("box", 1, (-6.0, 6.0), 241, 1.0, 256)
    exact_fn = exact_cubic(g.T)
    b = constant_field(g, 1.0, components=1)
    f = field_from_function(g, lambda t, X: X[..., 0] ** 2)
    u = solve_frozen(b, f, g, dirichlet_boundary(exact_fn),
                     ParabolicScheme(advection="central"))
    exact = np.stack([exact_fn(t, g.points()) for t in g.times()])
    assert np.max(np.abs(u.values - exact)) < 10 * (g.dx[0] ** 2 + g.dt)


def test_exact_field_residual_shrinks_at_rate():
    b_zero = lambda g: constant_field(g, 0.0, components=1)
    res_sup = []
    for nx, nt in ((61, 32), (121, 64)):
        g = build_grid("box", 1, (-6.0, 6.0), nx, 1.0, nt)
        exact_fn = exact_quadratic(g.T)
        f = field_from_function(g, lambda t, X: X[..., 0] ** 2)
        exact = np.stack([exact_fn(t, g.points()) for t in g.times()])
        res = pde_residual(exact, b_zero(g), f, g, scheme=ParabolicScheme(advection="central"))
        res_sup.append(np.max(np.abs(res)))
    # halving dx and dt halves the (dt-dominated) truncation residual
    assert res_sup[0] / res_sup[1] == pytest.approx(2.0, rel=0.2)


def test_comparison_principle_sample():
    rng = np.random.default_rng(17)
    g = build_grid("torus", 1, 1.0, 32, 0.5, 16)
    for _ in range(20):
        b = rng.uniform(-2, 2, size=(g.n_levels,) + g.space_shape + (1,))
        f1 = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape)
        f2 = f1 + rng.uniform(0, 1, size=f1.shape)
        u1 = solve_frozen(b, f1, g)
        u2 = solve_frozen(b, f2, g)
        assert np.max(u1.values - u2.values) <= 1e-12


def test_boundedness_by_horizon():
    rng = np.random.default_rng(29)
    g = build_grid("torus", 1, 1.0, 24, 1.0, 12)
    b = rng.uniform(-3, 3, size=(g.n_levels,) + g.space_shape + (1,))
    f = rng.uniform(-2, 2, size=(g.n_levels,) + g.space_shape)
    u = solve_frozen(b, f, g)
    fmax = np.max(np.abs(f))
    for n, t in enumerate(g.times()):
        assert np.max(np.abs(u.values[n])) <= (g.T - t) * fmax + 1e-12


def test_linearity():
    rng = np.random.default_rng(41)
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)
    b = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape + (1,))
    f1 = rng.normal(size=(g.n_levels,) + g.space_shape)
    f2 = rng.normal(size=f1.shape)
    u12 = solve_frozen(b, f1 + f2, g)
    u1 = solve_frozen(b, f1, g)
    u2 = solve_frozen(b, f2, g)
    assert np.max(np.abs(u12.values - u1.values - u2.values)) < 1e-11


def test_unconditional_stability_large_dt():
    rng = np.random.default_rng(53)
    g = build_grid("torus", 1, 1.0, 64, 1.0, 2)  # dt = 0.5 with dx = 1/64
    b = rng.uniform(-5, 5, size=(g.n_levels,) + g.space_shape + (1,))
    f = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape)
    u = solve_frozen(b, f, g)
    assert np.all(np.isfinite(u.values))


def test_monotonicity_flags():
    s_up = ParabolicScheme()
    s_cn = ParabolicScheme(time_stepping="crank_nicolson")
    s_ce = ParabolicScheme(advection="central")
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)  # dx = 1/16
    assert s_up.claims_monotone() and s_up.is_monotone(g, b_max=100.0)
    assert not s_cn.is_monotone(g, b_max=0.0)
    assert s_ce.is_monotone(g, b_max=1.0)       # Peclet below threshold
    assert not s_ce.is_monotone(g, b_max=100.0)


def test_scheme_validation():
    with pytest.raises(SchemeError):
        ParabolicScheme(time_stepping="leapfrog")
    with pytest.raises(SchemeError):
        ParabolicScheme(advection="weno")


def _smooth_problem(grid):
    oracle = make_smooth_baseline(grid, T=grid.T)
    B, F = sample_all(oracle, grid, ActionSet(np.array([1.0])))
    exact = np.stack([oracle.exact_value(t, grid.points(), grid.T) for t in grid.times()])
    return B[0], F[0], periodic_boundary(), exact


def test_convergence_orders_central():
    grids = [build_grid("torus", 1, 1.0, nx, 1.0, nx * nx // 8) for nx in (16, 24, 32)]
    orders = convergence_order(_smooth_problem, grids, ParabolicScheme(advection="central"))
    assert orders.space == pytest.approx(2.0, abs=0.25)
    assert orders.time == pytest.approx(1.0, abs=0.25)


def test_convergence_orders_upwind():
    grids = [build_grid("torus", 1, 1.0, nx, 1.0, nx) for nx in (32, 48, 64)]
    orders = convergence_order(_smooth_problem, grids, ParabolicScheme(advection="upwind"))
    assert orders.space == pytest.approx(1.0, abs=0.25)
    assert orders.time == pytest.approx(1.0, abs=0.25)


def test_convergence_order_skips_machine_precision():
    def constant_problem(grid):
        b = np.zeros((grid.n_levels,) + grid.space_shape + (1,))
        f = np.ones((grid.n_levels,) + grid.space_shape)
        exact = (grid.T - grid.times())[:, None] * np.ones(grid.space_shape)
        return b, f, periodic_boundary(), exact

    grids = [build_grid("torus", 1, 1.0, nx, 1.0, 8) for nx in (8, 16, 32)]
    orders = convergence_order(constant_problem, grids)
    assert orders.skipped


def test_convergence_order_needs_three_grids():
    grids = [build_grid("torus", 1, 1.0, 8, 1.0, 8)] * 2
    with pytest.raises(SchemeError):
        convergence_order(None, grids)


# ------------------------------- 2d -----------------------------------------


def test_2d_space_constant_exact():
    g = build_grid("torus", 2, 1.0, 8, 1.0, 4)
    u = solve_frozen(constant_field(g, 0.0, components=2), constant_field(g, 1.0), g)
    exact = (g.T - g.times())[:, None, None] * np.ones(g.space_shape)
    assert np.max(np.abs(u.values - exact)) < 1e-13


def test_2d_box_quadratic():
    g = build_grid("box", 2, (-3.0, 3.0), 31, 0.5, 32)
    T = g.T
    exact_fn = lambda t, X: (X[..., 0] ** 2 + X[..., 1] ** 2) * (T - t) + 2 * (T - t) ** 2
    b = constant_field(g, 0.0, components=2)
    f = field_from_function(g, lambda t, X: X[..., 0] ** 2 + X[..., 1] ** 2)
    u = solve_frozen(b, f, g, dirichlet_boundary(exact_fn))
    exact = np.stack([exact_fn(t, g.points()) for t in g.times()])
    assert np.max(np.abs(u.values - exact)) < 10 * (g.dx[0] ** 2 + g.dt)


def test_2d_solver_residual_roundoff():
    g = build_grid("torus", 2, 1.0, 8, 0.5, 8)
    rng = np.random.default_rng(3)
    b = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape + (2,))
    f = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape)
    u = solve_frozen(b, f, g)
    res = pde_residual(u, b, f, g)
    assert np.max(np.abs(res)) < 1e-10


def test_crank_nicolson_residual_roundoff():
    sch = ParabolicScheme(time_stepping="crank_nicolson", advection="central")
    rng = np.random.default_rng(4)
    g1 = build_grid("torus", 1, 1.0, 32, 1.0, 16)
    b = rng.uniform(-1, 1, size=(g1.n_levels,) + g1.space_shape + (1,))
    f = rng.uniform(-1, 1, size=(g1.n_levels,) + g1.space_shape)
    u = solve_frozen(b, f, g1, scheme=sch)
    assert np.max(np.abs(pde_residual(u, b, f, g1, scheme=sch))) < 1e-12
    g2 = build_grid("torus", 2, 1.0, 8, 0.5, 8)
    b2 = rng.uniform(-1, 1, size=(g2.n_levels,) + g2.space_shape + (2,))
    f2 = rng.uniform(-1, 1, size=(g2.n_levels,) + g2.space_shape)
    u2 = solve_frozen(b2, f2, g2, scheme=sch)
    assert np.max(np.abs(pde_residual(u2, b2, f2, g2, scheme=sch))) < 1e-12


def test_2d_comparison_principle():
    rng = np.random.default_rng(59)
    g = build_grid("torus", 2, 1.0, 8, 0.25, 8)
    for _ in range(5):
        b = rng.uniform(-2, 2, size=(g.n_levels,) + g.space_shape + (2,))
        f1 = rng.uniform(-1, 1, size=(g.n_levels,) + g.space_shape)
        f2 = f1 + rng.uniform(0, 1, size=f1.shape)
        u1 = solve_frozen(b, f1, g)
        u2 = solve_frozen(b, f2, g)
        assert np.max(u1.values - u2.values) <= 1e-12
