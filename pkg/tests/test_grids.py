import io

import numpy as np
import pytest

from hjblab.grids import (
    BoundaryCondition,
    FieldError,
    GridError,
    SpaceTimeField,
    build_grid,
    constant_field,
    dirichlet_boundary,
    field_from_csv,
    field_from_function,
    field_from_json,
    field_to_csv,
    field_to_json,
    gradient_pair,
    holder_seminorm,
    lp_norm,
    periodic_boundary,
    spatial_gradient,
)


def test_build_grid_torus_spacing():
    g = build_grid("torus", 1, 1.0, 8, 1.0, 4)
    assert g.dx == (0.125,)
    assert g.dt == 0.25
    assert g.n_levels == 5


def test_build_grid_box_spacing():
    g = build_grid("box", 1, (-6.0, 6.0), 241, 1.0, 512)
    assert g.dx[0] == pytest.approx(0.05, abs=1e-15)
    assert g.dt == pytest.approx(1.0 / 512, abs=1e-18)
    ax = g.space_axis(0)
    assert ax[0] == -6.0 and ax[-1] == 6.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(domain_kind="torus", dim=1, extent=1.0, nx=0, T=1.0, nt=4),
        dict(domain_kind="torus", dim=1, extent=1.0, nx=8, T=1.0, nt=0),
        dict(domain_kind="box", dim=1, extent=(0.0, 1.0), nx=8, T=-1.0, nt=4),
        dict(domain_kind="box", dim=1, extent=(1.0, 1.0), nx=8, T=1.0, nt=4),
        dict(domain_kind="cylinder", dim=1, extent=1.0, nx=8, T=1.0, nt=4),
        dict(domain_kind="torus", dim=3, extent=1.0, nx=8, T=1.0, nt=4),
    ],
)
def test_build_grid_rejects(kwargs):
    with pytest.raises(GridError):
        build_grid(**kwargs)


def test_lp_norm_constant_unit_measure():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 8)
    f = constant_field(g, 1.0)
    for p in (1, 2, 3.7, np.inf):
        assert lp_norm(f, p) == pytest.approx(1.0, abs=1e-12)


def test_lp_norm_quadrature_consistency():
    # constant c over a cylinder of measure m gives c * m^(1/p)
    g = build_grid("box", 2, [(0.0, 2.0), (0.0, 3.0)], [21, 31], 0.5, 4)
    c = 1.7
    f = constant_field(g, c)
    m = 2.0 * 3.0 * 0.5
    for p in (1, 2, 5):
        assert lp_norm(f, p) == pytest.approx(c * m ** (1 / p), rel=1e-12)


def test_lp_norm_linear_profile():
    g = build_grid("box", 1, (0.0, 1.0), 101, 1.0, 10)
    f = field_from_function(g, lambda t, X: X[..., 0])
    assert lp_norm(f, 2) == pytest.approx(3 ** -0.5, abs=2 * g.dx[0] ** 2)
    assert lp_norm(f, np.inf) == 1.0


def test_lp_norm_rejects_small_p():
    g = build_grid("torus", 1, 1.0, 8, 1.0, 2)
    with pytest.raises(FieldError):
        lp_norm(constant_field(g, 1.0), 0.5)


def test_norm_monotonicity():
    g = build_grid("torus", 1, 1.0, 32, 1.0, 8)
    rng = np.random.default_rng(7)
    for _ in range(10):
        f = rng.normal(size=(g.n_levels,) + g.space_shape)
        growth = 1.0 + rng.uniform(0.0, 1.0, size=f.shape)
        gbig = f * growth
        for p in (1, 2, np.inf):
            assert lp_norm(f, p, g) <= lp_norm(gbig, p, g) + 1e-14


def test_gradient_constant_is_zero():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 4)
    grad = spatial_gradient(constant_field(g, 3.0))
    assert np.all(grad.values == 0.0)


def test_gradient_affine_exact_on_box_interior():
    g = build_grid("box", 1, (0.0, 1.0), 33, 1.0, 2)
    f = field_from_function(g, lambda t, X: 2.0 * X[..., 0] + 1.0)
    grad = spatial_gradient(f).values[..., 0]
    assert np.max(np.abs(grad[:, 1:-1] - 2.0)) < 1e-12
    # one-sided edges are exact for affine data too
    assert np.max(np.abs(grad - 2.0)) < 1e-12


def test_gradient_richardson_ratio():
    errs = []
    for nx in (64, 128):
        g = build_grid("torus", 1, 1.0, nx, 1.0, 2)
        f = field_from_function(g, lambda t, X: np.sin(2 * np.pi * X[..., 0]))
        grad = spatial_gradient(f).values[0, :, 0]
        exact = 2 * np.pi * np.cos(2 * np.pi * g.space_axis(0))
        errs.append(np.max(np.abs(grad - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_gradient_upwind_needs_sign():
    g = build_grid("torus", 1, 1.0, 8, 1.0, 2)
    f = constant_field(g, 1.0)
    with pytest.raises(FieldError):
        spatial_gradient(f, scheme="upwind")


def test_gradient_pair_on_linear_field():
    g = build_grid("torus", 1, 1.0, 16, 1.0, 2)
    vals = np.tile(np.arange(16, dtype=float), (g.n_levels, 1))
    gp, gm = gradient_pair(vals, g)
    # interior forward and backward differences of an index ramp
    assert gp[0, 0, 0] == pytest.approx(1.0 / g.dx[0])
    assert gm[0, 1, 0] == pytest.approx(1.0 / g.dx[0])


def test_torus_translation_equivariance_bitwise():
    g = build_grid("torus", 1, 1.0, 32, 1.0, 4)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(g.n_levels,) + g.space_shape)
    f = SpaceTimeField(g, vals)
    rolled = SpaceTimeField(g, np.roll(vals, 5, axis=1))
    # shifting by a full period is the identity: norms and gradients bit-equal
    full = SpaceTimeField(g, np.roll(vals, g.nx[0], axis=1))
    assert np.array_equal(full.values, vals)
    for p in (1, 2, np.inf):
        assert lp_norm(f, p) == lp_norm(full, p)
    assert np.array_equal(spatial_gradient(f).values, spatial_gradient(full).values)
    # partial shifts commute with the stencil exactly and with norms to roundoff
    for p in (1, 2, np.inf):
        assert lp_norm(f, p) == pytest.approx(lp_norm(rolled, p), rel=1e-14)
    g1 = spatial_gradient(f).values
    g2 = spatial_gradient(rolled).values
    assert np.array_equal(np.roll(g1, 5, axis=1), g2)


def test_holder_seminorm_values():
    g = build_grid("box", 1, (0.0, 1.0), 41, 1.0, 1)
    assert holder_seminorm(np.ones(41), 0.5, g) == 0.0
    assert holder_seminorm(g.space_axis(0), 1.0, g) == pytest.approx(1.0, abs=1e-12)
    root = np.sqrt(g.space_axis(0))
    assert holder_seminorm(root, 0.5, g) == pytest.approx(1.0, abs=1e-2)
    with pytest.raises(FieldError):
        holder_seminorm(root, 1.5, g)


def test_holder_uses_torus_metric():
    g = build_grid("torus", 1, 1.0, 8, 1.0, 1)
    vals = np.zeros(8)
    vals[-1] = 1.0
    # nodes 7 and 0 are dx apart through the wrap, not 7 dx
    assert holder_seminorm(vals, 1.0, g) == pytest.approx(1.0 / g.dx[0], rel=1e-12)


def test_field_validation():
    g = build_grid("torus", 1, 1.0, 8, 1.0, 2)
    with pytest.raises(FieldError):
        SpaceTimeField(g, np.zeros((2, 8)))
    bad = np.zeros((3, 8))
    bad[0, 0] = np.nan
    with pytest.raises(FieldError):
        SpaceTimeField(g, bad)


def test_boundary_domain_compatibility():
    gt = build_grid("torus", 1, 1.0, 8, 1.0, 2)
    gb = build_grid("box", 1, (0.0, 1.0), 8, 1.0, 2)
    periodic_boundary().check_domain(gt)
    dirichlet_boundary().check_domain(gb)
    with pytest.raises(GridError):
        periodic_boundary().check_domain(gb)
    with pytest.raises(GridError):
        dirichlet_boundary().check_domain(gt)
    with pytest.raises(GridError):
        BoundaryCondition("dirichlet_exact")


def test_csv_roundtrip(tmp_path):
    g = build_grid("box", 1, (0.0, 1.0), 9, 0.5, 3)
    f = field_from_function(g, lambda t, X: t + X[..., 0] ** 2)
    path = tmp_path / "field.csv"
    field_to_csv(f, str(path))
    back = field_from_csv(g, str(path))
    assert np.array_equal(back.values, f.values)
    header = path.read_text().splitlines()[0]
    assert header == "t,x,value"


def test_csv_header_2d():
    g = build_grid("torus", 2, 1.0, 4, 0.5, 2)
    f = constant_field(g, 2.0)
    buf = io.StringIO()
    field_to_csv(f, buf)
    assert buf.getvalue().splitlines()[0] == "t,x,y,value"


def test_json_roundtrip():
    g = build_grid("torus", 1, 2.0, 8, 1.0, 2)
    f = field_from_function(g, lambda t, X: np.cos(X[..., 0]) * (1 + t))
    back = field_from_json(field_to_json(f))
    assert np.array_equal(back.values, f.values)
    assert back.grid == g
