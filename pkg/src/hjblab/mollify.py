"""Space-time mollification: scaled bump kernel and discrete convolution.

The kernel is the standard radial bump exp(-1/(1 - r^2)) on the unit ball of
R^(1+d) (time is one coordinate), normalized to unit mass and rescaled by
epsilon.  Coefficient fields are extended by zero outside [0, T] in time;
space wraps on the torus and zero-extends on the box (with a boundary layer
of width epsilon, recorded on the output).  Discrete stencil weights are
renormalized to sum exactly to one at each epsilon so that quadrature drift
never contaminates small-gap experiments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .grids import SpaceTimeField, TORUS


class MollifyError(ValueError):
    pass


def _bump(r2):
    """Unnormalized radial profile as a function of |z|^2, zero for r >= 1."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


# surface measure constants on the unit sphere S^d in R^(d+1)
_SPHERE_AREA = {1: 2.0 * np.pi, 2: 4.0 * np.pi}
# integral of |omega_1| over S^d
_SPHERE_ABS1 = {1: 4.0, 2: 2.0 * np.pi}


@lru_cache(maxsize=None)
def _kernel_constants(dim):
    """(mass Z, L1 norm of the gradient, first absolute time moment) for eps = 1."""
    if dim not in (1, 2):
        raise MollifyError(f"kernel supports spatial dim 1 or 2, got {dim}")
    area = _SPHERE_AREA[dim]

    def radial(r):
        return np.exp(-1.0 / (1.0 - r * r)) if r < 1.0 else 0.0

    Z, _ = quad(lambda r: radial(r) * r**dim, 0.0, 1.0, limit=200)
    Z *= area

    def dradial(r):
        if r >= 1.0:
            return 0.0
        w = 1.0 - r * r
        return abs(-2.0 * r / w**2 * np.exp(-1.0 / w))

    G, _ = quad(lambda r: dradial(r) * r**dim, 0.0, 1.0, limit=200)
    G *= area

    M, _ = quad(lambda r: radial(r) * r ** (dim + 1), 0.0, 1.0, limit=200)
    M *= _SPHERE_ABS1[dim]
    return Z, G / Z, M / Z


@dataclass(frozen=True)
class MollifierKernel:
    """Scaled mollifier zeta_eps(t, x) = eps^-(d+1) zeta(t/eps, x/eps)."""

    epsilon: float
    dim: int = 1

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise MollifyError(f"epsilon must be positive, got {self.epsilon}")
        _kernel_constants(self.dim)  # validates dim, warms the cache

    @property
    def mass_constant(self):
        return _kernel_constants(self.dim)[0]

    @property
    def grad_l1(self):
        """L1 norm of grad zeta at eps = 1; |grad g_eps| <= grad_l1 / eps * sup|g|."""
        return _kernel_constants(self.dim)[1]

    @property
    def abs_time_moment(self):
        """Mean |t| under zeta; the zero-extension layer loses at most
        2 * abs_time_moment * eps * sup|g| of time-integrated mass."""
        return _kernel_constants(self.dim)[2]


def kernel_value(kernel, t, x):
    """Evaluate zeta_eps at (t, x); exactly zero for |(t, x)| >= eps."""
    eps = kernel.epsilon
    x = np.asarray(x, dtype=float)
    if kernel.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    r2 = (np.asarray(t, dtype=float) / eps) ** 2 + np.sum((x / eps) ** 2, axis=-1)
    Z = kernel.mass_constant
    return _bump(r2) / Z * eps ** (-(kernel.dim + 1))


def kernel_normalization_error(kernel, n_per_axis=None):
    """|midpoint quadrature of zeta_eps over its support - 1|.

    The midpoint grid scales with eps, so the result is eps-independent; the
    profile is smooth and compactly supported, making the quadrature
    superalgebraically accurate.
    """
    dim = kernel.dim
    n = n_per_axis or (401 if dim == 1 else 161)
    eps = kernel.epsilon
    axis = (-eps + (np.arange(n) + 0.5) * (2 * eps / n))
    grids = np.meshgrid(*([axis] * (dim + 1)), indexing="ij")
    t = grids[0]
    x = np.stack(grids[1:], axis=-1)
    total = np.sum(kernel_value(kernel, t, x)) * (2 * eps / n) ** (dim + 1)
    return abs(float(total) - 1.0)


def _stencil(kernel, grid):
    """Grid-aligned stencil: offsets (time shift, space shifts...) and weights.

    Weights are kernel values times the cell volume, renormalized to sum to 1.
    """
    eps = kernel.epsilon
    dt, dxs = grid.dt, grid.dx
    jt = int(np.floor(eps / dt))
    jis = [int(np.floor(eps / dx)) for dx in dxs]
    taus = np.arange(-jt, jt + 1) * dt
    xi_axes = [np.arange(-j, j + 1) * dx for j, dx in zip(jis, dxs)]
    mesh = np.meshgrid(taus, *xi_axes, indexing="ij")
    tau = mesh[0]
    xi = np.stack(mesh[1:], axis=-1)
    w = kernel_value(kernel, tau, xi)
    total = w.sum()
    if total <= 0:
        raise MollifyError("kernel support does not resolve any grid node")
    w = w / total
    offsets = []
    it = np.argwhere(w > 0)
    for loc in it:
        shift_t = int(loc[0]) - jt
        shift_x = tuple(int(loc[k + 1]) - jis[k] for k in range(grid.dim))
        offsets.append((shift_t, shift_x, float(w[tuple(loc)])))
    return offsets


def _shift_time_zero(values, shift):
    """values[n - shift] with zero extension outside the time range."""
    out = np.zeros_like(values)
    n = values.shape[0]
    if shift == 0:
        return values.copy()
    if shift > 0:
        out[shift:] = values[: n - shift]
    else:
        out[:shift] = values[-shift:]
    return out


def _shift_space(values, axis, shift, periodic):
    if shift == 0:
        return values
    if periodic:
        return np.roll(values, shift, axis=axis)
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if shift > 0:
        dst[axis] = slice(shift, None)
        src[axis] = slice(None, -shift)
    else:
        dst[axis] = slice(None, shift)
        src[axis] = slice(-shift, None)
    out[tuple(dst)] = values[tuple(src)]
    return out


def mollify_field(field, kernel, grid=None):
    """Discrete space-time convolution zeta_eps * field.

    Time uses zero extension outside [0, T]; torus space wraps periodically;
    box space zero-extends (an eps-wide boundary layer is distorted and its
    width is recorded in the output metadata).  Warns when eps is not
    resolved by the grid spacing.
    """
    if isinstance(field, SpaceTimeField):
        grid = field.grid
        values = field.values
    else:
        values = np.asarray(field, dtype=float)
        if grid is None:
            raise MollifyError("grid required for bare arrays")
    eps = kernel.epsilon
    if eps < max(grid.dx):
        warnings.warn(
            f"mollifier eps={eps:g} below grid spacing max(dx)={max(grid.dx):g}; "
            "the discrete kernel degenerates toward a point mass",
            stacklevel=2,
        )
    periodic = grid.domain_kind == TORUS
    out = np.zeros_like(values)
    for shift_t, shift_x, w in _stencil(kernel, grid):
        term = _shift_time_zero(values, shift_t)
        for k, s in enumerate(shift_x):
            term = _shift_space(term, 1 + k, s, periodic)
        out += w * term
    meta = {"epsilon": eps}
    if not periodic:
        meta["boundary_layer_width"] = eps
    if isinstance(field, SpaceTimeField):
        return SpaceTimeField(grid, out, meta)
    return out


def mollify_samples(B, F, kernel, grid):
    """Mollify stacked per-action coefficient samples (see sample_all)."""
    B_eps = np.stack([mollify_field(B[i], kernel, grid) for i in range(B.shape[0])])
    F_eps = np.stack([mollify_field(F[i], kernel, grid) for i in range(F.shape[0])])
    return B_eps, F_eps


@dataclass
class LadderRung:
    epsilon: float
    lp_distance_b: float
    lp_distance_f: float
    sup_norm_b: float
    sup_norm_f: float


@dataclass
class LadderReport:
    """Coefficient convergence ladder ||g_eps - g||_p along decreasing eps."""

    oracle_name: str
    action: object
    p: float
    rungs: list

    def distances(self):
        return np.array([r.lp_distance_b + r.lp_distance_f for r in self.rungs])

    def to_csv(self, path_or_buf):
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w") if own else path_or_buf
        try:
            fh.write("epsilon,lp_distance,sup_norm\n")
            for r in self.rungs:
                fh.write(
                    f"{r.epsilon!r},{r.lp_distance_b + r.lp_distance_f!r},"
                    f"{max(r.sup_norm_b, r.sup_norm_f)!r}\n"
                )
        finally:
            if own:
                fh.close()


def coefficient_ladder(oracle, action, grid, eps_list, p=2):
    """Mollify one action's coefficients along an eps ladder, tracking L^p gaps.

    Distances are computed on a refined quadrature grid at least four times
    finer than the smallest eps, time restricted to the interior band
    [eps, T - eps] where the zero extension does not bite.
    """
    from .grids import build_grid, lp_norm
    from .coefficients import sample_to_grid

    eps_list = list(eps_list)
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise MollifyError("eps ladder must be strictly decreasing")
    eps_min = eps_list[-1]

    target = eps_min / 4.0
    nx = [max(n, int(np.ceil((hi - lo) / target)) + 1) for n, (lo, hi) in zip(grid.nx, grid.extent)]
    nt = max(grid.nt, int(np.ceil(grid.T / target)))
    fine = build_grid(grid.domain_kind, grid.dim, list(grid.extent), nx, grid.T, nt)

    b_raw, f_raw = sample_to_grid(oracle, fine, action)
    # one fixed interior band for every rung (the widest layer) so distances
    # are comparable along the ladder
    eps_max = eps_list[0]
    band = (fine.times() >= eps_max - 1e-12) & (fine.times() <= fine.T - eps_max + 1e-12)
    rungs = []
    for eps in eps_list:
        kernel = MollifierKernel(eps, dim=grid.dim)
        b_eps = mollify_field(b_raw, kernel)
        f_eps = mollify_field(f_raw, kernel)
        db = b_eps.values - b_raw.values
        df = f_eps.values - f_raw.values
        # zero out the time boundary layers so the distance reflects interior decay
        db = np.where(band.reshape((-1,) + (1,) * (db.ndim - 1)), db, 0.0)
        df = np.where(band.reshape((-1,) + (1,) * (df.ndim - 1)), df, 0.0)
        rungs.append(
            LadderRung(
                epsilon=float(eps),
                lp_distance_b=lp_norm(db, p, fine),
                lp_distance_f=lp_norm(df, p, fine),
                sup_norm_b=float(np.max(np.abs(b_eps.values))),
                sup_norm_f=float(np.max(np.abs(f_eps.values))),
            )
        )
    return LadderReport(oracle.name, np.asarray(action).tolist(), float(p), rungs)
