"""Backward linear parabolic solver: d_s u + Lap u + b . grad u + f = 0, u(T) = 0.

Implicit Euler (default) or Crank-Nicolson in time, upwind (default) or
central advection in space.  One dimension solves a (cyclic) tridiagonal
system per step; two dimensions use an alternating-direction factorization
with tridiagonal line solves.  With upwind advection and implicit Euler every
step matrix is an M-matrix for any dt, dx and bounded drift, which is checked
at assembly; the discrete comparison principle is then a theorem of the
scheme, not an aspiration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tridiag
from .grids import BOX, TORUS, SpaceTimeField, default_boundary

IMPLICIT_EULER = "implicit_euler"
CRANK_NICOLSON = "crank_nicolson"
UPWIND = "upwind"
CENTRAL = "central"


class SchemeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParabolicScheme:
    """Discretization choices for the frozen-policy linear solver."""

    time_stepping: str = IMPLICIT_EULER
    advection: str = UPWIND
    max_sweeps: int = 5       # inner policy sweeps of the nonlinear marcher
    sweep_tol: float = 1e-12  # sup-norm stall tolerance for those sweeps

    def __post_init__(self):
        if self.time_stepping not in (IMPLICIT_EULER, CRANK_NICOLSON):
            raise SchemeError(f"unknown time stepping {self.time_stepping!r}")
        if self.advection not in (UPWIND, CENTRAL):
            raise SchemeError(f"unknown advection {self.advection!r}")

    @property
    def theta(self):
        return 1.0 if self.time_stepping == IMPLICIT_EULER else 0.5

    def claims_monotone(self):
        return self.time_stepping == IMPLICIT_EULER and self.advection == UPWIND

    def is_monotone(self, grid, b_max):
        """Whether the step matrices are M-matrices on this grid."""
        if self.time_stepping != IMPLICIT_EULER:
            return False
        if self.advection == UPWIND:
            return True
        return all(b_max * dx / 2.0 <= 1.0 + 1e-12 for dx in grid.dx)


def default_scheme():
    return ParabolicScheme()


def _axis_L_coeffs(beta, h, advection):
    """(lower, diag, upper) of L = d_xx + beta d_x along the last axis."""
    inv_h2 = 1.0 / (h * h)
    if advection == UPWIND:
        bp = np.maximum(beta, 0.0)
        bm = np.minimum(beta, 0.0)
        lower = inv_h2 - bm / h
        upper = inv_h2 + bp / h
        diag = -2.0 * inv_h2 - (bp - bm) / h
    else:
        lower = inv_h2 - beta / (2.0 * h)
        upper = inv_h2 + beta / (2.0 * h)
        diag = np.full_like(np.asarray(beta, dtype=float), -2.0 * inv_h2)
    return lower, diag, upper


def _implicit_coeffs(beta, h, gamma, scheme):
    """Rows of M = I - gamma L along the last axis, with the M-matrix check."""
    lo, di, up = _axis_L_coeffs(beta, h, scheme.advection)
    Ml = -gamma * lo
    Md = 1.0 - gamma * di
    Mu = -gamma * up
    if scheme.claims_monotone():
        if not (np.all(Ml <= 1e-14) and np.all(Mu <= 1e-14) and np.all(Md > 0)):
            raise SchemeError("monotone scheme assembly produced a non-M-matrix")
    return Ml, Md, Mu


def _apply_L_axis(u, beta, h, advection, axis, periodic):
    """L u along one axis (wraps on torus, one-sided garbage at box edges;
    callers restrict to interior rows on the box)."""
    lo, di, up = _axis_L_coeffs(np.moveaxis(beta, axis, -1), h, advection)
    v = np.moveaxis(u, axis, -1)
    if periodic:
        vm = np.roll(v, 1, axis=-1)
        vp = np.roll(v, -1, axis=-1)
    else:
        vm = np.empty_like(v)
        vp = np.empty_like(v)
        vm[..., 1:] = v[..., :-1]
        vm[..., 0] = v[..., 0]
        vp[..., :-1] = v[..., 1:]
        vp[..., -1] = v[..., -1]
    out = lo * vm + di * v + up * vp
    return np.moveaxis(out, -1, axis)


def _solve_axis(rhs, beta, h, gamma, scheme, axis, grid, edge_values=None):
    """Solve (I - gamma L_axis) u = rhs line by line along ``axis``.

    On the box, ``edge_values`` = (lo_values, hi_values) are imposed exactly
    and their stencil couplings move to the right-hand side.
    """
    periodic = grid.domain_kind == TORUS
    b = np.moveaxis(beta, axis, -1)
    r = np.moveaxis(rhs, axis, -1)
    Ml, Md, Mu = _implicit_coeffs(b, h, gamma, scheme)
    if periodic:
        if r.shape[-1] < 3:
            raise SchemeError("torus solves need at least 3 nodes per axis")
        x = tridiag.solve_cyclic(Ml, Md, Mu, r)
        return np.moveaxis(x, -1, axis)

    g_lo, g_hi = edge_values
    r_int = r[..., 1:-1].copy()
    r_int[..., 0] -= Ml[..., 1] * g_lo
    r_int[..., -1] -= Mu[..., -2] * g_hi
    x_int = tridiag.solve_tridiag(Ml[..., 1:-1], Md[..., 1:-1], Mu[..., 1:-1], r_int)
    x = np.empty_like(r)
    x[..., 0] = g_lo
    x[..., -1] = g_hi
    x[..., 1:-1] = x_int
    return np.moveaxis(x, -1, axis)


def _edge_values(boundary, grid, t):
    """Dirichlet values on the full mesh at time t (box only)."""
    g = boundary.evaluator(t, grid.points())
    return np.asarray(g, dtype=float)


def _step(u_next, b_lvl, f_lvl, grid, boundary, scheme, t_n, t_next,
          b_next_lvl=None, f_next_lvl=None):
    """One backward step from level n+1 to level n."""
    dt = grid.dt
    theta = scheme.theta
    periodic = grid.domain_kind == TORUS

    if theta < 1.0:
        f_mix = theta * f_lvl + (1.0 - theta) * f_next_lvl
        # factorized explicit part (I + g L_x)(I + g L_y) u, one factor in 1d
        g = (1.0 - theta) * dt
        expl = u_next
        for k in range(grid.dim - 1, -1, -1):
            expl = expl + g * _apply_L_axis(expl, b_next_lvl[..., k], grid.dx[k],
                                            scheme.advection, k, periodic)
        rhs = expl + dt * f_mix
    else:
        rhs = u_next + dt * f_lvl

    gamma = theta * dt
    if periodic:
        u = rhs
        for k in range(grid.dim):
            u = _solve_axis(u, b_lvl[..., k], grid.dx[k], gamma, scheme, k, grid)
        return u

    g_n = _edge_values(boundary, grid, t_n)
    if grid.dim == 1:
        return _solve_axis(rhs, b_lvl[..., 0], grid.dx[0], gamma, scheme, 0, grid,
                           edge_values=(g_n[0], g_n[-1]))
    # 2d box: x-sweep with x-edges pinned, then y-sweep, then pin the ring
    u_star = _solve_axis(rhs, b_lvl[..., 0], grid.dx[0], gamma, scheme, 0, grid,
                         edge_values=(g_n[0, :], g_n[-1, :]))
    u = _solve_axis(u_star, b_lvl[..., 1], grid.dx[1], gamma, scheme, 1, grid,
                    edge_values=(g_n[:, 0], g_n[:, -1]))
    u[0, :] = g_n[0, :]
    u[-1, :] = g_n[-1, :]
    u[:, 0] = g_n[:, 0]
    u[:, -1] = g_n[:, -1]
    return u


def solve_frozen(b_field, f_field, grid, boundary=None, scheme=None):
    """Solve the frozen-coefficient backward problem with zero terminal data.

    ``b_field`` is a vector drift field, ``f_field`` a scalar cost field.
    Returns the full space-time value field.
    """
    scheme = scheme or default_scheme()
    boundary = boundary or default_boundary(grid)
    boundary.check_domain(grid)
    B = b_field.values if isinstance(b_field, SpaceTimeField) else np.asarray(b_field, dtype=float)
    F = f_field.values if isinstance(f_field, SpaceTimeField) else np.asarray(f_field, dtype=float)
    if B.shape != (grid.n_levels,) + grid.space_shape + (grid.dim,):
        raise SchemeError(f"drift field has shape {B.shape}, expected levels x space x dim")

    times = grid.times()
    u = np.zeros((grid.n_levels,) + grid.space_shape)
    for n in range(grid.nt - 1, -1, -1):
        u[n] = _step(
            u[n + 1], B[n], F[n], grid, boundary, scheme, times[n], times[n + 1],
            b_next_lvl=B[n + 1], f_next_lvl=F[n + 1],
        )
    out = SpaceTimeField(grid, u)
    if not np.all(np.isfinite(u)):
        raise SchemeError("solver produced non-finite values")
    return out


def _interior_mask(grid):
    mask = np.ones(grid.space_shape, dtype=bool)
    if grid.domain_kind == BOX:
        for k in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[k] = 0
            mask[tuple(sl)] = False
            sl[k] = -1
            mask[tuple(sl)] = False
    return mask


def _step_operator(u_lvl, b_lvl, grid, scheme, gamma):
    """Apply the exact implicit operator the stepper inverts: factorized
    (I - gamma L_x)(I - gamma L_y) in 2d, (I - gamma L) in 1d."""
    periodic = grid.domain_kind == TORUS
    out = u_lvl
    for k in range(grid.dim - 1, -1, -1):
        out = out - gamma * _apply_L_axis(out, b_lvl[..., k], grid.dx[k],
                                          scheme.advection, k, periodic)
    return out


def pde_residual(u, b_field, f_field, grid, boundary=None, scheme=None):
    """Discrete residual of the marching equations, solver stencils included.

    Returns an array over (step, space); interior nodes carry the residual,
    box boundary nodes are zeroed.  Solver output has residual at roundoff
    scale; it grows with truncation error when ``u`` is an exact solution
    sampled on the grid.
    """
    scheme = scheme or default_scheme()
    B = b_field.values if isinstance(b_field, SpaceTimeField) else np.asarray(b_field, dtype=float)
    F = f_field.values if isinstance(f_field, SpaceTimeField) else np.asarray(f_field, dtype=float)
    U = u.values if isinstance(u, SpaceTimeField) else np.asarray(u, dtype=float)
    dt = grid.dt
    theta = scheme.theta
    res = np.zeros((grid.nt,) + grid.space_shape)
    mask = _interior_mask(grid)
    periodic = grid.domain_kind == TORUS
    for n in range(grid.nt):
        if theta == 1.0:
            lhs = _step_operator(U[n], B[n], grid, scheme, dt)
            r = (U[n + 1] + dt * F[n] - lhs) / dt
        else:
            g = 0.5 * dt
            lhs = _step_operator(U[n], B[n], grid, scheme, g)
            if grid.dim == 1:
                expl = U[n + 1] + g * _apply_L_axis(U[n + 1], B[n + 1][..., 0], grid.dx[0],
                                                    scheme.advection, 0, periodic)
            else:
                tmp = U[n + 1] + g * _apply_L_axis(U[n + 1], B[n + 1][..., 1], grid.dx[1],
                                                   scheme.advection, 1, periodic)
                expl = tmp + g * _apply_L_axis(tmp, B[n + 1][..., 0], grid.dx[0],
                                               scheme.advection, 0, periodic)
            r = (expl + dt * (0.5 * F[n] + 0.5 * F[n + 1]) - lhs) / dt
        res[n] = np.where(mask, r, 0.0)
    return res


@dataclass
class ConvergenceOrders:
    space: float
    time: float
    errors: list
    dxs: list
    dts: list
    skipped: bool = False


def convergence_order(problem_fn, grids, scheme=None, norm=np.inf):
    """Observed orders from a ladder of grids with a known exact solution.

    ``problem_fn(grid)`` returns (b_field, f_field, boundary, exact_values);
    the least-squares slopes of log error against log dx and log dt are
    returned.  Ladders shorter than 3 grids are rejected; errors at machine
    precision skip the fit.
    """
    if len(grids) < 3:
        raise SchemeError("convergence ladder needs at least 3 grids")
    errors, dxs, dts = [], [], []
    for grid in grids:
        b_field, f_field, boundary, exact = problem_fn(grid)
        u = solve_frozen(b_field, f_field, grid, boundary, scheme)
        e = np.asarray(exact, dtype=float)
        errors.append(float(np.max(np.abs(u.values - e))))
        dxs.append(grid.dx[0])
        dts.append(grid.dt)
    if max(errors) < 1e-12:
        return ConvergenceOrders(np.nan, np.nan, errors, dxs, dts, skipped=True)
    loge = np.log(errors)
    fit = lambda xs: float(np.polyfit(np.log(xs), loge, 1)[0])
    return ConvergenceOrders(fit(dxs), fit(dts), errors, dxs, dts)
