"""Two independent routes to the value function.

Route one is policy iteration: freeze the exact-argmin policy of the current
iterate's gradient, solve the linear backward problem, repeat.  Route two is
a direct nonlinear backward march: within each time step the Hamiltonian
minimization and the implicit solve are alternated until the per-step policy
stabilizes.  Both use the same one-step linear algebra and the same argmin
convention, so at convergence they solve the same discrete fixed-point
problem and serve as each other's oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientOracle, sample_all
from .grids import SpaceTimeField, default_boundary, gradient_pair, spatial_gradient
from .hamiltonian import Policy, SlackSchedule, argmin_level
from .parabolic import (
    IMPLICIT_EULER,
    UPWIND,
    SchemeError,
    _interior_mask,
    _step,
    _step_operator,
    default_scheme,
    solve_frozen,
)


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of policy iteration."""

    sup_changes: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    policy_changes: list = field(default_factory=list)
    max_pos_diffs: list = field(default_factory=list)      # max (u^k - u^{k-1})^+
    adjusted_ratios: list = field(default_factory=list)    # calibrates C per step
    monotone_violations: list = field(default_factory=list)
    C_monotone: float = 0.0
    converged: bool = False
    iterations: int = 0

    def to_csv(self, path_or_buf):
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w") if own else path_or_buf
        try:
            fh.write("k,sup_change,monotone_violation,residual,policy_changes\n")
            for k in range(self.iterations):
                fh.write(
                    f"{k + 1},{self.sup_changes[k]!r},{self.monotone_violations[k]!r},"
                    f"{self.residuals[k]!r},{self.policy_changes[k]}\n"
                )
        finally:
            if own:
                fh.close()


def _grads_all_levels(u_values, grid, advection):
    """Scheme-consistent gradient data for every time level."""
    if advection == UPWIND:
        return {"grad_pair_all": gradient_pair(u_values, grid, time_leading=True)}
    return {"grad_all": spatial_gradient(u_values, grid)}


def _argmin_all_levels(B, F, grid, grads):
    indices = np.empty((grid.n_levels,) + grid.space_shape, dtype=np.int64)
    for n in range(grid.n_levels):
        if "grad_pair_all" in grads:
            gp, gm = grads["grad_pair_all"]
            idx, _ = argmin_level(B[:, n], F[:, n], grad_pair=(gp[n], gm[n]))
        else:
            idx, _ = argmin_level(B[:, n], F[:, n], grad=grads["grad_all"][n])
        indices[n] = idx
    return indices


def _select_fields(B, F, indices):
    """Coefficient fields along a policy: B (n_a, levels, ..., dim) -> (levels, ..., dim)."""
    bsel = np.take_along_axis(B, indices[None, ..., None], axis=0)[0]
    fsel = np.take_along_axis(F, indices[None, ...], axis=0)[0]
    return bsel, fsel


def policy_iteration(oracle, action_set, grid, boundary=None, scheme=None,
                     u0=None, tol=1e-8, max_iters=200, slack_delta=1.0,
                     C_monotone=None):
    """Howard-type iteration: exact-argmin policy, then frozen linear solve.

    Stops when the sup-norm change drops below ``tol`` and the policy is
    unchanged on at least 99.9 percent of nodes, or at ``max_iters`` (the
    best iterate is then returned with the trace flagged, not an error).
    ``slack_delta`` parametrizes the verified (never exploited) slack
    schedule; ``C_monotone`` overrides the trace-calibrated adjusted-sequence
    constant.
    """
    scheme = scheme or default_scheme()
    boundary = boundary or default_boundary(grid)
    schedule = SlackSchedule(delta=slack_delta)
    p_exp = oracle.p_exponent or (grid.dim + 3)
    if not schedule.check_exponent(grid.dim, p_exp):
        raise SchemeError(
            f"slack_delta={slack_delta} violates delta > d/(2p) = {grid.dim / (2 * p_exp):g}"
        )
    B, F = sample_all(oracle, grid, action_set)

    u = np.zeros((grid.n_levels,) + grid.space_shape) if u0 is None else np.asarray(u0, dtype=float).copy()
    trace = IterationTrace()
    times = grid.times()
    horizon = (grid.T - times).reshape((-1,) + (1,) * grid.dim)
    n_nodes = u.size
    prev_indices = None
    policy_indices = None

    for k in range(1, max_iters + 1):
        grads = _grads_all_levels(u, grid, scheme.advection)
        policy_indices = _argmin_all_levels(B, F, grid, grads)
        bsel, fsel = _select_fields(B, F, policy_indices)
        u_new = solve_frozen(bsel, fsel, grid, boundary, scheme).values

        diff = u_new - u
        sup_change = float(np.max(np.abs(diff)))
        pos = np.maximum(diff, 0.0)
        max_pos = float(np.max(pos))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(horizon > 0, pos / (2.0 ** (-k) * np.maximum(horizon, 1e-300)), 0.0)
        trace.adjusted_ratios.append(float(np.max(ratio)))
        trace.sup_changes.append(sup_change)
        trace.max_pos_diffs.append(max_pos)
        changed = n_nodes if prev_indices is None else int(np.sum(policy_indices != prev_indices))
        trace.policy_changes.append(changed)
        trace.residuals.append(
            hjb_residual(u_new, oracle, action_set, grid, boundary, scheme, tables=(B, F))
        )

        prev_indices = policy_indices
        u = u_new
        trace.iterations = k
        if sup_change < tol and changed <= max(1e-3 * n_nodes, 0):
            trace.converged = True
            break

    # adjusted-sequence constant: calibrated from k >= 2 transitions unless given
    if C_monotone is None:
        C = max(trace.adjusted_ratios[1:], default=0.0)
    else:
        C = float(C_monotone)
    trace.C_monotone = C
    # violation of u^k - u^{k-1} <= C 2^-k (T - s), in the ratio normalization;
    # the first transition starts from an arbitrary u^0 and is not compared
    trace.monotone_violations = [
        0.0 if k == 1 else max(0.0, trace.adjusted_ratios[k - 1] - C)
        for k in range(1, trace.iterations + 1)
    ]

    policy = Policy(grid, policy_indices, action_set)
    out = SpaceTimeField(grid, u, meta={"converged": trace.converged, "iterations": trace.iterations})
    return out, policy, trace


def solve_policy_value(oracle, policy, grid, boundary=None, scheme=None):
    """Frozen value under an arbitrary fixed grid policy (u^alpha of the theory)."""
    B, F = sample_all(oracle, grid, policy.action_set)
    bsel, fsel = _select_fields(B, F, policy.indices)
    return solve_frozen(bsel, fsel, grid, boundary or default_boundary(grid),
                        scheme or default_scheme())


def _grad_level(u_lvl, grid, advection):
    if advection == UPWIND:
        gp, gm = gradient_pair(u_lvl[None], grid, time_leading=True)
        return {"grad_pair": (gp[0], gm[0])}
    g = spatial_gradient(u_lvl[None], grid)
    return {"grad": g[0]}


def solve_hjb_direct(oracle_or_H, action_set, grid, boundary=None, scheme=None):
    """Nonlinear backward march with per-step policy-freeze sweeps.

    Diffusion (and the frozen advection) is implicit; the minimization is
    explicit at the current step's gradient and is tightened by at most
    ``scheme.max_sweeps`` inner sweeps.  Steps whose policy keeps chattering
    are flagged in the output metadata, the value is still returned.

    ``oracle_or_H`` is a CoefficientOracle, or a callable H(t, X, P) giving
    an effective Hamiltonian directly (the analytic-injection escape hatch;
    solved with explicit H and implicit diffusion).
    """
    scheme = scheme or default_scheme()
    if scheme.time_stepping != IMPLICIT_EULER:
        raise SchemeError("the direct HJB marcher supports implicit Euler only")
    boundary = boundary or default_boundary(grid)
    boundary.check_domain(grid)

    if isinstance(oracle_or_H, CoefficientOracle):
        return _direct_oracle(oracle_or_H, action_set, grid, boundary, scheme)
    return _direct_callable(oracle_or_H, grid, boundary, scheme)


def _direct_oracle(oracle, action_set, grid, boundary, scheme):
    B, F = sample_all(oracle, grid, action_set)
    return solve_hjb_tables(B, F, grid, boundary, scheme, action_set=action_set)


def solve_hjb_tables(B, F, grid, boundary=None, scheme=None, action_set=None):
    """Direct HJB march on pre-sampled per-action coefficient tables.

    ``B`` has shape (n_actions, levels, ..., dim) and ``F`` (n_actions,
    levels, ...); this is the entry point for mollified-coefficient sweeps
    where the tables are produced by convolution rather than sampling.
    """
    scheme = scheme or default_scheme()
    if scheme.time_stepping != IMPLICIT_EULER:
        raise SchemeError("the direct HJB marcher supports implicit Euler only")
    boundary = boundary or default_boundary(grid)
    boundary.check_domain(grid)
    times = grid.times()
    u = np.zeros((grid.n_levels,) + grid.space_shape)
    indices = np.zeros((grid.n_levels,) + grid.space_shape, dtype=np.int64)
    idx_T, _ = argmin_level(B[:, grid.nt], F[:, grid.nt],
                            grad=np.zeros(grid.space_shape + (grid.dim,)))
    indices[grid.nt] = idx_T
    flagged_steps = []

    for n in range(grid.nt - 1, -1, -1):
        u_guess = u[n + 1]
        prev_idx = None
        stable = False
        for _ in range(scheme.max_sweeps):
            grads = _grad_level(u_guess, grid, scheme.advection)
            if "grad_pair" in grads:
                idx, _ = argmin_level(B[:, n], F[:, n], grad_pair=grads["grad_pair"])
            else:
                idx, _ = argmin_level(B[:, n], F[:, n], grad=grads["grad"])
            if prev_idx is not None and np.array_equal(idx, prev_idx):
                stable = True
                break
            bsel, fsel = _select_fields(B[:, n][:, None], F[:, n][:, None], idx[None])
            u_guess = _step(u[n + 1], bsel[0], fsel[0], grid, boundary, scheme,
                            times[n], times[n + 1])
            prev_idx = idx
        if not stable:
            flagged_steps.append(n)
        u[n] = u_guess
        indices[n] = prev_idx

    meta = {"inner_flagged_steps": flagged_steps, "converged": len(flagged_steps) == 0}
    out = SpaceTimeField(grid, u, meta=meta)
    if action_set is not None:
        out.policy = Policy(grid, indices, action_set)
    return out


def _direct_callable(H, grid, boundary, scheme):
    times = grid.times()
    X = grid.points()
    u = np.zeros((grid.n_levels,) + grid.space_shape)
    zero_b = np.zeros(grid.space_shape + (grid.dim,))
    flagged_steps = []
    for n in range(grid.nt - 1, -1, -1):
        u_guess = u[n + 1]
        prev_cand = None
        stable = False
        for _ in range(scheme.max_sweeps):
            grad = spatial_gradient(u_guess[None], grid)[0]
            h_vals = np.asarray(H(times[n], X, grad), dtype=float)
            cand = _step(u[n + 1], zero_b, h_vals, grid, boundary, scheme,
                         times[n], times[n + 1])
            if prev_cand is not None:
                scale = max(1.0, float(np.max(np.abs(cand))))
                if float(np.max(np.abs(cand - prev_cand))) < scheme.sweep_tol * scale:
                    stable = True
                    u_guess = cand
                    break
            prev_cand = cand
            u_guess = cand
        if not stable:
            flagged_steps.append(n)
        u[n] = u_guess
    meta = {"inner_flagged_steps": flagged_steps, "converged": len(flagged_steps) == 0}
    return SpaceTimeField(grid, u, meta=meta)


def hjb_residual(u, oracle_or_H, action_set, grid, boundary=None, scheme=None,
                 tables=None):
    """Sup-norm discrete HJB residual over interior nodes, solver stencils.

    For each marching step the exact-argmin Hamiltonian of the given field's
    own gradient enters the inverted step operator; solver output therefore
    has residual at roundoff scale (or the inner sweep tolerance).
    """
    scheme = scheme or default_scheme()
    U = u.values if isinstance(u, SpaceTimeField) else np.asarray(u, dtype=float)
    dt = grid.dt
    mask = _interior_mask(grid)
    X = grid.points()
    worst = 0.0

    callable_H = not isinstance(oracle_or_H, CoefficientOracle)
    if not callable_H:
        if tables is None:
            tables = sample_all(oracle_or_H, grid, action_set)
        B, F = tables

    times = grid.times()
    for n in range(grid.nt):
        if callable_H:
            grad = spatial_gradient(U[n][None], grid)[0]
            h_vals = np.asarray(oracle_or_H(times[n], X, grad), dtype=float)
            lhs = _step_operator(U[n], np.zeros(grid.space_shape + (grid.dim,)),
                                 grid, scheme, dt)
            r = (U[n + 1] + dt * h_vals - lhs) / dt
        else:
            grads = _grad_level(U[n], grid, scheme.advection)
            if "grad_pair" in grads:
                idx, _ = argmin_level(B[:, n], F[:, n], grad_pair=grads["grad_pair"])
            else:
                idx, _ = argmin_level(B[:, n], F[:, n], grad=grads["grad"])
            bsel, fsel = _select_fields(B[:, n][:, None], F[:, n][:, None], idx[None])
            lhs = _step_operator(U[n], bsel[0], grid, scheme, dt)
            r = (U[n + 1] + dt * fsel[0] - lhs) / dt
        worst = max(worst, float(np.max(np.abs(np.where(mask, r, 0.0)))))
    return worst
