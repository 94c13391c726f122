"""Measurable coefficient data: evaluation oracles, action sets, grid sampling.

An oracle maps (t, x, a) to a drift vector and a running cost and carries a
dominating bound Phi with |b| + |f| <= Phi everywhere.  Oracles are pure
closures over immutable parameters; evaluation is deterministic and
vectorized over points.

Conventions at jump sets (documented tie rules): indicator-type entries are
closed on the left (x in [c, .) takes the upper value) and sign(0) = +1.
Grid sampling is point evaluation at nodes, never cell averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import TORUS


class CoefficientError(ValueError):
    pass


def _promote_points(x, dim):
    """Normalize points to shape (..., dim)."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _torus_dist2(X, domain):
    """Squared torus distance to the origin, per point."""
    d2 = np.zeros(X.shape[:-1])
    for k in range(X.shape[-1]):
        L = domain.extent[k][1] - domain.extent[k][0]
        d = np.mod(X[..., k] + 0.5 * L, L) - 0.5 * L
        d2 = d2 + d**2
    return d2


def _dist2(X, domain):
    if domain.domain_kind == TORUS:
        return _torus_dist2(X, domain)
    return np.sum(X**2, axis=-1)


@dataclass(frozen=True)
class ActionSet:
    """Ordered finite list of actions (scalars or d-vectors).

    ``truncated`` marks the set as the length-N prefix of a countable family;
    ``family`` records which one.
    """

    values: np.ndarray
    truncated: bool = False
    family: str = ""

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", vals)
        if vals.shape[0] == 0:
            raise CoefficientError("action set must be nonempty")
        flat = vals.reshape(vals.shape[0], -1)
        if len({tuple(row) for row in flat}) != vals.shape[0]:
            raise CoefficientError("action set contains duplicate actions")

    def __len__(self):
        return int(self.values.shape[0])

    def action(self, index):
        return self.values[index]


@dataclass(frozen=True)
class ActionFamily:
    """Countable action family a_1, a_2, ... given by an enumeration rule.

    ``size`` bounds the number of distinct elements; prefixes absorb the
    whole family beyond it (matching truncation of an exhausted enumeration).
    """

    name: str
    enumerate_fn: object  # i (0-based) -> action value
    size: int = None

    def prefix(self, N):
        if N < 1:
            raise CoefficientError(f"prefix length must be >= 1, got {N}")
        if self.size is not None:
            N = min(N, self.size)
        vals = np.asarray([self.enumerate_fn(i) for i in range(N)], dtype=float)
        return ActionSet(vals, truncated=True, family=self.name)


class CoefficientOracle:
    """Evaluator (t, x, a) -> (drift, cost) with dominating bound Phi.

    ``eval_fn(t, X, a)`` receives points X of shape (..., dim) and an action
    broadcastable over the leading shape; it returns (b, f) with b of shape
    (..., dim) and f of shape (...).  ``bound_fn(t, X)`` returns Phi values.
    ``action_ok(a)`` guards the action universe for the checked entry point.
    """

    def __init__(self, name, dim, eval_fn, bound_fn, action_ok=None,
                 params=None, exact_value=None, p_exponent=None):
        self.name = name
        self.dim = int(dim)
        self._eval_fn = eval_fn
        self._bound_fn = bound_fn
        self._action_ok = action_ok
        self.params = dict(params or {})
        self.exact_value = exact_value  # closed-form value under action a=+1, if any
        self.p_exponent = p_exponent

    def eval(self, t, X, a):
        """Unchecked vectorized evaluation (hot path)."""
        return self._eval_fn(float(t), _promote_points(X, self.dim), a)

    def bound(self, t, X):
        return self._bound_fn(float(t), _promote_points(X, self.dim))

    def action_ok(self, a):
        if self._action_ok is None:
            return True
        return bool(np.all(self._action_ok(np.asarray(a, dtype=float))))

    def __repr__(self):
        return f"CoefficientOracle({self.name!r}, dim={self.dim}, params={self.params})"


def eval_coeff(oracle, t, x, a):
    """Checked single-point/batch evaluation of an oracle.

    Raises on an action outside the scenario's universe and on non-finite
    output (an internal fault of the catalog entry).
    """
    if not oracle.action_ok(a):
        raise CoefficientError(f"action {a!r} outside the universe of {oracle.name!r}")
    b, f = oracle.eval(t, x, a)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(f))):
        raise RuntimeError(f"catalog entry {oracle.name!r} produced non-finite values")
    return b, f


def sample_to_grid(oracle, grid, action):
    """Point-sample drift and cost at every node for one action.

    Returns (drift field with vector arity, cost field).
    """
    from .grids import SpaceTimeField

    X = grid.points()
    b_out = np.empty((grid.n_levels,) + grid.space_shape + (grid.dim,))
    f_out = np.empty((grid.n_levels,) + grid.space_shape)
    for it, t in enumerate(grid.times()):
        b, f = oracle.eval(t, X, action)
        b_out[it] = b
        f_out[it] = f
    return SpaceTimeField(grid, b_out), SpaceTimeField(grid, f_out)


def sample_all(oracle, grid, action_set):
    """Stacked per-action samples: B (n_a, levels, ..., dim), F (n_a, levels, ...)."""
    B = np.empty((len(action_set), grid.n_levels) + grid.space_shape + (grid.dim,))
    F = np.empty((len(action_set), grid.n_levels) + grid.space_shape)
    for ia in range(len(action_set)):
        bf, ff = sample_to_grid(oracle, grid, action_set.action(ia))
        B[ia] = bf.values
        F[ia] = ff.values
    return B, F


@dataclass
class BoundReport:
    """Outcome of the domination scan |b| + |f| <= Phi over nodes x actions."""

    passed: bool
    min_slack: float
    n_checked: int
    violations: list = field(default_factory=list)  # (t, x, action, excess)

    def summary(self):
        if self.passed:
            return f"bound check passed: min slack {self.min_slack:.3e} over {self.n_checked} samples"
        t, x, a, excess = self.violations[0]
        return (
            f"bound check FAILED at t={t:.6g}, x={np.asarray(x).ravel()}, a={a}: "
            f"|b|+|f| exceeds Phi by {excess:.3e} ({len(self.violations)} violations)"
        )


def verify_bound(oracle, grid, action_set, slack_tol=1e-12, max_violations=16):
    """Scan every (node, action) pair for the dominating-bound condition."""
    X = grid.points()
    min_slack = np.inf
    violations = []
    n_checked = 0
    for t in grid.times():
        phi = oracle.bound(t, X)
        for ia in range(len(action_set)):
            a = action_set.action(ia)
            b, f = oracle.eval(t, X, a)
            mag = np.sqrt(np.sum(b**2, axis=-1)) + np.abs(f)
            slack = phi - mag
            n_checked += slack.size
            m = float(np.min(slack))
            if m < min_slack:
                min_slack = m
            bad = np.argwhere(slack < -slack_tol)
            for loc in bad[: max(0, max_violations - len(violations))]:
                loc = tuple(loc)
                violations.append((float(t), X[loc], np.asarray(a).tolist(), float(-slack[loc])))
    return BoundReport(
        passed=len(violations) == 0,
        min_slack=float(min_slack),
        n_checked=n_checked,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# catalog


def _sign_closed_left(x):
    # sign(0) = +1 by convention
    return np.where(x >= 0.0, 1.0, -1.0)


def make_counterexample(domain):
    """Drift 0 exactly on the diagonal x = a, 1 elsewhere; quadratic cost.

    Actions are state-space points; choosing a = x switches the drift off on
    a null set, which mollification erases.
    """
    dim = domain.dim

    def eval_fn(t, X, a):
        a = _promote_points(a, dim)
        eq = np.all(X == np.broadcast_to(a, X.shape), axis=-1)
        bmag = np.where(eq, 0.0, 1.0)
        b = np.zeros(X.shape)
        b[..., 0] = bmag  # unit drift along the first axis off the diagonal
        f = _dist2(X, domain)
        return b, f

    def bound_fn(t, X):
        return 1.0 + _dist2(X, domain)

    return CoefficientOracle(
        "counterexample", dim, eval_fn, bound_fn,
        action_ok=None,  # the action universe is the whole state space
        params={}, p_exponent=dim + 3,
    )


def _multiplier_entry(name, domain, shape_fn, shape_sup, params, action_bound=1.0):
    """Drift a * shape(t, x) along the first axis, quadratic cost."""
    dim = domain.dim

    def eval_fn(t, X, a):
        a = np.asarray(a, dtype=float)
        b = np.zeros(X.shape)
        b[..., 0] = a * shape_fn(t, X)
        return b, _dist2(X, domain)

    def bound_fn(t, X):
        return action_bound * shape_sup + _dist2(X, domain)

    def action_ok(a):
        return np.abs(a) <= action_bound + 1e-12

    return CoefficientOracle(name, dim, eval_fn, bound_fn, action_ok=action_ok,
                             params=params, p_exponent=dim + 3)


def make_constant_drift(domain, c=1.0):
    """b(t, x, a) = a * c along the first axis, cost dist(x, 0)^2.

    On a box the frozen problem under a = +1 has the closed-form value
    ((x1 + c h)^3 - x1^3) / (3 c) + |x_rest|^2 h + d h^2 with h = T - t
    (the c = 0 limit is x1^2 h), attached as ``exact_value`` for scenarios
    with exact Dirichlet boundaries.
    """
    c = float(c)
    dim = domain.dim
    oracle = _multiplier_entry(
        "constant_drift", domain, lambda t, X: np.full(X.shape[:-1], c), abs(c),
        {"c": c},
    )

    def exact_value(t, X, T):
        X = _promote_points(X, dim)
        h = T - t
        x1 = X[..., 0]
        rest = np.sum(X[..., 1:] ** 2, axis=-1)
        if c == 0.0:
            lead = x1**2 * h
        else:
            lead = ((x1 + c * h) ** 3 - x1**3) / (3.0 * c)
        return lead + rest * h + dim * h**2

    oracle.exact_value = exact_value
    return oracle


def make_step_drift(domain, c=1.0):
    """b(t, x, a) = a * c * sign(x_1) with sign(0) = +1; quadratic cost."""
    return _multiplier_entry(
        "step_drift", domain,
        lambda t, X: float(c) * _sign_closed_left(X[..., 0]),
        abs(float(c)), {"c": float(c)},
    )


def make_checkerboard(domain, kx=1, kt=0):
    """Sign pattern alternating 2*kx cells along x_1 (and 2*kt in time)."""
    kx = int(kx)
    kt = int(kt)
    if kx < 1:
        raise CoefficientError("checkerboard needs kx >= 1")
    lo, hi = domain.extent[0]
    L = hi - lo

    def shape_fn(t, X):
        cell = np.floor((X[..., 0] - lo) / (L / (2 * kx))).astype(np.int64)
        s = np.where(cell % 2 == 0, 1.0, -1.0)
        if kt >= 1:
            tcell = int(np.floor(t / (getattr(domain, "T", 1.0) / (2 * kt)) + 1e-12))
            if tcell % 2 == 1:
                s = -s
        return s

    return _multiplier_entry("checkerboard", domain, shape_fn, 1.0,
                             {"kx": kx, "kt": kt})


def make_bang_bang(domain):
    """b(x, a) = a with A = {-1, +1}; cost dist(x, 0)^2."""
    dim = domain.dim

    def eval_fn(t, X, a):
        a = np.asarray(a, dtype=float)
        b = np.zeros(X.shape)
        b[..., 0] = a * np.ones(X.shape[:-1])
        return b, _dist2(X, domain)

    def bound_fn(t, X):
        return 1.0 + _dist2(X, domain)

    def action_ok(a):
        return np.isin(np.round(np.abs(a), 12), [1.0]).all()

    return CoefficientOracle("bang_bang", dim, eval_fn, bound_fn,
                             action_ok=action_ok, params={}, p_exponent=dim + 3)


def bang_bang_actions():
    return ActionSet(np.array([-1.0, 1.0]))


def bang_bang_family():
    """Enumeration (+1, -1); the first two elements exhaust the set."""
    return ActionFamily("bang_bang", lambda i: 1.0 if i % 2 == 0 else -1.0, size=2)


def make_smooth_baseline(domain, T, amplitude=0.25):
    """C-infinity drift and cost manufactured around a known solution.

    With the single action a = +1 the frozen linear problem has the exact
    solution u(s, x) = amplitude (T - s) sin(2 pi x_1); used for
    convergence-order studies.  Requires an integer-period torus in the
    first axis.
    """
    dim = domain.dim
    T = float(T)
    A = float(amplitude)
    two_pi = 2.0 * np.pi
    if domain.domain_kind == TORUS:
        L = domain.extent[0][1] - domain.extent[0][0]
        if abs(L - round(L)) > 1e-12:
            raise CoefficientError("smooth_baseline needs an integer torus period")

    def u_exact(t, X, T_=T):
        X = _promote_points(X, dim)
        return A * (T_ - t) * np.sin(two_pi * X[..., 0])

    def eval_fn(t, X, a):
        a = np.asarray(a, dtype=float)
        x1 = X[..., 0]
        s = np.sin(two_pi * x1)
        cshape = np.cos(two_pi * x1)
        b = np.zeros(X.shape)
        b[..., 0] = a * cshape
        # forcing chosen so that d_s u + Lap u + b(+1) grad u + f = 0
        f = A * (s + (two_pi**2) * (T - t) * s - cshape * two_pi * (T - t) * cshape)
        return b, f

    sup_f = A * (1.0 + two_pi**2 * T + two_pi * T)

    def bound_fn(t, X):
        return np.full(X.shape[:-1], 1.0 + sup_f + 1.0)

    oracle = CoefficientOracle(
        "smooth_baseline", dim, eval_fn, bound_fn,
        action_ok=lambda a: np.abs(a) <= 1.0 + 1e-12,
        params={"T": T, "amplitude": A}, p_exponent=dim + 3,
    )
    oracle.exact_value = lambda t, X, T_=T: u_exact(t, X, T_)
    return oracle


def make_tabulated(grid, b_values, f_values, phi_values=None, name="tabulated"):
    """Oracle backed by per-action sampled fields with nearest-node lookup.

    ``b_values`` has shape (n_actions, levels, ..., dim), ``f_values``
    (n_actions, levels, ...).  Actions are addressed by integer index.  Time
    lookup is constant from the left node; off-box points clamp to the
    nearest node (torus points wrap).
    """
    b_values = np.asarray(b_values, dtype=float)
    f_values = np.asarray(f_values, dtype=float)
    n_actions = b_values.shape[0]
    if phi_values is None:
        phi_values = (np.sqrt(np.sum(b_values**2, axis=-1)) + np.abs(f_values)).max(axis=0)
    phi_values = np.asarray(phi_values, dtype=float)

    def lookup(t, X):
        it = grid.time_index_left(t)
        pts = grid.wrap(X) if grid.domain_kind == TORUS else grid.clamp(X)
        idx = grid.nearest_index(pts)
        return (it,) + idx

    def eval_fn(t, X, a):
        ia = np.asarray(a)
        loc = lookup(t, X)
        if ia.ndim == 0:
            ib = int(ia)
            return b_values[(ib,) + loc], f_values[(ib,) + loc]
        ib = ia.astype(np.int64)
        return b_values[(ib,) + loc], f_values[(ib,) + loc]

    def bound_fn(t, X):
        loc = lookup(t, X)
        return phi_values[loc]

    def action_ok(a):
        a = np.asarray(a)
        return np.all((a == np.round(a)) & (a >= 0) & (a < n_actions))

    oracle = CoefficientOracle(name, grid.dim, eval_fn, bound_fn,
                               action_ok=action_ok,
                               params={"n_actions": int(n_actions)},
                               p_exponent=grid.dim + 3)
    oracle.grid = grid
    return oracle


CATALOG = {
    "counterexample": make_counterexample,
    "constant_drift": make_constant_drift,
    "step_drift": make_step_drift,
    "checkerboard": make_checkerboard,
    "bang_bang": make_bang_bang,
    "smooth_baseline": make_smooth_baseline,
}


def catalog_names():
    return sorted(CATALOG) + ["tabulated"]


def make_oracle(name, domain, **params):
    """Instantiate a catalog entry by name on the given domain geometry."""
    if name == "tabulated":
        raise CoefficientError("tabulated oracles are built from field files, see make_tabulated")
    if name not in CATALOG:
        raise CoefficientError(f"unknown catalog entry {name!r}; known: {catalog_names()}")
    return CATALOG[name](domain, **params)
