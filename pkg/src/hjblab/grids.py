"""Space-time grids on a torus or box, sampled fields, and discrete calculus.

The computational domain is the cylinder [0, T] x D with D either a periodic
torus (cell-centered nodes) or a box (endpoint-inclusive nodes).  Fields are
plain numpy arrays indexed (time level, space..., [component]) wrapped with a
reference to their grid.  All operations here are pure; fields are treated as
immutable snapshots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

TORUS = "torus"
BOX = "box"

CENTRAL = "central"
UPWIND = "upwind"


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid.

    Attributes
    ----------
    domain_kind : "torus" or "box"
    dim : spatial dimension (1 or 2)
    extent : per-axis (lo, hi); for the torus hi - lo is the period
    nx : per-axis node count
    T : terminal time
    nt : number of time steps (nt + 1 time levels)
    dx : per-axis spacing (derived)
    dt : time step (derived)
    """

    domain_kind: str
    dim: int
    extent: tuple
    nx: tuple
    T: float
    nt: int
    dx: tuple
    dt: float

    @property
    def n_levels(self):
        return self.nt + 1

    @property
    def space_shape(self):
        return tuple(self.nx)

    @property
    def periods(self):
        return tuple(hi - lo for lo, hi in self.extent)

    def times(self):
        return np.linspace(0.0, self.T, self.nt + 1)

    def space_axis(self, k):
        """Node coordinates along axis k (cell centers on the torus)."""
        lo, hi = self.extent[k]
        n = self.nx[k]
        if self.domain_kind == TORUS:
            return lo + (np.arange(n) + 0.5) * self.dx[k]
        return np.linspace(lo, hi, n)

    def space_axes(self):
        return [self.space_axis(k) for k in range(self.dim)]

    def meshes(self):
        """Coordinate arrays of shape space_shape, one per axis."""
        return np.meshgrid(*self.space_axes(), indexing="ij")

    def points(self):
        """All space nodes as an array of shape (*space_shape, dim)."""
        return np.stack(self.meshes(), axis=-1)

    def time_weights(self):
        w = np.full(self.nt + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def space_weights(self):
        """Quadrature weight per node: midpoint on torus, trapezoid on box."""
        w = np.ones(self.space_shape)
        for k in range(self.dim):
            wk = np.full(self.nx[k], self.dx[k])
            if self.domain_kind == BOX:
                wk[0] *= 0.5
                wk[-1] *= 0.5
            shape = [1] * self.dim
            shape[k] = self.nx[k]
            w = w * wk.reshape(shape)
        return w

    def wrap(self, x):
        """Map points into the fundamental domain (torus only)."""
        x = np.asarray(x, dtype=float)
        if self.domain_kind != TORUS:
            return x
        out = np.empty_like(x)
        for k in range(self.dim):
            lo, hi = self.extent[k]
            out[..., k] = lo + np.mod(x[..., k] - lo, hi - lo)
        return out

    def clamp(self, x):
        """Clamp points into the box (coefficient extension rule off-domain)."""
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for k in range(self.dim):
            lo, hi = self.extent[k]
            out[..., k] = np.clip(x[..., k], lo, hi)
        return out

    def nearest_index(self, x):
        """Per-axis nearest node indices for points of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        idx = []
        for k in range(self.dim):
            lo, hi = self.extent[k]
            if self.domain_kind == TORUS:
                i = np.floor((x[..., k] - lo) / self.dx[k]).astype(np.int64)
                i = np.mod(i, self.nx[k])
            else:
                i = np.rint((x[..., k] - lo) / self.dx[k]).astype(np.int64)
                i = np.clip(i, 0, self.nx[k] - 1)
            idx.append(i)
        return tuple(idx)

    def time_index_left(self, t):
        """Grid time level active at time t (constant from the left node)."""
        i = int(np.floor(t / self.dt + 1e-12))
        return min(max(i, 0), self.nt)


class GridError(ValueError):
    pass


def build_grid(domain_kind, dim, extent, nx, T, nt):
    """Construct a validated Grid.

    ``extent`` is one interval (lo, hi) or a scalar length per axis (scalar L
    means (0, L), torus shorthand); a single value is broadcast over axes.
    ``nx`` likewise.  Rejects nx < 2, nt < 1, T <= 0 and degenerate extents.
    """
    if domain_kind not in (TORUS, BOX):
        raise GridError(f"unknown domain kind {domain_kind!r}")
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if not (T > 0):
        raise GridError(f"T must be positive, got {T}")
    nt = int(nt)
    if nt < 1:
        raise GridError(f"nt must be >= 1, got {nt}")

    def _per_axis(val):
        if isinstance(val, (list, tuple)) and len(val) == dim and isinstance(val[0], (list, tuple)):
            return list(val)
        return [val] * dim

    ext = []
    for item in _per_axis(extent):
        if np.isscalar(item):
            lo, hi = 0.0, float(item)
        else:
            lo, hi = (float(item[0]), float(item[1]))
        if not (hi > lo):
            raise GridError(f"degenerate extent ({lo}, {hi})")
        ext.append((lo, hi))

    if np.isscalar(nx):
        nxs = [int(nx)] * dim
    else:
        nxs = [int(n) for n in nx]
    if len(nxs) != dim:
        raise GridError("nx must give one count per axis")
    for n in nxs:
        if n < 2:
            raise GridError(f"nx must be >= 2 per axis, got {n}")

    dxs = []
    for (lo, hi), n in zip(ext, nxs):
        if domain_kind == TORUS:
            dxs.append((hi - lo) / n)
        else:
            dxs.append((hi - lo) / (n - 1))

    return Grid(
        domain_kind=domain_kind,
        dim=dim,
        extent=tuple(ext),
        nx=tuple(nxs),
        T=float(T),
        nt=nt,
        dx=tuple(dxs),
        dt=float(T) / nt,
    )


class FieldError(ValueError):
    pass


class SpaceTimeField:
    """Real field sampled at every (time level, space node).

    Scalar fields have values of shape (nt + 1, *space_shape); vector fields
    carry a trailing component axis.  Construction validates shape and
    finiteness.
    """

    def __init__(self, grid, values, meta=None):
        values = np.asarray(values, dtype=float)
        expect = (grid.n_levels,) + grid.space_shape
        if values.shape != expect and values.shape[:-1] != expect:
            raise FieldError(
                f"field shape {values.shape} incompatible with grid {expect} (+ optional components)"
            )
        if not np.all(np.isfinite(values)):
            raise FieldError("field contains non-finite entries")
        self.grid = grid
        self.values = values
        self.meta = dict(meta or {})

    @property
    def is_vector(self):
        return self.values.ndim == self.grid.dim + 2

    def copy(self):
        return SpaceTimeField(self.grid, self.values.copy(), self.meta)

    def __repr__(self):
        kind = "vector" if self.is_vector else "scalar"
        return f"SpaceTimeField({kind}, shape={self.values.shape})"


def constant_field(grid, value, components=None):
    shape = (grid.n_levels,) + grid.space_shape
    if components is not None:
        shape = shape + (components,)
    return SpaceTimeField(grid, np.full(shape, float(value)))


def field_from_function(grid, fn, components=None):
    """Sample fn(t, X) at every node; X has shape (*space_shape, dim)."""
    X = grid.points()
    out = []
    for t in grid.times():
        out.append(np.asarray(fn(t, X), dtype=float))
    return SpaceTimeField(grid, np.stack(out, axis=0))


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary data: periodic on the torus, exact Dirichlet on the box.

    ``evaluator`` maps (t, X) -> values on an arbitrary set of points; it is
    required (and only allowed) for dirichlet_exact.
    """

    kind: str
    evaluator: object = None

    def __post_init__(self):
        if self.kind not in ("periodic", "dirichlet_exact"):
            raise GridError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet_exact" and self.evaluator is None:
            raise GridError("dirichlet_exact requires an evaluator g(t, x)")

    def check_domain(self, grid):
        if self.kind == "periodic" and grid.domain_kind != TORUS:
            raise GridError("periodic boundary only valid on torus")
        if self.kind == "dirichlet_exact" and grid.domain_kind != BOX:
            raise GridError("dirichlet_exact boundary only valid on box")


def periodic_boundary():
    return BoundaryCondition("periodic")


def dirichlet_boundary(evaluator=None):
    if evaluator is None:
        evaluator = lambda t, X: np.zeros(X.shape[:-1])
    return BoundaryCondition("dirichlet_exact", evaluator)


def default_boundary(grid):
    if grid.domain_kind == TORUS:
        return periodic_boundary()
    return dirichlet_boundary()


def lp_norm(field, p, grid=None):
    """Discrete L^p norm over the space-time cylinder.

    Trapezoid weights in time, midpoint (torus) or trapezoid (box) weights in
    space; p = inf returns the max of |values|.  Vector fields use the
    Euclidean magnitude pointwise.
    """
    if isinstance(field, SpaceTimeField):
        grid = field.grid
        values = field.values
    else:
        values = np.asarray(field, dtype=float)
        if grid is None:
            raise FieldError("grid required for bare arrays")
    mag = np.abs(values)
    if values.ndim == grid.dim + 2:
        mag = np.sqrt(np.sum(values**2, axis=-1))
    if p == np.inf or p == "inf":
        return float(np.max(mag))
    p = float(p)
    if p < 1:
        raise FieldError(f"p must be in [1, inf], got {p}")
    w = grid.time_weights().reshape((-1,) + (1,) * grid.dim) * grid.space_weights()
    return float(np.sum(w * mag**p) ** (1.0 / p))


def _diff_axis(values, axis, dx, periodic, mode):
    """One derivative along a space axis; mode in central/forward/backward."""
    if periodic:
        up = np.roll(values, -1, axis=axis)
        dn = np.roll(values, 1, axis=axis)
        if mode == "central":
            return (up - dn) / (2 * dx)
        if mode == "forward":
            return (up - values) / dx
        return (values - dn) / dx

    out = np.empty_like(values)

    def ax(i):
        s = [slice(None)] * values.ndim
        s[axis] = i
        return tuple(s)

    fwd = (values[ax(slice(1, None))] - values[ax(slice(None, -1))]) / dx
    if mode == "central":
        out[ax(slice(1, -1))] = (values[ax(slice(2, None))] - values[ax(slice(None, -2))]) / (2 * dx)
    elif mode == "forward":
        out[ax(slice(None, -1))] = fwd
    elif mode == "backward":
        out[ax(slice(1, None))] = fwd
    # box edges are always the available one-sided difference
    out[ax(0)] = np.take(fwd, 0, axis=axis)
    out[ax(-1)] = np.take(fwd, -1, axis=axis)
    return out


def spatial_gradient(field, grid=None, scheme=CENTRAL, sign_field=None):
    """Per-node finite-difference gradient, returned as a vector field.

    scheme "central" uses second-order central differences (one-sided at box
    edges).  scheme "upwind" picks the one-sided difference in the direction
    of ``sign_field`` (forward where sign >= 0), matching the monotone solver
    convention.
    """
    if isinstance(field, SpaceTimeField):
        grid = field.grid
        values = field.values
    else:
        values = np.asarray(field, dtype=float)
        if grid is None:
            raise FieldError("grid required for bare arrays")
    periodic = grid.domain_kind == TORUS
    time_leading = values.ndim == grid.dim + 1

    comps = []
    for k in range(grid.dim):
        axis = k + (1 if time_leading else 0)
        if scheme == CENTRAL:
            comps.append(_diff_axis(values, axis, grid.dx[k], periodic, "central"))
        elif scheme == UPWIND:
            if sign_field is None:
                raise FieldError("upwind gradient requires a sign field")
            sgn = np.asarray(sign_field)
            if sgn.ndim == values.ndim + 1:
                sgn = sgn[..., k]  # vector sign field: one component per axis
            fwd = _diff_axis(values, axis, grid.dx[k], periodic, "forward")
            bwd = _diff_axis(values, axis, grid.dx[k], periodic, "backward")
            comps.append(np.where(sgn >= 0, fwd, bwd))
        else:
            raise FieldError(f"unknown gradient scheme {scheme!r}")
    grad = np.stack(comps, axis=-1)
    if isinstance(field, SpaceTimeField):
        return SpaceTimeField(grid, grad)
    return grad


def gradient_pair(values, grid, time_leading=True):
    """Forward and backward one-sided gradients, stacked on the last axis.

    Returns (g_plus, g_minus) arrays of shape values.shape + (dim,); used by
    the upwind discrete Hamiltonian b+ . g_plus + b- . g_minus.
    """
    values = np.asarray(values, dtype=float)
    periodic = grid.domain_kind == TORUS
    gp, gm = [], []
    for k in range(grid.dim):
        axis = k + (1 if time_leading else 0)
        gp.append(_diff_axis(values, axis, grid.dx[k], periodic, "forward"))
        gm.append(_diff_axis(values, axis, grid.dx[k], periodic, "backward"))
    return np.stack(gp, axis=-1), np.stack(gm, axis=-1)


def holder_seminorm(slice_values, alpha, grid):
    """Max over node pairs of |f(x) - f(y)| / |x - y|^alpha on a space slice.

    Uses the torus metric on periodic domains.  Pairwise scan, intended for
    small diagnostic grids.
    """
    if not (0 < alpha <= 1):
        raise FieldError(f"alpha must be in (0, 1], got {alpha}")
    vals = np.asarray(slice_values, dtype=float).reshape(-1)
    pts = grid.points().reshape(-1, grid.dim)
    diff = np.abs(vals[:, None] - vals[None, :])
    dist2 = np.zeros((pts.shape[0], pts.shape[0]))
    for k in range(grid.dim):
        d = np.abs(pts[:, None, k] - pts[None, :, k])
        if grid.domain_kind == TORUS:
            L = grid.periods[k]
            d = np.minimum(d, L - d)
        dist2 += d**2
    dist = np.sqrt(dist2)
    mask = dist > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(diff[mask] / dist[mask] ** alpha))


# ---------------------------------------------------------------------------
# serialization


def field_to_csv(field, path_or_buf):
    """Write a scalar field as CSV rows t,x[,y],value."""
    if field.is_vector:
        raise FieldError("CSV serialization is defined for scalar fields")
    grid = field.grid
    X = grid.points().reshape(-1, grid.dim)
    cols = ["t"] + (["x"] if grid.dim == 1 else ["x", "y"]) + ["value"]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w") if own else path_or_buf
    try:
        fh.write(",".join(cols) + "\n")
        for it, t in enumerate(grid.times()):
            flat = field.values[it].reshape(-1)
            for xrow, v in zip(X, flat):
                coords = ",".join(repr(float(c)) for c in xrow)
                fh.write(f"{float(t)!r},{coords},{float(v)!r}\n")
    finally:
        if own:
            fh.close()


def field_from_csv(grid, path):
    """Read a scalar field written by field_to_csv back onto ``grid``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    n_nodes = int(np.prod(grid.space_shape))
    vals = np.asarray(data["value"], dtype=float)
    if vals.size != grid.n_levels * n_nodes:
        raise FieldError(
            f"CSV holds {vals.size} samples, grid wants {grid.n_levels * n_nodes}"
        )
    return SpaceTimeField(grid, vals.reshape((grid.n_levels,) + grid.space_shape))


def field_to_json(field):
    """Compact JSON form embedding the grid descriptor."""
    grid = field.grid
    return json.dumps(
        {
            "grid": grid_to_dict(grid),
            "vector": bool(field.is_vector),
            "values": field.values.tolist(),
        }
    )


def field_from_json(text):
    obj = json.loads(text)
    grid = grid_from_dict(obj["grid"])
    return SpaceTimeField(grid, np.asarray(obj["values"], dtype=float))


def grid_to_dict(grid):
    return {
        "domain_kind": grid.domain_kind,
        "dim": grid.dim,
        "extent": [list(e) for e in grid.extent],
        "nx": list(grid.nx),
        "T": grid.T,
        "nt": grid.nt,
    }


def grid_from_dict(d):
    return build_grid(
        d["domain_kind"],
        int(d["dim"]),
        [tuple(e) for e in d["extent"]],
        d["nx"],
        float(d["T"]),
        int(d["nt"]),
    )
