"""Piecewise-linear paths and exact variation norms.

A :class:`DiscretePath` stands for the continuous path obtained by linear
interpolation between its nodes.  For ``p >= 1`` the increment
``|X_v - X_u|**p`` is convex in each endpoint along a linear segment, so the
supremum over partitions is attained on partitions made of grid nodes and the
node-restricted dynamic programme below is exact.
"""

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MAX_DP_NODES = 20000
MAX_BRUTE_NODES = 14


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time nodes starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).copy()
        if t.ndim != 1 or len(t) < 2:
            raise ValidationError("a time grid needs at least 2 nodes")
        if not np.all(np.isfinite(t)):
            raise ValidationError("time grid contains non-finite values")
        if t[0] != 0.0:
            raise ValidationError(f"time grid must start at 0, got {t[0]!r}")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon, steps):
        if steps < 1:
            raise ValidationError("need at least one step")
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and len(self) == len(other)
                and np.array_equal(self.times, other.times))

    def __hash__(self):
        return hash(self.times.tobytes())

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return np.diff(self.times)

    @property
    def mesh(self):
        return float(np.max(np.diff(self.times)))

    def index_of(self, t, atol=1e-12):
        """Index of the node equal to ``t`` (within ``atol``)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol * max(1.0, self.horizon):
            raise ValidationError(f"time {t!r} is not a grid node")
        return i

    def refine(self, factor):
        """Subdivide every cell into ``factor`` equal sub-cells."""
        factor = int(factor)
        if factor < 1:
            raise ValidationError("refinement factor must be >= 1")
        if factor == 1:
            return self
        t = self.times
        frac = np.arange(factor) / factor
        inner = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        return TimeGrid(np.append(inner, t[-1]))


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Values on a :class:`TimeGrid`, shape ``(nodes, dim)``.

    ``meta`` carries free-form provenance (e.g. generator settings) and does
    not take part in comparisons.
    """

    grid: TimeGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValidationError("path values must be 1-d or 2-d")
        if v.shape[0] != len(self.grid):
            raise ValidationError(
                f"{v.shape[0]} values for a grid of {len(self.grid)} nodes")
        if v.shape[1] < 1:
            raise ValidationError("path dimension must be >= 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn, **meta):
        vals = np.asarray([np.atleast_1d(fn(t)) for t in grid.times], dtype=float)
        return cls(grid, vals, dict(meta))

    @property
    def times(self):
        return self.grid.times

    @property
    def dim(self):
        return self.values.shape[1]

    def __len__(self):
        return len(self.grid)

    def __eq__(self, other):
        return (isinstance(other, DiscretePath) and self.grid == other.grid
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def start(self):
        return self.values[0]

    @property
    def end(self):
        return self.values[-1]

    def at(self, t):
        """Linear interpolation at scalar or array times; returns ``(k, dim)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.interp(t, self.times, self.values[:, k])
                                for k in range(self.dim)])

    def on_grid(self, grid):
        """The same piecewise-linear path sampled on another grid."""
        if grid == self.grid:
            return self
        if abs(grid.horizon - self.grid.horizon) > 1e-12 * max(1.0, grid.horizon):
            raise ValidationError("grids cover different horizons")
        return DiscretePath(grid, self.at(grid.times), dict(self.meta))

    def channel(self, k):
        return DiscretePath(self.grid, self.values[:, [k]], dict(self.meta))

    def window(self, i, j):
        """Sub-path on nodes ``i..j``, re-based so its grid starts at 0."""
        t = self.times[i:j + 1]
        return DiscretePath(TimeGrid(t - t[0]), self.values[i:j + 1])

    def _binary(self, other, op):
        if isinstance(other, DiscretePath):
            grid = merge_grids(self.grid, other.grid)
            a, b = self.on_grid(grid), other.on_grid(grid)
            if a.dim != b.dim and 1 not in (a.dim, b.dim):
                raise ValidationError(f"dimension mismatch {a.dim} vs {b.dim}")
            return DiscretePath(grid, op(a.values, b.values))
        return DiscretePath(self.grid, op(self.values, np.asarray(other, dtype=float)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return DiscretePath(self.grid, -self.values)


def merge_grids(*grids):
    """Union of node times; grids must share the horizon."""
    first = grids[0]
    if all(g == first for g in grids[1:]):
        return first
    horizons = [g.horizon for g in grids]
    if max(horizons) - min(horizons) > 1e-12 * max(1.0, max(horizons)):
        raise ValidationError(f"cannot merge grids with horizons {horizons}")
    t = np.unique(np.concatenate([g.times for g in grids]))
    t[-1] = max(horizons)
    return TimeGrid(t)


def _window(path, window):
    n = len(path)
    if window is None:
        return 0, n - 1
    i, j = (int(w) for w in window)
    if i < 0:
        i += n
    if j < 0:
        j += n
    if not (0 <= i <= j < n):
        raise ValidationError(f"window {window!r} outside 0..{n - 1}")
    if i == j:
        raise ValidationError("empty window")
    return i, j


def _check_p(p):
    if not p >= 1:
        raise ValidationError(f"variation exponent must be >= 1, got {p!r}")


def _increment_norms(x, j, upto):
    d = x[j] - x[:upto]
    if d.shape[-1] == 1:
        return np.abs(d[:, 0])
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def _scale(x, axis):
    """Largest deviation from the first node; dividing by it keeps ``|.|**p``
    clear of underflow and overflow."""
    d = np.abs(x - np.take(x, [0], axis=axis))
    s = d.max(axis=tuple(range(axis, x.ndim)), keepdims=True)
    return np.where(s > 0, s, 1.0)


def _pvar_power(x, p):
    """max over node partitions of sum |increment|^p, for x of shape (n, d)."""
    n = len(x)
    if n > MAX_DP_NODES:
        raise ValidationError(
            f"window of {n} nodes exceeds the {MAX_DP_NODES}-node limit")
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + _increment_norms(x, j, j) ** p)
    return best[-1]


def pvar_norm(path: DiscretePath, p: float, window=None) -> float:
    """p-variation of ``path`` over a node window ``(i, j)`` (default: all).

    Exact for the piecewise-linear extension; cost is quadratic in the window
    length.
    """
    _check_p(p)
    i, j = _window(path, window)
    x = path.values[i:j + 1]
    s = float(_scale(x, 0).ravel()[0])
    return s * float(_pvar_power(x / s, p) ** (1.0 / p))


def pvar_suffix(values, p):
    """p-variation over every tail window ``[t_i, T]`` for a batch of paths.

    Parameters
    ----------
    values : array of shape (M, n) or (M, n, d)
        One path per row.
    p : float

    Returns
    -------
    array of shape (M, n)
        Entry ``[k, i]`` is the p-variation of path ``k`` restricted to nodes
        ``i..n-1``; the last column is zero.
    """
    _check_p(p)
    x = np.asarray(values, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    m, n, _ = x.shape
    if n > MAX_DP_NODES:
        raise ValidationError(
            f"window of {n} nodes exceeds the {MAX_DP_NODES}-node limit")
    s = _scale(x, 1)
    x = x / s
    tail = np.zeros((m, n))
    for i in range(n - 2, -1, -1):
        d = x[:, i + 1:, :] - x[:, i:i + 1, :]
        inc = np.abs(d[..., 0]) if d.shape[-1] == 1 else np.sqrt((d * d).sum(-1))
        tail[:, i] = np.max(inc ** p + tail[:, i + 1:], axis=1)
    return s[:, :, 0] * tail ** (1.0 / p)


def sup_norm(path: DiscretePath, window=None) -> float:
    """Largest Euclidean norm over the nodes of a window."""
    i, j = _window(path, window)
    v = path.values[i:j + 1]
    return float(np.max(np.sqrt(np.einsum("ij,ij->i", v, v))))


def var_distance(a: DiscretePath, b: DiscretePath, q: float) -> float:
    """Inhomogeneous q-variation distance ``|a_0 - b_0| + ||a - b||_q``.

    Both paths are sampled on the union of their grids first, which is exact
    for piecewise-linear paths.
    """
    _check_p(q)
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch {a.dim} vs {b.dim}")
    diff = a - b
    return pvar_norm(diff, q) + float(np.linalg.norm(diff.values[0]))


def _all_partition_sums(x, p):
    """p-sums of every node partition of x (n, d), endpoints included."""
    n = len(x)
    inner = n - 2
    masks = np.array(list(itertools.product((False, True), repeat=inner)),
                     dtype=bool).reshape(2 ** inner, inner)
    chosen = np.hstack([np.ones((len(masks), 1), bool), masks,
                        np.ones((len(masks), 1), bool)])
    diff = x[None, :, :] - x[:, None, :]
    dist = np.sqrt((diff * diff).sum(-1)) ** p
    # index of the next chosen node after position i
    nxt = np.empty(chosen.shape, dtype=int)
    nxt[:, -1] = n - 1
    for i in range(n - 2, -1, -1):
        nxt[:, i] = np.where(chosen[:, i + 1], i + 1, nxt[:, i + 1])
    total = np.zeros(len(chosen))
    for i in range(n - 1):
        total += np.where(chosen[:, i], dist[i, nxt[:, i]], 0.0)
    return total


def brute_force_pvar(path: DiscretePath, p: float, window=None) -> float:
    """p-variation by enumerating every node partition (windows <= 14 nodes)."""
    _check_p(p)
    i, j = _window(path, window)
    if j - i + 1 > MAX_BRUTE_NODES:
        raise ValidationError(
            f"brute force limited to {MAX_BRUTE_NODES} nodes, got {j - i + 1}")
    x = path.values[i:j + 1]
    s = float(_scale(x, 0).ravel()[0])
    return s * float(np.max(_all_partition_sums(x / s, p)) ** (1.0 / p))


def to_csv(path: DiscretePath, target=None):
    """Write ``t,x1,...,xd`` rows with shortest round-trip floats.

    ``target`` may be a filename or an open text stream; with ``None`` the
    CSV text is returned.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{k + 1}" for k in range(path.dim)])
    for t, row in zip(path.times, path.values):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return None


def from_csv(source) -> DiscretePath:
    """Read a path written by :func:`to_csv` (filename, stream or text)."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    if not header or header[0] != "t" or header[1:] != [
            f"x{k + 1}" for k in range(len(header) - 1)]:
        raise ValidationError(f"bad path CSV header {header!r}")
    if any(len(r) != len(header) for r in body):
        raise ValidationError("path CSV rows must match the header width")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"bad number in path CSV: {exc}") from None
    return DiscretePath(TimeGrid(data[:, 0]), data[:, 1:])
