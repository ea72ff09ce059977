"""p-variation functionals on sample grids, 2D grid variation and the greedy sequence."""
import itertools
from dataclasses import dataclass

import numpy as np

DP_MAX_POINTS_1D = 4096
DP_MAX_POINTS_2D = 512
ENUM_MAX_INTERIOR = 12


class PartitionError(ValueError):
    pass


class Partition:
    """Strictly increasing times ``0 = t_0 < ... < t_n = T``."""

    def __init__(self, times):
        times = np.array(times, dtype=float).reshape(-1)
        if times.size < 2:
            raise PartitionError("a partition needs at least 2 points")
        if not np.all(np.diff(times) > 0):
            raise PartitionError("partition times must be strictly increasing")
        times.flags.writeable = False
        self.times = times

    @classmethod
    def dyadic(cls, n, T=1.0):
        return cls(T * np.arange(2 ** n + 1) / 2 ** n)

    @classmethod
    def uniform(cls, count, T=1.0):
        return cls(np.linspace(0.0, T, count + 1))

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def n_intervals(self):
        return self.times.size - 1

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())

    def __repr__(self):
        return f"Partition({self.times.size} points on [{self.times[0]}, {self.T}])"

    def is_uniform(self, rtol=1e-12):
        dt = np.diff(self.times)
        return bool(np.all(np.abs(dt - dt[0]) <= rtol * dt[0]))

    def index_of(self, t, tol=None):
        """Grid indices of the times ``t``; off-grid times raise PartitionError."""
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, abs(self.T)) if tol is None else tol
        idx = np.clip(np.searchsorted(self.times, t), 0, self.times.size - 1)
        lower = np.clip(idx - 1, 0, None)
        pick = np.where(np.abs(self.times[lower] - t) < np.abs(self.times[idx] - t), lower, idx)
        if np.any(np.abs(self.times[pick] - t) > tol):
            raise PartitionError(f"time(s) not on the grid: {t}")
        return pick

    def is_subset_of(self, other):
        try:
            other.index_of(self.times)
        except PartitionError:
            return False
        return True


def as_partition(grid):
    return grid if isinstance(grid, Partition) else Partition(grid)


@dataclass
class GridFunction2D:
    """Values ``f(u_i, v_j)`` on a product grid; ``values`` may carry trailing matrix axes."""

    sgrid: Partition
    tgrid: Partition
    values: np.ndarray

    def __post_init__(self):
        self.sgrid = as_partition(self.sgrid)
        self.tgrid = as_partition(self.tgrid)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:2] != (len(self.sgrid), len(self.tgrid)):
            raise ValueError(f"values shape {self.values.shape} does not match grids "
                             f"({len(self.sgrid)}, {len(self.tgrid)})")

    @classmethod
    def from_callable(cls, f, sgrid, tgrid):
        sgrid, tgrid = as_partition(sgrid), as_partition(tgrid)
        return cls(sgrid, tgrid, f(sgrid.times[:, None], tgrid.times[None, :]))


def _check_p(p):
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")


def pvar_dp(n, row, p):
    """sup over sub-partitions of indices 0..n-1 of sum cost(i_k, i_{k+1})^p.

    ``row(j)`` returns the costs ``cost(i, j)`` for ``i = 0..j-1`` as an array.
    Returns the array ``best`` with ``best[j]`` the supremum over partitions of
    ``[0, j]``, so ``best[-1]`` is the p-th power of the p-variation.
    """
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + np.asarray(row(j), dtype=float) ** p)
    return best


def _euclid_rows(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x = x.reshape(x.shape[0], -1)
    return x, (lambda j: np.linalg.norm(x[:j] - x[j], axis=1))


def p_variation_1d(samples, p, dist=None, max_points=DP_MAX_POINTS_1D, return_exact=False):
    """p-variation of a sampled path over sub-partitions of its sample grid.

    ``samples`` are array rows (Euclidean distance) unless ``dist`` is given,
    in which case ``dist(a, b)`` is called on arbitrary points. Above
    ``max_points`` samples the DP runs on a thinned grid and the result is a
    lower bound (``exact`` False).
    """
    _check_p(p)
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 samples")
    exact = n <= max_points
    keep = np.arange(n) if exact else np.unique(np.linspace(0, n - 1, max_points).round().astype(int))
    if dist is None:
        _, row = _euclid_rows(np.asarray(samples, dtype=float)[keep])
    else:
        pts = [samples[k] for k in keep]
        row = lambda j: np.array([dist(pts[i], pts[j]) for i in range(j)])
    value = pvar_dp(len(keep), row, p)[-1] ** (1.0 / p)
    return (value, exact) if return_exact else value


def _rect_cells(values, srows, tcols):
    g = values[np.ix_(srows, tcols)]
    return np.diff(np.diff(g, axis=0), axis=1)


def _cost_2d(values, srows, tcols, p):
    cells = _rect_cells(values, srows, tcols)
    return float(np.sum(np.abs(cells) ** p))


def _best_rows(values, tcols, p):
    # rows chosen by DP with the columns fixed; rect(i,i';b) = D[i',b] - D[i,b]
    D = np.diff(values[:, tcols], axis=1)
    best = np.zeros(values.shape[0])
    arg = np.zeros(values.shape[0], dtype=int)
    for j in range(1, values.shape[0]):
        cand = best[:j] + np.sum(np.abs(D[j] - D[:j]) ** p, axis=1)
        arg[j] = int(np.argmax(cand))
        best[j] = cand[arg[j]]
    rows = [values.shape[0] - 1]
    while rows[-1] != 0:
        rows.append(arg[rows[-1]])
    return best[-1], np.array(rows[::-1])


def p_variation_2d_grid(f, p, max_points=DP_MAX_POINTS_2D, return_exact=False):
    """2D p-variation over grid-like sub-partitions of the sample grid.

    For fixed column choice the row choice is a 1D DP. Exact mode enumerates
    all column subsets of the shorter axis (at most ``2**12``); ``p == 1`` is
    exact directly since refining never lowers a sum of absolute increments.
    Larger inputs use alternating row/column DP ascent (``exact`` False).
    """
    _check_p(p)
    v = np.asarray(f.values, dtype=float)
    if v.ndim > 2:
        # matrix-valued: Frobenius norm of each rectangle increment, brute force
        def cost(srows, tcols):
            cells = np.diff(np.diff(f.values[np.ix_(srows, tcols)], axis=0), axis=1)
            cells = cells.reshape(cells.shape[0], cells.shape[1], -1)
            return float(np.sum(np.linalg.norm(cells, axis=-1) ** p))
        value, exact = _search_generic(cost, np.arange(v.shape[0]), np.arange(v.shape[1]))
        value = value ** (1.0 / p)
        return (value, exact) if return_exact else value
    transpose = v.shape[1] > v.shape[0]
    if transpose:
        v = v.T
    nr, nc = v.shape
    if p == 1:
        value, exact = _cost_2d(v, np.arange(nr), np.arange(nc), 1.0), True
    elif nc - 2 <= ENUM_MAX_INTERIOR and nr <= max_points:
        value, exact = 0.0, True
        interior = range(1, nc - 1)
        for k in range(nc - 1):
            for sub in itertools.combinations(interior, k):
                cols = np.array((0,) + sub + (nc - 1,))
                value = max(value, _best_rows(v, cols, p)[0])
    else:
        value, exact = _alternating(v, p), False
    value = value ** (1.0 / p)
    return (value, exact) if return_exact else value


def _alternating(v, p, sweeps=20):
    best = 0.0
    for cols in (np.arange(v.shape[1]), np.array([0, v.shape[1] - 1])):
        prev = -1.0
        for _ in range(sweeps):
            val, rows = _best_rows(v, cols, p)
            val, cols = _best_rows(v.T, rows, p)
            if val <= prev:
                break
            prev = val
        best = max(best, prev, val)
    return best


def _search_generic(cost, rows_all, cols_all):
    # brute force for matrix-valued inputs; only small grids are supported
    nr, nc = rows_all.size, cols_all.size
    if nr + nc - 4 > 2 * ENUM_MAX_INTERIOR:
        raise ValueError("matrix-valued 2D variation is only supported on small grids")
    best = 0.0
    for rs in _subsets(nr):
        for cs in _subsets(nc):
            best = max(best, cost(rs, cs))
    return best, True


def _subsets(n):
    interior = range(1, n - 1)
    for k in range(n - 1):
        for sub in itertools.combinations(interior, k):
            yield np.array((0,) + sub + (n - 1,))


def p_variation_2d_bruteforce(values, p):
    """Reference enumeration over every grid-like sub-partition (tiny grids only)."""
    v = np.asarray(values, dtype=float)
    best = 0.0
    for rs in _subsets(v.shape[0]):
        for cs in _subsets(v.shape[1]):
            best = max(best, _cost_2d(v, rs, cs, p))
    return best ** (1.0 / p)


def greedy_sequence(x, beta, p):
    """Greedy stopping times of a rough path at p-variation level ``beta``.

    tau_{i+1} is the first grid time u with ||x||^p_{p-var;[tau_i,u]} >= beta
    (else T). Returns ``(tau, count)`` where ``tau`` lists tau_0..tau_count,
    all strictly below T.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    from .tensor_algebra import homogeneous_norm, GroupElement
    times = x.grid.times
    path, sig = x.prefix()
    n = times.size
    tau_idx = [0]
    start = 0
    while True:
        best = np.zeros(n - start)
        hit = None
        for j in range(start + 1, n):
            i = np.arange(start, j)
            d1 = path[j] - path[i]
            d2 = sig[j] - sig[i] - path[i][:, :, None] * d1[:, None, :]
            cost = homogeneous_norm(GroupElement(d1, d2)) ** p
            best[j - start] = np.max(best[:j - start] + cost)
            if best[j - start] >= beta:
                hit = j
                break
        if hit is None or hit == n - 1:
            break
        tau_idx.append(hit)
        start = hit
    tau = times[tau_idx]
    return tau, len(tau) - 1


@dataclass
class PathGrid:
    """Samples on a grid: ``values`` has shape ``(..., len(grid), *value_shape)``."""

    grid: Partition
    values: np.ndarray

    def __post_init__(self):
        self.grid = as_partition(self.grid)
        self.values = np.asarray(self.values, dtype=float)

    def at(self, times):
        return np.take(self.values, self.grid.index_of(times), axis=self._time_axis())

    def restrict(self, target):
        target = as_partition(target)
        return PathGrid(target, self.at(target.times))

    def _time_axis(self):
        # first axis whose length matches the grid, scanning from the left
        for ax, n in enumerate(self.values.shape):
            if n == len(self.grid):
                return ax
        raise ValueError("no axis matches the grid length")
