"""Level-2 lifts of piecewise-linear paths, Chen folds and coarsening."""
import numpy as np

from .tensor_algebra import GroupElement
from .variation import Partition, PartitionError, as_partition


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class RoughPath:
    """Per-interval increments (level1, level2) over a partition.

    Arrays may carry leading batch axes: ``level1`` is ``(..., n, d)`` and
    ``level2`` is ``(..., n, d, d)`` for ``n`` intervals.
    """

    def __init__(self, grid, level1, level2):
        self.grid = as_partition(grid)
        self.level1 = np.asarray(level1, dtype=float)
        self.level2 = np.asarray(level2, dtype=float)
        n = self.grid.n_intervals
        if self.level1.shape[-2] != n or self.level2.shape != self.level1.shape + self.level1.shape[-1:]:
            raise ValueError(f"increment shapes {self.level1.shape}, {self.level2.shape} "
                             f"do not fit {n} intervals")
        self._prefix = None

    @property
    def d(self):
        return self.level1.shape[-1]

    @property
    def batch_shape(self):
        return self.level1.shape[:-2]

    def __getitem__(self, k):
        """Select batch entries."""
        return RoughPath(self.grid, self.level1[k], self.level2[k])

    def segment(self, i):
        return GroupElement(self.level1[..., i, :], self.level2[..., i, :, :])

    def prefix(self):
        """(path, sig): x_{0,t_k} level 1 and level 2 at every grid point."""
        if self._prefix is None:
            path = np.zeros(self.batch_shape + (self.grid.times.size, self.d))
            np.cumsum(self.level1, axis=-2, out=path[..., 1:, :])
            steps = _outer(path[..., :-1, :], self.level1) + self.level2
            sig = np.zeros(path.shape + (self.d,))
            np.cumsum(steps, axis=-3, out=sig[..., 1:, :, :])
            self._prefix = (path, sig)
        return self._prefix

    def path(self):
        return self.prefix()[0]

    def increment(self, s, t):
        if s > t:
            raise ValueError("increment needs s <= t")
        a, b = self.grid.index_of([s, t])
        return fold(self.level1[..., a:b, :], self.level2[..., a:b, :, :])

    def increments_on(self, target):
        """Chen folds of the segments between consecutive points of ``target``."""
        target = as_partition(target)
        try:
            idx = self.grid.index_of(target.times)
        except PartitionError:
            raise PartitionError("target partition is not a subset of the path grid") from None
        path, sig = self.prefix()
        p, s = path[..., idx, :], sig[..., idx, :, :]
        d1 = np.diff(p, axis=-2)
        d2 = s[..., 1:, :, :] - s[..., :-1, :, :] - _outer(p[..., :-1, :], d1)
        return d1, d2

    def coarsen(self, target):
        target = as_partition(target)
        if target == self.grid:
            return self
        return RoughPath(target, *self.increments_on(target))

    def to_rows(self):
        """Rows ``i, t_lo, t_hi, level1..., level2...`` for an unbatched path."""
        if self.batch_shape:
            raise ValueError("to_rows needs an unbatched rough path")
        t = self.grid.times
        n = self.grid.n_intervals
        return np.column_stack([np.arange(n), t[:-1], t[1:], self.level1,
                                self.level2.reshape(n, -1)])


def fold(level1, level2):
    """Chen product of a run of segment increments along axis -2 / -3."""
    d = level1.shape[-1]
    if level1.shape[-2] == 0:
        return GroupElement(np.zeros(level1.shape[:-2] + (d,)),
                            np.zeros(level1.shape[:-2] + (d, d)))
    before = np.cumsum(level1, axis=-2) - level1
    total2 = np.sum(level2 + _outer(before, level1), axis=-3)
    return GroupElement(np.sum(level1, axis=-2), total2)


def lift_piecewise_linear(sample, grid=None):
    """Signature lift of the piecewise-linear interpolant of sampled values.

    ``sample`` is a GaussianSample (or anything with ``grid`` and ``values``)
    or a raw array ``(..., n+1, d)`` together with ``grid``.
    """
    if grid is None:
        grid, values = sample.grid, sample.values
    else:
        values = sample
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    delta = np.diff(values, axis=-2)
    return RoughPath(grid, delta, 0.5 * _outer(delta, delta))


def smooth_lift(level1_fn, level2_fn, grid):
    """Rough path from closed-form increments ``level1_fn(s, t)`` and ``level2_fn(s, t)``."""
    grid = as_partition(grid)
    s, t = grid.times[:-1], grid.times[1:]
    return RoughPath(grid, level1_fn(s, t), level2_fn(s, t))


def translate(x, g):
    """Translate a rough path by a path ``g`` sampled on the same grid.

    Level 1 is shifted by the increments of g. Level 2 picks up the cross
    integrals and the second level of g, evaluated as for straight segments.
    """
    g = np.asarray(g, dtype=float)
    dg = np.diff(g, axis=-2)
    dx = x.level1
    level2 = (x.level2 + 0.5 * (_outer(dx, dg) + _outer(dg, dx)) + 0.5 * _outer(dg, dg))
    return RoughPath(x.grid, dx + dg, level2)


def scale(x, lam):
    """Dilation (lam x1, lam^2 x2)."""
    return RoughPath(x.grid, lam * x.level1, lam * lam * x.level2)
