"""Covariance models, rectangle increments and exact Gaussian sampling on a grid."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .variation import Partition, as_partition, pvar_dp

JITTERS = (0.0, 1e-14, 1e-12, 1e-10)


class CovarianceError(ValueError):
    pass


class CovModel:
    """Covariance R(s, t) of each (i.i.d.) component, on the horizon [0, T]."""

    stationary_increments = False

    def __init__(self, T=1.0):
        if not T > 0:
            raise ValueError("horizon T must be positive")
        self.T = float(T)

    def __call__(self, s, t):
        return self.cov(np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    def cov(self, s, t):
        raise NotImplementedError

    @property
    def rho(self):
        return 1.0

    def key(self):
        return (type(self).__name__, self.T)

    def lag_increments(self, h, lags):
        """Cross-covariance of two increments of length h whose starts are ``lags*h`` apart."""
        raise NotImplementedError

    def apply_factor(self, grid, z):
        """Return L z with L the Cholesky factor of the Gram matrix on grid[1:]."""
        return cholesky_factor(self, as_partition(grid)) @ z

    def __repr__(self):
        return f"{type(self).__name__}(T={self.T})"


class BrownianMotion(CovModel):
    stationary_increments = True

    def cov(self, s, t):
        return np.minimum(s, t)

    def lag_increments(self, h, lags):
        return np.where(np.asarray(lags) == 0, h, 0.0)

    def apply_factor(self, grid, z):
        # the Cholesky factor of min(t_i, t_j) has L[i, j] = sqrt(t_j - t_{j-1}) for j <= i
        dt = np.diff(as_partition(grid).times)
        return np.cumsum(np.sqrt(dt).reshape((-1,) + (1,) * (z.ndim - 1)) * z, axis=0)


class FractionalBM(CovModel):
    stationary_increments = True

    def __init__(self, H, T=1.0):
        super().__init__(T)
        if not 1.0 / 3.0 < H <= 1.0:
            raise CovarianceError(f"Hurst parameter must lie in (1/3, 1], got {H}")
        self.H = float(H)

    def cov(self, s, t):
        h2 = 2 * self.H
        return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)

    @property
    def rho(self):
        return max(1.0, 1.0 / (2 * self.H))

    def key(self):
        return super().key() + (self.H,)

    def lag_increments(self, h, lags):
        m = np.abs(np.asarray(lags, dtype=float))
        h2 = 2 * self.H
        return 0.5 * h ** h2 * (np.abs(m + 1) ** h2 + np.abs(m - 1) ** h2 - 2 * m ** h2)

    def apply_factor(self, grid, z):
        if self.H == 0.5:
            return BrownianMotion.apply_factor(self, grid, z)
        return super().apply_factor(grid, z)

    def __repr__(self):
        return f"FractionalBM(H={self.H}, T={self.T})"


class CustomCov(CovModel):
    """User-supplied covariance callable ``func(s, t)`` (vectorised)."""

    def __init__(self, func, T=1.0, rho=None):
        super().__init__(T)
        self.func = func
        self._rho = rho

    def cov(self, s, t):
        return np.broadcast_to(np.asarray(self.func(s, t), dtype=float), np.broadcast(s, t).shape)

    @property
    def rho(self):
        return 1.0 if self._rho is None else self._rho

    def key(self):
        return super().key() + (id(self.func),)


def table_covariance(times, table, T=None):
    """Custom model defined by a covariance table on a fixed set of times (no interpolation)."""
    grid = as_partition(times)
    table = np.asarray(table, dtype=float)
    if table.shape != (len(grid), len(grid)):
        raise CovarianceError(f"covariance table shape {table.shape} does not match {len(grid)} times")
    if not np.allclose(table, table.T, atol=1e-12):
        raise CovarianceError("covariance table is not symmetric")

    def func(s, t):
        return table[grid.index_of(s), grid.index_of(t)]
    return CustomCov(func, grid.T if T is None else T)


def _check_times(R, *times):
    for t in times:
        t = np.asarray(t)
        if np.any(t < -1e-12 * R.T) or np.any(t > R.T * (1 + 1e-12)):
            raise ValueError(f"time outside [0, {R.T}]: {t}")


def rect_increment(R, s1, s2, t1, t2):
    _check_times(R, s1, s2, t1, t2)
    return R(s1, t1) + R(s2, t2) - R(s1, t2) - R(s2, t1)


def sigma_sq(R, s, t):
    if np.any(np.asarray(s) > np.asarray(t)):
        raise ValueError("sigma_sq needs s <= t")
    return rect_increment(R, s, t, s, t)


def diag_variance(R, t):
    return R(t, t)


def rect_matrix(R, sgrid, tgrid):
    """Rectangle increments of R over every cell of sgrid x tgrid."""
    s = np.asarray(sgrid.times if isinstance(sgrid, Partition) else sgrid, dtype=float)
    t = np.asarray(tgrid.times if isinstance(tgrid, Partition) else tgrid, dtype=float)
    g = R(s[:, None], t[None, :])
    return np.diff(np.diff(g, axis=0), axis=1)


@lru_cache(maxsize=2)
def _cached_factor(key, times_bytes, model):
    times = np.frombuffer(times_bytes)
    tt = times[1:]
    gram = model(tt[:, None], tt[None, :])
    if not np.allclose(gram, gram.T, rtol=0, atol=1e-12 * max(1.0, np.abs(gram).max())):
        raise CovarianceError("Gram matrix is not symmetric")
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(gram + jitter * np.eye(tt.size))
        except np.linalg.LinAlgError:
            continue
    lam = np.linalg.eigvalsh(gram).min()
    raise CovarianceError(f"Gram matrix not positive semi-definite: smallest eigenvalue {lam:.3e} "
                          f"(jitter up to {JITTERS[-1]:g} tried)")


def cholesky_factor(R, grid):
    grid = as_partition(grid)
    if grid.times[0] != 0.0:
        raise CovarianceError("sampling grids must start at 0")
    return _cached_factor(R.key(), grid.times.tobytes(), R)


def draw_normals(seed, index, n, d):
    """Standard normals of draw ``index``: an independent stream per (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(index),)))
    return rng.standard_normal((n, d))


def sample_array(R, grid, d, count, seed, start=0):
    """Stack of draws ``start .. start+count-1``, shape (count, len(grid), d)."""
    grid = as_partition(grid)
    n = grid.n_intervals
    z = np.stack([draw_normals(seed, start + k, n, d) for k in range(count)], axis=1)
    x = R.apply_factor(grid, z.reshape(n, count * d)).reshape(n, count, d)
    out = np.zeros((count, n + 1, d))
    out[:, 1:] = np.moveaxis(x, 1, 0)
    return out


@dataclass
class GaussianSample:
    grid: Partition
    values: np.ndarray
    d: int
    seed: int
    index: int = 0


def sample_paths(R, grid, d, count, seed, start=0):
    grid = as_partition(grid)
    arr = sample_array(R, grid, d, count, seed, start)
    return [GaussianSample(grid, arr[k], d, seed, start + k) for k in range(count)]


def mixed_variation_check(R, grid, rho=None, q=None):
    """Smallest C with ||R(t,.) - R(s,.)||_{q-var;grid} <= C |t-s|^{1/rho} over grid pairs.

    ``q`` defaults to ``rho``; ``rho`` defaults to the model's own value.
    """
    rho = R.rho if rho is None else rho
    q = rho if q is None else q
    if rho < 1 or q < 1:
        raise ValueError("rho and q must be >= 1")
    t = as_partition(grid).times
    G = R(t[:, None], t[None, :])
    worst = 0.0
    for a in range(t.size):
        for b in range(a + 1, t.size):
            f = G[b] - G[a]
            var = pvar_dp(t.size, lambda j: np.abs(f[:j] - f[j]), q)[-1] ** (1.0 / q)
            worst = max(worst, var / (t[b] - t[a]) ** (1.0 / rho))
    return worst
