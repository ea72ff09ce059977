"""Cameron-Martin inner products and tensor norms through Young sums against R."""
from dataclasses import dataclass

import numpy as np

from .gaussian import rect_matrix
from .variation import as_partition, pvar_dp
from .young import GridSizeError, ISOMETRY_MAX_INTERVALS


@dataclass(frozen=True)
class Indicator:
    """1^{(u)}_{[0,t)}: the indicator of [0, t) in coordinate u (0-based) of R^d."""

    u: int
    t: float
    d: int

    def sample(self, grid):
        """0/1 values at the grid points, left-closed: value 1 where s < t."""
        s = as_partition(grid).times
        out = np.zeros((s.size, self.d))
        out[:, self.u] = (s < self.t).astype(float)
        return out

    def cm_path(self, R, grid):
        """The image path R(t, .) e_u sampled on the grid."""
        s = as_partition(grid).times
        out = np.zeros((s.size, self.d))
        out[:, self.u] = R(self.t, s)
        return out

    def pairing(self, path):
        """delta(h) for a sampled path whose grid contains t: X^{(u)}_t."""
        return path.at(self.t)[..., self.u]


@dataclass
class SampledCM:
    """R^d-valued function given by its values at the points of ``grid``."""

    grid: object
    values: np.ndarray

    def sample(self, grid):
        grid = as_partition(grid)
        if grid != as_partition(self.grid):
            raise ValueError("sampled function lives on a different grid")
        v = np.asarray(self.values, dtype=float)
        return v[:, None] if v.ndim == 1 else v


def cm_inner(f, g, R, grid=None):
    """<f, g> in the indicator-generated Cameron-Martin space."""
    if isinstance(f, Indicator) and isinstance(g, Indicator):
        return float(R(f.t, g.t)) if f.u == g.u else 0.0
    if grid is None:
        grid = f.grid if isinstance(f, SampledCM) else g.grid
    grid = as_partition(grid)
    fv, gv = f.sample(grid)[:-1], g.sample(grid)[:-1]
    P = rect_matrix(R, grid, grid)
    return float(np.einsum("ia,ij,ja->", fv, P, gv))


def cm_norm(f, R, grid=None):
    return float(np.sqrt(max(cm_inner(f, f, R, grid), 0.0)))


def cm_tensor_norm(kernel, R, grid):
    """Norm of a two-parameter kernel g(u, s) in the tensor-product space.

    ``kernel`` is either a table ``(n+1, n+1, ...)`` indexed ``[u, s]`` or a
    pair ``(g1, g2)`` of sampled factors giving g(u, s) = 1_{u<s} g1(s) g2(u)
    (matrix products when the factors are matrices). The squared norm is
    sum <g(u,s), g(v,t)> R(du,dv) R(ds,dt) over grid cells.
    """
    grid = as_partition(grid)
    n = grid.n_intervals
    if n > ISOMETRY_MAX_INTERVALS:
        raise GridSizeError(f"tensor norm grid has {n} intervals (guard {ISOMETRY_MAX_INTERVALS})")
    if isinstance(kernel, tuple):
        g1, g2 = (np.asarray(a, dtype=float) for a in kernel)
        G = np.einsum("s...ab,u...bc->us...ac", _as_matrix(g1), _as_matrix(g2))
        mask = np.arange(n + 1)[:, None] < np.arange(n + 1)[None, :]
        G = G * mask.reshape(mask.shape + (1,) * (G.ndim - 2))
    else:
        G = np.asarray(getattr(kernel, "table", kernel), dtype=float)
    G = G[:n, :n].reshape(n, n, -1)
    P = rect_matrix(R, grid, grid)
    B = np.einsum("uv,usk->svk", P, G)
    total = np.einsum("svk,vtk,st->", B, G, P)
    return float(np.sqrt(max(total, 0.0)))


def _as_matrix(a):
    if a.ndim == 1:
        return a[:, None, None]
    if a.ndim == 2:
        return a[:, :, None]
    return a


def embedding_ratio(h, R, grid, rho=None):
    """||R(t,.) e_u||_{rho-var;grid} / ||h||_H for an indicator generator (reported diagnostic)."""
    rho = R.rho if rho is None else rho
    path = h.cm_path(R, grid)[:, h.u]
    var = pvar_dp(path.size, lambda j: np.abs(path[:j] - path[j]), rho)[-1] ** (1.0 / rho)
    return var / cm_norm(h, R)
