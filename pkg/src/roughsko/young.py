"""Left-point Young-Stieltjes sums in one and two parameters."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .gaussian import rect_matrix
from .variation import as_partition

ISOMETRY_MAX_INTERVALS = 128


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Integrand2D:
    """Integrand f(s, t) with an optional declared zero set.

    ``zero`` is None, ``"diagonal"`` (f = 0 where s == t) or ``"s>=t"``
    (f carries the factor 1_{s<t}, strict inequality).
    """

    evaluator: Callable
    zero: Optional[str] = None

    def on_grid(self, s, t):
        S, T = np.meshgrid(s, t, indexing="ij")
        vals = np.asarray(self.evaluator(S, T), dtype=float)
        vals = np.broadcast_to(vals, S.shape + vals.shape[2:]).copy()
        if self.zero == "diagonal":
            vals[S == T] = 0.0
        elif self.zero == "s>=t":
            vals[S >= T] = 0.0
        elif self.zero is not None:
            raise ValueError(f"unknown zero-set descriptor {self.zero!r}")
        return vals


def _values(f):
    return np.asarray(getattr(f, "values", f), dtype=float)


def young_1d(f, g):
    """Left-point sum  sum_i f(t_i) (g(t_{i+1}) - g(t_i))  along the first axis.

    Accepts arrays or PathGrid-like objects; PathGrids must share their grid.
    """
    fg, gg = getattr(f, "grid", None), getattr(g, "grid", None)
    if fg is not None and gg is not None and fg != gg:
        raise ValueError("young_1d: f and g live on different grids")
    fv, gv = _values(f), _values(g)
    if fv.shape[0] != gv.shape[0]:
        raise ValueError(f"young_1d: grid lengths differ ({fv.shape[0]} vs {gv.shape[0]})")
    return np.sum(fv[:-1] * np.diff(gv, axis=0), axis=0)


def young_2d(f, R, sgrid, tgrid):
    """sum_{i,j} f(u_i, v_j) R([u_i,u_{i+1}] x [v_j,v_{j+1}])."""
    sgrid, tgrid = as_partition(sgrid), as_partition(tgrid)
    if isinstance(f, Integrand2D):
        vals = f.on_grid(sgrid.times[:-1], tgrid.times[:-1])
    else:
        vals = np.asarray(f, dtype=float)[: sgrid.n_intervals, : tgrid.n_intervals]
    rect = rect_matrix(R, sgrid, tgrid)
    return np.tensordot(rect, vals, axes=([0, 1], [0, 1]))


def slice_weights(R, t_lo, t_hi, sgrid):
    """Weights R([t_lo,t_hi] x [s_k,s_{k+1}]) for every cell of sgrid."""
    s = as_partition(sgrid).times
    col = R(t_hi, s) - R(t_lo, s)
    return np.diff(col)


def young_slice(f, R, t_lo, t_hi, sgrid):
    """sum_k f(s_k) [R(t_hi,s_{k+1}) - R(t_lo,s_{k+1}) - R(t_hi,s_k) + R(t_lo,s_k)]."""
    if not t_lo < t_hi:
        raise ValueError("young_slice needs t_lo < t_hi")
    w = slice_weights(R, t_lo, t_hi, sgrid)
    fv = _values(f)[: w.size]
    return np.tensordot(w, fv, axes=(0, 0))


def isometry_rhs_per_sample(Y, DY, R):
    """Per-sample value of
    sum <Y_s,Y_t> R(ds,dt) + sum tr(D_rY_t D_qY_s) R(ds,dr) R(dt,dq)  on the grid of Y.

    ``Y`` has values ``(..., n+1, e)``; ``DY`` has ``table`` (or is an array)
    ``(..., n+1, n+1, e, d)`` indexed ``[r, t]`` for D_{t_r} Y_{t_t}.
    """
    grid = as_partition(Y.grid)
    n = grid.n_intervals
    if n > ISOMETRY_MAX_INTERVALS:
        raise GridSizeError(f"isometry grid has {n} intervals (guard {ISOMETRY_MAX_INTERVALS})")
    y = _values(Y)[..., :n, :]
    K = np.asarray(getattr(DY, "table", DY), dtype=float)[..., :n, :n, :, :]
    P = rect_matrix(R, grid, grid)
    first = np.einsum("...ia,ij,...ja->...", y, P, y)
    # A[s,t] = sum_r P[s,r] K[r,t]; the 4-fold sum is sum_{s,t} tr(A[s,t] A[t,s])
    A = np.einsum("sr,...rtab->...stab", P, K)
    second = np.einsum("...stab,...tsba->...", A, A)
    return first + second


def isometry_rhs(Y, DY, R):
    """Monte Carlo estimate (mean over leading batch axes) of the isometry right-hand side."""
    return float(np.mean(isometry_rhs_per_sample(Y, DY, R)))
