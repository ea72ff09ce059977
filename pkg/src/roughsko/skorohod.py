"""Skorohod Riemann sums, the compensated second level and Wiener-chaos checks."""
from dataclasses import dataclass

import numpy as np

from .cameron_martin import Indicator, cm_inner
from .gaussian import rect_matrix, sigma_sq
from .variation import PathGrid, Partition, as_partition
from .young import slice_weights


@dataclass
class SkorohodSum:
    partition: Partition
    pairing: np.ndarray
    trace: np.ndarray

    @property
    def contributions(self):
        return self.pairing - self.trace

    @property
    def total(self):
        return np.sum(self.contributions, axis=-1)


def _values(p):
    return np.asarray(getattr(p, "values", p), dtype=float)


def trace_weights(R, coarse, fine):
    """W[i, k] = R([t_i,t_{i+1}] x [s_k,s_{k+1}]) for fine cells left of t_i, else 0."""
    coarse, fine = as_partition(coarse), as_partition(fine)
    idx = fine.index_of(coarse.times)
    W = np.zeros((coarse.n_intervals, fine.n_intervals))
    for i in range(coarse.n_intervals):
        a = idx[i]
        if a:
            W[i, :a] = slice_weights(R, coarse.times[i], coarse.times[i + 1], fine.times[: a + 1])
    return W


def skorohod_riemann(Y, bundle, V, x, R, coarse):
    """sum_i <Y_{t_i}, X_{t_i,t_{i+1}}> - int_0^{t_i} tr[J(t_i) Jinv(s) V(Y_s)] R(Delta_i, ds).

    ``Y``, ``bundle`` and ``x`` live on the fine grid; ``coarse`` must be a subset.
    """
    coarse = as_partition(coarse)
    if V.e != x.d:
        raise ValueError(f"the pairing <Y, X> needs e == d (got e={V.e}, d={x.d})")
    fine = x.grid
    idx = fine.index_of(coarse.times)
    y = _values(Y)[..., idx[:-1], :]
    dx, _ = x.increments_on(coarse)
    pairing = np.einsum("...ia,...ia->...i", y, dx)
    M = bundle.kernel_factor(V)[..., :-1, :, :]
    e = M.shape[-1]
    W = trace_weights(R, coarse, fine)
    S = np.matmul(W, M.reshape(M.shape[:-2] + (e * e,))).reshape(M.shape[:-3] + (W.shape[0], e, e))
    J = bundle.J[..., idx[:-1], :, :]
    trace = np.einsum("...iab,...iba->...i", J, S)
    return SkorohodSum(coarse, pairing, trace)


def skorohod_from_kernel(Y, kernel, x, R, coarse, sgrid=None):
    """Riemann-sum Skorohod integral for a general (possibly anticipating) integrand.

    ``kernel`` has shape ``(..., n_t, n_s, e, d)`` with entry ``[i, k]`` equal to
    D_{s_k} Y_{t_i} for coarse left points t_i and cells s_k of ``sgrid``
    (default: the coarse grid itself).
    """
    coarse = as_partition(coarse)
    sgrid = coarse if sgrid is None else as_partition(sgrid)
    y = _values(Y)[..., : coarse.n_intervals, :]
    dx, _ = x.increments_on(coarse) if x.grid != coarse else (x.level1, None)
    pairing = np.einsum("...ia,...ia->...i", y, dx)
    P = rect_matrix(R, coarse, sgrid)
    K = np.asarray(kernel, dtype=float)[..., : coarse.n_intervals, : sgrid.n_intervals, :, :]
    trace = np.einsum("...ikaa,ik->...i", K, P)
    return SkorohodSum(coarse, pairing, trace)


def compensated_second_level(psi, x, R, coarse):
    """sum_i psi_{t_i} : (X2_{t_i,t_{i+1}} - sigma^2(t_i,t_{i+1}) I / 2), full contraction."""
    coarse = as_partition(coarse)
    pv = _values(psi)
    pgrid = getattr(psi, "grid", x.grid)
    idx = as_partition(pgrid).index_of(coarse.times[:-1])
    p = pv[..., idx, :, :]
    _, X2 = x.increments_on(coarse)
    s2 = sigma_sq(R, coarse.times[:-1], coarse.times[1:])
    comp = X2 - 0.5 * s2[:, None, None] * np.eye(x.d)
    return np.einsum("...iab,...iab->...", p, comp)


def hermite(n, x):
    """Probabilists' Hermite polynomial He_n(x) by the three-term recurrence."""
    if n < 0:
        raise ValueError("Hermite degree must be >= 0")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        return prev
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur


@dataclass
class ChaosCheck:
    mean: float
    stderr: float
    max_abs: float
    count: int
    residuals: np.ndarray

    def within(self, n_se=3.0, atol=1e-12):
        return abs(self.mean) <= n_se * self.stderr + atol


def second_chaos(h1, h2, R, d1, d2):
    """I_2(h1 ~(x) h2) from the pairings d1 = delta(h1), d2 = delta(h2).

    Writes h2 = a e1 + b e2 with e1 = h1/|h1| and e2 orthonormal to e1, so that
    I_2 = |h1| (a He_2(delta e1) + b delta(e1) delta(e2)).
    """
    n1 = np.sqrt(cm_inner(h1, h1, R))
    if n1 == 0.0:
        return np.zeros_like(d1)
    a = cm_inner(h1, h2, R) / n1
    b2 = cm_inner(h2, h2, R) - a * a
    e1 = d1 / n1
    out = n1 * a * hermite(2, e1)
    if b2 > 1e-14 * max(1.0, cm_inner(h2, h2, R)):
        b = np.sqrt(b2)
        e2 = (d2 - a * e1) / b
        out = out + n1 * b * e1 * e2
    return out


def chaos_identity_check(h1, h2, R, samples):
    """Residuals of I_1(h1) I_1(h2) - I_2(h1 ~(x) h2) - <h1, h2> over sampled paths.

    ``samples`` is a PathGrid (values ``(count, n+1, d)``) whose grid contains
    the indicator times; delta(1^{(u)}_{[0,t)}) = X^{(u)}_t exactly.
    """
    if not (isinstance(h1, Indicator) and isinstance(h2, Indicator)):
        raise TypeError("chaos_identity_check needs indicator generators (exact pairings)")
    if not isinstance(samples, PathGrid):
        raise TypeError("samples must be a PathGrid of sampled paths")
    d1, d2 = h1.pairing(samples), h2.pairing(samples)
    res = d1 * d2 - second_chaos(h1, h2, R, d1, d2) - cm_inner(h1, h2, R)
    res = np.atleast_1d(res)
    count = res.size
    se = float(np.std(res, ddof=1) / np.sqrt(count)) if count > 1 else float("nan")
    return ChaosCheck(float(np.mean(res)), se, float(np.max(np.abs(res))), count, res)
