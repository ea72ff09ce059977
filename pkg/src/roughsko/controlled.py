"""Controlled rough paths: compensated integration, products and smooth images."""
import string
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .variation import as_partition, pvar_dp


class ReferenceMismatch(ValueError):
    pass


class ControlledPath:
    """Pair (phi, phi') on the grid of the reference rough path ``x``.

    ``value`` has shape ``(..., n+1, *vs)`` and ``gubinelli`` has shape
    ``(..., n+1, *vs, d)``; the last axis of ``gubinelli`` is the driving
    direction, so phi_{s,t} ~ gubinelli_s @ x1_{s,t}.
    """

    def __init__(self, value, gubinelli, reference, value_rank=None):
        self.reference = reference
        self.value = np.asarray(value, dtype=float)
        self.gubinelli = np.asarray(gubinelli, dtype=float)
        if self.gubinelli.shape != self.value.shape + (reference.d,):
            raise ValueError(f"gubinelli shape {self.gubinelli.shape} should be "
                             f"{self.value.shape + (reference.d,)}")
        rank = value_rank
        if rank is None:
            rank = self.value.ndim - 1 - len(reference.batch_shape)
        self.value_rank = rank
        if self.value.shape[self.value.ndim - rank - 1] != len(reference.grid):
            raise ValueError("value does not have one entry per grid point")

    @property
    def grid(self):
        return self.reference.grid

    def remainder(self):
        """R_{t_i,t_{i+1}} = phi_{t_i,t_{i+1}} - phi'_{t_i} x1_i on consecutive intervals."""
        dphi = np.diff(self.value, axis=-1 - self.value_rank)
        g = _time_slice(self.gubinelli, self.value_rank + 1, slice(None, -1))
        return dphi - np.einsum("...j,...j->...", g, _expand(self.reference.level1, self.value_rank))

    def remainder_pairs_row(self, j):
        """R_{t_i,t_j} for all i < j (unbatched paths)."""
        path = self.reference.path()
        phi, g = self.value, self.gubinelli
        dx = path[j] - path[:j]
        return phi[j] - phi[:j] - np.einsum("i...j,ij->i...", g[:j], dx)


def _time_slice(a, rank, sl):
    idx = [slice(None)] * a.ndim
    idx[a.ndim - rank - 1] = sl
    return a[tuple(idx)]


def _expand(level1, rank):
    # insert value axes so level1 (..., n, d) broadcasts against (..., n, *vs, d)
    return level1.reshape(level1.shape[:-1] + (1,) * rank + level1.shape[-1:])


def _same_reference(phi, x):
    if phi.reference is x:
        return True
    r = phi.reference
    return (r.grid == x.grid and np.array_equal(r.level1, x.level1)
            and np.array_equal(r.level2, x.level2))


def _integrand_terms(phi, x):
    if not _same_reference(phi, x):
        raise ReferenceMismatch("controlled path is not controlled by this rough path")
    if phi.value_rank < 1 or phi.value.shape[-1] != x.d:
        raise ValueError("integrand must be a linear form on R^d (last value axis of length d)")
    vr = phi.value_rank
    phi_l = _time_slice(phi.value, vr, slice(None, -1))
    g_l = _time_slice(phi.gubinelli, vr + 1, slice(None, -1))
    lvl1 = _expand(x.level1, vr - 1)
    lvl2 = x.level2.reshape(x.level2.shape[:-2] + (1,) * (vr - 1) + x.level2.shape[-2:])
    first = np.sum(phi_l * lvl1, axis=-1)
    # phi'(X2) pairs the derivative direction with the first (earlier) slot of X2
    second = np.einsum("...kj,...jk->...", g_l, lvl2)
    return first + second


def rough_integral_terms(phi, x):
    """Per-interval compensated terms phi_{r_i} x1_i + phi'_{r_i}(X2_i)."""
    return _integrand_terms(phi, x)


def rough_integral(phi, x, s=None, t=None):
    """Compensated Riemann sum of phi against x over the grid points in [s, t]."""
    terms = _integrand_terms(phi, x)
    grid = x.grid
    a = 0 if s is None else int(grid.index_of(s))
    b = grid.n_intervals if t is None else int(grid.index_of(t))
    if a > b:
        raise ValueError("rough_integral needs s <= t")
    axis = terms.ndim - (phi.value_rank - 1) - 1
    return np.sum(_time_slice(terms, phi.value_rank - 1, slice(a, b)), axis=axis)


def integral_path(phi, x):
    """The running integral z_t = int_0^t phi dx as a controlled path with z' = phi."""
    terms = _integrand_terms(phi, x)
    vr = phi.value_rank - 1
    axis = terms.ndim - vr - 1
    z = np.cumsum(terms, axis=axis)
    pad = [(0, 0)] * z.ndim
    pad[axis] = (1, 0)
    return ControlledPath(np.pad(z, pad), phi.value, x, value_rank=vr)


def _einsum_product(ra, rb):
    letters = string.ascii_lowercase.replace("z", "")
    a = letters[:ra]
    if ra and rb:
        b = a[-1] + letters[ra:ra + rb - 1]
        out = a[:-1] + b[1:]
    else:
        b = letters[ra:ra + rb]
        out = a + b
    return a, b, out


def leibniz(phi, psi):
    """Product phi psi (contracting phi's last value axis with psi's first) and its derivative."""
    if not _same_reference(phi, psi.reference):
        raise ReferenceMismatch("leibniz needs paths controlled by the same rough path")
    ra, rb = phi.value_rank, psi.value_rank
    if ra and rb and phi.value.shape[-1] != psi.value.shape[psi.value.ndim - rb]:
        raise ValueError(f"shapes {phi.value.shape} and {psi.value.shape} are not composable")
    a, b, out = _einsum_product(ra, rb)
    value = np.einsum(f"...{a},...{b}->...{out}", phi.value, psi.value)
    gub = (np.einsum(f"...{a}z,...{b}->...{out}z", phi.gubinelli, psi.value)
           + np.einsum(f"...{a},...{b}z->...{out}z", phi.value, psi.gubinelli))
    return ControlledPath(value, gub, phi.reference, value_rank=len(out))


@dataclass(frozen=True)
class SmoothMap:
    """phi: R^e -> R^out with vectorised value, gradient (..., *out, e) and Hessian (..., *out, e, e)."""

    f: Callable
    grad: Callable
    hess: Callable
    out_rank: int = 1


def identity_map():
    return SmoothMap(lambda y: y,
                     lambda y: np.broadcast_to(np.eye(y.shape[-1]), y.shape + y.shape[-1:]),
                     lambda y: np.zeros(y.shape + y.shape[-1:] * 2))


def linear_map(A):
    A = np.asarray(A, dtype=float)
    return SmoothMap(lambda y: np.einsum("om,...m->...o", A, y),
                     lambda y: np.broadcast_to(A, y.shape[:-1] + A.shape),
                     lambda y: np.zeros(y.shape[:-1] + A.shape + A.shape[-1:]))


def square_map():
    """Scalar y -> y^2 on R^1 (value kept as a length-1 vector)."""
    return SmoothMap(lambda y: y ** 2,
                     lambda y: (2 * y)[..., None],
                     lambda y: np.full(y.shape + (1, 1), 2.0))


def compose_smooth(smap, y):
    """phi(y) with derivative grad phi(y) y'."""
    if y.value_rank != 1:
        raise ValueError("compose_smooth expects a vector-valued controlled path")
    val = smap.f(y.value)
    grad = smap.grad(y.value)
    if smap.out_rank == 0:
        gub = np.einsum("...m,...mj->...j", grad, y.gubinelli)
    else:
        gub = np.einsum("...om,...mj->...oj", grad, y.gubinelli)
    return ControlledPath(val, gub, y.reference, value_rank=smap.out_rank)


def _norm(a, rank):
    a = np.asarray(a, dtype=float)
    if rank == 0:
        return np.abs(a)
    return np.linalg.norm(a.reshape(a.shape[: a.ndim - rank] + (-1,)), axis=-1)


def pvar_of_values(values, rank, p):
    """p-variation of a sampled (unbatched) path with tensor values of the given rank."""
    flat = np.asarray(values, dtype=float).reshape(values.shape[0], -1)
    return pvar_dp(flat.shape[0], lambda j: np.linalg.norm(flat[:j] - flat[j], axis=1), p)[-1] ** (1.0 / p)


def vp_norm(values, rank, p):
    """sup norm plus p-variation."""
    return float(np.max(_norm(values, rank)) + pvar_of_values(values, rank, p))


def remainder_variation(phi, q):
    """q-variation (any q > 0) of the two-parameter remainder over grid pairs."""
    n = len(phi.grid)
    rank = phi.value_rank
    rows = lambda j: _norm(phi.remainder_pairs_row(j), rank).reshape(j)
    return float(pvar_dp(n, rows, q)[-1] ** (1.0 / q))


def controlled_norm(phi, p):
    """||phi||_{V^p} + ||phi'||_{V^p} + ||R^phi||_{p/2-var} on the grid (unbatched paths)."""
    return (vp_norm(phi.value, phi.value_rank, p)
            + vp_norm(phi.gubinelli, phi.value_rank + 1, p)
            + remainder_variation(phi, p / 2))


def leibniz_constant(phi, psi, p):
    """Fitted constant C in ||phi psi|| <= C ||phi|| ||psi|| for one pair."""
    return controlled_norm(leibniz(phi, psi), p) / (controlled_norm(phi, p) * controlled_norm(psi, p))
