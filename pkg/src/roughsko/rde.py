"""Level-2 RDE solver, Jacobian flow, Malliavin kernel and directional derivatives.

Conventions: V(y) is an ``e x d`` matrix (column j is the j-th vector field),
``jac[i, j, m] = d_m V_ij``, and the one-step map is

    y -> y + V(y) dx + sum_{jk} V2_{ijk}(y) X2_{jk},  V2_{ijk} = sum_m d_m V_ik V_mj.

All functions broadcast over leading batch axes of the driver.
"""
from dataclasses import dataclass, field

import numpy as np

from .variation import PathGrid, as_partition

JJINV_TOL = 1e-6
NEUMANN_MAX_TERMS = 60


class NonFiniteStateError(FloatingPointError):
    pass


class VectorField:
    """Base class. Subclasses provide value, jac, hess and (optionally) third."""

    order = 3

    def __init__(self, e, d):
        self.e, self.d = int(e), int(d)

    def value(self, y):
        raise NotImplementedError

    def jac(self, y):
        raise NotImplementedError

    def hess(self, y):
        raise NotImplementedError

    def third(self, y):
        raise NotImplementedError(f"{type(self).__name__} has no third derivative")

    def bound_constants(self, probes):
        """Empirical sup of |V|, |DV|, |D^2V| over probe points (reported, not assumed)."""
        probes = np.asarray(probes, dtype=float)
        out = {}
        for k, f in enumerate((self.value, self.jac, self.hess)):
            a = f(probes)
            out[k] = float(np.max(np.linalg.norm(a.reshape(a.shape[0], -1), axis=1)))
        return out


class ZeroField(VectorField):
    def value(self, y):
        return np.zeros(y.shape[:-1] + (self.e, self.d))

    def jac(self, y):
        return np.zeros(y.shape[:-1] + (self.e, self.d, self.e))

    def hess(self, y):
        return np.zeros(y.shape[:-1] + (self.e, self.d, self.e, self.e))

    def third(self, y):
        return np.zeros(y.shape[:-1] + (self.e, self.d, self.e, self.e, self.e))


class ConstantField(ZeroField):
    def __init__(self, C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        super().__init__(*C.shape)
        self.C = C

    def value(self, y):
        return np.broadcast_to(self.C, y.shape[:-1] + self.C.shape).copy()


class LinearField(ZeroField):
    """V(y)[:, j] = A[j] @ y for matrices ``A`` of shape (d, e, e)."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("linear field needs A of shape (d, e, e)")
        super().__init__(A.shape[1], A.shape[0])
        self.A = A
        self._jac = np.transpose(A, (1, 0, 2))

    def value(self, y):
        return np.einsum("ijm,...m->...ij", self._jac, y)

    def jac(self, y):
        return np.broadcast_to(self._jac, y.shape[:-1] + self._jac.shape).copy()


def rotation_generators(e, d):
    """The first ``d`` basis elements E_ab - E_ba (a < b) of so(e)."""
    gens = []
    for a in range(e):
        for b in range(a + 1, e):
            G = np.zeros((e, e))
            G[a, b], G[b, a] = -1.0, 1.0
            gens.append(G)
    if d > len(gens):
        raise ValueError(f"so({e}) has only {len(gens)} generators, asked for {d}")
    return np.array(gens[:d])


class TanhField(VectorField):
    """V_ij(y) = tanh(A[i, j] . y + b[i, j]); smooth, bounded, with bounded derivatives."""

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 3 or b.shape != A.shape[:2] or A.shape[2] != A.shape[0]:
            raise ValueError("tanh field needs A of shape (e, d, e) and b of shape (e, d)")
        super().__init__(A.shape[0], A.shape[1])
        self.A, self.b = A, b

    def _t(self, y):
        return np.tanh(np.einsum("ijm,...m->...ij", self.A, y) + self.b)

    def value(self, y):
        return self._t(y)

    def jac(self, y):
        t = self._t(y)
        return (1 - t * t)[..., None] * self.A

    def hess(self, y):
        t = self._t(y)
        c = -2 * t * (1 - t * t)
        return c[..., None, None] * self.A[..., :, None] * self.A[..., None, :]

    def third(self, y):
        t = self._t(y)
        c = (1 - t * t) * (6 * t * t - 2)
        A = self.A
        return (c[..., None, None, None] * A[..., :, None, None]
                * A[..., None, :, None] * A[..., None, None, :])


def default_tanh_field(e, d, seed=7, scale=1.0):
    """Tanh field with coefficients drawn once from a fixed stream."""
    rng = np.random.default_rng(seed)
    return TanhField(scale * rng.standard_normal((e, d, e)), rng.standard_normal((e, d)))


def builtin_field(name, e, d, **params):
    """Vector field by config name: zero, constant, linear, rotation, tanh-bounded."""
    if name == "zero":
        return ZeroField(e, d)
    if name == "constant":
        C = np.asarray(params.get("C", np.eye(e, d)), dtype=float).reshape(e, d)
        return ConstantField(C)
    if name == "linear":
        if "A" not in params:
            raise ValueError("linear field needs A (d*e*e numbers)")
        return LinearField(np.asarray(params["A"], dtype=float).reshape(d, e, e))
    if name == "rotation":
        return LinearField(params.get("scale", 1.0) * rotation_generators(e, d))
    if name == "tanh-bounded":
        if "A" in params or "b" in params:
            if not ("A" in params and "b" in params):
                raise ValueError("tanh-bounded needs both A and b, or neither")
            return TanhField(np.asarray(params["A"], dtype=float).reshape(e, d, e),
                             np.asarray(params["b"], dtype=float).reshape(e, d))
        return default_tanh_field(e, d, seed=int(params.get("coef_seed", 7)),
                                  scale=float(params.get("scale", 1.0)))
    raise ValueError(f"unknown vector field {name!r}")


# one-step map pieces; G(y; dx, Q) = V(y) dx + V2(y) Q is linear in (dx, Q)

def V2(field, y):
    return np.einsum("...ikm,...mj->...ijk", field.jac(y), field.value(y))


def step_increment(field, y, dx, Q):
    V = field.value(y)
    jac = field.jac(y)
    W = np.einsum("...mj,...jk->...mk", V, Q)
    return np.einsum("...ij,...j->...i", V, dx) + np.einsum("...ikm,...mk->...i", jac, W)


def step_jacobian(field, y, dx, Q):
    """A with d/dy G(y; dx, Q) = A (an e x e matrix per batch entry)."""
    V = field.value(y)
    jac = field.jac(y)
    hess = field.hess(y)
    W = np.einsum("...mj,...jk->...mk", V, Q)
    U = np.einsum("...ikm,...jk->...ijm", jac, Q)
    return (np.einsum("...ijn,...j->...in", jac, dx)
            + np.einsum("...ikmn,...mk->...in", hess, W)
            + np.einsum("...ijm,...mjn->...in", U, jac))


def step_second(field, y, a, b, dx, Q):
    """d^2/dy^2 G(y; dx, Q) applied to the directions a, b."""
    V = field.value(y)
    jac = field.jac(y)
    hess = field.hess(y)
    third = field.third(y)
    ja = np.einsum("...mjn,...n->...mj", jac, a)
    jb = np.einsum("...mjp,...p->...mj", jac, b)
    hab = np.einsum("...ijmn,...m,...n->...ij", hess, a, b)
    # coefficient matrices C[i, k, m] multiplying (V, DV a, DV b) rows m
    t_ab = np.einsum("...ikmnp,...n,...p->...ikm", third, a, b)
    h_a = np.einsum("...ikmn,...n->...ikm", hess, a)
    h_b = np.einsum("...ikmp,...p->...ikm", hess, b)
    level2 = (np.einsum("...ikm,...mj->...ijk", t_ab, V)
              + np.einsum("...ikm,...mj->...ijk", h_a, jb)
              + np.einsum("...ikm,...mj->...ijk", h_b, ja)
              + np.einsum("...ikm,...mj->...ijk", jac, hab))
    return np.einsum("...ij,...j->...i", hab, dx) + np.einsum("...ijk,...jk->...i", level2, Q)


def _as_values(p):
    return np.asarray(getattr(p, "values", p), dtype=float)


def solve_rde(V, x, y0, check=True):
    """Davie scheme on the grid of ``x``; returns Y with shape (..., n+1, e)."""
    y0 = np.asarray(y0, dtype=float)
    if y0.shape[-1] != V.e or x.d != V.d:
        raise ValueError(f"dimension mismatch: field {V.e}x{V.d}, y0 {y0.shape}, driver d={x.d}")
    n = x.grid.n_intervals
    batch = np.broadcast_shapes(x.batch_shape, y0.shape[:-1])
    Y = np.empty(batch + (n + 1, V.e))
    Y[..., 0, :] = y0
    y = Y[..., 0, :].copy()
    for k in range(n):
        y = y + step_increment(V, y, x.level1[..., k, :], x.level2[..., k, :, :])
        Y[..., k + 1, :] = y
    if check and not np.all(np.isfinite(Y)):
        bad = np.argwhere(~np.all(np.isfinite(Y.reshape(Y.shape[:-2] + (-1,))), axis=-1))
        raise NonFiniteStateError(f"non-finite RDE state (batch entries {bad.tolist()})")
    return PathGrid(x.grid, Y)


@dataclass
class FlowBundle:
    grid: object
    Y: np.ndarray
    J: np.ndarray
    Jinv: np.ndarray
    renormalizations: int = 0
    events: list = field(default_factory=list)

    def kernel_factor(self, V):
        """M_k = Jinv(t_k) V(Y_k), so that D_{t_k} Y_t = J(t) M_k for k < t."""
        return self.Jinv @ V.value(self.Y)


def _neumann_inverse(A):
    """(I + A)^{-1} by Neumann series summed to machine precision."""
    e = A.shape[-1]
    out = np.broadcast_to(np.eye(e), A.shape).copy()
    term = out.copy()
    for _ in range(NEUMANN_MAX_TERMS):
        term = -term @ A
        out += term
        if np.max(np.abs(term)) < 1e-17:
            break
    return out


def solve_jacobian(V, x, Y):
    """Jacobian J(t) = dY_t/dy0 of the discrete flow and its inverse.

    J steps by the exact derivative of the one-step map. Jinv follows its own
    forward recursion Jinv <- Jinv (I + A)^{-1} (Neumann series); where the
    series is not contractive, or J Jinv drifts from I by more than 1e-6, the
    direct inverse is used and the event counted.
    """
    Yv = _as_values(Y)
    n = x.grid.n_intervals
    e = V.e
    shape = Yv.shape[:-2]
    I = np.eye(e)
    J = np.empty(shape + (n + 1, e, e))
    Jinv = np.empty_like(J)
    J[..., 0, :, :] = I
    Jinv[..., 0, :, :] = I
    Jk = np.broadcast_to(I, shape + (e, e)).copy()
    Jik = Jk.copy()
    events = []
    renorm = 0
    for k in range(n):
        A = step_jacobian(V, Yv[..., k, :], x.level1[..., k, :], x.level2[..., k, :, :])
        Jk = Jk + A @ Jk
        if np.max(np.linalg.norm(A, axis=(-2, -1))) < 0.5:
            Jik = Jik @ _neumann_inverse(A)
        else:
            Jik = Jik @ np.linalg.inv(I + A)
            events.append(("direct-step-inverse", k + 1))
        drift = np.linalg.norm(Jk @ Jik - I, axis=(-2, -1))
        if np.any(drift > JJINV_TOL):
            bad = drift > JJINV_TOL
            Jik[bad] = np.linalg.inv(Jk[bad])
            renorm += int(np.sum(bad))
            events.append(("renormalized", k + 1, int(np.sum(bad))))
        J[..., k + 1, :, :] = Jk
        Jinv[..., k + 1, :, :] = Jik
    return FlowBundle(x.grid, Yv, J, Jinv, renorm, events)


class MalliavinKernel:
    """D_{t_r} Y_{t_c} = 1_{r<c} J(t_c) Jinv(t_r) V(Y_{t_r}) on (a subset of) the bundle grid."""

    def __init__(self, bundle, V, grid=None):
        self.bundle = bundle
        self.V = V
        self.grid = as_partition(bundle.grid if grid is None else grid)
        self.idx = as_partition(bundle.grid).index_of(self.grid.times)

    def at(self, r, c):
        b = self.bundle
        if r >= c:
            return np.zeros(b.Y.shape[:-2] + (self.V.e, self.V.d))
        return b.J[..., c, :, :] @ b.Jinv[..., r, :, :] @ self.V.value(b.Y[..., r, :])

    @property
    def table(self):
        b, idx = self.bundle, self.idx
        M = b.Jinv[..., idx, :, :] @ self.V.value(b.Y[..., idx, :])
        K = np.einsum("...cab,...rbj->...rcaj", b.J[..., idx, :, :], M)
        mask = np.arange(idx.size)[:, None] < np.arange(idx.size)[None, :]
        return K * mask[..., None, None]


def malliavin_kernel(bundle, V, grid=None):
    return MalliavinKernel(bundle, V, grid)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _sym(a, b):
    return 0.5 * (_outer(a, b) + _outer(b, a))


def _duhamel(bundle, sources):
    """Z_n = J_n sum_{k<n} Jinv_{k+1} b_k for sources b_k of shape (..., n, e)."""
    w = np.einsum("...kab,...kb->...ka", bundle.Jinv[..., 1:, :, :], sources)
    W = np.zeros(bundle.Y.shape)
    np.cumsum(w, axis=-2, out=W[..., 1:, :])
    return np.einsum("...kab,...kb->...ka", bundle.J, W)


def directional_derivative(V, x, Y, bundle, g):
    """D_g Y for a path g (shape (..., n+1, d)) on the grid of x.

    Duhamel form  D_gY_t = J(t) sum_{t_k < t} Jinv(t_{k+1}) [V(Y_k) dg_k + V2(Y_k)(sym dx_k dg_k)],
    which is the exact derivative of the discrete flow under the translation x -> x + eps g.
    """
    dg = np.diff(_as_values(g), axis=-2)
    y = bundle.Y[..., :-1, :]
    src = step_increment(V, y, dg, _sym(x.level1, dg))
    return PathGrid(x.grid, _duhamel(bundle, src))


def directional_derivative2(V, x, Y, bundle, h1, h2):
    """Second directional derivative D^2_{h1,h2} Y in Duhamel form.

    Sources per interval: the rough term D^2V(Y)(D_{h1}Y, D_{h2}Y) against
    (dx, X2), the mixed terms DV(Y)(D_{h1}Y) dh2 + DV(Y)(D_{h2}Y) dh1 (with their
    level-2 cross corrections) and the V2 pairing of dh1, dh2; all propagated
    by J(t) Jinv(s).
    """
    g1, g2 = _as_values(h1), _as_values(h2)
    dg1, dg2 = np.diff(g1, axis=-2), np.diff(g2, axis=-2)
    Z1 = directional_derivative(V, x, Y, bundle, g1).values[..., :-1, :]
    Z2 = directional_derivative(V, x, Y, bundle, g2).values[..., :-1, :]
    y = bundle.Y[..., :-1, :]
    dx, Q = x.level1, x.level2
    A1 = step_jacobian(V, y, dg1, _sym(dx, dg1))
    A2 = step_jacobian(V, y, dg2, _sym(dx, dg2))
    src = (step_second(V, y, Z1, Z2, dx, Q)
           + np.einsum("...ab,...b->...a", A2, Z1)
           + np.einsum("...ab,...b->...a", A1, Z2)
           + step_increment(V, y, np.zeros_like(dg1), _sym(dg1, dg2)))
    return PathGrid(x.grid, _duhamel(bundle, src))


def kernel_directional(bundle, V, g):
    """Left-point Young sum  sum_{t_k < t} D_{t_k}Y_t (g_{k+1} - g_k)."""
    dg = np.diff(_as_values(g), axis=-2)
    M = bundle.kernel_factor(V)[..., :-1, :, :]
    w = np.einsum("...kab,...kb->...ka", M, dg)
    W = np.zeros(bundle.Y.shape)
    np.cumsum(w, axis=-2, out=W[..., 1:, :])
    return np.einsum("...kab,...kb->...ka", bundle.J, W)
