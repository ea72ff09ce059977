"""Terms of the Stratonovich-to-Skorohod conversion and their per-sample residual."""
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .controlled import ControlledPath, rough_integral
from .gaussian import BrownianMotion, FractionalBM, rect_matrix, sigma_sq
from .lift import lift_piecewise_linear
from .rde import solve_jacobian, solve_rde
from .skorohod import skorohod_riemann
from .variation import Partition, as_partition
from .young import Integrand2D, young_1d, young_2d

DENSE_BLOCK = 1024


def default_p(R):
    """p = 1/H + 0.1 for fBm, 2.1 for BM, 2 rho + 0.1 otherwise."""
    if isinstance(R, FractionalBM):
        return 1.0 / R.H + 0.1
    if isinstance(R, BrownianMotion):
        return 2.1
    return 2.0 * R.rho + 0.1


def _values(p):
    return np.asarray(getattr(p, "values", p), dtype=float)


def stratonovich_integral(Y, V, x, coarse, level2=True):
    """sum_i <Y_{t_i}, X1_i> + tr(V(Y_{t_i}) X2_i) on the coarse partition.

    With ``level2`` False (the p < 2 regime) only the first-order pairing is kept.
    """
    coarse = as_partition(coarse)
    xc = x.coarsen(coarse)
    y = _values(Y)[..., x.grid.index_of(coarse.times), :]
    gub = V.value(y) if level2 else np.zeros(y.shape + (x.d,))
    return rough_integral(ControlledPath(y, gub, xc, value_rank=1), xc)


def ito_term(Y, V, R, grid=None):
    """(1/2) sum_k tr V(Y_{s_k}) (R(s_{k+1}) - R(s_k)) on the grid of Y."""
    grid = as_partition(getattr(Y, "grid", grid))
    trv = np.trace(V.value(_values(Y)), axis1=-2, axis2=-1)
    r = R(grid.times, grid.times)
    return 0.5 * young_1d(np.moveaxis(trv, -1, 0), r.reshape(r.shape + (1,) * (trv.ndim - 1)))


def correction_integrand(bundle, V):
    """h(s_k, t_l) = 1_{k<l} tr[J(t_l) Jinv(s_k) V(Y_{s_k}) - V(Y_{t_l})] (unbatched)."""
    M = bundle.kernel_factor(V)
    trv = np.trace(V.value(bundle.Y), axis1=-2, axis2=-1)
    times = bundle.grid.times

    def h(s, t):
        k = bundle.grid.index_of(s)
        l = bundle.grid.index_of(t)
        return np.einsum("...ab,...ba->...", bundle.J[l], M[k]) - trv[l]
    return Integrand2D(h, zero="s>=t"), times


def correction_2d(bundle, V, R, method="auto"):
    """Left-point 2D Young sum of h against R over the fine grid of the bundle.

    ``method``: ``"fft"`` (uniform grid, stationary increments: the rectangle
    weights depend only on l-k, so the sum is a causal convolution),
    ``"dense"`` (blocked evaluation of every cell) or ``"auto"``.
    """
    grid = as_partition(bundle.grid)
    if method == "auto":
        method = "fft" if (R.stationary_increments and grid.is_uniform()) else "dense"
    M = bundle.kernel_factor(V)[..., :-1, :, :]
    J = bundle.J[..., :-1, :, :]
    trv = np.trace(V.value(bundle.Y[..., :-1, :]), axis1=-2, axis2=-1)
    n = grid.n_intervals
    e = M.shape[-1]
    Mf = M.reshape(M.shape[:-2] + (e * e,))
    if method == "fft":
        h = grid.times[1] - grid.times[0]
        c = R.lag_increments(h, np.arange(n))
        c[0] = 0.0
        conv = fftconvolve(Mf, c.reshape((1,) * (Mf.ndim - 2) + (n, 1)), axes=-2)[..., :n, :]
        weight_sum = np.cumsum(c)
    elif method == "dense":
        conv = np.zeros_like(Mf)
        weight_sum = np.zeros(n)
        t = grid.times
        for lo in range(0, n, DENSE_BLOCK):
            hi = min(n, lo + DENSE_BLOCK)
            P = rect_matrix(R, t[: hi + 1], t[lo: hi + 1])  # cells k < hi, l in [lo, hi)
            P = P * (np.arange(hi)[:, None] < np.arange(lo, hi)[None, :])
            conv[..., lo:hi, :] = np.einsum("kl,...kf->...lf", P, Mf[..., :hi, :])
            weight_sum[lo:hi] = P.sum(axis=0)
    else:
        raise ValueError(f"unknown method {method!r}")
    conv = conv.reshape(conv.shape[:-1] + (e, e))
    first = np.einsum("...lab,...lba->...", J, conv)
    return first - np.einsum("...l,l->...", trv, weight_sum)


def correction_2d_reference(bundle, V, R):
    """Cell-by-cell young_2d evaluation (unbatched, small grids; used as an oracle)."""
    f, times = correction_integrand(bundle, V)
    return young_2d(f, R, times, times)


@dataclass
class ConversionReport:
    stratonovich: np.ndarray
    skorohod: np.ndarray
    ito_term: np.ndarray
    correction_2d: np.ndarray
    residual: np.ndarray
    n_coarse: int
    n_fine: int
    level2: bool = True
    appendage: np.ndarray = 0.0
    diagnostics: dict = field(default_factory=dict)

    def identity_gap(self):
        return self.residual - (self.stratonovich - self.skorohod - self.ito_term - self.correction_2d)


@dataclass
class ConversionSetup:
    """Everything a conversion run needs besides the sampled path."""

    R: object
    V: object
    y0: np.ndarray
    coarse: list
    p: float = None
    corr_method: str = "auto"

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.p is None:
            self.p = default_p(self.R)
        self.coarse = [as_partition(c) for c in self.coarse]


def convert_paths(values, grid, setup):
    """Run lift, solve, Jacobian and all terms for sampled paths ``(..., n+1, d)``.

    Returns one ConversionReport (arrays over the batch) per coarse partition.
    """
    grid = as_partition(grid)
    x = lift_piecewise_linear(values, grid)
    Y = solve_rde(setup.V, x, setup.y0, check=False)
    bundle = solve_jacobian(setup.V, x, Y)
    level2 = setup.p >= 2
    ito = ito_term(Y, setup.V, setup.R)
    corr = correction_2d(bundle, setup.V, setup.R, setup.corr_method)
    reports = []
    for coarse in setup.coarse:
        strat = stratonovich_integral(Y, setup.V, x, coarse, level2=level2)
        sko = skorohod_riemann(Y, bundle, setup.V, x, setup.R, coarse).total
        appendage = 0.0
        if not level2:
            idx = grid.index_of(coarse.times[:-1])
            trv = np.trace(setup.V.value(Y.values[..., idx, :]), axis1=-2, axis2=-1)
            s2 = sigma_sq(setup.R, coarse.times[:-1], coarse.times[1:])
            appendage = -0.5 * np.sum(s2 * trv, axis=-1)
            sko = sko + appendage
        residual = strat - sko - ito - corr
        reports.append(ConversionReport(strat, sko, ito, corr, residual, coarse.n_intervals,
                                        grid.n_intervals, level2, appendage,
                                        {"renormalizations": bundle.renormalizations}))
    return reports


def conversion_residual(sample, setup):
    """Reports for a single GaussianSample (one per coarse partition)."""
    return convert_paths(sample.values, sample.grid, setup)
