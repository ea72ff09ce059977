"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line; run directly or under pytest."""
import sys
import time

import numpy as np
import pytest

from roughsko.cameron_martin import Indicator, SampledCM, cm_inner
from roughsko.controlled import ControlledPath, leibniz
from roughsko.conversion import ConversionSetup, convert_paths
from roughsko.gaussian import BrownianMotion, FractionalBM, sample_array
from roughsko.lift import lift_piecewise_linear, smooth_lift, translate
from roughsko.rde import (LinearField, default_tanh_field, directional_derivative2, solve_jacobian,
                          solve_rde)
from roughsko.skorohod import (chaos_identity_check, compensated_second_level, skorohod_from_kernel,
                               skorohod_riemann)
from roughsko.tensor_algebra import GroupElement, LieElement, tensor_exp, tensor_log
from roughsko.variation import PathGrid, Partition
from roughsko.young import isometry_rhs_per_sample

RESULTS = {}


def report(k, ok, detail):
    RESULTS[k] = ok
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def convergence_study(R, seed, fine_exp=13, coarse=(5, 6, 7, 8, 9), count=200, chunk=50):
    fine = Partition.dyadic(fine_exp)
    V = default_tanh_field(2, 2)
    setup = ConversionSetup(R, V, [0.5, -0.25], [Partition.dyadic(k) for k in coarse])
    res = {k: [] for k in coarse}
    strat, corr = {k: [] for k in coarse}, []
    for start in range(0, count, chunk):
        X = sample_array(R, fine, 2, chunk, seed, start)
        for k, rep in zip(coarse, convert_paths(X, fine, setup)):
            res[k].append(rep.residual)
            strat[k].append(rep.stratonovich)
        corr.append(rep.correction_2d)
    res = {k: np.abs(np.concatenate(v)) for k, v in res.items()}
    strat = {k: np.concatenate(v) for k, v in strat.items()}
    return res, strat, np.concatenate(corr)


def test_1_algebra_exactness():
    t0 = time.time()
    rng = np.random.default_rng(1)
    n = 1000
    worst = {}
    # Chen's equality on random triples of a lifted path
    grid = Partition.dyadic(8)
    X = sample_array(FractionalBM(0.4), grid, 3, 1, seed=1)[0]
    x = lift_piecewise_linear(X, grid)
    idx = np.sort(rng.integers(0, 257, size=(n, 3)), axis=1)
    err = 0.0
    for i, j, k in idx:
        s, u, t = grid.times[[i, j, k]]
        a, b = x.increment(s, u) * x.increment(u, t), x.increment(s, t)
        err = max(err, np.abs(a.level1 - b.level1).max(), np.abs(a.level2 - b.level2).max())
    worst["chen"] = err
    # exp/log and group inverse
    l1, l2 = rng.normal(size=(n, 3)), rng.normal(size=(n, 3, 3))
    lie = LieElement(l1, l2)
    back = tensor_log(tensor_exp(lie))
    worst["exp/log"] = max(np.abs(back.level1 - l1).max(), np.abs(back.level2 - l2).max())
    g = GroupElement(l1, l2)
    e = g * g.inverse()
    worst["inverse"] = max(np.abs(e.level1).max(), np.abs(e.level2).max())
    # Leibniz gubinelli identity
    m = 9
    xs = lift_piecewise_linear(rng.normal(size=(n, m, 2)), Partition.dyadic(3))
    phi = ControlledPath(rng.normal(size=(n, m, 2, 2)), rng.normal(size=(n, m, 2, 2, 2)), xs)
    psi = ControlledPath(rng.normal(size=(n, m, 2)), rng.normal(size=(n, m, 2, 2)), xs)
    prod = leibniz(phi, psi)
    expected = (np.einsum("...abz,...b->...az", phi.gubinelli, psi.value)
                + np.einsum("...ab,...bz->...az", phi.value, psi.gubinelli))
    worst["leibniz"] = np.abs(prod.gubinelli - expected).max()
    # ConversionReport arithmetic identity
    R = FractionalBM(0.4)
    fine = Partition.dyadic(7)
    Xc = sample_array(R, fine, 2, n, seed=1)
    setup = ConversionSetup(R, default_tanh_field(2, 2), [0.5, -0.25], [Partition.dyadic(3)])
    worst["report"] = np.abs(convert_paths(Xc, fine, setup)[0].identity_gap()).max()
    elapsed = time.time() - t0
    ok = all(v <= 1e-12 for v in worst.values()) and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, ok, f"max errors ({n} cases each): {detail}; {elapsed:.1f}s")


def test_2_classical_reduction():
    t0 = time.time()
    res, strat, corr = convergence_study(BrownianMotion(), seed=20240611)
    med5, med9 = np.median(res[5]), np.median(res[9])
    q75, q25 = np.percentile(strat[9], [75, 25])
    iqr = q75 - q25
    corr_mag = np.max(np.abs(corr))
    elapsed = time.time() - t0
    ok = med9 <= 0.5 * med5 and corr_mag < 0.05 * iqr and elapsed <= 600
    report(2, ok, f"BM median|res| n=5 {med5:.4f} -> n=9 {med9:.4f} (ratio {med9 / med5:.3f}); "
                  f"max|corr2d| {corr_mag:.2e} vs 5% of strat IQR {0.05 * iqr:.3f}; {elapsed:.0f}s")


def test_3_main_theorem_fbm():
    t0 = time.time()
    res, _, _ = convergence_study(FractionalBM(0.4), seed=20240612)
    meds = [np.median(res[k]) for k in (5, 7, 9)]
    p90 = {k: np.percentile(res[k], 90) for k in (5, 9)}
    elapsed = time.time() - t0
    ok = meds[0] > meds[1] > meds[2] and p90[9] < p90[5] and elapsed <= 1200
    report(3, ok, f"fBm H=0.4 median|res| n=5,7,9: {meds[0]:.4f}, {meds[1]:.4f}, {meds[2]:.4f}; "
                  f"p90 n=5 {p90[5]:.4f} -> n=9 {p90[9]:.4f}; {elapsed:.0f}s")


def test_4_compensated_second_level():
    R = FractionalBM(0.4)
    fine = Partition.dyadic(13)
    V = default_tanh_field(2, 2)
    vals = {5: [], 8: []}
    for start in range(0, 100, 50):
        X = sample_array(R, fine, 2, 50, seed=4, start=start)
        x = lift_piecewise_linear(X, fine)
        Y = solve_rde(V, x, np.array([0.5, -0.25]))
        psi = PathGrid(fine, V.value(Y.values))
        for n in vals:
            vals[n].append(compensated_second_level(psi, x, R, Partition.dyadic(n)))
    l2 = {n: np.sqrt(np.mean(np.concatenate(v) ** 2)) for n, v in vals.items()}
    ok = l2[5] / l2[8] >= 1.5
    report(4, ok, f"L2 of compensated sum n=5 {l2[5]:.4f}, n=8 {l2[8]:.4f} (factor {l2[5] / l2[8]:.2f})")


def test_5_cameron_martin():
    grid = Partition.dyadic(8)
    worst = 0.0
    for R in (BrownianMotion(), FractionalBM(0.4), FractionalBM(0.75)):
        for t in grid.times[::16]:
            for s in grid.times[::16]:
                a, b = Indicator(0, t, 1), Indicator(0, s, 1)
                closed = cm_inner(a, b, R)
                quad = cm_inner(SampledCM(grid, a.sample(grid)), SampledCM(grid, b.sample(grid)), R)
                worst = max(worst, abs(closed - R(t, s)), abs(quad - R(t, s)))
    f = SampledCM(grid, grid.times)
    norm = cm_inner(f, f, BrownianMotion())
    rel = abs(norm - 1 / 3) / (1 / 3)
    ok = worst <= 1e-12 and rel <= 0.02
    report(5, ok, f"indicator inner products max error {worst:.1e}; BM |f|^2 {norm:.4f} vs 1/3 (rel {rel:.3%})")


def isometry_terminal(count=10_000, seed=6):
    R = BrownianMotion()
    grid = Partition.dyadic(4)
    n = grid.n_intervals
    X = sample_array(R, grid, 1, count, seed)
    x = lift_piecewise_linear(X, grid)
    Y = np.repeat(X[:, -1:, :], n + 1, axis=1)
    K = np.ones((n + 1, n + 1, 1, 1))
    delta = skorohod_from_kernel(Y, K, x, R, grid).total
    rhs = isometry_rhs_per_sample(PathGrid(grid, Y), np.broadcast_to(K, (count,) + K.shape), R)
    return delta, rhs


def isometry_rde(R, count=500, seed=6, coarse_exp=5, fine_exp=9):
    V = default_tanh_field(2, 2)
    fine, coarse = Partition.dyadic(fine_exp), Partition.dyadic(coarse_exp)
    deltas, rhs = [], []
    from roughsko.rde import MalliavinKernel
    for start in range(0, count, 100):
        X = sample_array(R, fine, 2, 100, seed, start)
        x = lift_piecewise_linear(X, fine)
        Y = solve_rde(V, x, np.array([0.5, -0.25]))
        b = solve_jacobian(V, x, Y)
        deltas.append(skorohod_riemann(Y, b, V, x, R, coarse).total)
        rhs.append(isometry_rhs_per_sample(Y.restrict(coarse), MalliavinKernel(b, V, coarse), R))
    return np.concatenate(deltas), np.concatenate(rhs)


def test_6_isometry():
    delta, rhs = isometry_terminal()
    exact = 2.0
    var_d = np.var(delta, ddof=1)
    mean_r = np.mean(rhs)
    ok1 = abs(var_d - exact) <= 0.05 * exact and abs(mean_r - exact) <= 0.05 * exact
    d2, r2 = isometry_rde(BrownianMotion())
    v2, m2 = np.var(d2, ddof=1), np.mean(r2)
    gap = abs(v2 - m2) / m2
    ok2 = gap <= 0.15
    report(6, ok1 and ok2, f"terminal integrand: Var(delta) {var_d:.4f}, mean RHS {mean_r:.4f} vs 2T^2=2 "
                           f"(rel {abs(var_d - exact) / exact:.2%}, {abs(mean_r - exact) / exact:.2%}); "
                           f"RDE integrand (BM, 2^5, 500): Var {v2:.4f} vs RHS {m2:.4f} (gap {gap:.1%})")


def test_6b_isometry_fbm_diagnostic():
    # reported only: fBm at the same scale, not part of the gate
    d, r = isometry_rde(FractionalBM(0.4))
    v, m = np.var(d, ddof=1), np.mean(r)
    sys.__stdout__.write(f"[INFO] criterion 6 diagnostic: fBm H=0.4 RDE integrand Var {v:.4f} vs RHS {m:.4f} "
                         f"(gap {abs(v - m) / m:.1%})\n")


def test_7_wiener_chaos():
    R = FractionalBM(0.4)
    grid = Partition.dyadic(6)
    X = PathGrid(grid, sample_array(R, grid, 2, 10_000, seed=7))
    same = chaos_identity_check(Indicator(0, 0.5, 2), Indicator(0, 0.5, 2), R, X)
    orth = chaos_identity_check(Indicator(0, 0.5, 2), Indicator(1, 0.75, 2), R, X)
    ok = same.max_abs <= 1e-12 and orth.within(3.0)
    report(7, ok, f"h1=h2 max|residual| {same.max_abs:.1e}; orthogonal mean {orth.mean:.2e} "
                  f"(SE {orth.stderr:.2e}, {abs(orth.mean) / orth.stderr:.2f} SE)")


def test_8_rde_oracles():
    x = smooth_lift(lambda s, t: (t - s)[:, None], lambda s, t: (0.5 * (t - s) ** 2)[:, None, None],
                    Partition.dyadic(10))
    V1 = LinearField(np.ones((1, 1, 1)))
    y0 = 1.3
    Y1 = solve_rde(V1, x, np.array([y0]))
    b1 = solve_jacobian(V1, x, Y1)
    e_y = abs(Y1.values[-1, 0] - y0 * np.e)
    e_j = abs(b1.J[-1, 0, 0] - np.e)
    # bump-and-revalue on a Gaussian driver
    R = FractionalBM(0.4)
    fine = Partition.dyadic(10)
    X = sample_array(R, fine, 2, 1, seed=8)[0]
    xr = lift_piecewise_linear(X, fine)
    V = default_tanh_field(2, 2)
    z0 = np.array([0.5, -0.25])
    Y = solve_rde(V, xr, z0)
    b = solve_jacobian(V, xr, Y)
    eps = 1e-4
    fdJ = np.column_stack([(solve_rde(V, xr, z0 + eps * ek).values[-1]
                            - solve_rde(V, xr, z0 - eps * ek).values[-1]) / (2 * eps) for ek in np.eye(2)])
    rel_j = np.abs(fdJ - b.J[-1]).max() / np.abs(b.J[-1]).max()
    h1 = Indicator(0, 0.5, 2).cm_path(R, fine)
    h2 = Indicator(1, 0.75, 2).cm_path(R, fine)
    D2 = directional_derivative2(V, xr, Y, b, h1, h2).values[-1]

    def bumped(a, c):
        return solve_rde(V, translate(xr, a * h1 + c * h2), z0).values[-1]

    fd2 = (bumped(eps, eps) - bumped(eps, -eps) - bumped(-eps, eps) + bumped(-eps, -eps)) / (4 * eps ** 2)
    rel_d2 = np.abs(fd2 - D2).max() / np.abs(D2).max()
    ok = e_y <= 1e-4 and e_j <= 1e-4 and rel_j <= 1e-2 and rel_d2 <= 1e-2
    report(8, ok, f"|y_T - y0 e| {e_y:.1e}, |J_T - e| {e_j:.1e}; FD rel error J {rel_j:.1e}, D2 {rel_d2:.1e}")


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    failed = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
