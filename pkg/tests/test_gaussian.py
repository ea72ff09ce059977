import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughsko.gaussian import (BrownianMotion, CovarianceError, CustomCov, FractionalBM, diag_variance,
                               mixed_variation_check, rect_increment, sample_array, sample_paths,
                               sigma_sq)
from roughsko.variation import Partition

times = st.floats(0, 1)


def test_rect_increment_examples():
    bm = BrownianMotion()
    assert rect_increment(bm, 0, 1, 0, 1) == pytest.approx(1.0)
    assert rect_increment(bm, 0, 0.4, 0.6, 1) == 0
    assert rect_increment(FractionalBM(0.75), 0, 1, 0, 1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rect_increment(bm, 0, 1.5, 0, 1)


def test_sigma_and_diag_examples():
    bm, fbm = BrownianMotion(), FractionalBM(0.4)
    assert sigma_sq(bm, 0.2, 0.7) == pytest.approx(0.5)
    assert sigma_sq(fbm, 0, 1) == pytest.approx(1.0)
    assert sigma_sq(fbm, 0.3, 0.3) == 0
    assert sigma_sq(fbm, 0.2, 0.5) == pytest.approx(0.3 ** 0.8)
    with pytest.raises(ValueError):
        sigma_sq(bm, 0.7, 0.2)
    assert diag_variance(bm, 0.3) == pytest.approx(0.3)
    assert diag_variance(fbm, 1.0) == pytest.approx(1.0)
    assert diag_variance(fbm, 0.0) == 0


def test_hurst_range():
    with pytest.raises(CovarianceError):
        FractionalBM(0.3)
    assert FractionalBM(0.4).rho == pytest.approx(1.25)
    assert FractionalBM(0.7).rho == 1.0


@settings(max_examples=50, deadline=None)
@given(times, times, st.floats(0.34, 1.0))
def test_symmetry_and_origin(s, t, H):
    for R in (BrownianMotion(), FractionalBM(H)):
        assert R(s, t) == pytest.approx(R(t, s), abs=1e-15)
        assert R(0.0, t) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(times, min_size=5, max_size=5), st.floats(0.34, 1.0))
def test_rect_additivity(ts, H):
    s1, s2, s3, t1, t2 = sorted(ts[:3]) + sorted(ts[3:])
    R = FractionalBM(H)
    lhs = rect_increment(R, s1, s2, t1, t2) + rect_increment(R, s2, s3, t1, t2)
    assert lhs == pytest.approx(rect_increment(R, s1, s3, t1, t2), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(times, min_size=4, max_size=4))
def test_bm_disjoint_rectangles(ts):
    a, b, c, d = sorted(ts)
    assert rect_increment(BrownianMotion(), a, b, c, d) == pytest.approx(0.0, abs=1e-15)


def test_sampling_moments():
    grid = Partition([0.0, 0.5, 1.0])
    X = sample_array(BrownianMotion(), grid, 1, 100_000, seed=11)
    assert np.all(X[:, 0] == 0)
    assert np.var(X[:, 1, 0]) == pytest.approx(0.5, abs=0.01)
    Y = sample_array(FractionalBM(0.4), grid, 1, 100_000, seed=12)
    assert np.mean(Y[:, 2, 0] ** 2) == pytest.approx(1.0, abs=0.02)
    for Z in (X, Y):
        m, se = Z[:, 1:, 0].mean(axis=0), Z[:, 1:, 0].std(axis=0) / np.sqrt(Z.shape[0])
        assert np.all(np.abs(m) <= 4 * se)


def test_sampling_deterministic_and_split_invariant():
    grid = Partition.dyadic(6)
    R = FractionalBM(0.4)
    full = sample_array(R, grid, 2, 10, seed=99)
    parts = np.concatenate([sample_array(R, grid, 2, 4, seed=99, start=0),
                            sample_array(R, grid, 2, 6, seed=99, start=4)])
    assert np.array_equal(full, parts)
    samples = sample_paths(R, grid, 2, 3, seed=99)
    assert np.array_equal(samples[2].values, full[2])


def test_non_psd_model_rejected():
    bad = CustomCov(lambda s, t: -np.minimum(s, t))
    with pytest.raises(CovarianceError):
        sample_array(bad, Partition.dyadic(3), 1, 1, seed=0)


def test_mixed_variation_examples():
    grid = Partition.dyadic(5)
    c_bm = mixed_variation_check(BrownianMotion(), grid, rho=1)
    assert c_bm <= 2
    assert mixed_variation_check(FractionalBM(0.5), grid, rho=1) == pytest.approx(c_bm)
    assert mixed_variation_check(CustomCov(lambda s, t: 0 * s * t), grid, rho=1) == 0
    fine = mixed_variation_check(FractionalBM(0.4), Partition.dyadic(6))
    coarse = mixed_variation_check(FractionalBM(0.4), Partition.dyadic(5))
    assert np.isfinite(fine) and fine < 2 * coarse
