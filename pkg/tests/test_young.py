import numpy as np
import pytest

from roughsko.gaussian import BrownianMotion, FractionalBM
from roughsko.variation import PathGrid, Partition
from roughsko.young import (GridSizeError, Integrand2D, isometry_rhs, young_1d, young_2d,
                            young_slice)


def test_young_1d_examples():
    g = Partition.dyadic(12)
    t = g.times
    assert young_1d(t, t ** 2) == pytest.approx(2 / 3, abs=1e-3)
    assert young_1d(np.sin(t), np.full_like(t, 4.0)) == 0
    assert young_1d(np.ones_like(t), np.cos(t)) == pytest.approx(np.cos(1) - 1, abs=1e-14)
    with pytest.raises(ValueError):
        young_1d(PathGrid(g, t), PathGrid(Partition.dyadic(3), np.zeros(9)))


def test_young_2d_examples():
    g = Partition.dyadic(8)
    for R in (BrownianMotion(), FractionalBM(0.4)):
        one = Integrand2D(lambda s, t: np.ones_like(s))
        assert young_2d(one, R, g, g) == pytest.approx(R(1.0, 1.0))
    prod = Integrand2D(lambda s, t: s * t)
    assert young_2d(prod, BrownianMotion(), g, g) == pytest.approx(1 / 3, abs=2e-2)
    zero = Integrand2D(lambda s, t: (s < t) * 0.0)
    assert young_2d(zero, FractionalBM(0.4), g, g) == 0


def test_young_2d_bilinear_and_additive():
    g = Partition.dyadic(5)
    R = FractionalBM(0.4)
    f = lambda s, t: np.sin(3 * s) * t
    h = lambda s, t: s - t ** 2
    lhs = young_2d(Integrand2D(lambda s, t: 2 * f(s, t) - h(s, t)), R, g, g)
    rhs = 2 * young_2d(Integrand2D(f), R, g, g) - young_2d(Integrand2D(h), R, g, g)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    left, right = Partition(g.times[:17]), Partition(g.times[16:])
    split = young_2d(Integrand2D(f), R, left, g) + young_2d(Integrand2D(f), R, right, g)
    assert split == pytest.approx(young_2d(Integrand2D(f), R, g, g), abs=1e-12)


def test_young_2d_refinement_stable():
    R = FractionalBM(0.4)
    f = Integrand2D(lambda s, t: np.cos(s) * np.exp(-t))
    a = young_2d(f, R, Partition.dyadic(6), Partition.dyadic(6))
    b = young_2d(f, R, Partition.dyadic(7), Partition.dyadic(7))
    assert 0.5 < b / a < 2


def test_young_slice_examples():
    g = Partition.dyadic(6)
    s = g.times
    bm, fbm = BrownianMotion(), FractionalBM(0.4)
    assert young_slice(np.ones_like(s), fbm, 0.25, 0.75, g) == pytest.approx(
        fbm(0.75, 1.0) - fbm(0.25, 1.0) - fbm(0.75, 0.0) + fbm(0.25, 0.0))
    head = Partition(s[:17])
    assert young_slice(np.ones(17), bm, 0.25, 0.5, head) == 0
    half = Partition(s[:33])
    expected = fbm(1.0, 0.5) - fbm(0.5, 0.5)
    assert expected == pytest.approx(0.5 * (1 - 0.5 ** 0.8 - 0.5 ** 0.8) + 0.5 ** 0.8 - 0.5 ** 0.8)
    assert young_slice(np.ones(33), fbm, 0.5, 1.0, half) == pytest.approx(expected, abs=1e-14)
    with pytest.raises(ValueError):
        young_slice(s, fbm, 0.5, 0.5, g)


def test_young_slice_telescopes():
    g = Partition.dyadic(6)
    f = np.sin(5 * g.times)
    R = FractionalBM(0.4)
    parts = sum(young_slice(f, R, a, b, g) for a, b in [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)])
    assert parts == pytest.approx(young_slice(f, R, 0.0, 1.0, g), abs=1e-12)


def test_isometry_rhs_examples():
    g = Partition.dyadic(5)
    c = np.array([1.5, -2.0])
    Y = PathGrid(g, np.tile(c, (33, 1)))
    zero_k = np.zeros((33, 33, 2, 2))
    assert isometry_rhs(Y, zero_k, BrownianMotion()) == pytest.approx(c @ c)
    assert isometry_rhs(PathGrid(g, np.zeros((33, 2))), zero_k, FractionalBM(0.4)) == 0


def test_isometry_rhs_matches_nested_loop():
    g = Partition.dyadic(3)
    rng = np.random.default_rng(0)
    y = rng.normal(size=(9, 2))
    K = rng.normal(size=(9, 9, 2, 2))
    R = FractionalBM(0.4)
    t = g.times
    P = np.array([[R(t[i + 1], t[j + 1]) - R(t[i], t[j + 1]) - R(t[i + 1], t[j]) + R(t[i], t[j])
                   for j in range(8)] for i in range(8)])
    first = sum(y[s] @ y[u] * P[s, u] for s in range(8) for u in range(8))
    second = 0.0
    for s in range(8):
        for r in range(8):
            for u in range(8):
                for q in range(8):
                    second += np.trace(K[r, u] @ K[q, s]) * P[s, r] * P[u, q]
    assert isometry_rhs(PathGrid(g, y), K, R) == pytest.approx(first + second, rel=1e-12)


def test_isometry_guard():
    g = Partition.dyadic(8)
    with pytest.raises(GridSizeError):
        isometry_rhs(PathGrid(g, np.zeros((257, 1))), np.zeros((257, 257, 1, 1)), BrownianMotion())
