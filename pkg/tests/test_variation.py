import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from roughsko.lift import lift_piecewise_linear
from roughsko.variation import (GridFunction2D, Partition, PartitionError, greedy_sequence,
                                p_variation_1d, p_variation_2d_bruteforce, p_variation_2d_grid)


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition([0.0])
    with pytest.raises(PartitionError):
        Partition([0.0, 0.5, 0.5, 1.0])
    g = Partition.dyadic(3)
    assert g.n_intervals == 8 and g.is_uniform()
    assert Partition.dyadic(2).is_subset_of(g)
    with pytest.raises(PartitionError):
        g.index_of(0.3)


def test_pvar_1d_examples():
    assert p_variation_1d(np.array([0.0, 1, 2, 3]), 2) == pytest.approx(3.0)
    assert p_variation_1d(np.array([0.0, 1, 0, 1]), 1) == pytest.approx(3.0)
    t = np.linspace(0, 1, 17)
    assert abs(p_variation_1d(t ** 2, 1) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        p_variation_1d(t, 0.5)


def test_pvar_2d_examples():
    g = Partition([0.0, 0.5, 1.0])
    f = GridFunction2D.from_callable(np.minimum, g, g)
    assert p_variation_2d_grid(f, 1) == pytest.approx(1.0)
    assert p_variation_2d_bruteforce(f.values, 1) == pytest.approx(1.0)
    const = GridFunction2D(g, g, np.full((3, 3), 2.5))
    assert p_variation_2d_grid(const, 2) == 0
    unit = Partition([0.0, 1.0])
    st_ = GridFunction2D.from_callable(lambda s, t: s * t, unit, unit)
    assert p_variation_2d_grid(st_, 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        p_variation_2d_grid(st_, 0.9)


@settings(max_examples=25, deadline=None)
@given(arrays(float, (5, 5), elements=st.floats(-3, 3)), st.sampled_from([1.0, 1.5, 2.0, 2.5]))
def test_pvar_2d_matches_bruteforce(values, p):
    g = Partition.uniform(4)
    assert p_variation_2d_grid(GridFunction2D(g, g, values), p) == pytest.approx(
        p_variation_2d_bruteforce(values, p), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 12, elements=st.floats(-5, 5)), st.floats(1, 2), st.floats(0, 2))
def test_pvar_monotone_in_p(x, p, dp):
    assert p_variation_1d(x, p + dp) <= p_variation_1d(x, p) + 1e-9


@settings(max_examples=40, deadline=None)
@given(arrays(float, 15, elements=st.floats(-5, 5)), st.integers(1, 13), st.floats(1, 3))
def test_pvar_superadditive(x, u, p):
    left = p_variation_1d(x[: u + 1], p) ** p
    right = p_variation_1d(x[u:], p) ** p
    assert left + right <= p_variation_1d(x, p) ** p * (1 + 1e-9) + 1e-9


def test_greedy_examples():
    grid = Partition.uniform(4)
    x = lift_piecewise_linear(np.arange(5.0), grid)
    tau, count = greedy_sequence(x, 0.5, 1)
    assert count == 3 and np.allclose(tau, [0, 0.25, 0.5, 0.75])
    small = lift_piecewise_linear(0.01 * np.arange(5.0), grid)
    tau, count = greedy_sequence(small, 1.0, 1)
    assert count == 0 and np.array_equal(tau, [0.0])
    fine = Partition.uniform(64)
    line = lift_piecewise_linear(fine.times, fine)
    tau, count = greedy_sequence(line, 0.5, 1)
    assert count == 1 and np.allclose(tau, [0, 0.5])


def test_greedy_monotone_and_coarsening():
    from roughsko.gaussian import BrownianMotion, sample_array
    fine = Partition.dyadic(8)
    X = sample_array(BrownianMotion(), fine, 2, 1, seed=5)[0]
    x = lift_piecewise_linear(X, fine)
    counts = [greedy_sequence(x, b, 2.5)[1] for b in (0.05, 0.2, 1.0)]
    assert counts[0] >= counts[1] >= counts[2]
    coarse = x.coarsen(Partition.dyadic(5))
    assert greedy_sequence(coarse, 1.0, 2.5)[1] <= greedy_sequence(x, 1.0, 2.5)[1]
