"""Step-2 truncated tensor algebra over R^d.

Elements are stored densely: a level-1 vector and a level-2 ``d x d`` matrix.
Every function broadcasts over leading batch axes, so a stack of increments
``(..., d)`` / ``(..., d, d)`` is handled in one call.
"""
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    pass


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


@dataclass(frozen=True)
class GroupElement:
    """Point (1, g1, g2) of the step-2 free nilpotent group."""

    level1: np.ndarray
    level2: np.ndarray

    def __post_init__(self):
        l1 = np.asarray(self.level1, dtype=float)
        l2 = np.asarray(self.level2, dtype=float)
        if l1.ndim < 1 or l2.shape != l1.shape + l1.shape[-1:]:
            raise DimensionError(
                f"level2 shape {l2.shape} does not match level1 shape {l1.shape}")
        object.__setattr__(self, "level1", l1)
        object.__setattr__(self, "level2", l2)

    @property
    def dim(self):
        return self.level1.shape[-1]

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.zeros((d, d)))

    def __mul__(self, other):
        return group_mul(self, other)

    def inverse(self):
        return group_inv(self)

    def allclose(self, other, atol=1e-12):
        return (np.allclose(self.level1, other.level1, rtol=0, atol=atol)
                and np.allclose(self.level2, other.level2, rtol=0, atol=atol))


@dataclass(frozen=True)
class LieElement:
    """Element (0, a1, a2) of the tangent space at the identity."""

    level1: np.ndarray
    level2: np.ndarray

    def __post_init__(self):
        l1 = np.asarray(self.level1, dtype=float)
        l2 = np.asarray(self.level2, dtype=float)
        if l1.ndim < 1 or l2.shape != l1.shape + l1.shape[-1:]:
            raise DimensionError(
                f"level2 shape {l2.shape} does not match level1 shape {l1.shape}")
        object.__setattr__(self, "level1", l1)
        object.__setattr__(self, "level2", l2)

    @property
    def dim(self):
        return self.level1.shape[-1]

    def area(self):
        """Antisymmetric part of level 2 (the Levy area)."""
        return 0.5 * (self.level2 - np.swapaxes(self.level2, -1, -2))


def group_mul(a, b):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return GroupElement(a.level1 + b.level1,
                        a.level2 + b.level2 + _outer(a.level1, b.level1))


def group_inv(a):
    # sum_{k<=2} (-1)^k (a - 1)^{k}: level 2 picks up -a2 + a1 (x) a1
    return GroupElement(-a.level1, -a.level2 + _outer(a.level1, a.level1))


def tensor_exp(a):
    return GroupElement(a.level1, a.level2 + 0.5 * _outer(a.level1, a.level1))


def tensor_log(g):
    return LieElement(g.level1, g.level2 - 0.5 * _outer(g.level1, g.level1))


def homogeneous_norm(g):
    """max(|g1|, sqrt(2 |g2|)), Euclidean on level 1 and Frobenius on level 2."""
    n1 = np.linalg.norm(g.level1, axis=-1)
    n2 = np.sqrt(2.0 * np.linalg.norm(g.level2, axis=(-2, -1)))
    return np.maximum(n1, n2)


def segment_element(delta):
    """Exact lift of a straight segment with increment ``delta``."""
    delta = np.asarray(delta, dtype=float)
    return GroupElement(delta, 0.5 * _outer(delta, delta))
