import math

import numpy as np
import pytest

from mvgamma.corrstruct import BlockFactorialStructure, OneFactorialStructure


def make_two_block(a, n1, theta):
    a = np.asarray(a, dtype=np.float64)
    th = np.array([[1.0, theta], [theta, 1.0]])
    return BlockFactorialStructure((n1, a.size - n1), a, th)


def make_three_block(a, sizes, th_triple):
    """th_triple = (theta_23, theta_13, theta_12), complementary labeling."""
    t1, t2, t3 = th_triple
    th = np.array([[1.0, t3, t2], [t3, 1.0, t1], [t2, t1, 1.0]])
    return BlockFactorialStructure(tuple(sizes), np.asarray(a, dtype=np.float64), th)


def random_correlation(rng, n, scale=1.0):
    """Random PD correlation matrix from a random Gram factor."""
    for _ in range(50):
        f = rng.normal(size=(n, n + 2))
        m = f @ f.T
        d = np.sqrt(np.diag(m))
        c = m / np.outer(d, d)
        c = np.eye(n) + scale * (c - np.eye(n))
        if np.linalg.eigvalsh(c).min() > 1e-6:
            return 0.5 * (c + c.T)
    raise RuntimeError("could not draw a PD correlation matrix")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def z_score(value, estimate):
    return abs(value - estimate.mean) / max(estimate.std_error, 1e-300)


def assert_close(a, b, tol, msg=""):
    assert abs(a - b) <= tol, f"{msg}: |{a} - {b}| = {abs(a - b)} > {tol}"


__all__ = [
    "assert_close",
    "make_three_block",
    "make_two_block",
    "random_correlation",
    "z_score",
]
