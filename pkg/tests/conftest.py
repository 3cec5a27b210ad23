import numpy as np
import pytest

from shimsi.patterns import Dataset


def random_dataset(seed, n=50, m=8, zeta=0.5, real=False, sigma2=1.0):
    rng = np.random.default_rng(seed)
    Z = (rng.random((n, m)) > zeta).astype(float)
    if real:
        Z *= rng.random((n, m))
    return Dataset(Z, rng.standard_normal(n), sigma2)


def kink_signature(kinks):
    return [(k.param, k.event, tuple(k.pattern)) for k in kinks]


def same_kinks(a, b, scale, rel=1e-9):
    return len(a) == len(b) and all(
        x[1:] == y[1:] and abs(x[0] - y[0]) <= rel * scale for x, y in zip(a, b)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
