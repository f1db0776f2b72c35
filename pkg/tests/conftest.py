import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polarpl.grid import INF, GridFunction
from polarpl.inequalities import InstanceGenerator, generate

settings.register_profile("polarpl", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("polarpl")


def grid1(fn, lo=-4.0, hi=4.0, n=513):
    return GridFunction.from_callable(lambda x: fn(x[:, 0]), ((lo, hi),), (n,))


def indicator(a, b, lo=-4.0, hi=4.0, n=513, inf=False):
    """1 on [a, b] and 0 elsewhere, or 0 on [a, b] and +inf elsewhere."""
    if inf:
        return grid1(lambda x: np.where((x >= a) & (x <= b), 0.0, INF), lo, hi, n)
    return grid1(lambda x: ((x >= a) & (x <= b)).astype(float), lo, hi, n)


def cvx0(seed, n=1, shape=None):
    return generate(InstanceGenerator("cvx0-max-affine", seed, n, shape=shape))


@pytest.fixture
def abs1():
    return grid1(np.abs)
