import numpy as np
import pytest

from cislp.ci_model import build_ci_system
from cislp.constellation import parse_modulation
from cislp.simharness import gen_channel

SQ2 = np.sqrt(2.0)


def random_system(seed, K=4, Nt=8, mod="QPSK", gamma=10.0, sigma=1.0):
    rng = np.random.default_rng(seed)
    spec = parse_modulation(mod)
    H = gen_channel(K, Nt, rng)
    s = spec.points[rng.integers(0, spec.order, K)]
    return build_ci_system(H, s, spec, gamma, sigma)


def e1():
    spec = parse_modulation("QPSK")
    return build_ci_system(np.array([[1.0 + 0j]]), np.array([(1 + 1j) / SQ2]), spec, 1.0, 1.0)


@pytest.fixture
def e1_system():
    return e1()
