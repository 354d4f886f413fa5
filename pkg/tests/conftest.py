import numpy as np
import pytest

from sohk.gci import solve_chi
from sohk.vmf import ModelParams, solve_concentration

# fixed-point values cross-checked against the closed forms
# (coth l - 1/l = 0.2 l for d=3; I1/I0 = 0.2 l for d=2)
LSTAR_D2_02 = 4.384117110314723
LSTAR_D3_02 = 3.6294099359559993


@pytest.fixture(scope="session")
def chi_d2():
    l = solve_concentration(ModelParams(d=2, r=1.0, beta=1.0, sigma=0.2))
    return solve_chi(2, l, 0.2, 1.0, resolution=32)


@pytest.fixture(scope="session")
def chi_d3():
    l = solve_concentration(ModelParams(d=3, r=1.0, beta=1.0, sigma=0.2))
    return solve_chi(3, l, 0.2, 1.0, resolution=32)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
