import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from effective import continuum_band
from fgh import FIG3_KAPPA, PRESETS


# similarity transforms to the Jordan basis as printed for the five- and seven-site chains

@pytest.fixture
def s_ep1():
    return np.array([
        [0.041 - 0.329j, 0.494 - 0.058j, -0.436, 0.041 + 0.329j, -0.494 - 0.058j],
        [0.329 - 0.376j, 0.705 + 0.016j, -0.368j, -0.329 - 0.376j, 0.705 - 0.016j],
        [0.529, 0.707, 0.591, 0.529, -0.707],
        [0.329 + 0.376j, 0.705 - 0.016j, 0.368j, -0.329 + 0.376j, 0.705 + 0.016j],
        [0.041 + 0.329j, 0.494 + 0.058j, -0.436, 0.041 - 0.329j, -0.494 + 0.058j],
    ], dtype=complex)


@pytest.fixture
def s_c2():
    return np.array([
        [-0.639j, -0.117, -0.132, 0.015j, -0.029],
        [0.703, -0.768j, -0.416j, -0.079, -0.139j],
        [0.303j, 0.454, 0.787, -0.303j, 0.454],
        [-0.079, 0.139j, 0.416j, 0.703, 0.768j],
        [-0.015j, -0.029, -0.132, 0.639j, -0.117],
    ], dtype=complex)


@pytest.fixture
def s_ep3():
    return np.array([
        [-0.377 - 0.318j, 0.377 - 0.318j, 0.008 + 0.004j, 0.116j, -0.173, -0.128j, -0.008 + 0.004j],
        [0.657, 0.657, -0.007 + 0.031j, -0.254, -0.264j, 0.109, -0.007 - 0.031j],
        [-0.293 + 0.401j, 0.293 + 0.401j, -0.102 + 0.009j, -0.487j, 0.305, 0.024j, 0.102 + 0.009j],
        [-0.116 - 0.232j, -0.116 + 0.232j, -0.116 - 0.232j, 0.610, 0, 0.178, -0.116 + 0.232j],
        [0.102 - 0.009j, -0.102 - 0.009j, 0.293 - 0.401j, 0.487j, 0.305, -0.024j, -0.293 - 0.401j],
        [-0.007 + 0.031j, -0.007 - 0.031j, 0.657, -0.254, 0.264j, 0.109, 0.657],
        [-0.008 - 0.004j, 0.008 - 0.004j, 0.377 + 0.318j, -0.116j, -0.173, 0.128j, -0.377 + 0.318j],
    ], dtype=complex)


@pytest.fixture
def c0_ep1():
    return np.array([-0.606, 0.620, 1.293, -0.606, -0.620], dtype=complex)


@pytest.fixture
def ep1_blocks():
    return [(1.246, 2), (0.0, 1), (-1.246, 2)]


@pytest.fixture
def c2_blocks():
    return [(-2.0543j, 2), (0.0, 1), (2.0543j, 2)]


# locating the threefold coalescence of the seven- and fifteen-well boxes

def _central_spread(model, kappa, k=3):
    values = continuum_band(model.with_kappa(kappa)).values
    nearest = values[np.argsort(np.abs(values - values.mean()))[:k]]
    return np.abs(nearest[:, None] - nearest[None, :]).max()


@pytest.fixture
def locate_ep():
    """Loss strength where the three central levels of a seven- or fifteen-well box meet.

    The five-well box has no threefold point; its tabulated strength is used as is.
    """
    def locate(name):
        model = PRESETS[name]
        guess = FIG3_KAPPA[name]
        assert model.n_wells > 5, "the five-well box coalesces pairwise"
        best = minimize_scalar(lambda kappa: _central_spread(model, kappa), bounds=(0.5 * guess, 1.5 * guess),
                               method="bounded", options={"xatol": 1e-9 * guess})
        return best.x
    return locate
