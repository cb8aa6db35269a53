import math
from dataclasses import dataclass

import numpy as np

from errors import ConvergenceError, NearIntegerOrderError, RegimeError
from specfun.gamma import _cospi, _sinpi, rgamma

MAX_ABS_ARGUMENT = 30.0
INTEGER_ORDER_GUARD = 1e-6


@dataclass(frozen=True)
class SeriesControl:
    """Truncation policy for the ascending series."""
    max_terms: int = 200
    rel_tol: float = 1e-14

    def __post_init__(self):
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise ValueError(f'max_terms must be a positive integer, got {self.max_terms}')
        if not self.rel_tol > 0:
            raise ValueError(f'rel_tol must be positive, got {self.rel_tol}')


DEFAULT_CONTROL = SeriesControl()


# helpers functions
def _ascending_series(nu, z, sign, ctrl):
    """sum_k sign^k / (k! Gamma(nu+k+1)) (z/2)^(2k+nu), broadcast over nu and z."""
    nu, z = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(z, dtype=complex))
    nu = nu.astype(float).ravel()
    z = z.astype(complex).ravel()
    if np.any(np.abs(z) > MAX_ABS_ARGUMENT):
        raise RegimeError(f'series Bessel evaluation needs |z| <= {MAX_ABS_ARGUMENT}')

    q = sign * (z / 2.0) ** 2
    power = np.ones_like(z)
    total = power * rgamma(nu + 1.0)
    kmin = np.ceil(np.abs(nu)) + np.ceil(np.abs(z) / 2.0) + 1
    done = np.zeros(z.shape, dtype=bool)
    for k in range(1, ctrl.max_terms + 1):
        power = power * q / k
        term = power * rgamma(nu + k + 1.0)
        total = np.where(done, total, total + term)
        small = np.abs(term) <= ctrl.rel_tol * np.abs(total)
        done |= (k >= kmin) & small
        if done.all():
            break
    else:
        raise ConvergenceError(f'Bessel series did not converge in {ctrl.max_terms} terms')

    zero = z == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        prefactor = np.exp(nu * np.log(np.where(zero, 1.0, z / 2.0)))
    out = prefactor * total
    # z = 0: only the k = 0 term can survive, and only for nu = 0
    out = np.where(zero, np.where(nu == 0, 1.0 + 0j, 0j), out)
    return out


def _shape_like(out, nu, z):
    shape = np.broadcast(np.asarray(nu), np.asarray(z)).shape
    if shape == ():
        return complex(out[0])
    return out.reshape(shape)


def bessel_j(nu, z, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Bessel function of the first kind J_nu(z), real order, complex argument.

    The branch of (z/2)^nu is exp(nu * Log(z/2)) with the principal logarithm.
    Terms whose 1/Gamma(nu+k+1) vanishes are skipped automatically.
    """
    return _shape_like(_ascending_series(nu, z, -1.0, ctrl), nu, z)


def bessel_i(nu, z, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Modified Bessel function of the first kind I_nu(z)."""
    return _shape_like(_ascending_series(nu, z, 1.0, ctrl), nu, z)


def bessel_y(nu, z, ctrl: SeriesControl = DEFAULT_CONTROL):
    """Y_nu(z) = (cos(nu pi) J_nu(z) - J_{-nu}(z)) / sin(nu pi), non-integer nu."""
    nu_arr = np.asarray(nu, dtype=float)
    distance = np.abs(nu_arr - np.round(nu_arr))
    if np.any(distance < INTEGER_ORDER_GUARD):
        raise NearIntegerOrderError(
            f'order {np.ravel(nu_arr)[np.argmin(np.ravel(distance))]:.9g} is within '
            f'{INTEGER_ORDER_GUARD:g} of an integer'
        )
    jp = bessel_j(nu_arr, z, ctrl)
    jm = bessel_j(-nu_arr, z, ctrl)
    return (_cospi(nu_arr) * jp - jm) / _sinpi(nu_arr)


def bessel_j_int(n, z, ctrl: SeriesControl = DEFAULT_CONTROL):
    """J_n(z) for integer n, using J_{-n} = (-1)^n J_n."""
    n = np.asarray(n)
    if not np.all(n == np.round(n)):
        raise ValueError('bessel_j_int needs integer orders')
    n = n.astype(int)
    parity = np.where((n < 0) & (n % 2 == 1), -1.0, 1.0)
    value = bessel_j(np.abs(n), z, ctrl)
    return parity * value if np.ndim(value) else complex(parity * value)


def _check_asymptotic_regime(nu, x):
    if not (0 < x <= 0.2):
        raise RegimeError(f'small-argument form needs 0 < x <= 0.2, got x={x}')
    if nu < 5:
        raise RegimeError(f'large-order form needs nu >= 5, got nu={nu}')


def bessel_j_asymptotic(nu: float, x: float) -> float:
    """(2 pi nu)^(-1/2) (e x / 2 nu)^nu."""
    _check_asymptotic_regime(nu, x)
    return math.exp(nu * math.log(math.e * x / (2 * nu))) / math.sqrt(2 * math.pi * nu)


def bessel_y_asymptotic(nu: float, x: float) -> float:
    """-(2 / (pi nu))^(1/2) (e x / 2 nu)^(-nu)."""
    _check_asymptotic_regime(nu, x)
    return -math.sqrt(2 / (math.pi * nu)) * math.exp(-nu * math.log(math.e * x / (2 * nu)))
