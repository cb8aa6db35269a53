import math

import numpy as np

from errors import PoleError

# Lanczos approximation, g = 7, n = 9
LANCZOS_G = 7.0
LANCZOS_COEFFS = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
GAMMA_MAX_ARG = 171.6243769563027


# helpers functions
def _is_pole(x):
    x = np.asarray(x, dtype=float)
    return (x <= 0) & (x == np.round(x))


def _sinpi(x):
    """sin(pi x) with exact zeros at the integers."""
    x = np.asarray(x, dtype=float)
    r = np.fmod(x, 2.0)
    r = np.where(r > 1.0, r - 2.0, r)
    r = np.where(r <= -1.0, r + 2.0, r)
    s = np.where(r > 0.5, 1.0 - r, np.where(r < -0.5, -1.0 - r, r))
    return np.sin(np.pi * s)


def _cospi(x):
    return _sinpi(np.asarray(x, dtype=float) + 0.5)


def _lanczos_log(x):
    """log Gamma(x) for x >= 0.5."""
    z = x - 1.0
    acc = np.full_like(z, LANCZOS_COEFFS[0])
    for k in range(1, len(LANCZOS_COEFFS)):
        acc = acc + LANCZOS_COEFFS[k] / (z + k)
    t = z + LANCZOS_G + 0.5
    return 0.5 * math.log(2 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(acc)


def gamma_fn(x):
    """Gamma function of a real argument (scalar or array).

    Uses the Lanczos form for x >= 0.5 and the reflection
    Gamma(x) Gamma(1 - x) = pi / sin(pi x) below.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(_is_pole(x)):
        bad = x[_is_pole(x)][0]
        raise PoleError(f'gamma has a pole at x={bad:g}')
    if np.any(x > GAMMA_MAX_ARG):
        bad = x[x > GAMMA_MAX_ARG][0]
        raise OverflowError(f'gamma({bad:g}) exceeds the double range')

    out = np.empty_like(x)
    upper = x >= 0.5
    out[upper] = np.exp(_lanczos_log(x[upper]))
    lower = ~upper
    if np.any(lower):
        xl = x[lower]
        out[lower] = np.pi / (_sinpi(xl) * np.exp(_lanczos_log(1.0 - xl)))
    return float(out[0]) if scalar else out


def lgamma(x):
    """log |Gamma(x)|; +inf at the poles."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.full_like(x, np.inf)
    upper = x >= 0.5
    out[upper] = _lanczos_log(x[upper])
    lower = (~upper) & (~_is_pole(x))
    xl = x[lower]
    out[lower] = math.log(math.pi) - np.log(np.abs(_sinpi(xl))) - _lanczos_log(1.0 - xl)
    return float(out[0]) if scalar else out


def rgamma(x):
    """1 / Gamma(x), exactly 0 at the poles and for very large x."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    upper = x >= 0.5
    with np.errstate(over="ignore", under="ignore"):
        out[upper] = np.exp(-_lanczos_log(x[upper]))
        lower = ~upper
        xl = x[lower]
        # 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        out[lower] = _sinpi(xl) * np.exp(_lanczos_log(1.0 - xl)) / np.pi
    out[_is_pole(x)] = 0.0
    out[~np.isfinite(out)] = 0.0
    return float(out[0]) if scalar else out
