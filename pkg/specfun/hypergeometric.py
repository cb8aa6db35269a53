import math

from errors import ConvergenceError, PoleError
from specfun.bessel import DEFAULT_CONTROL, SeriesControl


# helpers functions
def _nonpositive_integer(p: float):
    if p <= 0 and p == round(p):
        return int(-round(p))
    return None


def _termination_index(numerators):
    """Index k at which (a)_k first vanishes, or None for a non-terminating series."""
    stops = [m for m in map(_nonpositive_integer, numerators) if m is not None]
    return min(stops) if stops else None


def hyp2f3(a1: float, a2: float, b1: float, b2: float, b3: float, z: complex,
           ctrl: SeriesControl = DEFAULT_CONTROL) -> complex:
    """Generalized hypergeometric 2F3(a1, a2; b1, b2, b3; z) by term-ratio recursion.

    The series is entire (p < q + 1), so it converges for every finite z; the
    term cap only guards against pathological cancellation.
    """
    stop = _termination_index((a1, a2))
    for b in (b1, b2, b3):
        m = _nonpositive_integer(b)
        if m is not None and (stop is None or m < stop):
            raise PoleError(f'lower parameter {b:g} is a pole reached at term {m}')

    z = complex(z)
    term = 1.0 + 0j
    total = term
    if z == 0 or stop == 0:
        return total

    kmin = math.ceil(math.sqrt(abs(z))) + math.ceil(max(abs(a1), abs(a2), abs(b1), abs(b2), abs(b3))) + 1
    for k in range(ctrl.max_terms):
        if stop is not None and k >= stop:
            return total
        ratio = (a1 + k) * (a2 + k) / ((b1 + k) * (b2 + k) * (b3 + k) * (k + 1))
        term = term * ratio * z
        total += term
        if k + 1 >= kmin and abs(term) <= ctrl.rel_tol * abs(total):
            return total
    raise ConvergenceError(f'2F3 series did not converge in {ctrl.max_terms} terms (z={z})')
