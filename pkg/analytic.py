import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import brentq, fsolve, minimize_scalar

from effective import StarkLadder, build_stark_ladder
from errors import EPProximityError, NoMergeFoundError, RegimeError
from specfun import bessel_i, bessel_j, bessel_y, hyp2f3

logger = logging.getLogger(__name__)

BRANCHES = ("++", "+-", "00", "-+", "--")
SCAN_STEP = 0.02
INTEGER_NUDGE = 1e-6


@dataclass(frozen=True)
class ClosedForm5:
    J: float
    F: float
    delta: complex
    values: np.ndarray
    vectors: Optional[np.ndarray] = None


@dataclass
class ScaleFreeScan:
    n_sites: int
    ratio_grid: np.ndarray
    roots: List[np.ndarray] = field(default_factory=list)
    merge_points: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        width = max((len(r) for r in self.roots), default=0)
        merge = self.merge_points[0] if self.merge_points else np.nan
        rows = []
        for ratio, roots in zip(self.ratio_grid, self.roots):
            row = {"N": self.n_sites, "F_over_J": ratio, "n_roots": len(roots)}
            for k in range(width):
                row[f"xi_{k + 1}"] = roots[k] if k < len(roots) else np.nan
            row["merge_ratio"] = merge
            row["merged_flag"] = bool(ratio <= merge)
            rows.append(row)
        return pd.DataFrame(rows)


# closed forms for the five-site chain

def delta_squared(J: float, F: float) -> float:
    return (2 * J ** 2 - 3 * F ** 2) ** 2 - 12 * J ** 2 * F ** 2


def eigenvalues_n5(J: float, F: float) -> ClosedForm5:
    """e_{rho sigma} = rho [(-5F^2 + 4J^2 + sigma Delta) / 2]^(1/2), plus e_00 = 0."""
    if not J > 0:
        raise ValueError(f'J must be positive, got {J}')
    delta = np.sqrt(complex(delta_squared(J, F)))
    base = 4 * J ** 2 - 5 * F ** 2
    plus = np.sqrt((base + delta) / 2)
    minus = np.sqrt((base - delta) / 2)
    values = np.array([plus, minus, 0j, -plus, -minus], dtype=complex)
    return ClosedForm5(J=J, F=F, delta=complex(delta), values=values)


def _theta(J: float, F: float, e: complex) -> np.ndarray:
    xi = e + 2j * F
    shifted = xi - 1j * F
    return np.array([
        J ** 3,
        xi * J ** 2,
        xi * shifted * J - J ** 3,
        shifted * (e * xi - 2 * J ** 2),
        J * shifted * (e * xi - 2 * J ** 2) / (xi - 4j * F),
    ], dtype=complex)


def eigenvector_n5(J: float, F: float, branch: str, normalize: bool = True) -> np.ndarray:
    if branch not in BRANCHES:
        raise ValueError(f'branch must be one of {BRANCHES}, got {branch}')
    closed = eigenvalues_n5(J, F)
    if branch != "00" and abs(closed.delta) <= 1e-6 * J ** 2:
        raise EPProximityError(f'F/J={F / J:.8f} sits on an exceptional point (|Delta|={abs(closed.delta):.2e})')
    theta = _theta(J, F, closed.values[BRANCHES.index(branch)])
    return theta / np.linalg.norm(theta) if normalize else theta


def lambda_printed(J: float, F: float, branch: str) -> float:
    """Normalization coefficient in its printed closed form."""
    e = eigenvalues_n5(J, F).values[BRANCHES.index(branch)]
    xi = e + 2j * F
    m = abs(xi) ** 2
    return float(
        J ** 6 + m * J ** 4 + abs(xi * (xi - 1j * F) * J - J ** 3) ** 2
        + (m - 3 * F ** 2) * (m - 2 * J ** 2) ** 2 * (1 + J ** 2 / m)
    )


def theta_norm(J: float, F: float, branch: str) -> float:
    e = eigenvalues_n5(J, F).values[BRANCHES.index(branch)]
    return float(np.linalg.norm(_theta(J, F, e)) ** 2)


def critical_ratios() -> Tuple[float, float]:
    c1 = ((6 + 3 * math.sqrt(3)) / 2) ** -0.5
    c2 = ((6 - 3 * math.sqrt(3)) / 2) ** -0.5
    return c1, c2


def classify_spectrum(values: np.ndarray, tol: float = 1e-7) -> Tuple[int, int]:
    """(number of real, number of imaginary) eigenvalues, zero modes excluded."""
    scale = max(np.abs(values).max(), 1.0)
    nonzero = values[np.abs(values) > tol * scale]
    n_real = int(np.sum(np.abs(nonzero.imag) <= tol * scale))
    n_imag = int(np.sum(np.abs(nonzero.real) <= tol * scale))
    return n_real, n_imag


def phase_boundaries(N: int, ratios: Sequence[float], J: float = 1.0) -> List[Tuple[float, float]]:
    """Brackets (lo, hi) in F/J where the real/imaginary character of the spectrum changes."""
    ratios = np.asarray(sorted(ratios), dtype=float)
    labels = [classify_spectrum(np.linalg.eigvals(build_stark_ladder(StarkLadder(N, J, r * J)))) for r in ratios]
    return [(float(ratios[k - 1]), float(ratios[k])) for k in range(1, len(ratios)) if labels[k] != labels[k - 1]]


def central_ep_ratio(N: int, bracket: Tuple[float, float] = (0.6, 0.9)) -> float:
    """F/J at which the zero mode of an odd chain becomes threefold.

    The linear coefficient of the characteristic polynomial, the sum of the
    principal minors of order N-1, vanishes there.
    """
    if N % 2 == 0:
        raise ValueError(f'only odd chains carry a zero mode, got N={N}')

    def linear_coefficient(ratio):
        h = build_stark_ladder(StarkLadder(N, 1.0, ratio))
        total = 0j
        for k in range(N):
            keep = [i for i in range(N) if i != k]
            total += scipy.linalg.det(h[np.ix_(keep, keep)])
        return total.real

    lo, hi = bracket
    if np.sign(linear_coefficient(lo)) == np.sign(linear_coefficient(hi)):
        raise NoMergeFoundError(f'no threefold zero mode for N={N} in F/J {bracket}')
    return brentq(linear_coefficient, lo, hi, xtol=1e-14)


# Bessel secular equations

def _away_from_integer(xi):
    xi = np.asarray(xi, dtype=float)
    nearest = np.round(xi)
    close = np.abs(xi - nearest) < INTEGER_NUDGE
    return np.where(close, nearest + np.where(xi >= nearest, INTEGER_NUDGE, -INTEGER_NUDGE), xi)


def secular_f(xi, J: float, F: float, N: int):
    """J_{-xi}(2a) Y_{N+1-xi}(2a) - J_{N+1-xi}(2a) Y_{-xi}(2a) with a = iJ/F."""
    xi = np.asarray(xi, dtype=float)
    z = 2j * J / F
    order = N + 1 - xi
    return bessel_j(-xi, z) * bessel_y(order, z) - bessel_j(order, z) * bessel_y(-xi, z)


def secular_real(xi, J: float, F: float, N: int):
    """Real form of the secular function, equal to e^{-i(N+1)pi/2} secular_f.

    [I_{-xi}(y) I_{xi-M}(y) - I_{M-xi}(y) I_xi(y)] / sin(pi xi), y = 2J/F, M = N+1;
    the integer values of xi are removable singularities.
    """
    xi = _away_from_integer(xi)
    y = 2 * J / F
    m = N + 1
    numerator = bessel_i(-xi, y) * bessel_i(xi - m, y) - bessel_i(m - xi, y) * bessel_i(xi, y)
    return np.real(numerator) / np.sin(np.pi * xi)


def secular_df(xi: float, J: float, F: float, N: int, h: float = 1e-5) -> complex:
    """d/dxi of secular_f by central differences with one Richardson step."""
    def central(step):
        return (secular_f(xi + step, J, F, N) - secular_f(xi - step, J, F, N)) / (2 * step)
    return complex((4 * central(h / 2) - central(h)) / 3)


def _scan_grid(lo: float, hi: float) -> np.ndarray:
    # grid points stay 0.01 away from every integer
    start = math.floor(lo) + SCAN_STEP / 2
    grid = np.arange(start, math.ceil(hi) + SCAN_STEP, SCAN_STEP)
    return grid[(grid >= lo - SCAN_STEP) & (grid <= hi + SCAN_STEP)]


def _bracketed_roots(func, grid: np.ndarray) -> np.ndarray:
    values = func(grid)
    roots = []
    for k in np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0):
        roots.append(brentq(func, grid[k], grid[k + 1], xtol=1e-13))
    return np.array(roots)


def secular_roots(J: float, F: float, N: int) -> np.ndarray:
    """Real roots xi of the secular equation inside the Gershgorin window."""
    reach = 2 * J / F
    grid = _scan_grid(1 - reach, N + reach)
    return _bracketed_roots(lambda x: secular_real(x, J, F, N), grid)


def roots_to_eigenvalues(roots: np.ndarray, F: float, N: int) -> np.ndarray:
    return 1j * F * (np.asarray(roots) - (N + 1) / 2)


def reduced_secular(xi, J: float, F: float):
    """J_{-xi}(2a), the edge-dominated reduction of the secular equation."""
    if abs(J / F) > 0.7:
        raise RegimeError(f'reduction needs |J/F| <= 0.7, got {abs(J / F):.3f}')
    return bessel_j(-np.asarray(xi, dtype=float), 2j * J / F)


def reduced_roots(J: float, F: float, lo: float, hi: float) -> np.ndarray:
    """Zeros of the reduced secular function in [lo, hi]; J_{-xi}(2iJ/F) = e^{-i xi pi/2} I_{-xi}(2J/F)."""
    if abs(J / F) > 0.7:
        raise RegimeError(f'reduction needs |J/F| <= 0.7, got {abs(J / F):.3f}')
    grid = _scan_grid(lo, hi)
    grid = grid[(grid >= lo) & (grid <= hi)]
    return _bracketed_roots(lambda x: np.real(bessel_i(-np.asarray(x), 2 * J / F)), grid)


def reduced_ep_condition(xi, J: float, F: float) -> complex:
    """2F3(-xi, -xi+1/2; -xi+1, -xi+1, -2xi+1; -4a^2) with a = iJ/F."""
    xi = float(xi)
    z = -4 * (1j * J / F) ** 2
    return hyp2f3(-xi, -xi + 0.5, -xi + 1, -xi + 1, -2 * xi + 1, z)


def reduced_ep_point(guess: Tuple[float, float] = (1.7, 1.6)) -> Tuple[float, float]:
    """Simultaneous zero (xi, F/J) of the reduced secular function and the 2F3 condition."""
    def equations(params):
        xi, ratio = params
        y = 2.0 / ratio
        return [
            float(np.real(bessel_i(-xi, y))),
            float(np.real(hyp2f3(-xi, -xi + 0.5, -xi + 1, -xi + 1, -2 * xi + 1, y ** 2))),
        ]

    solution, info, status, message = fsolve(equations, guess, full_output=True, xtol=1e-12)
    if status != 1:
        raise NoMergeFoundError(f'reduced EP solve failed: {message}')
    return float(solution[0]), float(solution[1])


# scale-free exceptional point

def _pair_has_merged(ratio: float, N: int, window: Tuple[float, float]) -> Tuple[bool, float]:
    F = ratio
    lo, hi = _away_from_integer(np.array(window))
    edge = np.sign(secular_real(lo, 1.0, F, N))
    best = minimize_scalar(lambda x: edge * secular_real(x, 1.0, F, N),
                           bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return bool(best.fun > 0), float(best.x)


def scan_scale_free(N: int, ratios: Sequence[float]) -> ScaleFreeScan:
    ratios = np.asarray(ratios, dtype=float)
    return ScaleFreeScan(n_sites=N, ratio_grid=ratios, roots=[secular_roots(1.0, r, N) for r in ratios])


def find_scale_free_ep(N: int, ratio_lo: float = 1.0, ratio_hi: float = 2.0,
                       step: float = 0.01, tol: float = 1e-8) -> float:
    """Largest F/J below ratio_hi at which the two edge roots of the secular equation merge."""
    if not 0 < ratio_lo < ratio_hi:
        raise ValueError(f'need 0 < ratio_lo < ratio_hi, got {ratio_lo}, {ratio_hi}')
    ratios = np.arange(ratio_hi, ratio_lo - step / 2, -step)
    previous = secular_roots(1.0, ratios[0], N)
    for k in range(1, len(ratios)):
        current = secular_roots(1.0, ratios[k], N)
        if len(current) < len(previous) and len(previous) >= 2:
            break
        previous = current
    else:
        raise NoMergeFoundError(f'no root merge for N={N} in F/J [{ratio_lo}, {ratio_hi}]')

    center = 0.5 * (previous[0] + previous[1])
    window = (center - 0.3, center + 0.3)
    # the scan loses a pair once it is closer than the grid step; walk on to the actual merge
    hi = ratios[k - 1]
    lo = ratios[k]
    while not _pair_has_merged(lo, N, window)[0]:
        hi, lo = lo, lo - step
        if lo < ratio_lo:
            raise NoMergeFoundError(f'edge pair near xi={center:.3f} never merges above F/J={ratio_lo}')
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _pair_has_merged(mid, N, window)[0]:
            lo = mid
        else:
            hi = mid
    ratio = 0.5 * (lo + hi)

    _, xi_star = _pair_has_merged(ratio, N, window)
    grid = _scan_grid(1 - 2 / ratio, N + 2 / ratio)
    scale = np.median([abs(secular_df(x, 1.0, ratio, N)) for x in grid[::5]])
    slope = abs(secular_df(xi_star, 1.0, ratio, N))
    if not slope < 1e-3 * scale:
        raise NoMergeFoundError(
            f'root pair near xi={xi_star:.4f} at F/J={ratio:.5f} is not a double root '
            f'(|df|={slope:.3g}, median {scale:.3g})'
        )
    logger.info("N=%d: edge roots merge at xi=%.5f, F/J=%.6f", N, xi_star, ratio)
    return float(ratio)
