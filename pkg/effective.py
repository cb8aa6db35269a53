import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import least_squares, linear_sum_assignment

from errors import ConvergenceError, ProjectionError
from fgh import ContinuousModel, build_hamiltonian, build_hamiltonian_from_potential, make_grid
from spectral import LowLyingBand, biorthonormalize, eig_general, low_lying

logger = logging.getLogger(__name__)

EffectiveCouplings = namedtuple("EffectiveCouplings", ["J", "F", "per_l_spread", "h"])
LadderFit = namedtuple("LadderFit", ["J", "F", "residual"])

COUPLING_COLUMNS = ["kappa", "re_J", "im_J", "re_F", "im_F", "ratio", "per_l_spread", "fit_ratio"]


@dataclass(frozen=True)
class WannierBasis:
    states: np.ndarray
    centers: np.ndarray
    source_model: ContinuousModel

    def gram(self) -> np.ndarray:
        return self.states.T @ self.states


@dataclass(frozen=True)
class StarkLadder:
    """Tilted tight-binding chain with hopping J and imaginary tilt iF."""
    size: int
    hopping: complex = 1.0
    tilt: complex = 0.0

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise ValueError(f'ladder size must be an integer >= 2, got {self.size}')

    @property
    def ratio(self) -> float:
        return abs(self.tilt / self.hopping)


def build_stark_ladder(ladder: StarkLadder) -> np.ndarray:
    n = int(ladder.size)
    sites = np.arange(1, n + 1) - (n + 1) / 2
    h = np.diag(1j * ladder.tilt * sites).astype(complex)
    idx = np.arange(n - 1)
    h[idx, idx + 1] = ladder.hopping
    h[idx + 1, idx] = ladder.hopping
    return h


def continuum_band(model: ContinuousModel, ep_threshold: float = 1e-6) -> LowLyingBand:
    """Low-lying band of the discretized continuum Hamiltonian, one level per well."""
    system = biorthonormalize(eig_general(build_hamiltonian(model)), ep_threshold)
    return low_lying(system, model.n_wells, check_gap=model.kappa == 0)


# helpers functions
def _single_well_potential(model: ContinuousModel, x: np.ndarray) -> np.ndarray:
    half = 1.0 / (2 * model.omega)
    r = np.abs(x)
    wells = model.gamma * np.sin(model.omega * np.pi * np.minimum(r, half)) ** 2
    # walls capped far above the well depth keep the matrix well scaled
    cap = 1e3 * max(model.gamma, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        walls = np.exp(np.minimum(model.a * np.log(np.maximum(r, 1e-300) / half), np.log(cap)))
    return wells + walls


def _fourier_shift(vector: np.ndarray, steps: float) -> np.ndarray:
    n = len(vector)
    k = np.fft.fftfreq(n)
    return np.fft.ifft(np.fft.fft(vector) * np.exp(-2j * np.pi * k * steps)).real


def _linear_shift(vector: np.ndarray, points: np.ndarray, shift: float) -> np.ndarray:
    return np.interp(points - shift, points, vector, left=0.0, right=0.0)


def single_well_ground(model: ContinuousModel, band_width: Optional[float] = None) -> np.ndarray:
    """Ground state of one sin^2 period closed by hard walls, centred at x = 0."""
    grid = make_grid(model)
    reference = model.with_kappa(0.0)
    H = build_hamiltonian_from_potential(reference, _single_well_potential(reference, grid.points)).real
    energies, states = scipy.linalg.eigh(H, subset_by_index=[0, 1])
    if band_width is not None and energies[1] - energies[0] < 10 * band_width:
        raise ProjectionError(
            f'single-well gap {energies[1] - energies[0]:.4g} is below 10x the band width {band_width:.4g}'
        )
    ground = states[:, 0] / np.linalg.norm(states[:, 0])
    if ground.sum() < 0:
        ground = -ground
    return ground


def wannier_basis(model: ContinuousModel, method: str = "linear", band_width: Optional[float] = None) -> WannierBasis:
    """Translate the single-well ground state to the well centres k / omega.

    band_width defaults to the real-part width of the lossless continuum band;
    the single-well gap must exceed ten times it.
    """
    if method not in ("linear", "fourier"):
        raise ValueError(f'unknown translation method {method}')
    if band_width is None:
        band_width = float(np.ptp(continuum_band(model.with_kappa(0.0)).values.real))
    grid = make_grid(model)
    omega = int(model.omega)
    centers = np.arange(-omega, omega + 1) / omega
    if grid.dx > (1.0 / omega) / 10:
        logger.warning("grid spacing %.4g is coarse against the well width %.4g; translated states lose accuracy",
                       grid.dx, 1.0 / omega)

    ground = single_well_ground(model, band_width)
    states = []
    for center in centers:
        if method == "fourier":
            chi = _fourier_shift(ground, center / grid.dx)
        else:
            chi = _linear_shift(ground, grid.points, center)
        states.append(chi / np.linalg.norm(chi))
    return WannierBasis(states=np.stack(states, axis=1), centers=centers, source_model=model)


def orthonormalize(basis: WannierBasis) -> WannierBasis:
    """Symmetric (Loewdin) orthonormalization, W S^(-1/2)."""
    overlaps, vectors = scipy.linalg.eigh(basis.gram())
    inv_sqrt = vectors @ np.diag(overlaps ** -0.5) @ vectors.T
    return WannierBasis(states=basis.states @ inv_sqrt, centers=basis.centers, source_model=basis.source_model)


def project_couplings(
    band: LowLyingBand,
    basis: WannierBasis,
    left_vectors: Optional[np.ndarray] = None,
    max_spread: float = 0.2,
) -> EffectiveCouplings:
    """Band-projected tight-binding couplings in the Wannier basis.

    The band is written as sum_n E_n |psi_n><psi_bar_n|; its matrix elements
    between Wannier states are taken in the Loewdin-orthonormalized frame of
    the projected basis, which is how P^-1 on the rank-N projector is read here.
    """
    n = band.size
    W = basis.states
    if W.shape[1] != n:
        raise ValueError(f'band has {n} levels but the basis has {W.shape[1]} states')

    right = band.vectors
    left = band.left if left_vectors is None else left_vectors
    pairing = np.einsum("ij,ij->j", left.conj(), right)
    left = left / pairing.conj()

    c_right = W.T @ right
    c_left = left.conj().T @ W
    overlap = c_right @ c_left
    raw = c_right @ np.diag(band.values) @ c_left
    inv_sqrt = np.linalg.inv(scipy.linalg.sqrtm(overlap))
    h = inv_sqrt @ raw @ inv_sqrt

    mean_onsite = np.trace(h) / n
    hops = np.diag(h, k=1)
    J = hops.mean()
    sites = np.arange(1, n + 1) - (n + 1) / 2
    off_center = sites != 0
    tilts = -1j * (np.diag(h)[off_center] - mean_onsite) / sites[off_center]
    F = tilts.mean()

    scale = max(abs(F), abs(J))
    spread = max(np.abs(hops - J).max() / abs(J), np.abs(tilts - F).max() / scale)
    if spread > max_spread:
        raise ProjectionError(f'couplings vary by {spread:.3f} across wells (limit {max_spread})')
    return EffectiveCouplings(J=complex(J), F=complex(F), per_l_spread=float(spread), h=h)


def _ladder_mismatch(params, target, n):
    J, F = params
    values = np.linalg.eigvals(build_stark_ladder(StarkLadder(n, J, F)))
    cost = np.abs(values[:, None] - target[None, :])
    rows, cols = linear_sum_assignment(cost)
    diff = values[rows] - target[cols]
    return np.concatenate([diff.real, diff.imag])


def fit_stark_ladder(band: LowLyingBand) -> LadderFit:
    """Least-squares (J, F) >= 0 matching the band spectrum up to a global shift."""
    n = band.size
    if n < 3:
        raise ValueError(f'fit needs at least 3 levels, got {n}')
    target = band.values - band.values.mean()
    J0 = max(np.ptp(target.real), np.ptp(target.imag)) / (4 * np.cos(np.pi / (n + 1)))
    J0 = max(J0, 1e-12)

    best = None
    for factor in (0.1, 0.3, 0.5, 1.0, 2.0):
        fit = least_squares(
            _ladder_mismatch, x0=[J0, factor * J0], args=(target, n),
            bounds=([0.0, 0.0], [np.inf, np.inf]), xtol=1e-14, ftol=1e-14, gtol=1e-14,
        )
        if best is None or fit.cost < best.cost:
            best = fit
    if best is None or best.status <= 0:
        raise ConvergenceError('ladder fit did not converge')
    residual = np.sqrt(2 * best.cost / n)
    return LadderFit(J=float(best.x[0]), F=float(best.x[1]), residual=float(residual))


def coupling_sweep(model: ContinuousModel, kappas: Sequence[float], basis: Optional[WannierBasis] = None) -> pd.DataFrame:
    basis = wannier_basis(model) if basis is None else basis
    rows = [coupling_row(model.with_kappa(kappa), basis) for kappa in kappas]
    return pd.DataFrame(rows, columns=COUPLING_COLUMNS)


def coupling_row(model: ContinuousModel, basis: Optional[WannierBasis] = None, max_spread: float = 0.2) -> dict:
    basis = wannier_basis(model) if basis is None else basis
    band = continuum_band(model)
    couplings = project_couplings(band, basis, max_spread=max_spread)
    fit = fit_stark_ladder(band)
    return {
        "kappa": model.kappa,
        "re_J": couplings.J.real,
        "im_J": couplings.J.imag,
        "re_F": couplings.F.real,
        "im_F": couplings.F.imag,
        "ratio": abs(couplings.F / couplings.J),
        "per_l_spread": couplings.per_l_spread,
        "fit_ratio": fit.F / fit.J if fit.J > 0 else np.nan,
    }
