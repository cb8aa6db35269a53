import logging
from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from errors import ConvergenceError

logger = logging.getLogger(__name__)

MAX_DIM = 1000

EPReport = namedtuple("EPReport", ["clusters", "order_estimate", "max_offdiag_fidelity", "parameter_tag"])


@dataclass(frozen=True)
class BiorthogonalEigenSystem:
    """Eigenvalues with paired right and left eigenvectors (as columns).

    The pairing is <left_m|right_n> = left_m^H right_n. For complex symmetric
    matrices the left kets are the complex conjugates of the right kets, so the
    pairing becomes the unconjugated bilinear form right_m^T right_n.
    """
    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residuals: np.ndarray
    bi_condition: np.ndarray
    symmetric: bool = False
    flags: List[int] = field(default_factory=list)

    def overlap(self) -> np.ndarray:
        return self.left.conj().T @ self.right


@dataclass(frozen=True)
class LowLyingBand:
    size: int
    values: np.ndarray
    vectors: np.ndarray
    left: np.ndarray
    ordering: np.ndarray


# helpers functions
def is_complex_symmetric(M: np.ndarray, rtol: float = 1e-13) -> bool:
    scale = max(np.abs(M).max(), 1.0)
    return bool(np.all(np.abs(M - M.T) <= rtol * scale))


def eig_general(M: np.ndarray) -> BiorthogonalEigenSystem:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f'expected a square matrix, got shape {M.shape}')
    if M.shape[0] > MAX_DIM:
        raise ValueError(f'dense eigensolver limited to dim <= {MAX_DIM}, got {M.shape[0]}')

    symmetric = is_complex_symmetric(M)
    try:
        if symmetric:
            values, right = scipy.linalg.eig(M, right=True)
            left = right.conj()
        else:
            values, left, right = scipy.linalg.eig(M, left=True, right=True)
    except np.linalg.LinAlgError as err:
        raise ConvergenceError(f'eigensolver failed: {err}') from err
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ConvergenceError(f'eigenvalue {bad[0]} did not converge')

    right = right / np.linalg.norm(right, axis=0)
    left = left / np.linalg.norm(left, axis=0)
    residuals = np.linalg.norm(M @ right - right * values, axis=0)
    bi_condition = np.abs(np.einsum("ij,ij->j", left.conj(), right))
    return BiorthogonalEigenSystem(values, right, left, residuals, bi_condition, symmetric)


def biorthonormalize(sys: BiorthogonalEigenSystem, ep_threshold: float = 1e-6) -> BiorthogonalEigenSystem:
    """Scale every pair to <left_n|right_n> = 1; pairs too close to self-orthogonality are flagged."""
    right = sys.right.copy()
    left = sys.left.copy()
    flags = [int(i) for i in np.flatnonzero(sys.bi_condition < ep_threshold)]
    for i in range(len(sys.values)):
        if i in flags:
            continue
        if sys.symmetric:
            right[:, i] /= np.sqrt(right[:, i] @ right[:, i])
            left[:, i] = right[:, i].conj()
        else:
            left[:, i] /= np.vdot(left[:, i], right[:, i]).conj()
    if flags:
        logger.info("left/right pairs %s are nearly self-orthogonal", flags)
    return replace(sys, right=right, left=left, flags=flags)


def low_lying(sys: BiorthogonalEigenSystem, n_band: int, check_gap: bool = True) -> LowLyingBand:
    """The n_band levels of smallest real part, ordered by imaginary then real part.

    check_gap warns when the band does not sit clearly below the remaining levels;
    it is meaningful for the lossless spectrum only.
    """
    dim = len(sys.values)
    if not 1 <= n_band <= dim:
        raise ValueError(f'n_band must be in [1, {dim}], got {n_band}')

    by_real = np.argsort(sys.values.real, kind="stable")
    chosen = by_real[:n_band]
    values = sys.values[chosen]
    # rounding-level imaginary parts count as zero so real spectra sort by energy
    imag = np.where(np.abs(values.imag) <= 1e-12 * max(np.abs(values).max(), 1.0), 0.0, values.imag)
    ordering = chosen[np.lexsort((values.real, imag))]

    if check_gap and n_band < dim:
        band_re = sys.values[chosen].real
        gap = sys.values[by_real[n_band:]].real.min() - band_re.max()
        spread = band_re.max() - band_re.min()
        if gap < 10 * spread:
            logger.warning("band of %d levels is not well separated: gap %.3g vs spread %.3g",
                           n_band, gap, spread)

    return LowLyingBand(
        size=n_band,
        values=sys.values[ordering],
        vectors=sys.right[:, ordering],
        left=sys.left[:, ordering],
        ordering=ordering,
    )


def fidelity_matrix(band: LowLyingBand) -> np.ndarray:
    """f_qq' = sum_n |d_q(n)| |d_q'(n)| / (Omega_q Omega_q')."""
    modulus = np.abs(band.vectors)
    omega = np.linalg.norm(modulus, axis=0)
    if np.any(omega == 0):
        raise ValueError(f'zero eigenvector at band index {int(np.flatnonzero(omega == 0)[0])}')
    f = (modulus.T @ modulus) / np.outer(omega, omega)
    f = np.minimum(f, 1.0)
    np.fill_diagonal(f, 1.0)
    return f


def detect_coalescence(
    f: np.ndarray,
    threshold: float = 0.99,
    parameter_tag: Optional[float] = None,
    values: Optional[np.ndarray] = None,
    energy_tol: float = 0.1,
) -> EPReport:
    """Group band states whose mutual fidelity reaches the threshold.

    When band eigenvalues are given, an edge also needs the two levels to sit
    within energy_tol of the band spread: coalescence at an EP concerns the
    eigenvalues as well as the states.
    """
    if not 0.9 <= threshold < 1:
        raise ValueError(f'threshold must lie in [0.9, 1), got {threshold}')
    f = np.asarray(f, dtype=float)
    adjacency = f >= threshold
    np.fill_diagonal(adjacency, False)
    if values is not None:
        values = np.asarray(values)
        distance = np.abs(values[:, None] - values[None, :])
        adjacency &= distance <= energy_tol * max(distance.max(), np.finfo(float).tiny)

    n_components, labels = connected_components(adjacency, directed=False)
    clusters = []
    for c in range(n_components):
        members = np.flatnonzero(labels == c)
        if len(members) >= 2:
            clusters.append([int(m) for m in members])
    clusters.sort(key=lambda members: (-len(members), members[0]))

    off = f[~np.eye(len(f), dtype=bool)]
    return EPReport(
        clusters=clusters,
        order_estimate=max((len(c) for c in clusters), default=None),
        max_offdiag_fidelity=float(off.max()) if off.size else 0.0,
        parameter_tag=parameter_tag,
    )


def export_fidelity(f: np.ndarray, path: str, parameter_tag: Optional[float] = None):
    q, q_prime = np.indices(f.shape)
    frame = pd.DataFrame({"q": q.ravel(), "q_prime": q_prime.ravel(), "value": f.ravel()})
    if parameter_tag is not None:
        frame.insert(0, "parameter", parameter_tag)
    frame.to_csv(path, index=False, float_format="%.16e")
