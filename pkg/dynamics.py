import logging
import math
from collections import namedtuple
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.special
import torch
from scipy.sparse.csgraph import connected_components

from errors import ChainConstructionError, StepUnderflowError, WindowError
from specfun import MAX_ABS_ARGUMENT, bessel_j_int

logger = logging.getLogger(__name__)

MAX_JORDAN_DIM = 20
MAX_STEPS = 10 ** 8
CHAIN_RCOND = 1e-8

Spacing = namedtuple("Spacing", ["mean_gap", "max_gap_dev", "axis"])


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    states: np.ndarray
    dirac_p: np.ndarray

    def partial_probability(self, indices: Sequence[int]) -> np.ndarray:
        return np.sum(np.abs(self.states[:, list(indices)]) ** 2, axis=1)

    def restrict(self, indices: Sequence[int]) -> "EvolutionResult":
        """The same trajectory seen on a subset of components."""
        states = self.states[:, list(indices)]
        return EvolutionResult(self.times, states, np.sum(np.abs(states) ** 2, axis=1))


@dataclass(frozen=True)
class JordanDecomposition:
    transform: np.ndarray
    blocks: List[Tuple[complex, int]]
    tolerance_used: float

    def jordan_form(self) -> np.ndarray:
        return jordan_form_matrix(self.blocks)


def dirac_probability(state) -> float:
    state = np.asarray(state, dtype=complex)
    return float(np.vdot(state, state).real)


def xi_frame(h: np.ndarray) -> np.ndarray:
    """H_xi = -i h; turns the imaginary tilt into a real Stark potential."""
    return -1j * np.asarray(h, dtype=complex)


# helpers functions
def _rk4_step_operator(h: torch.Tensor, dt: float) -> torch.Tensor:
    """One classic RK4 step of i d/dt psi = h psi, applied to every basis vector at once."""
    psi = torch.eye(h.shape[0], dtype=h.dtype)
    k1 = -1j * dt * (h @ psi)
    k2 = -1j * dt * (h @ (psi + 0.5 * k1))
    k3 = -1j * dt * (h @ (psi + 0.5 * k2))
    k4 = -1j * dt * (h @ (psi + k3))
    return psi + (k1 / 6 + k2 / 3 + k3 / 3 + k4 / 6)


def evolve_ode(h, psi0, times, max_step: Optional[float] = None) -> EvolutionResult:
    """Integrate i d/dt psi = h psi with fixed-step RK4 on the requested time grid."""
    h = np.asarray(h, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    times = np.asarray(times, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or psi0.shape != (h.shape[0],):
        raise ValueError(f'shape mismatch: h {h.shape}, psi0 {psi0.shape}')
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError('times must start at 0 and increase strictly')

    if not np.all(np.isfinite(h)):
        raise StepUnderflowError('h has non-finite entries')
    norm = np.linalg.norm(h, 2)
    dt_max = min(1e-3, 0.1 / norm) if norm > 0 else 1e-3
    if max_step is not None:
        dt_max = min(dt_max, max_step)
    total = int(np.ceil(times[-1] / dt_max))
    if total > MAX_STEPS:
        raise StepUnderflowError(f'{total} steps of {dt_max:.2e} needed to reach t={times[-1]}')

    h_t = torch.from_numpy(h).to(torch.complex128)
    psi = torch.from_numpy(psi0.copy()).to(torch.complex128)
    states = [psi0.copy()]
    propagators = {}
    for interval in np.diff(times):
        n_steps = max(1, math.ceil(interval / dt_max - 1e-9))
        key = (round(interval, 12), n_steps)
        if key not in propagators:
            step = _rk4_step_operator(h_t, interval / n_steps)
            propagators[key] = torch.linalg.matrix_power(step, n_steps)
        psi = propagators[key] @ psi
        states.append(psi.numpy().copy())

    states = np.array(states)
    return EvolutionResult(times, states, np.sum(np.abs(states) ** 2, axis=1))


def jordan_form_matrix(blocks: Sequence[Tuple[complex, int]]) -> np.ndarray:
    dim = sum(size for _, size in blocks)
    form = np.zeros((dim, dim), dtype=complex)
    start = 0
    for value, size in blocks:
        for k in range(size):
            form[start + k, start + k] = value
            if k + 1 < size:
                form[start + k, start + k + 1] = 1.0
        start += size
    return form


def jordan_decompose(h, degeneracy_tol: Optional[float] = None) -> JordanDecomposition:
    """Jordan chains of h built by minimum-norm solves of (h - e) phi_{k+1} = phi_k."""
    h = np.asarray(h, dtype=complex)
    dim = h.shape[0]
    if dim > MAX_JORDAN_DIM:
        raise ValueError(f'Jordan analysis is limited to dim <= {MAX_JORDAN_DIM}, got {dim}')
    tol = 1e-6 * np.linalg.norm(h, 2) if degeneracy_tol is None else degeneracy_tol

    values = scipy.linalg.eigvals(h)
    close = np.abs(values[:, None] - values[None, :]) <= tol
    n_clusters, labels = connected_components(close, directed=False)
    clusters = [np.flatnonzero(labels == c) for c in range(n_clusters)]
    clusters.sort(key=lambda members: (values[members].mean().real, values[members].mean().imag))

    columns, blocks = [], []
    for members in clusters:
        size = len(members)
        # the mean of a split cluster is accurate to rounding
        value = values[members].mean()
        shifted = h - value * np.eye(dim)
        kernel = scipy.linalg.null_space(shifted, rcond=CHAIN_RCOND)
        geometric = kernel.shape[1]
        if geometric == size:
            columns.extend(kernel.T)
            blocks.extend([(complex(value), 1)] * size)
        elif geometric == 1:
            chain = [kernel[:, 0]]
            for _ in range(size - 1):
                nxt, *_ = scipy.linalg.lstsq(shifted, chain[-1], cond=CHAIN_RCOND)
                residual = np.linalg.norm(shifted @ nxt - chain[-1])
                if residual > 1e-6 * max(np.linalg.norm(chain[-1]), 1.0):
                    raise ChainConstructionError(
                        f'chain for cluster at {complex(value):.6g} breaks at length {len(chain)} '
                        f'(residual {residual:.2e})'
                    )
                chain.append(nxt)
            columns.extend(chain)
            blocks.append((complex(value), size))
        else:
            raise ChainConstructionError(
                f'cluster at {complex(value):.6g} of size {size} has {geometric} eigenvectors; '
                'mixed block structure is not resolved'
            )
    transform = np.array(columns).T
    logger.debug("Jordan blocks %s", blocks)
    return JordanDecomposition(transform=transform, blocks=blocks, tolerance_used=float(tol))


def evolve_jordan_amplitudes(blocks: Sequence[Tuple[complex, int]], c0, t: float) -> np.ndarray:
    """exp(-i J t) c0 for the Jordan form J assembled from blocks."""
    c0 = np.asarray(c0, dtype=complex)
    out = np.empty_like(c0)
    start = 0
    for value, size in blocks:
        segment = c0[start:start + size]
        phase = np.exp(-1j * value * t)
        for j in range(size):
            acc = 0j
            for m in range(size - j):
                acc += (-1j * t) ** m / math.factorial(m) * segment[j + m]
            out[start + j] = phase * acc
        start += size
    return out


def evolve_jordan(dec: JordanDecomposition, psi0, t: float) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    if t == 0:
        return psi0.copy()
    c0 = np.linalg.solve(dec.transform, psi0)
    return dec.transform @ evolve_jordan_amplitudes(dec.blocks, c0, t)


def propagator_element(J: float, F: float, t: float, n_to, n_from):
    """U_{n'n}(t) of H_xi = -i h on the infinite tilted chain (n' = n_to, sites counted from the centre).

    U_{n'n} = J_{n'-n}(4i (J/F) sin(Ft/2)) exp(i (n'-n)(pi + Ft)/2 - i n' F t). The Bessel
    argument reaches 4|J/F|; past the series range integer orders go to scipy.special.jv.
    """
    if F == 0:
        raise ValueError('propagator needs a non-zero tilt')
    n_to = np.asarray(n_to)
    order = n_to - np.asarray(n_from)
    argument = -(4j * J / F) * np.sin(-F * t / 2)
    phase = np.exp(1j * order * (np.pi + F * t) / 2 - 1j * n_to * F * t)
    if abs(argument) > MAX_ABS_ARGUMENT:
        return scipy.special.jv(order, argument) * phase
    return bessel_j_int(order, argument) * phase


def power_law_exponent(result: EvolutionResult, t_lo: float, t_hi: float, max_variation: float = 0.2) -> float:
    """Least-squares slope of log P against log t on [t_lo, t_hi]."""
    window = (result.times >= t_lo) & (result.times <= t_hi) & (result.times > 0)
    if window.sum() < 3:
        raise WindowError(f'fewer than 3 samples in [{t_lo}, {t_hi}]')
    p = result.dirac_p[window]
    if np.any(p <= 0):
        raise WindowError('Dirac probability must stay positive on the window')
    log_t = np.log(result.times[window])
    log_p = np.log(p)
    slope = np.polyfit(log_t, log_p, 1)[0]
    local = np.gradient(log_p, log_t)
    if (local.max() - local.min()) > max_variation * abs(slope):
        raise WindowError(
            f'local exponent ranges over [{local.min():.3f}, {local.max():.3f}]; '
            'window is not in a power-law regime'
        )
    return float(slope)


def spacing_analysis(values) -> Spacing:
    values = np.asarray(values, dtype=complex)
    if len(values) < 3:
        raise ValueError(f'need at least 3 levels, got {len(values)}')
    axis = "imaginary" if np.abs(values.imag).sum() > np.abs(values.real).sum() else "real"
    coordinate = np.sort(values.imag if axis == "imaginary" else values.real)
    gaps = np.diff(coordinate)
    mean_gap = gaps.mean()
    return Spacing(mean_gap=float(mean_gap), max_gap_dev=float(np.abs(gaps - mean_gap).max()), axis=axis)


def export_trajectory(result: EvolutionResult, path: str):
    n = result.states.shape[1]
    frame = pd.DataFrame({"t": result.times})
    for j in range(n):
        frame[f"re_psi_{j + 1}"] = result.states[:, j].real
    for j in range(n):
        frame[f"im_psi_{j + 1}"] = result.states[:, j].imag
    frame["P"] = result.dirac_p
    frame.to_csv(path, index=False, float_format="%.16e")
