import logging
from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.linalg import toeplitz

logger = logging.getLogger(__name__)

# square complex ndarray; carries both the discretized H and h_eff
ComplexDenseMatrix = np.ndarray

GridSpec = namedtuple("GridSpec", ["dx", "dk", "points", "tau"])


@dataclass(frozen=True)
class ContinuousModel:
    """Lossy multi-well box: V(x) = gamma sin^2(omega pi x) + |b x|^a - i kappa x."""
    length: float
    n_grid: int
    gamma: float
    omega: int
    b: float
    a: int
    kappa: float = 0.0
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.length > 0:
            problems.append(f'length must be positive, got {self.length}')
        if int(self.n_grid) != self.n_grid or self.n_grid < 3 or self.n_grid % 2 == 0:
            problems.append(f'n_grid must be an odd integer >= 3, got {self.n_grid}')
        if self.gamma < 0:
            problems.append(f'gamma must be >= 0, got {self.gamma}')
        if int(self.omega) != self.omega or self.omega < 1:
            problems.append(f'omega must be a positive integer, got {self.omega}')
        if not 0 < self.b <= 1:
            problems.append(f'b must lie in (0, 1], got {self.b}')
        if int(self.a) != self.a or self.a < 2 or self.a % 2:
            problems.append(f'a must be an even positive integer, got {self.a}')
        if self.kappa < 0:
            problems.append(f'kappa must be >= 0, got {self.kappa}')
        if self.hbar <= 0 or self.mass <= 0:
            problems.append('hbar and mass must be positive')
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n_wells(self) -> int:
        return 2 * int(self.omega) + 1

    def with_kappa(self, kappa: float) -> "ContinuousModel":
        return replace(self, kappa=float(kappa))


PRESETS = {
    "fig1a": ContinuousModel(length=3.0, n_grid=201, gamma=800.0, omega=2, b=0.76, a=80),
    "fig1b": ContinuousModel(length=3.0, n_grid=201, gamma=1500.0, omega=3, b=0.83, a=100),
    "fig1c": ContinuousModel(length=2.3, n_grid=401, gamma=7000.0, omega=7, b=0.935, a=200),
}

# loss strengths at which the continuum band coalesces
FIG3_KAPPA = {"fig1a": 0.0062, "fig1b": 0.0252, "fig1c": 0.3440}


def make_grid(model: ContinuousModel) -> GridSpec:
    n = model.n_grid
    dx = model.length / (n - 1)
    points = -model.length / 2 + np.arange(n) * dx
    # exact mirror symmetry about the origin
    points = 0.5 * (points - points[::-1])
    return GridSpec(dx=dx, dk=2 * np.pi / model.length, points=points, tau=(n - 1) // 2)


def potential_real(model: ContinuousModel, x):
    """gamma sin^2(omega pi x) + |b x|^a, the confinement evaluated as exp(a ln|bx|)."""
    x = np.asarray(x, dtype=float)
    bx = np.abs(model.b * x)
    with np.errstate(divide="ignore", under="ignore"):
        confinement = np.where(bx > 0, np.exp(model.a * np.log(np.where(bx > 0, bx, 1.0))), 0.0)
    wells = model.gamma * np.sin(model.omega * np.pi * x) ** 2
    value = wells + confinement
    return float(value) if value.ndim == 0 else value


def potential_complex(model: ContinuousModel, x):
    x = np.asarray(x, dtype=float)
    value = potential_real(model, x) - 1j * model.kappa * x
    return complex(value) if np.ndim(value) == 0 else value


def kinetic_coefficient(model: ContinuousModel, l: int) -> float:
    """T_l = 2 (hbar pi l / ((N'-1) dx))^2 / m for 1 <= l <= tau."""
    tau = (model.n_grid - 1) // 2
    if not 1 <= l <= tau:
        raise IndexError(f'kinetic index l={l} outside [1, {tau}]')
    return 2.0 * (model.hbar * np.pi * l / model.length) ** 2 / model.mass


def kinetic_matrix(model: ContinuousModel) -> np.ndarray:
    """Real symmetric Toeplitz kinetic part of the Fourier grid Hamiltonian."""
    n = model.n_grid
    grid = make_grid(model)
    l = np.arange(1, grid.tau + 1)
    t_l = 2.0 * (model.hbar * np.pi * l / model.length) ** 2 / model.mass
    shifts = np.arange(n)
    kernel = (2.0 / (n - 1)) * np.cos(2 * np.pi * np.outer(shifts, l) / (n - 1)) @ t_l
    return toeplitz(kernel)


def build_hamiltonian_from_potential(model: ContinuousModel, potential) -> ComplexDenseMatrix:
    potential = np.asarray(potential)
    assert potential.shape == (model.n_grid,), "potential must be sampled on the model grid"
    H = kinetic_matrix(model).astype(complex)
    H[np.diag_indices_from(H)] += potential
    return H


def build_hamiltonian(model: ContinuousModel) -> ComplexDenseMatrix:
    grid = make_grid(model)
    H = build_hamiltonian_from_potential(model, potential_complex(model, grid.points))
    if not np.all(np.isfinite(H)):
        raise ValueError('Hamiltonian has non-finite entries; check b and a against the box length')
    return H


def export_matrix(H: ComplexDenseMatrix, dx: float, path: str):
    """Two-section text dump: a 'dim dx' header line, then 'n n' Re Im' rows."""
    dim = H.shape[0]
    rows, cols = np.indices(H.shape)
    body = pd.DataFrame({
        "n": rows.ravel(),
        "n_prime": cols.ravel(),
        "re": H.real.ravel(),
        "im": H.imag.ravel(),
    })
    with open(path, "w") as handle:
        handle.write(f"{dim} {dx:.16e}\n")
        body.to_csv(handle, sep=" ", header=False, index=False, float_format="%.16e")
    logger.info("wrote %dx%d matrix to %s", dim, dim, path)
