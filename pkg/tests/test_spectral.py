import logging

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from analytic import critical_ratios
from effective import StarkLadder, build_stark_ladder, continuum_band
from fgh import FIG3_KAPPA, PRESETS
from spectral import (
    biorthonormalize,
    detect_coalescence,
    eig_general,
    export_fidelity,
    fidelity_matrix,
    is_complex_symmetric,
    low_lying,
)


def _random_matrix(n, symmetric, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return M + M.T if symmetric else M


@pytest.mark.parametrize("symmetric", [True, False])
def test_eig_general_residuals(symmetric):
    M = _random_matrix(12, symmetric)
    system = eig_general(M)
    assert system.symmetric is symmetric
    assert system.residuals.max() < 1e-12 * np.abs(M).max() * 12
    assert_allclose(np.linalg.norm(system.right, axis=0), 1.0)


@pytest.mark.parametrize("symmetric", [True, False])
def test_biorthonormal_pairs(symmetric):
    M = _random_matrix(10, symmetric, seed=3)
    system = biorthonormalize(eig_general(M))
    assert system.flags == []
    assert_allclose(system.overlap(), np.eye(10), atol=1e-9)
    left_residual = M.conj().T @ system.left - system.left * system.values.conj()
    assert np.abs(left_residual).max() < 1e-9


def test_eig_general_rejects_bad_input():
    with pytest.raises(ValueError):
        eig_general(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        eig_general(np.zeros((1001, 1001)))


def test_ladder_is_complex_symmetric():
    assert is_complex_symmetric(build_stark_ladder(StarkLadder(7, 1.0, 0.4)))
    assert not is_complex_symmetric(np.array([[0, 1], [2, 0]], dtype=complex))


def test_flags_at_first_critical_ratio():
    c1, _ = critical_ratios()
    system = biorthonormalize(eig_general(build_stark_ladder(StarkLadder(5, 1.0, c1))), ep_threshold=1e-4)
    assert len(system.flags) == 4
    flagged = np.abs(system.values[system.flags].real)
    assert_allclose(flagged, 1.246, atol=1e-3)


def test_low_lying_band_order():
    M = np.diag([5.0, 1.0 + 0.2j, 0.5, 1.0 - 0.2j, 9.0]).astype(complex)
    band = low_lying(eig_general(M), 3)
    assert band.size == 3
    assert_allclose(band.values, [1.0 - 0.2j, 0.5, 1.0 + 0.2j])
    with pytest.raises(ValueError):
        low_lying(eig_general(M), 0)


def test_fidelity_matrix_properties():
    system = biorthonormalize(eig_general(build_stark_ladder(StarkLadder(5, 1.0, 0.3))))
    band = low_lying(system, 5)
    f = fidelity_matrix(band)
    assert_allclose(np.diag(f), 1.0)
    assert_allclose(f, f.T)
    assert f.min() >= 0 and f.max() <= 1


def test_fidelity_rejects_zero_vector():
    system = eig_general(np.diag([1.0, 2.0]).astype(complex))
    band = low_lying(system, 2)
    band.vectors[:, 1] = 0
    with pytest.raises(ValueError):
        fidelity_matrix(band)


class Test_DetectCoalescence:
    f = np.array([
        [1.0, 0.995, 0.2, 0.1],
        [0.995, 1.0, 0.3, 0.1],
        [0.2, 0.3, 1.0, 0.992],
        [0.1, 0.1, 0.992, 1.0],
    ])

    def test_clusters(self):
        report = detect_coalescence(self.f, parameter_tag=0.5)
        assert report.clusters == [[0, 1], [2, 3]]
        assert report.order_estimate == 2
        assert report.max_offdiag_fidelity == pytest.approx(0.995)
        assert report.parameter_tag == 0.5

    def test_energy_gating(self):
        values = np.array([0.0, 0.001, 1.0, 5.0])
        report = detect_coalescence(self.f, values=values)
        assert report.clusters == [[0, 1]]

    def test_no_cluster(self):
        report = detect_coalescence(np.eye(3))
        assert report.clusters == []
        assert report.order_estimate is None

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            detect_coalescence(self.f, threshold=0.5)
        with pytest.raises(ValueError):
            detect_coalescence(self.f, threshold=1.0)


def test_export_fidelity(tmp_path):
    path = tmp_path / "f.csv"
    export_fidelity(Test_DetectCoalescence.f, str(path), parameter_tag=0.0252)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["parameter", "q", "q_prime", "value"]
    assert len(frame) == 16
    assert frame.value.iloc[1] == pytest.approx(0.995)


@pytest.mark.slow
def test_five_well_pairs_at_tabulated_loss():
    kappa = FIG3_KAPPA["fig1a"]
    band = continuum_band(PRESETS["fig1a"].with_kappa(kappa))
    report = detect_coalescence(fidelity_matrix(band), 0.99, parameter_tag=kappa, values=band.values)
    assert report.clusters == [[0, 1], [3, 4]]
    assert report.order_estimate == 2


@pytest.mark.slow
@pytest.mark.parametrize("name", ["fig1b", "fig1c"])
def test_continuum_coalescence(name, locate_ep):
    kappa = locate_ep(name)
    assert kappa == pytest.approx(FIG3_KAPPA[name], rel=0.2)
    band = continuum_band(PRESETS[name].with_kappa(kappa))
    report = detect_coalescence(fidelity_matrix(band), 0.99, parameter_tag=kappa, values=band.values)
    assert report.order_estimate == 3


def test_gap_warning_only_when_asked(caplog):
    M = np.diag([0.0, 1.0, 2.0, 3.0]).astype(complex)
    with caplog.at_level(logging.WARNING, logger="spectral"):
        low_lying(eig_general(M), 3, check_gap=False)
    assert caplog.records == []
    with caplog.at_level(logging.WARNING, logger="spectral"):
        low_lying(eig_general(M), 3)
    assert "not well separated" in caplog.text


@pytest.mark.slow
def test_no_gap_warning_under_loss(caplog):
    with caplog.at_level(logging.WARNING, logger="spectral"):
        continuum_band(PRESETS["fig1a"].with_kappa(0.2))
    assert "not well separated" not in caplog.text
