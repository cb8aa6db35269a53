import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from analytic import central_ep_ratio, critical_ratios
from dynamics import (
    EvolutionResult,
    dirac_probability,
    evolve_jordan,
    evolve_jordan_amplitudes,
    evolve_ode,
    export_trajectory,
    jordan_decompose,
    jordan_form_matrix,
    power_law_exponent,
    propagator_element,
    spacing_analysis,
    xi_frame,
)
from effective import StarkLadder, build_stark_ladder
from errors import ChainConstructionError, StepUnderflowError, WindowError


def _ladder(N, J, F):
    return build_stark_ladder(StarkLadder(N, J, F))


def _amplitude_result(blocks, c0, times):
    states = np.array([evolve_jordan_amplitudes(blocks, c0, t) for t in times])
    return EvolutionResult(times, states, np.sum(np.abs(states) ** 2, axis=1))


class Test_Integrator:
    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(1)
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        psi0 = rng.normal(size=4) + 0j
        times = np.linspace(0, 1.5, 7)
        result = evolve_ode(h, psi0, times)
        assert np.array_equal(result.states[0], psi0)
        for t, state in zip(times, result.states):
            assert_allclose(state, expm(-1j * h * t) @ psi0, rtol=1e-8, atol=1e-10)
        assert_allclose(result.dirac_p, [dirac_probability(s) for s in result.states])

    def test_rejects_bad_grids(self):
        h = np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            evolve_ode(h, np.ones(2), [0.5, 1.0])
        with pytest.raises(ValueError):
            evolve_ode(h, np.ones(2), [0.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            evolve_ode(h, np.ones(3), [0.0, 1.0])

    def test_step_budget(self):
        with pytest.raises(StepUnderflowError):
            evolve_ode(1e7 * np.eye(2, dtype=complex), np.ones(2), [0.0, 1e3])
        with pytest.raises(StepUnderflowError):
            evolve_ode(np.array([[np.inf, 0], [0, 1]]), np.ones(2), [0.0, 1.0])

    def test_hermitian_evolution_keeps_norm(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        psi0 = rng.normal(size=6) + 0j
        psi0 /= np.linalg.norm(psi0)
        result = evolve_ode(a + a.conj().T, psi0, np.linspace(0.0, 5.0, 11))
        assert_allclose(result.dirac_p, 1.0, atol=1e-8)

    def test_partial_probability(self):
        result = evolve_ode(np.diag([1.0, -2.0j]), np.array([1.0, 1.0]), [0.0, 0.5])
        assert_allclose(result.partial_probability([1]), [1.0, np.exp(-2.0)], rtol=1e-10)
        assert_allclose(result.restrict([0]).dirac_p, [1.0, 1.0], rtol=1e-10)


class Test_Jordan:
    def test_first_critical_ratio_blocks(self):
        c1, _ = critical_ratios()
        h = _ladder(5, 1.0, c1)
        dec = jordan_decompose(h)
        assert [size for _, size in dec.blocks] == [2, 1, 2]
        assert_allclose([value.real for value, _ in dec.blocks], [-1.246, 0.0, 1.246], atol=1e-3)
        assert_allclose(dec.transform @ dec.jordan_form() @ np.linalg.inv(dec.transform), h, atol=1e-6)

    def test_threefold_zero_block(self):
        h = _ladder(7, 1.0, central_ep_ratio(7))
        dec = jordan_decompose(h, degeneracy_tol=1e-4)
        sizes = sorted(size for _, size in dec.blocks)
        assert sizes == [1, 1, 1, 1, 3]
        value = next(v for v, size in dec.blocks if size == 3)
        assert abs(value) < 1e-4
        assert_allclose(dec.transform @ dec.jordan_form() @ np.linalg.inv(dec.transform), h, atol=1e-5)

    def test_mixed_blocks_rejected(self):
        h = np.zeros((3, 3), dtype=complex)
        h[0, 1] = 1.0
        with pytest.raises(ChainConstructionError):
            jordan_decompose(h)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            jordan_decompose(np.eye(21))

    def test_form_matrix(self):
        form = jordan_form_matrix([(2.0, 2), (0.5j, 1)])
        assert_allclose(form, [[2, 1, 0], [0, 2, 0], [0, 0, 0.5j]])

    def test_evolution_matches_exponential(self):
        rng = np.random.default_rng(4)
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        psi0 = rng.normal(size=4) + 0j
        dec = jordan_decompose(h)
        assert_allclose(evolve_jordan(dec, psi0, 0.7), expm(-0.7j * h) @ psi0, rtol=1e-9)
        assert np.array_equal(evolve_jordan(dec, psi0, 0.0), psi0)

    def test_evolution_at_defective_point(self):
        c1, _ = critical_ratios()
        h = _ladder(5, 1.0, c1)
        psi0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0], dtype=complex)
        dec = jordan_decompose(h)
        assert_allclose(evolve_jordan(dec, psi0, 1.3), expm(-1.3j * h) @ psi0, rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("N, which, tol, rtol", [(5, 0, None, 1e-6), (5, 1, None, 1e-6), (7, None, 1e-4, 1e-5)])
    def test_evolution_follows_integrator(self, N, which, tol, rtol):
        ratio = central_ep_ratio(N) if which is None else critical_ratios()[which]
        h = _ladder(N, 1.0, ratio)
        psi0 = np.zeros(N, dtype=complex)
        psi0[1] = 1.0
        dec = jordan_decompose(h, degeneracy_tol=tol)
        times = np.linspace(0.0, 5.0, 11)
        result = evolve_ode(h, psi0, times)
        for t, state in zip(times, result.states):
            scale = np.abs(state).max()
            assert_allclose(evolve_jordan(dec, psi0, t), state, rtol=rtol, atol=rtol * scale)


class Test_ClosedForms:
    def test_first_critical_ratio(self, c0_ep1, ep1_blocks):
        assert dirac_probability(c0_ep1) == pytest.approx(3.175, abs=1e-3)
        times = np.linspace(0.0, 50.0, 501)
        result = evolve_ode(jordan_form_matrix(ep1_blocks), c0_ep1, times)
        early = times <= 10
        expected = 3.175 + 0.769 * times ** 2
        assert_allclose(result.dirac_p[early], expected[early], rtol=1e-2)
        assert power_law_exponent(result, 10.0, 50.0) == pytest.approx(2.0, abs=0.05)

    def test_second_critical_ratio(self, s_c2, c2_blocks):
        c0 = np.linalg.inv(s_c2)[:, 2]
        times = np.linspace(0.0, 3.0, 61)
        result = _amplitude_result(c2_blocks, c0, times)
        r = 4.109 * times
        expected = 1.612 * np.cosh(r) * times ** 2 - 1.128 * np.sinh(r) * times + 1.810 * np.cosh(r) + 6.497
        assert_allclose(result.dirac_p, expected, rtol=2e-2)

    def test_threefold_point(self, s_ep3):
        values = np.linalg.eigvals(_ladder(7, 1.0, central_ep_ratio(7)))
        outer = values[np.abs(values) > 0.5]
        A = np.abs(outer.real).mean()
        B = np.abs(outer.imag).mean()
        assert A == pytest.approx(1.019, abs=2e-3)
        assert B == pytest.approx(1.337, abs=2e-3)
        blocks = [(-A - 1j * B, 1), (A - 1j * B, 1), (A + 1j * B, 1), (0.0, 3), (-A + 1j * B, 1)]
        c0 = np.linalg.inv(s_ep3)[:, 3]

        times = np.linspace(0.0, 3.0, 61)
        result = _amplitude_result(blocks, c0, times)
        expected = 8.162 * times ** 4 + 29.627 * times ** 2 + 1.940 * np.cosh(2.674 * times) + 32.916
        assert_allclose(result.dirac_p, expected, rtol=2e-2)

        late = _amplitude_result(blocks, c0, np.linspace(10.0, 40.0, 121))
        assert power_law_exponent(late.restrict([3, 4, 5]), 10.0, 40.0) == pytest.approx(4.0, abs=0.1)

    def test_synthetic_quartic(self):
        times = np.linspace(0.0, 5.0, 51)
        states = np.sqrt(2.0) * times[:, None] ** 2 + 0j
        result = EvolutionResult(times, states, np.sum(np.abs(states) ** 2, axis=1))
        assert power_law_exponent(result, 1.0, 5.0) == pytest.approx(4.0, abs=0.01)

    def test_exponential_decay_is_not_a_power_law(self):
        times = np.linspace(0.0, 10.0, 101)
        result = evolve_ode(np.array([[-1j]]), np.array([1.0]), times)
        with pytest.raises(WindowError):
            power_law_exponent(result, 1.0, 10.0)
        with pytest.raises(WindowError):
            power_law_exponent(result, 20.0, 30.0)


class Test_StarkFrame:
    def test_revival(self):
        period = 2 * np.pi / 4.3
        h = xi_frame(_ladder(5, 1.0, 4.3))
        psi0 = np.zeros(5, dtype=complex)
        psi0[2] = 1.0
        result = evolve_ode(h, psi0, np.linspace(0.0, period, 201))
        assert abs(result.dirac_p[-1] - result.dirac_p[0]) / result.dirac_p[0] <= 0.05

    def test_frame_is_real_stark_potential(self):
        h = xi_frame(_ladder(5, 1.0, 0.7))
        assert_allclose(np.diag(h), 0.7 * np.array([-2, -1, 0, 1, 2]))
        assert_allclose(np.diag(h, 1), -1j)

    def test_spacing(self):
        strong = spacing_analysis(np.linalg.eigvals(xi_frame(_ladder(5, 1.0, 4.3))))
        weak = spacing_analysis(np.linalg.eigvals(xi_frame(_ladder(5, 1.0, 0.2))))
        assert strong.axis == "real"
        assert strong.max_gap_dev / strong.mean_gap < 0.05
        assert weak.max_gap_dev / abs(weak.mean_gap) > 0.05
        with pytest.raises(ValueError):
            spacing_analysis([0.0, 1.0])

    def test_propagator_against_exponential(self):
        J, F, N = 1.0, 0.5, 201
        h = xi_frame(_ladder(N, J, F))
        sites = np.arange(-50, 51)
        for t in (0.7, 2.3):
            U = expm(-1j * h * t)
            exact = U[sites + N // 2, N // 2]
            assert_allclose(propagator_element(J, F, t, sites, 0), exact, rtol=1e-6, atol=1e-6)

    def test_propagator_from_shifted_source(self):
        J, F, N = 1.0, 4.3, 41
        U = expm(-0.3j * xi_frame(_ladder(N, J, F)))
        sites = np.arange(-8, 9)
        exact = U[sites + N // 2, 3 + N // 2]
        assert_allclose(propagator_element(J, F, 0.3, sites, 3), exact, rtol=1e-9, atol=1e-12)

    def test_propagator_beyond_series_range(self):
        J, F, N, t = 1.0, 0.1, 201, 20.0
        assert abs(4 * J / F * np.sin(F * t / 2)) > 30
        U = expm(-1j * t * xi_frame(_ladder(N, J, F)))
        sites = np.arange(-30, 31)
        exact = U[sites + N // 2, N // 2]
        value = propagator_element(J, F, t, sites, 0)
        assert np.all(np.isfinite(value))
        assert_allclose(value, exact, rtol=1e-6, atol=1e-9 * np.abs(exact).max())

    def test_propagator_needs_tilt(self):
        with pytest.raises(ValueError):
            propagator_element(1.0, 0.0, 1.0, 0, 0)


def test_export_trajectory(tmp_path):
    result = evolve_ode(np.diag([1.0, 2.0]).astype(complex), np.array([1.0, 0.0]), [0.0, 0.1, 0.2])
    path = tmp_path / "trajectory.csv"
    export_trajectory(result, str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "re_psi_1", "re_psi_2", "im_psi_1", "im_psi_2", "P"]
    assert frame.P.to_numpy() == pytest.approx(result.dirac_p, rel=1e-14)
