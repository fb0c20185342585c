import numpy as np
import pytest

from qdephase import (
    BoundaryCondition,
    TimeGrid,
    control_custom,
    control_cw,
    control_free,
    control_pulse_train,
    discretize_kernel,
    harmonic_well,
    kernel_to_correlation,
    ornstein_uhlenbeck,
    white_noise,
)
from qdephase.analytic import HarmonicNoiseParams, harmonic_mode, harmonic_spectrum
from qdephase.dephasing import (
    attenuation_eigenbasis,
    attenuation_stationary,
    attenuation_time_basis,
    coherence_curve,
)
from qdephase.eigenmodes import decompose

from oracles import chi_free_ou, chi_hahn_ou, chi_quadrature, ou_correlation

# Frozen oracle values (closed forms evaluated in oracles.py).
CHI_OU_FREE_T5 = 2.0033689734995427  # chi_free_ou(5.0)
CHI_OU_HAHN_T1 = 0.029121598839545634  # chi_hahn_ou(1.0)


def test_frozen_values_match_oracles():
    assert chi_free_ou(5.0) == pytest.approx(CHI_OU_FREE_T5, abs=1e-14)
    assert chi_hahn_ou(1.0) == pytest.approx(CHI_OU_HAHN_T1, abs=1e-14)
    # the closed forms themselves against brute-force quadrature
    brute_free = chi_quadrature(
        lambda t: np.where((t >= 0) & (t <= 5.0), 1.0, 0.0), ou_correlation, 0.0, 5.0
    )
    assert brute_free == pytest.approx(CHI_OU_FREE_T5, rel=1e-5)
    brute_hahn = chi_quadrature(
        lambda t: np.where((t >= 0) & (t <= 1.0), np.where(t < 0.5, 1.0, -1.0), 0.0),
        ou_correlation,
        0.0,
        1.0,
        n=8001,
    )
    assert brute_hahn == pytest.approx(CHI_OU_HAHN_T1, rel=1e-3)


class TestTimeBasis:
    def test_zero_control(self):
        g = TimeGrid(0.0, 5.0, 201)
        corr = kernel_to_correlation(discretize_kernel(white_noise(), g))
        res = attenuation_time_basis(corr, control_custom(g, np.zeros(201)))
        assert res.chi == 0.0
        assert res.coherence == 1.0

    def test_white_noise_free_evolution(self):
        d0, gamp, T = 2.0, 1.5, 5.0
        g = TimeGrid(0.0, T, 1001)
        corr = kernel_to_correlation(discretize_kernel(white_noise(d0), g))
        res = attenuation_time_basis(corr, control_free(g, gamp, 0.0, T))
        assert res.chi == pytest.approx(gamp**2 * T / (2 * d0), rel=1e-3)

    def test_ou_free_evolution_frozen_value(self):
        g = TimeGrid(0.0, 5.0, 1001)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        res = attenuation_time_basis(corr, control_free(g, 1.0, 0.0, 5.0))
        assert res.chi == pytest.approx(CHI_OU_FREE_T5, rel=1e-3)

    def test_hahn_echo_frozen_value(self):
        g = TimeGrid(0.0, 1.0, 1001)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        f = control_pulse_train(g, 1.0, 0.0, 1.0, [0.5])
        res = attenuation_time_basis(corr, f)
        assert res.chi == pytest.approx(CHI_OU_HAHN_T1, rel=2e-3)

    def test_scaling_quadratic(self):
        g = TimeGrid(0.0, 5.0, 201)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        f = control_free(g, 1.0, 0.0, 5.0)
        chi1 = attenuation_time_basis(corr, f).chi
        chi3 = attenuation_time_basis(corr, f.scaled(3.0)).chi
        assert chi3 == pytest.approx(9.0 * chi1, rel=1e-12)

    def test_quench_reduces_dephasing(self):
        g = TimeGrid(0.0, 6.0, 301)
        km = discretize_kernel(ornstein_uhlenbeck(), g)
        gq = kernel_to_correlation(km, BoundaryCondition.DIRICHLET_AT_QUENCH)
        gs = kernel_to_correlation(km)
        for f in (
            control_free(g, 1.0, 0.5, 5.0),
            control_cw(g, 1.0, 2.0, 1.0, 4.0),
            control_pulse_train(g, 1.0, 0.5, 5.0, [2.0, 4.0]),
        ):
            assert attenuation_time_basis(gq, f).chi <= attenuation_time_basis(gs, f).chi + 1e-12


class TestEigenbasis:
    def test_single_mode_gives_half_eigenvalue(self):
        g = TimeGrid(0.0, 6.0, 201)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        dec = decompose(corr)
        res = attenuation_eigenbasis(dec, dec.mode_control(2))
        assert res.chi == pytest.approx(dec.eigenvalues[2] / 2.0, rel=1e-10)

    def test_harmonic_ground_mode(self):
        g = TimeGrid(-8.0, 8.0, 801)
        corr = kernel_to_correlation(discretize_kernel(harmonic_well(0.5, 1.0, 1.0), g))
        dec = decompose(corr)
        p = HarmonicNoiseParams(0.5, 1.0, 1.0)
        f = control_custom(g, harmonic_mode(p, 0, g.times))
        res = attenuation_eigenbasis(dec, f)
        assert res.chi == pytest.approx(0.5 * (1.0 / 1.5), rel=1e-3)

    def test_matches_time_basis(self):
        g = TimeGrid(0.0, 6.0, 201)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        dec = decompose(corr)
        for f in (
            control_free(g, 1.0, 0.0, 6.0),
            control_cw(g, 0.7, 3.0, 1.0, 4.0),
            control_pulse_train(g, 1.0, 0.0, 6.0, [1.0, 3.0, 5.0]),
        ):
            ct = attenuation_time_basis(corr, f).chi
            ce = attenuation_eigenbasis(dec, f).chi
            assert ce == pytest.approx(ct, rel=1e-8)


class TestStationaryFrequencyBasis:
    def test_white_noise_parseval(self):
        d0, gamp, T = 1.0, 1.0, 5.0
        g = TimeGrid(0.0, T, 2001)
        res = attenuation_stationary(white_noise(d0), control_free(g, gamp, 0.0, T))
        assert res.chi == pytest.approx(gamp**2 * T / (2 * d0), rel=5e-4)

    def test_band_limited_matches_time_basis(self):
        g = TimeGrid(0.0, 16.0, 1601)
        env = np.exp(-((g.times - 8.0) ** 2) / (2 * 1.5**2))
        f = control_custom(g, np.cos(1.3 * (g.times - 8.0)) * env)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        ct = attenuation_time_basis(corr, f).chi
        cf = attenuation_stationary(ornstein_uhlenbeck(), f).chi
        assert cf == pytest.approx(ct, rel=1e-4)

    def test_cw_growth_rate_tracks_spectrum(self):
        # long-window CW dephasing grows linearly at rate g^2 S(omega)/4
        d0, d1, om, gamp = 1.0, 1.0, 2.0, 1.0
        spec = ornstein_uhlenbeck(d0, d1)
        s_om = 1.0 / (d0 + d1 * om**2)
        chis = []
        for T in (30.0, 60.0):
            g = TimeGrid(0.0, T, int(40 * T) + 1)
            chis.append(attenuation_stationary(spec, control_cw(g, gamp, om, 0.0, T)).chi)
        rate = (chis[1] - chis[0]) / 30.0
        assert rate == pytest.approx(gamp**2 * s_om / 4.0, rel=0.02)

    def test_coarse_grid_warns(self):
        g = TimeGrid(0.0, 8.0, 401)
        f = control_pulse_train(g, 1.0, 0.0, 8.0, [4.0])
        omegas = np.linspace(-1.0, 1.0, 41)  # far below the control bandwidth
        res = attenuation_stationary(ornstein_uhlenbeck(), f, omegas=omegas)
        assert res.warnings

    def test_hahn_echo_beats_free_at_short_window(self):
        for T in (0.3, 0.7, 1.0):
            echo, free = chi_hahn_ou(T), chi_free_ou(T)
            assert echo < free


class TestCoherenceCurve:
    def test_zero_duration(self):
        g = TimeGrid(0.0, 5.0, 201)
        corr = kernel_to_correlation(discretize_kernel(white_noise(), g))
        pts = coherence_curve(corr, lambda T: control_free(g, 1.0, 0.0, T), [0.0, 1.0, 2.0])
        assert pts[0].coherence == 1.0

    def test_white_noise_log_linear(self):
        d0, gamp = 1.0, 1.0
        g = TimeGrid(0.0, 8.0, 801)
        corr = kernel_to_correlation(discretize_kernel(white_noise(d0), g))
        Ts = [2.0, 4.0, 6.0]
        pts = coherence_curve(corr, lambda T: control_free(g, gamp, 0.0, T), Ts)
        logs = -np.log([p.coherence for p in pts])
        slope = np.polyfit(Ts, logs, 1)[0]
        assert slope == pytest.approx(gamp**2 / (2 * d0), rel=1e-2)

    def test_monotone_for_nested_windows(self):
        g = TimeGrid(0.0, 8.0, 401)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        pts = coherence_curve(
            corr, lambda T: control_free(g, 1.0, 0.0, T), [1.0, 2.0, 4.0, 8.0]
        )
        cohs = [p.coherence for p in pts]
        assert all(b <= a + 1e-12 for a, b in zip(cohs, cohs[1:]))

    def test_harmonic_mode_saturates(self):
        # scaled mode control: the plateau reads off exp(-S_n) directly
        p = HarmonicNoiseParams(0.5, 1.0, 1.0)
        g = TimeGrid(-8.0, 8.0, 1201)
        corr = kernel_to_correlation(discretize_kernel(harmonic_well(0.5, 1.0, 1.0), g))

        def family(T):
            vals = np.where(np.abs(g.times) <= T / 2, harmonic_mode(p, 1, g.times), 0.0)
            return control_custom(g, np.sqrt(2.0) * vals)

        pts = coherence_curve(corr, family, [4.0, 8.0, 12.0, 16.0])
        plateau = np.exp(-harmonic_spectrum(p, 1))
        assert pts[-1].coherence == pytest.approx(plateau, rel=1e-3)
        assert abs(pts[-2].coherence - pts[-1].coherence) < 1e-6
