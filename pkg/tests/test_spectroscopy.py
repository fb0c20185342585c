import numpy as np
import pytest

from qdephase import (
    BoundaryCondition,
    DomainError,
    ModelMismatchError,
    TimeGrid,
    UnderdeterminedError,
    discretize_kernel,
    kernel_to_correlation,
    ornstein_uhlenbeck,
    quartic_kernel,
    white_noise,
)
from qdephase.analytic import stationary_spectrum
from qdephase.dephasing import attenuation_eigenbasis, attenuation_stationary
from qdephase.eigenmodes import decompose
from qdephase.spectroscopy import (
    MeasurementSet,
    SpectrumEstimate,
    design_filter_bank_cw,
    design_filter_bank_eigen,
    fit_local_in_time,
    reconstruct_nonparametric,
    simulate_measurements,
)


def _quench_decomposition(n_points=401, span=16.0):
    g = TimeGrid(0.0, span, n_points)
    corr = kernel_to_correlation(
        discretize_kernel(ornstein_uhlenbeck(), g), BoundaryCondition.DIRICHLET_AT_QUENCH
    )
    return decompose(corr)


def _forward_chis(bank, dec):
    return [attenuation_eigenbasis(dec, p).chi for p in bank.probes]


class TestFilterBanks:
    def test_eigen_probes_unit_norm(self):
        dec = _quench_decomposition()
        bank = design_filter_bank_eigen(dec, range(6))
        assert len(bank) == 6
        for p in bank.probes:
            assert p.weighted_norm == pytest.approx(1.0, abs=1e-9)

    def test_bad_index(self):
        dec = _quench_decomposition(n_points=151, span=8.0)
        with pytest.raises(DomainError):
            design_filter_bank_eigen(dec, [10_000])

    def test_cw_probes(self):
        g = TimeGrid(0.0, 20.0, 801)
        bank = design_filter_bank_cw(g, [0.0, 1.0, 2.0], t0=0.0, duration=20.0)
        assert bank.labels == (0.0, 1.0, 2.0)
        for p in bank.probes:
            assert p.weighted_norm == pytest.approx(1.0, abs=1e-9)


class TestMeasurements:
    def test_probe_reads_eigenvalue(self):
        # mode-matched probe: -2 log(coherence) equals the eigenvalue exactly
        dec = _quench_decomposition()
        bank = design_filter_bank_eigen(dec, range(4))
        meas = simulate_measurements(bank, _forward_chis(bank, dec))
        extracted = -2.0 * np.log(np.asarray(meas.coherences))
        assert np.allclose(extracted, dec.eigenvalues[:4], rtol=1e-10)

    def test_orthogonal_probe_full_coherence(self):
        dec = _quench_decomposition()
        # a probe orthogonal to every retained mode: impossible to build exactly,
        # but the zero-attenuation limit is the coherence-1 contract
        meas = simulate_measurements(
            design_filter_bank_eigen(dec, [0]), [0.0]
        )
        assert meas.coherences[0] == 1.0

    def test_noise_and_clipping(self):
        dec = _quench_decomposition(n_points=151, span=8.0)
        bank = design_filter_bank_eigen(dec, [0])
        meas = simulate_measurements(bank, [50.0], sigma_meas=0.01, repetitions=3, seed=1)
        assert 0.0 < meas.coherences[0] <= 1.0

    def test_json_round_trip(self):
        m = MeasurementSet(labels=(0, 1), coherences=(0.9, 0.8), repetitions=5, sigma_meas=0.01)
        again = MeasurementSet.from_json(m.to_json())
        assert again == m


class TestNonparametric:
    def test_noiseless_exact_recovery(self):
        dec = _quench_decomposition()
        idx = list(range(8))
        bank = design_filter_bank_eigen(dec, idx)
        meas = simulate_measurements(bank, _forward_chis(bank, dec))
        est = reconstruct_nonparametric(bank, meas, dec)
        got = dict(zip(est.labels, est.values))
        for j in idx:
            assert got[j] == pytest.approx(dec.eigenvalues[j], rel=1e-6)

    def test_noisy_recovery_within_ten_percent(self):
        dec = _quench_decomposition()
        smax = dec.eigenvalues[0]
        idx = [j for j in range(dec.n_modes) if dec.eigenvalues[j] >= 0.05 * smax]
        bank = design_filter_bank_eigen(dec, idx)
        meas = simulate_measurements(
            bank, _forward_chis(bank, dec), sigma_meas=0.01, repetitions=50, seed=7
        )
        est = reconstruct_nonparametric(bank, meas, dec)
        got = dict(zip(est.labels, est.values))
        for j in idx:
            assert got[j] == pytest.approx(dec.eigenvalues[j], rel=0.10)

    def test_estimator_consistency(self):
        # reconstruction error shrinks as repetitions grow
        dec = _quench_decomposition()
        idx = list(range(10))
        bank = design_filter_bank_eigen(dec, idx)
        chis = _forward_chis(bank, dec)
        truth = dec.eigenvalues[idx]

        def err(reps, seed):
            meas = simulate_measurements(bank, chis, sigma_meas=0.02, repetitions=reps, seed=seed)
            est = reconstruct_nonparametric(bank, meas, dec)
            return np.linalg.norm(np.asarray(est.values) - truth)

        coarse = np.mean([err(4, s) for s in range(5)])
        fine = np.mean([err(64, s) for s in range(5)])
        assert fine < coarse / 2.0

    def test_underdetermined_listed(self):
        dec = _quench_decomposition(n_points=201, span=8.0)
        # one probe illuminating two modes cannot resolve them
        from qdephase.core import control_custom
        from qdephase.spectroscopy import FilterBank

        mixed = control_custom(
            dec.grid, (dec.mode_function(0) + dec.mode_function(1)) / np.sqrt(2.0)
        )
        bank = FilterBank(probes=(mixed,), labels=("mixed",))
        chi = 0.25 * (dec.eigenvalues[0] + dec.eigenvalues[1])
        meas = simulate_measurements(bank, [chi])
        with pytest.raises(UnderdeterminedError) as err:
            reconstruct_nonparametric(bank, meas, dec)
        assert set(err.value.unconstrained) == {0, 1}

    def test_harmonic_probes_recover_discrete_spectrum(self):
        from qdephase import harmonic_well
        from qdephase.analytic import HarmonicNoiseParams, harmonic_spectrum

        g = TimeGrid(-8.0, 8.0, 801)
        corr = kernel_to_correlation(discretize_kernel(harmonic_well(0.5, 1.0, 1.0), g))
        dec = decompose(corr)
        bank = design_filter_bank_eigen(dec, range(5))
        meas = simulate_measurements(bank, _forward_chis(bank, dec))
        est = reconstruct_nonparametric(bank, meas, dec)
        p = HarmonicNoiseParams(0.5, 1.0, 1.0)
        got = dict(zip(est.labels, est.values))
        for n in range(5):
            assert got[n] == pytest.approx(harmonic_spectrum(p, n), rel=0.01)

    def test_probe_outside_retained_spectrum_keeps_coherence(self):
        # heavily truncated decomposition: a control living in the dropped
        # subspace produces no overlap, hence unit coherence
        g = TimeGrid(0.0, 12.0, 301)
        corr = kernel_to_correlation(
            discretize_kernel(ornstein_uhlenbeck(), g), BoundaryCondition.DIRICHLET_AT_QUENCH
        )
        full = decompose(corr)
        trunc = decompose(corr, truncation=0.5)  # keep only the top modes
        dropped = full.mode_control(full.n_modes - 5)
        chi = attenuation_eigenbasis(trunc, dropped).chi
        assert np.exp(-chi) == pytest.approx(1.0, abs=1e-8)

    def test_cw_probes_recover_lorentzian(self):
        g = TimeGrid(0.0, 40.0, 1601)
        corr = kernel_to_correlation(discretize_kernel(ornstein_uhlenbeck(), g))
        dec = decompose(corr)
        omegas = np.linspace(0.0, 2.5, 11)
        bank = design_filter_bank_cw(g, omegas, t0=0.0, duration=40.0)
        chis = [attenuation_eigenbasis(dec, p).chi for p in bank.probes]
        s_hat = 2.0 * np.asarray(chis)
        target = 1.0 / (1.0 + omegas**2)
        assert np.abs(s_hat / target - 1.0).max() < 0.10


def _ideal_frequency_measurements(spec, omegas, sigma=0.0, reps=1, seed=0):
    """Narrowband-limit forward model: coherence exp(-S(w)/2) per probe."""
    svals = np.atleast_1d(stationary_spectrum(spec, omegas))
    rng = np.random.default_rng(seed)
    coherences = []
    for s in svals:
        clean = np.exp(-s / 2.0)
        if sigma > 0.0:
            shots = np.clip(clean + sigma * rng.standard_normal(reps), 1e-6, 1.0)
            coherences.append(float(shots.mean()))
        else:
            coherences.append(float(clean))
    return MeasurementSet(
        labels=tuple(float(om) for om in omegas),
        coherences=tuple(coherences),
        repetitions=reps,
        sigma_meas=sigma,
    )


class TestParametricFit:
    def test_lorentzian_recovered(self):
        omegas = np.linspace(0.0, 3.0, 13)
        meas = _ideal_frequency_measurements(ornstein_uhlenbeck(1.0, 1.0), omegas)
        est = fit_local_in_time(meas, max_order=3)
        assert est.order == 1
        assert est.markovian.markovian
        assert est.coefficients[0] == pytest.approx(1.0, rel=0.05)
        assert est.coefficients[1] == pytest.approx(1.0, rel=0.05)

    def test_lorentzian_from_cw_probes(self):
        # end-to-end through finite-duration probes: leakage stays within the
        # 5% coefficient tolerance
        omegas = np.linspace(0.0, 3.0, 13)
        duration = 60.0
        g = TimeGrid(0.0, duration, int(20 * duration) + 1)
        bank = design_filter_bank_cw(g, omegas, t0=0.0, duration=duration)
        chis = [attenuation_stationary(ornstein_uhlenbeck(), p).chi for p in bank.probes]
        meas = simulate_measurements(bank, chis)
        est = fit_local_in_time(meas, max_order=2)
        assert est.order == 1
        assert est.coefficients[0] == pytest.approx(1.0, rel=0.05)
        assert est.coefficients[1] == pytest.approx(1.0, rel=0.05)

    def test_quartic_recovered(self):
        omegas = np.linspace(0.0, 2.5, 13)
        meas = _ideal_frequency_measurements(quartic_kernel(1.0, 1.0), omegas)
        est = fit_local_in_time(meas, max_order=3)
        assert est.order == 2
        assert not est.markovian.markovian
        assert est.coefficients[2] == pytest.approx(1.0, rel=0.05)

    def test_white_noise_order_zero(self):
        omegas = np.linspace(0.0, 3.0, 9)
        meas = _ideal_frequency_measurements(white_noise(2.0), omegas)
        est = fit_local_in_time(meas, max_order=3)
        assert est.order == 0
        assert est.coefficients[0] == pytest.approx(2.0, rel=0.05)

    def test_noisy_classification(self):
        omegas = np.linspace(0.0, 3.0, 13)
        meas = _ideal_frequency_measurements(
            ornstein_uhlenbeck(1.0, 1.0), omegas, sigma=0.01, reps=50, seed=3
        )
        est = fit_local_in_time(meas, max_order=3)
        assert est.order == 1 and est.markovian.markovian

    def test_unusable_data_raises(self):
        meas = MeasurementSet(labels=(0.0, 1.0, 2.0, 3.0), coherences=(1.0,) * 4, repetitions=1, sigma_meas=0.0)
        with pytest.raises(ModelMismatchError):
            fit_local_in_time(meas)

    def test_estimate_json_round_trip(self):
        omegas = np.linspace(0.0, 3.0, 9)
        meas = _ideal_frequency_measurements(ornstein_uhlenbeck(), omegas)
        est = fit_local_in_time(meas)
        again = SpectrumEstimate.from_json(est.to_json())
        assert again.order == est.order
        assert again.values == est.values
        assert again.markovian == est.markovian
