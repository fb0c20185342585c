import numpy as np
import pytest

from qdephase import (
    DenseKernel,
    DomainError,
    InvalidModelError,
    LocalInTimeKernel,
    StationaryPolynomialKernel,
    TimeGrid,
    control_custom,
    control_cw,
    control_pulse_train,
    ornstein_uhlenbeck,
    quartic_kernel,
    validate_kernel_spec,
    white_noise,
)


class TestTimeGrid:
    def test_spacing_and_weights(self):
        g = TimeGrid(0.0, 1.0, 11)
        assert g.dt == pytest.approx(0.1)
        assert np.all(np.diff(g.times) > 0)
        w = g.weights
        assert np.allclose(w[1:-1], g.dt)
        assert w[0] == w[-1] == pytest.approx(g.dt / 2)
        assert w.sum() == pytest.approx(g.span)

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            TimeGrid(0.0, 1.0, 3)

    def test_reversed_window(self):
        with pytest.raises(DomainError):
            TimeGrid(1.0, 0.0, 10)

    def test_index_of(self):
        g = TimeGrid(0.0, 2.0, 21)
        assert g.index_of(1.0) == 10
        with pytest.raises(DomainError):
            g.index_of(2.5)


class TestControlCW:
    def test_zero_frequency_is_constant(self):
        g = TimeGrid(0.0, 5.0, 101)
        f = control_cw(g, g=1.0, omega=0.0, t0=0.0, duration=5.0)
        assert np.allclose(f.values, 1.0)

    def test_half_period_values(self):
        T = 4.0
        g = TimeGrid(0.0, T, 401)
        f = control_cw(g, g=1.0, omega=np.pi / T, t0=0.0, duration=T)
        assert f.values[g.index_of(T)] == pytest.approx(-1.0)
        assert f.values[g.index_of(T / 2)] == pytest.approx(0.0, abs=1e-12)

    def test_windowed_cosine(self):
        g = TimeGrid(0.0, 4.0, 1601)
        f = control_cw(g, g=2.0, omega=1.0, t0=1.0, duration=2.0)
        assert f.values[g.index_of(1.0)] == pytest.approx(2.0)
        assert f.values[g.index_of(1.0 + np.pi / 2)] == pytest.approx(0.0, abs=2e-3)
        assert f.values[g.index_of(0.5)] == 0.0

    def test_window_outside_grid(self):
        g = TimeGrid(0.0, 1.0, 11)
        with pytest.raises(DomainError):
            control_cw(g, g=1.0, omega=0.0, t0=0.5, duration=1.0)

    def test_edge_averaging(self):
        g = TimeGrid(0.0, 4.0, 41)
        f = control_cw(g, g=1.0, omega=0.0, t0=1.0, duration=2.0)
        i0 = g.index_of(1.0)
        assert f.values[i0] == pytest.approx(1.0)
        assert f.average_values[i0] == pytest.approx(0.5)


class TestPulseTrain:
    def test_no_pulses_is_free_evolution(self):
        g = TimeGrid(0.0, 2.0, 201)
        f = control_pulse_train(g, g=1.5, t0=0.2, duration=1.4, pulse_times=())
        inside = (g.times > 0.2 + 1e-9) & (g.times < 1.6 - 1e-9)
        assert np.allclose(f.values[inside], 1.5)
        assert np.all(f.values[~inside & (np.abs(g.times - 0.2) > 1e-9) & (np.abs(g.times - 1.6) > 1e-9)] == 0)
        assert f.kind == "free"

    def test_single_echo_integrates_to_zero(self):
        g = TimeGrid(0.0, 2.0, 201)
        f = control_pulse_train(g, g=1.0, t0=0.0, duration=2.0, pulse_times=[1.0])
        assert f.integral() == pytest.approx(0.0, abs=1e-14)

    def test_two_pulse_signs(self):
        T = 4.0
        g = TimeGrid(0.0, T, 401)
        f = control_pulse_train(g, g=1.0, t0=0.0, duration=T, pulse_times=[T / 4, 3 * T / 4])
        assert f.integral() == pytest.approx(0.0, abs=1e-14)
        assert f.values[g.index_of(0.0)] == pytest.approx(1.0)
        assert f.values[g.index_of(T / 2)] == pytest.approx(-1.0)

    def test_unsorted_pulses_rejected(self):
        g = TimeGrid(0.0, 1.0, 101)
        with pytest.raises(DomainError):
            control_pulse_train(g, 1.0, 0.0, 1.0, [0.7, 0.3])

    def test_out_of_window_pulse_rejected(self):
        g = TimeGrid(0.0, 2.0, 101)
        with pytest.raises(DomainError):
            control_pulse_train(g, 1.0, 0.5, 1.0, [1.8])

    def test_balanced_train_integral_vanishes(self):
        # even sign symmetry: equispaced switching integrates to zero exactly
        g = TimeGrid(0.0, 8.0, 801)
        pulses = [1.0, 3.0, 5.0, 7.0]
        f = control_pulse_train(g, g=2.0, t0=0.0, duration=8.0, pulse_times=pulses)
        assert f.integral() == pytest.approx(0.0, abs=1e-13)

    def test_normalized_has_unit_weighted_norm(self):
        g = TimeGrid(0.0, 2.0, 101)
        f = control_pulse_train(g, 3.0, 0.0, 2.0, [0.5]).normalized()
        assert f.weighted_norm == pytest.approx(1.0)


class TestCustomControl:
    def test_window_inferred_from_support(self):
        g = TimeGrid(0.0, 1.0, 101)
        v = np.zeros(101)
        v[30:71] = 1.0
        f = control_custom(g, v)
        assert f.t0 == pytest.approx(0.30)
        assert f.duration == pytest.approx(0.40)

    def test_shape_mismatch(self):
        g = TimeGrid(0.0, 1.0, 101)
        with pytest.raises(DomainError):
            control_custom(g, np.zeros(55))


class TestKernelSpecs:
    def test_white_noise_valid(self):
        g = TimeGrid(0.0, 1.0, 64)
        rep = validate_kernel_spec(white_noise(1.0), g)
        assert rep.valid
        assert rep.min_eigenvalue > 0

    def test_negative_mass_invalid(self):
        g = TimeGrid(0.0, 1.0, 64)
        rep = validate_kernel_spec(white_noise(-1.0), g)
        assert not rep.valid
        assert any("positive definite" in issue for issue in rep.issues)

    def test_ou_valid_min_eigenvalue(self):
        g = TimeGrid(0.0, 4.0, 128)
        rep = validate_kernel_spec(ornstein_uhlenbeck(1.0, 1.0), g)
        assert rep.valid
        assert rep.min_eigenvalue > 0

    def test_scalar_kernel_rejects_antisymmetric(self):
        with pytest.raises(InvalidModelError):
            LocalInTimeKernel(coeffs_h=(1.0, 1.0), coeffs_a=(0.5,), n=1)

    def test_asymmetric_coefficient_rejected(self):
        with pytest.raises(InvalidModelError):
            StationaryPolynomialKernel(
                coeffs_h=(np.array([[1.0, 0.3], [0.0, 1.0]]),), n=2
            )

    def test_two_channel_antisymmetric_accepted(self):
        a = np.array([[0.0, 0.4], [-0.4, 0.0]])
        spec = StationaryPolynomialKernel(
            coeffs_h=(np.eye(2), np.eye(2)), coeffs_a=(a,), n=2
        )
        g = TimeGrid(0.0, 4.0, 96)
        assert validate_kernel_spec(spec, g).valid

    def test_dense_kernel_needs_some_part(self):
        with pytest.raises(InvalidModelError):
            DenseKernel(regular=None, delta=None)

    def test_quartic_order(self):
        assert quartic_kernel(1.0, 1.0).order == 2
