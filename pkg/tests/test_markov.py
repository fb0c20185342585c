import numpy as np
import pytest

from qdephase import (
    DomainError,
    TimeGrid,
    ornstein_uhlenbeck,
    quartic_kernel,
)
from qdephase.core import FieldPath, LocalInTimeKernel
from qdephase.markov import (
    GeneralizedState,
    chapman_kolmogorov_check,
    classical_action,
    classical_field,
    propagator,
)


def _ou_both_ends(b0, bf, t0, tf, tau=1.0):
    """2x2 analytic solve for the minimizer a e^{-t/tau} + b e^{t/tau}."""
    A = np.array(
        [
            [np.exp(-t0 / tau), np.exp(t0 / tau)],
            [np.exp(-tf / tau), np.exp(tf / tau)],
        ]
    )
    a, b = np.linalg.solve(A, [b0, bf])
    return lambda t: a * np.exp(-t / tau) + b * np.exp(t / tau)


class TestClassicalField:
    def test_zero_boundary_gives_zero(self):
        spec = ornstein_uhlenbeck()
        z = GeneralizedState.zero(1)
        path = classical_field(spec, "fixed-both-ends", z, z, 0.0, 2.0, n_points=201)
        assert np.abs(path.values).max() < 1e-12

    def test_ou_decay_branch(self):
        spec = ornstein_uhlenbeck()
        st = GeneralizedState(np.array([1.0]))
        path = classical_field(spec, "fixed-start-decay", st, None, 0.0, 3.0, n_points=1201)
        expected = np.exp(-path.grid.times)
        assert np.abs(path.values - expected).max() < 1e-5

    def test_ou_fixed_both_ends(self):
        spec = ornstein_uhlenbeck()
        b0, bf, t0, tf = 1.0, -0.4, 0.0, 2.0
        path = classical_field(
            spec,
            "fixed-both-ends",
            GeneralizedState(np.array([b0])),
            GeneralizedState(np.array([bf])),
            t0,
            tf,
            n_points=1201,
        )
        exact = _ou_both_ends(b0, bf, t0, tf)(path.grid.times)
        assert np.abs(path.values - exact).max() < 1e-5

    def test_euler_lagrange_residual(self):
        # the interior discrete stationarity condition is satisfied exactly
        from qdephase.markov import _form_matrix

        spec = quartic_kernel(1.0, 1.0)
        s0 = GeneralizedState(np.array([1.0, 0.0]))
        s1 = GeneralizedState(np.array([-0.5, 0.3]))
        path = classical_field(spec, "fixed-both-ends", s0, s1, 0.0, 3.0, n_points=401)
        form = _form_matrix(spec, path.grid)
        resid = form @ path.values
        interior = slice(4, path.grid.n_points - 4)
        scale = np.abs(form @ np.abs(path.values)).max()
        assert np.abs(resid[interior]).max() < 1e-6 * max(scale, 1.0)

    def test_unknown_boundary(self):
        with pytest.raises(DomainError):
            classical_field(
                ornstein_uhlenbeck(), "clamped", GeneralizedState(np.array([1.0])), None, 0.0, 1.0
            )


class TestClassicalAction:
    def test_zero_path(self):
        g = TimeGrid(0.0, 2.0, 101)
        path = FieldPath(grid=g, values=np.zeros(101))
        assert classical_action(ornstein_uhlenbeck(), path, 0.0, 2.0) == 0.0

    def test_ou_decay_action_is_one(self):
        # oracle: int_0^inf (Bdot^2 + B^2) dt with B = e^{-t} equals 1
        spec = ornstein_uhlenbeck()
        st = GeneralizedState(np.array([1.0]))
        path = classical_field(spec, "fixed-start-decay", st, None, 0.0, 10.0, n_points=4001)
        act = classical_action(spec, path, 0.0, 10.0)
        assert act == pytest.approx(1.0, rel=5e-3)

    def test_additivity_of_minimizers(self):
        # constrained concatenation cannot beat the unconstrained minimizer
        spec = ornstein_uhlenbeck()
        s0 = GeneralizedState(np.array([1.0]))
        s1 = GeneralizedState(np.array([-0.2]))
        path = classical_field(spec, "fixed-both-ends", s0, s1, 0.0, 2.0, n_points=801)
        mid = GeneralizedState(np.array([0.5]))  # off the optimal midpoint
        left = classical_field(spec, "fixed-both-ends", s0, mid, 0.0, 1.0, n_points=401)
        right = classical_field(spec, "fixed-both-ends", mid, s1, 1.0, 2.0, n_points=401)
        total_direct = classical_action(spec, path, 0.0, 2.0)
        total_split = classical_action(spec, left, 0.0, 1.0) + classical_action(
            spec, right, 1.0, 2.0
        )
        assert total_split >= total_direct - 1e-10


class TestPropagator:
    def test_ou_mean_and_variance(self):
        spec = ornstein_uhlenbeck()
        dt_gap = 1.2
        prop = propagator(spec, 0.0, dt_gap, GeneralizedState(np.array([0.7])))
        assert prop.mean_map[0, 0] == pytest.approx(np.exp(-dt_gap), rel=1e-4)
        assert prop.covariance[0, 0] == pytest.approx(0.5 * (1 - np.exp(-2 * dt_gap)), rel=1e-4)
        assert prop.mean[0] == pytest.approx(0.7 * np.exp(-dt_gap), rel=1e-4)

    def test_long_gap_forgets_initial_state(self):
        spec = ornstein_uhlenbeck()
        prop = propagator(spec, 0.0, 14.0, GeneralizedState(np.array([3.0])), resolution=1400)
        assert abs(prop.mean[0]) < 1e-5
        assert prop.covariance[0, 0] == pytest.approx(0.5, rel=1e-4)

    def test_short_gap_identity(self):
        spec = ornstein_uhlenbeck()
        prop = propagator(spec, 0.0, 0.01, GeneralizedState(np.array([1.0])), resolution=20)
        assert prop.mean_map[0, 0] == pytest.approx(1.0, abs=2e-2)
        assert prop.covariance[0, 0] < 2e-2

    def test_covariance_psd(self):
        spec = quartic_kernel(1.0, 1.0)
        prop = propagator(spec, 0.0, 2.0, GeneralizedState(np.array([1.0, 0.0])))
        vals = np.linalg.eigvalsh(prop.covariance)
        assert vals.min() >= -1e-12 * max(vals.max(), 1.0)

    def test_consistent_with_action_route(self):
        # -log of the transition density equals half the classical-action
        # combination (start->end) + (end->decay) - (start->decay)
        spec = ornstein_uhlenbeck()
        b0, bf, gap = 0.8, 0.3, 1.0
        prop = propagator(spec, 0.0, gap, GeneralizedState(np.array([b0])))
        var = prop.covariance[0, 0]
        mean = prop.mean[0]
        log_density_exponent = (bf - mean) ** 2 / (2 * var)

        def act(boundary, sa, sb, t0, tf):
            path = classical_field(
                spec,
                boundary,
                GeneralizedState(np.array([sa])) if sa is not None else None,
                GeneralizedState(np.array([sb])) if sb is not None else None,
                t0,
                tf,
                n_points=2001,
            )
            return classical_action(spec, path, path.grid.t_start, path.grid.t_end)

        combo = 0.5 * (
            act("fixed-both-ends", b0, bf, 0.0, gap)
            + act("fixed-start-decay", bf, None, gap, gap + 10.0)
            - act("fixed-start-decay", b0, None, 0.0, 10.0)
        )
        assert combo == pytest.approx(log_density_exponent, rel=5e-3, abs=5e-3)

    def test_rejects_reversed_times(self):
        with pytest.raises(DomainError):
            propagator(ornstein_uhlenbeck(), 1.0, 0.5, GeneralizedState(np.array([0.0])))


class TestChapmanKolmogorov:
    def test_ou_exact_semigroup(self):
        rep = chapman_kolmogorov_check(ornstein_uhlenbeck(), 0.0, 0.7, 1.5)
        assert rep.deviation < 1e-6

    def test_quartic_generalized_state(self):
        rep = chapman_kolmogorov_check(quartic_kernel(1.0, 1.0), 0.0, 0.7, 1.5)
        assert rep.state_order == 2
        assert rep.deviation < 1e-4

    def test_quartic_bare_field_fails(self):
        rep = chapman_kolmogorov_check(quartic_kernel(1.0, 1.0), 0.0, 0.7, 1.5, state_order=1)
        assert rep.deviation > 1e-3

    def test_time_dependent_kernel(self):
        # mildly non-stationary mass term: semigroup still holds on the full state
        spec = LocalInTimeKernel(coeffs_h=(lambda t: 1.0 + 0.5 / (1.0 + t**2), None, 1.0))
        rep = chapman_kolmogorov_check(spec, 0.0, 0.6, 1.4)
        assert rep.deviation < 1e-4

    def test_bad_ordering(self):
        with pytest.raises(DomainError):
            chapman_kolmogorov_check(ornstein_uhlenbeck(), 0.0, 2.0, 1.0)
