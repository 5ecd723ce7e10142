"""Fixed-step integration accuracy and seeded noise behavior."""

import numpy as np
import pytest

from gradmatch.errors import NonFiniteState
from gradmatch.kernels import TimeGrid
from gradmatch.ode_model import OdeSystem, Term, builtin_lotka_volterra
from gradmatch.presets import simulate_preset
from gradmatch.simulator import SimConfig, add_noise, integrate_rk4, make_dataset

DECAY = OdeSystem(1, 1, ((Term(0, -1, frozenset({0})),),))


class TestIntegrateRk4:
    def test_exponential_decay(self):
        grid = TimeGrid(np.array([0.0, 1.0]))
        X = integrate_rk4(DECAY, [1.0], [1.0], grid, step=0.01)
        assert X[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-6)

    def test_zero_theta_constant_trajectory(self):
        grid = TimeGrid(np.linspace(0, 2, 7))
        X = integrate_rk4(builtin_lotka_volterra(), np.zeros(4), [5.0, 3.0], grid, 0.05)
        np.testing.assert_array_equal(X, np.repeat([[5.0], [3.0]], 7, axis=1))

    def test_fourth_order_step_halving(self):
        grid = TimeGrid(np.linspace(0, 2, 21))
        theta = [2.0, 1.0, 4.0, 1.0]
        coarse = integrate_rk4(builtin_lotka_volterra(), theta, [5.0, 3.0], grid, 1e-3)
        fine = integrate_rk4(builtin_lotka_volterra(), theta, [5.0, 3.0], grid, 5e-4)
        assert np.max(np.abs(coarse[:, -1] - fine[:, -1])) < 1e-6

    def test_matches_analytic_decay_over_random_rates(self):
        rng = np.random.default_rng(0)
        grid = TimeGrid(np.linspace(0, 2, 11))
        for _ in range(10):
            theta = float(rng.uniform(0.0, 5.0))
            x0 = 2.0
            X = integrate_rk4(DECAY, [theta], [x0], grid, 1e-3)
            exact = x0 * np.exp(-theta * grid.times)
            assert np.max(np.abs(X[0] - exact)) < 1e-8 * abs(x0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_blowup_reports_nonfinite(self):
        growth = OdeSystem(1, 1, ((Term(0, 1, frozenset({0})),),))
        grid = TimeGrid(np.array([0.0, 2000.0]))
        with pytest.raises(NonFiniteState):
            integrate_rk4(growth, [1.0], [1.0], grid, step=1.0)

    def test_lands_exactly_on_irregular_times(self):
        grid = TimeGrid(np.array([0.0, 0.13, 0.55, 1.0]))
        X = integrate_rk4(DECAY, [1.0], [1.0], grid, step=0.07)
        exact = np.exp(-grid.times)
        assert np.max(np.abs(X[0] - exact)) < 1e-7


class TestAddNoise:
    def test_zero_variance_bit_exact(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(2, 30))
        Y = add_noise(X, [0.0, 0.0], seed=3)
        assert np.array_equal(Y, X)

    def test_mixed_zero_variance_row_is_exact(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(2, 30))
        Y = add_noise(X, [0.0, 0.5], seed=3)
        assert np.array_equal(Y[0], X[0])
        assert not np.array_equal(Y[1], X[1])

    def test_same_seed_same_noise(self):
        X = np.zeros((3, 20))
        a = add_noise(X, [0.1, 0.2, 0.3], seed=42)
        b = add_noise(X, [0.1, 0.2, 0.3], seed=42)
        assert np.array_equal(a, b)

    def test_empirical_variance(self):
        X = np.zeros((1, 10_000))
        Y = add_noise(X, [0.25], seed=7)
        assert np.var(Y) == pytest.approx(0.25, rel=0.05)


class TestMakeDataset:
    def test_lv_preset_grid_has_21_points(self):
        grid, Y, X = make_dataset(simulate_preset("lotka-volterra", noise_variance=0.1, seed=1))
        assert len(grid) == 21
        assert Y.shape == (2, 21)

    def test_protein_preset_grid_has_15_points(self):
        grid, Y, X = make_dataset(simulate_preset("protein", seed=1))
        assert len(grid) == 15
        assert Y.shape == (5, 15)

    def test_noiseless_dataset_equals_truth(self):
        cfg = simulate_preset("lotka-volterra", noise_variance=0.0, seed=1)
        grid, Y, X = make_dataset(cfg)
        assert np.array_equal(Y, X)

    def test_deterministic(self):
        cfg = simulate_preset("protein", seed=9)
        a = make_dataset(cfg)
        b = make_dataset(cfg)
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[2], b[2])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(
                system=DECAY,
                theta_true=[1.0],
                x0=[1.0],
                sample_times=[0.0, 0.1, 0.2],
                integrator_step=0.5,  # larger than the smallest gap
                noise_variance=[0.0],
                seed=0,
            )
        with pytest.raises(ValueError):
            SimConfig(
                system=DECAY,
                theta_true=[1.0],
                x0=[1.0],
                sample_times=[0.0, 0.1],
                integrator_step=0.05,
                noise_variance=[-0.1],
                seed=0,
            )

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            simulate_preset("lorenz")
