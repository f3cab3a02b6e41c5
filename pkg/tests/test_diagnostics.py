import numpy as np
import pytest

from gainlearn import (
    GainMatrix,
    NoiseConfig,
    SystemModel,
    concentration_sweep,
    mass_spring,
    power_bound_check,
    prediction_error_identity,
    simulate,
    steady_state_gain,
    truncation_decay,
)
from gainlearn.errors import DomainError
from gainlearn.model import Trajectory
from conftest import random_stabilizing_gain, random_system


class TestPredictionErrorIdentity:
    def test_zero_noise(self):
        model = SystemModel(A=0.5 * np.eye(2), H=np.eye(2), Q=np.zeros((2, 2)),
                            R=np.zeros((2, 2)), P0=np.zeros((2, 2)))
        traj = simulate(model, NoiseConfig.default_for(model), T=6, seed=0)
        res = prediction_error_identity(model.A, model.H,
                                        0.1 * np.ones((2, 2)), traj)
        assert res["eps_direct"] == 0.0
        assert res["eps_vectorized"] == 0.0

    def test_scalar_hand_case(self):
        # a=0.7, h=1, L=0.2, T=2, x0=0, xi=(0.1,-0.2), omega=(0.05,0.0,0.0)
        a, h, L = 0.7, 1.0, 0.2
        xi = [0.1, -0.2]
        om = [0.05, 0.0, 0.0]
        # states: x0=0, x1 = 0.1, x2 = 0.7*0.1 - 0.2 = -0.13
        xs = [0.0, 0.1, 0.7 * 0.1 - 0.2]
        ys = [h * x + w for x, w in zip(xs, om)]
        # predictor: xh0=0, xh1 = L y0, xh2 = (a-Lh) xh1 + L y1
        xh = L * ys[0]
        xh = (a - L * h) * xh + L * ys[1]
        direct = (h * xs[2] + om[2] - om[2] - h * xh) ** 2
        # vectorized: eta = (xi1 - L om1, xi0 - L om0, x0), powers 1, aL, aL^2
        aL = a - L * h
        v = (xi[1] - L * om[1]) + aL * (xi[0] - L * om[0]) + aL ** 2 * 0.0
        expected_vec = (h * v) ** 2
        assert direct == pytest.approx(expected_vec, abs=1e-15)

        traj = Trajectory(outputs=np.array([[y] for y in ys]),
                          states=np.array([[x] for x in xs]),
                          xi=np.array([[v_] for v_ in xi]),
                          omega=np.array([[w] for w in om]))
        res = prediction_error_identity([[a]], [[h]], [[L]], traj)
        assert res["eps_direct"] == pytest.approx(direct, abs=1e-12)
        assert res["eps_vectorized"] == pytest.approx(expected_vec, abs=1e-12)
        assert res["gap"] < 1e-12

    def test_randomized_sweep(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(25):
            model = random_system(rng)
            gain = random_stabilizing_gain(rng, model, rho_cap=0.97)
            T = int(rng.integers(1, 21))
            traj = simulate(model, NoiseConfig.default_for(model), T=T,
                            seed=int(rng.integers(0, 2**31)))
            res = prediction_error_identity(model.A, model.H, gain, traj)
            worst = max(worst, res["gap"] / (1 + res["eps_direct"]))
        assert worst < 1e-9

    def test_requires_noise_record(self):
        model = mass_spring()
        traj = simulate(model, NoiseConfig.default_for(model), T=4, seed=0)
        bare = Trajectory(outputs=traj.outputs)
        with pytest.raises(DomainError):
            prediction_error_identity(model.A, model.H,
                                      np.zeros((2, 1)), bare)


class TestTruncationDecay:
    def test_scalar_closed_form_fast_decay(self):
        model = SystemModel(A=[[0.5]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], P0=[[0.3]])
        gain = GainMatrix.create(model.A, model.H, [[0.1]])
        assert gain.rho == pytest.approx(0.4)
        report = truncation_decay(model, gain, T_values=(5, 10, 20))
        # rho^2 = 0.16: each doubling of T shrinks the gap by >= 10x
        assert report.errors[1] <= report.errors[0] / 10
        assert report.errors[2] <= report.errors[1] / 10
        assert report.fitted_slope < 0

    def test_log_linear_fit_quality(self):
        model = SystemModel(A=[[0.5]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], P0=[[0.3]])
        gain = GainMatrix.create(model.A, model.H, [[0.1]])
        report = truncation_decay(model, gain, T_values=tuple(range(2, 11)))
        assert report.fit_r2 > 0.99
        assert report.fitted_slope < 0
        # the bound's guaranteed rate; the measured decay may only be faster
        assert report.reference_slope == pytest.approx(np.log(np.sqrt(0.4)))
        assert report.fitted_slope < report.reference_slope

    def test_floor_behavior(self):
        model = SystemModel(A=[[0.5]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], P0=[[0.3]])
        gain = GainMatrix.create(model.A, model.H, [[0.1]])
        report = truncation_decay(model, gain, T_values=(40, 60, 80))
        # all gaps at the double-precision floor: no fit attempted
        assert "floor" in report.notes or report.fitted_slope < 0

    def test_monte_carlo_mode_matches_direction(self):
        model = mass_spring()
        gain, _ = steady_state_gain(model)
        report = truncation_decay(model, gain, T_values=(4, 8, 16),
                                  method="monte_carlo", seed=5,
                                  batch_start=128, max_samples=4096)
        assert report.errors[0] > report.errors[-1] or report.notes

    def test_needs_three_points(self):
        model = mass_spring()
        gain, _ = steady_state_gain(model)
        with pytest.raises(DomainError):
            truncation_decay(model, gain, T_values=(5, 10))


class TestConcentrationSweep:
    def test_quadrupling_batch_halves_deviation(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        gain, _ = steady_state_gain(model)
        report = concentration_sweep(model, noise, gain, T=20,
                                     M_values=(16, 64), reps=40, seed=2)
        ratio = report.errors[0] / report.errors[1]
        assert ratio == pytest.approx(2.0, rel=0.3)
        assert report.bound_scale > max(report.errors)  # conservative scale

    def test_slope_near_half(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        gain, _ = steady_state_gain(model)
        report = concentration_sweep(model, noise, gain, T=20,
                                     M_values=(8, 32, 128), reps=40, seed=3)
        assert -0.65 <= report.fitted_slope <= -0.35

    def test_rejects_few_reps(self):
        model = mass_spring()
        gain, _ = steady_state_gain(model)
        with pytest.raises(DomainError):
            concentration_sweep(model, NoiseConfig.default_for(model), gain,
                                T=10, M_values=(8, 32), reps=5, seed=0)

    def test_deviation_estimate_stabilizes(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        gain, _ = steady_state_gain(model)
        a = concentration_sweep(model, noise, gain, T=10, M_values=(8, 32),
                                reps=60, seed=4)
        b = concentration_sweep(model, noise, gain, T=10, M_values=(8, 32),
                                reps=60, seed=5)
        for ea, eb in zip(a.errors, b.errors):
            assert abs(ea - eb) / ea < 0.25


class TestPowerBoundCheck:
    def test_scalar_quarter(self):
        gain = GainMatrix.create([[0.75]], [[1.0]], [[0.5]])  # A_L = 0.25
        report = power_bound_check(gain, k_max=50)
        assert report["passed"]
        # tightest at k=0: 1 / (4 * 0.5) = 0.5
        assert report["worst_ratio"] == pytest.approx(0.5, rel=1e-6)

    def test_zero_closed_loop(self):
        gain = GainMatrix.create([[0.5]], [[1.0]], [[0.5]])  # A_L = 0
        report = power_bound_check(gain, k_max=20)
        assert report["passed"]

    def test_non_normal_transient(self):
        A = np.array([[0.5, 10.0], [0.0, 0.5]])
        gain = GainMatrix.create(A, np.eye(2), np.zeros((2, 2)))
        report = power_bound_check(gain, k_max=50)
        assert report["passed"]
        assert report["c_value"] > 10  # transient growth captured

    def test_randomized(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            model = random_system(rng, n=3, m=2)
            gain = random_stabilizing_gain(rng, model, rho_cap=0.95)
            assert power_bound_check(gain, k_max=50)["passed"]
