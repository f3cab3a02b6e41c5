import math

import numpy as np
import pytest

from gainlearn import (
    GainMatrix,
    NoiseConfig,
    SgdConfig,
    SystemModel,
    UniformBounds,
    batch_gradient,
    gd_run,
    initial_gain,
    make_batch,
    mass_spring,
    resolvent_constant,
    sample_requirements,
    sgd_run,
    simulate,
    stability_margin,
    steady_cost,
    steady_state_gain,
    stochastic_gradient,
)
from gainlearn.errors import (
    DomainError,
    InitializationError,
    InstabilityError,
    StallError,
)
from conftest import random_stabilizing_gain, random_system

PHI = (1 + np.sqrt(5.0)) / 2


def noiseless_model():
    return SystemModel(A=0.5 * np.eye(2), H=np.eye(2), Q=np.zeros((2, 2)),
                       R=np.zeros((2, 2)), P0=np.zeros((2, 2)))


class TestStochasticGradient:
    def test_single_step_formula(self):
        model = mass_spring()
        traj = simulate(model, NoiseConfig.default_for(model), T=1, seed=0)
        L = np.array([[0.4], [0.2]])
        g = stochastic_gradient(model.A, model.H, L, traj)
        e1 = traj.outputs[1] - model.H @ (L @ traj.outputs[0])
        expected = -2.0 * np.outer(model.H.T @ e1, traj.outputs[0])
        assert np.allclose(g, expected, atol=1e-14)

    def test_zero_data_gives_zero(self):
        model = noiseless_model()
        traj = simulate(model, NoiseConfig.default_for(model), T=10, seed=0)
        g = stochastic_gradient(model.A, model.H, 0.1 * np.ones((2, 2)), traj)
        assert np.all(g == 0.0)

    def test_matches_per_trajectory_finite_differences(self):
        rng = np.random.default_rng(1)
        model = random_system(rng, n=3, m=2)
        gain = random_stabilizing_gain(rng, model)
        traj = simulate(model, NoiseConfig.default_for(model), T=9, seed=2)

        def eps(Lx):
            AL = model.A - Lx @ model.H
            x = np.zeros(3)
            for t in range(traj.T):
                x = AL @ x + Lx @ traj.outputs[t]
            e = traj.outputs[traj.T] - model.H @ x
            return float(e @ e)

        from conftest import fd_gradient

        fd = fd_gradient(eps, gain.L, h=1e-6)
        g = stochastic_gradient(model.A, model.H, gain, traj)
        assert np.linalg.norm(g - fd) / (1 + np.linalg.norm(fd)) < 1e-7

    def test_rejects_short_trajectory(self):
        from gainlearn.model import Trajectory

        model = mass_spring()
        with pytest.raises(DomainError):
            stochastic_gradient(model.A, model.H, np.zeros((2, 1)),
                                Trajectory(outputs=np.zeros((1, 1))))


class TestBatchGradient:
    def test_single_equals_stochastic(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        batch = make_batch(model, noise, T=10, M=1, seed=3)
        L = np.array([[0.3], [0.1]])
        assert np.array_equal(batch_gradient(model.A, model.H, L, batch),
                              stochastic_gradient(model.A, model.H, L, batch[0]))

    def test_copies_average_to_same(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        traj = simulate(model, noise, T=10, seed=4)
        L = np.array([[0.3], [0.1]])
        single = stochastic_gradient(model.A, model.H, L, traj)
        mean = batch_gradient(model.A, model.H, L, [traj] * 8)
        assert np.allclose(mean, single, atol=1e-14)

    def test_variance_shrinks_with_M(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        reps = 40

        def spread(M, base):
            grads = np.stack([
                batch_gradient(model.A, model.H, L,
                               make_batch(model, noise, 20, M, seed=base + r))
                for r in range(reps)
            ])
            return np.mean(np.var(grads, axis=0))

        v25 = spread(25, 1000)
        v100 = spread(100, 5000)
        assert v25 / v100 == pytest.approx(4.0, rel=0.3)

    def test_rejects_empty_and_ragged(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        with pytest.raises(DomainError):
            batch_gradient(model.A, model.H, np.zeros((2, 1)), [])
        ragged = [simulate(model, noise, T=5, seed=0),
                  simulate(model, noise, T=6, seed=1)]
        with pytest.raises(DomainError):
            batch_gradient(model.A, model.H, np.zeros((2, 1)), ragged)


class TestStabilityMargin:
    def test_scalar_closed_form(self):
        # A=1, H=1, L=0.5: A_L=0.5, Z=4/3, margin=0.375
        margin = stability_margin([[1.0]], [[1.0]], [[0.5]], [[1.0]])
        assert margin == pytest.approx(0.375, abs=1e-12)
        for delta in (margin, -margin):
            assert abs(1.0 - (0.5 + delta)) < 1.0

    def test_zero_closed_loop(self):
        # A = L H makes A_L = 0; margin = 1/(2 ||H||)
        H = np.array([[2.0, 0.0], [0.0, 1.0]])
        L = np.array([[0.5, 0.0], [0.0, 1.0]])
        A = L @ H
        margin = stability_margin(A, H, L)
        assert margin == pytest.approx(1.0 / (2.0 * 2.0), abs=1e-12)

    def test_randomized_certificate(self):
        rng = np.random.default_rng(5)
        model = random_system(rng, n=3, m=2)
        gain = random_stabilizing_gain(rng, model, rho_cap=0.9)
        margin = stability_margin(model.A, model.H, gain)
        for _ in range(100):
            D = rng.normal(size=gain.L.shape)
            D *= margin / np.linalg.norm(D)
            perturbed = GainMatrix.create(model.A, model.H, gain.L + D)
            assert perturbed.rho < 1.0

    def test_rejects_unstable(self):
        with pytest.raises(InstabilityError):
            stability_margin([[2.0]], [[1.0]], [[0.0]])

    def test_rejects_indefinite_weight(self):
        with pytest.raises(DomainError):
            stability_margin([[0.5]], [[1.0]], [[0.1]], [[-1.0]])


class TestInitialGain:
    def test_zero_if_stable(self):
        model = random_system(np.random.default_rng(6), rho_scale=0.7)
        gain = initial_gain(model.A, model.H, "zero_if_stable")
        assert np.all(gain.L == 0.0)

    def test_zero_strategy_rejects_unstable(self):
        model = random_system(np.random.default_rng(7), rho_scale=1.4)
        with pytest.raises(InitializationError):
            initial_gain(model.A, model.H, "zero_if_stable")

    def test_surrogate_stabilizes_marginal_system(self):
        model = mass_spring()
        gain = initial_gain(model.A, model.H, "surrogate_dare")
        assert gain.rho < 1.0

    def test_user_gain_validated(self):
        model = mass_spring()
        with pytest.raises(InitializationError):
            initial_gain(model.A, model.H, "user", L_user=[[-5.0], [0.0]])
        gain = initial_gain(model.A, model.H, "user", L_user=[[0.3], [0.0]])
        assert gain.rho < 1.0


class TestSgdRun:
    def test_zero_noise_is_fixed_point(self):
        model = noiseless_model()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, 0.05 * np.ones((2, 2)))
        cfg = SgdConfig(step_size=0.1, batch_size=4, horizon=8, max_iters=10, seed=0)
        record = sgd_run(model, noise, L0, cfg)
        for gain in record.iterates:
            assert np.array_equal(gain.L, L0.L)

    def test_unstable_start_rejected(self):
        model = mass_spring()
        cfg = SgdConfig(step_size=0.01, batch_size=2, horizon=5, max_iters=2, seed=0)
        with pytest.raises(DomainError):
            sgd_run(model, NoiseConfig.default_for(model),
                    GainMatrix.create(model.A, model.H, [[-3.0], [0.0]]), cfg)

    def test_record_is_consistent(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        cfg = SgdConfig(step_size=0.01, batch_size=5, horizon=10, max_iters=12, seed=1)
        record = sgd_run(model, noise, L0, cfg, oracle=model)
        n = len(record.iterates)
        assert n == 13
        for seq in (record.costs, record.grad_norms, record.rhos,
                    record.etas, record.wall_times):
            assert len(seq) == n
        assert all(r < 1.0 for r in record.rhos)
        assert math.isnan(record.etas[-1])

    def test_deterministic_given_seed(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        cfg = SgdConfig(step_size=0.01, batch_size=5, horizon=10, max_iters=8, seed=2)
        a = sgd_run(model, noise, L0, cfg)
        b = sgd_run(model, noise, L0, cfg)
        for ga, gb in zip(a.iterates, b.iterates):
            assert np.array_equal(ga.L, gb.L)

    def test_cost_decreases_on_average(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        cfg = SgdConfig(step_size=0.01, batch_size=50, horizon=40, max_iters=60, seed=3)
        record = sgd_run(model, noise, L0, cfg, oracle=model)
        assert record.costs[-1] < record.costs[0]

    def test_absurd_step_stalls_cleanly(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        cfg = SgdConfig(step_size=1e3, batch_size=50, horizon=20, max_iters=100, seed=4)
        with pytest.raises(StallError) as excinfo:
            sgd_run(model, noise, L0, cfg, oracle=model)
        record = excinfo.value.record
        assert all(r < 1.0 for r in record.rhos)
        assert len(record.safeguard_events) > 50

    def test_assert_only_mode_aborts(self):
        model = mass_spring()
        noise = NoiseConfig.default_for(model)
        L0 = GainMatrix.create(model.A, model.H, [[0.3], [0.0]])
        cfg = SgdConfig(step_size=1e3, batch_size=4, horizon=10, max_iters=10,
                        seed=4, safeguard="assert_only")
        with pytest.raises(InstabilityError):
            sgd_run(model, noise, L0, cfg)


class TestGdRun:
    def test_immediate_termination_at_oracle(self):
        model = mass_spring()
        gain, _ = steady_state_gain(model)
        record = gd_run(model, gain, tol=1e-7)
        assert record.steps == 0

    def test_scalar_converges_to_golden_ratio(self):
        model = SystemModel(A=[[1.0]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], P0=[[0.0]])
        record = gd_run(model, [[0.9]], tol=1e-10)
        assert record.iterates[-1].L[0, 0] == pytest.approx(PHI - 1, abs=1e-9)

    def test_log_gap_decreases_linearly(self):
        model = mass_spring()
        L0 = initial_gain(model.A, model.H, "user", L_user=[[0.3], [0.0]])
        record = gd_run(model, L0, tol=1e-10)
        J_star = steady_cost(model, steady_state_gain(model)[0])
        gaps = np.array(record.costs) - J_star
        mask = gaps > 1e-9
        ks = np.arange(len(gaps))[mask]
        slope = np.polyfit(ks, np.log(gaps[mask]), 1)[0]
        assert slope < 0
        fit = np.polyfit(ks, np.log(gaps[mask]), 1)
        resid = np.log(gaps[mask]) - np.polyval(fit, ks)
        ss_tot = np.sum((np.log(gaps[mask]) - np.mean(np.log(gaps[mask]))) ** 2)
        r2 = 1 - np.sum(resid ** 2) / ss_tot
        assert r2 > 0.98


class TestSampleRequirements:
    def test_boundary_horizon(self):
        H = np.array([[1.0, 0.0]])
        bounds = UniformBounds(C=2.0, rho=0.25, D=1.0)
        kappa = 1.0 + 1.0 * 0.5
        h_op = 1.0
        gamma_bar = 10 * kappa ** 4 * bounds.C ** 6 * h_op ** 2 * h_op
        s0 = gamma_bar * math.sqrt(1)
        T_min, _ = sample_requirements(bounds, H, (1.0, 0.5), s=0.5, s0=s0,
                                       tau=0.5, delta=0.05, n=2, m=1)
        assert T_min == 0

    def test_delta_scaling_exact(self):
        H = np.array([[1.0, 0.0]])
        bounds = UniformBounds(C=2.0, rho=0.25, D=1.0)
        _, M1 = sample_requirements(bounds, H, (1.0, 0.5), s=0.1, s0=0.1,
                                    tau=0.5, delta=0.05, n=2, m=1)
        _, M2 = sample_requirements(bounds, H, (1.0, 0.5), s=0.1, s0=0.1,
                                    tau=0.5, delta=0.025, n=2, m=1)
        ratio = math.log(2 * 2 / 0.025) / math.log(2 * 2 / 0.05)
        assert M2 == pytest.approx(M1 * ratio, rel=1e-6)

    def test_conservative_for_mass_spring(self):
        # the analytic floors exceed the empirically sufficient sizes by far
        model = mass_spring()
        gain, _ = steady_state_gain(model)
        noise = NoiseConfig.default_for(model)
        est = resolvent_constant(gain.closed_loop)
        bounds = UniformBounds(C=est.c_value, rho=gain.rho,
                               D=float(np.linalg.norm(gain.L, 2)))
        T_min, M_min = sample_requirements(
            bounds, model.H, (noise.kappa_xi, noise.kappa_omega),
            s=0.5, s0=0.1, tau=0.5, delta=0.05, n=2, m=1)
        assert T_min > 50      # empirical runs settle with T = 50
        assert M_min > 100     # and with M = 100

    def test_domain_checks(self):
        bounds = UniformBounds(C=2.0, rho=1.2, D=1.0)
        with pytest.raises(DomainError):
            sample_requirements(bounds, [[1.0]], (1.0, 1.0), s=0.1, s0=0.1,
                                tau=0.5, delta=0.05, n=1, m=1)
