import numpy as np
import pytest

from neurodiff import autodiff as ad
from neurodiff.callbacks import AfterEpoch, Always, Callback, EarlyStop, SetLoss
from neurodiff.conditions import IVP1
from neurodiff.generators import Uniform1D
from neurodiff.losses import LossSpec
from neurodiff.network import MLP, MLPSpec
from neurodiff.solver import (Adam, BundleLayout, Problem, SGD, Solution,
                              SolverConfig, TrainingDiverged, fit, fit_bundle,
                              fit_inverse, get_solution)


def decay_residual(u, coords):
    t, = coords
    return [ad.diff(u[0], t) + u[0]]


def decay_problem(n=64):
    return Problem(decay_residual, 1, ("t",),
                   Uniform1D(0.0, 2.0, n),
                   Uniform1D(0.0, 2.0, n, "equally-spaced"))


def small_config(epochs=5, seed=0, **kw):
    return SolverConfig(networks=[MLPSpec(1, (8,), 1, seed=seed)],
                        conditions=[IVP1(0.0, 1.0)],
                        optimizer=Adam(lr=1e-3),
                        epochs=epochs, seed=seed, **kw)


class TestFit:
    def test_metrics_one_row_per_epoch(self):
        state = fit(decay_problem(), small_config(epochs=7))
        assert len(state.metrics) == 7
        assert state.metrics[0]["epoch"] == 1
        assert state.metrics[-1]["epoch"] == 7
        for row in state.metrics:
            assert row["loss_kind"] == "mse"

    def test_determinism(self):
        a = fit(decay_problem(), small_config(epochs=10))
        b = fit(decay_problem(), small_config(epochs=10))
        assert a.metrics == b.metrics
        assert a.networks[0].flat_params().tobytes() == \
            b.networks[0].flat_params().tobytes()

    def test_seed_changes_trajectory(self):
        a = fit(decay_problem(), small_config(epochs=5, seed=0))
        b = fit(decay_problem(), small_config(epochs=5, seed=1))
        assert a.metrics != b.metrics

    def test_validation_does_not_affect_training(self):
        p1 = decay_problem()
        p2 = Problem(decay_residual, 1, ("t",),
                     Uniform1D(0.0, 2.0, 64),
                     Uniform1D(0.0, 2.0, 17))  # different validation set
        a = fit(p1, small_config(epochs=8))
        b = fit(p2, small_config(epochs=8))
        assert a.networks[0].flat_params().tobytes() == \
            b.networks[0].flat_params().tobytes()
        assert [m["train_loss"] for m in a.metrics] == \
            [m["train_loss"] for m in b.metrics]

    def test_training_reduces_loss(self):
        state = fit(decay_problem(256), small_config(epochs=200))
        assert state.valid_history[-1] < state.valid_history[0]

    def test_accumulation_matches_single_pass(self):
        a = fit(decay_problem(64), small_config(epochs=5))
        b = fit(decay_problem(64), small_config(epochs=5,
                                                accumulation_passes=4))
        np.testing.assert_allclose(a.networks[0].flat_params(),
                                   b.networks[0].flat_params(),
                                   rtol=0, atol=1e-12)

    def test_sgd_optimizer_runs(self):
        cfg = small_config(epochs=5)
        cfg.optimizer = SGD(lr=1e-3, momentum=0.9)
        state = fit(decay_problem(), cfg)
        assert len(state.metrics) == 5

    def test_default_networks(self):
        cfg = SolverConfig(conditions=[IVP1(0.0, 1.0)], epochs=2)
        state = fit(decay_problem(), cfg)
        assert state.networks[0].spec.hidden_dims == (32, 32)

    def test_condition_count_mismatch(self):
        cfg = small_config()
        cfg.conditions = []
        with pytest.raises(ValueError, match="condition"):
            fit(decay_problem(), cfg)

    def test_divergence_raises(self):
        def exploding(u, coords):
            t, = coords
            return [ad.exp(1e4 * u[0]) + ad.diff(u[0], t)]

        p = Problem(exploding, 1, ("t",), Uniform1D(0.0, 2.0, 16),
                    Uniform1D(0.0, 2.0, 16))
        cfg = small_config(epochs=50)
        cfg.optimizer = Adam(lr=10.0)
        with np.errstate(all="ignore"), pytest.raises(TrainingDiverged,
                                                      match="non-finite"):
            fit(p, cfg)


class TestExactness:
    def test_condition_holds_from_epoch_zero(self):
        # the trial solution satisfies u(0) = 1 before any training
        state = fit(decay_problem(), small_config(epochs=1))
        sol = get_solution(state, "latest")
        assert sol(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-14)

    def test_condition_still_exact_after_training(self):
        state = fit(decay_problem(), small_config(epochs=50))
        sol = get_solution(state, "latest")
        assert sol(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-14)


class TestCallbacksIntegration:
    def test_early_stop(self):
        cbs = [Callback(AfterEpoch(3), EarlyStop())]
        state = fit(decay_problem(), small_config(epochs=100), cbs)
        assert state.epoch == 4
        assert len(state.metrics) == 4

    def test_loss_switch_takes_effect_next_epoch(self):
        cbs = [Callback(AfterEpoch(2), SetLoss(LossSpec("l1")))]
        state = fit(decay_problem(), small_config(epochs=5), cbs)
        kinds = [m["loss_kind"] for m in state.metrics]
        assert kinds == ["mse", "mse", "mse", "l1", "l1"]

    def test_always_fires_every_epoch(self):
        fired = []

        class Recorder:
            def apply(self, state):
                fired.append(state.epoch)

        cbs = [Callback(Always(), Recorder())]
        fit(decay_problem(), small_config(epochs=4), cbs)
        assert fired == [1, 2, 3, 4]


class TestSolution:
    def test_get_solution_best_vs_latest(self):
        state = fit(decay_problem(256), small_config(epochs=100))
        best = get_solution(state, "best")
        latest = get_solution(state, "latest")
        t = np.linspace(0, 2, 50)
        assert best(t).shape == (50,)
        assert latest(t).shape == (50,)

    def test_best_snapshot_is_from_best_epoch(self):
        state = fit(decay_problem(256), small_config(epochs=50))
        assert 1 <= state.best_epoch <= 50
        assert state.best_loss == min(state.valid_history)

    def test_unknown_strategy(self):
        state = fit(decay_problem(), small_config(epochs=1))
        with pytest.raises(ValueError, match="unknown strategy"):
            get_solution(state, "median")

    def test_solution_is_frozen_copy(self):
        state = fit(decay_problem(), small_config(epochs=1))
        sol = get_solution(state, "latest")
        before = sol(np.array([1.0]))[0]
        state.networks[0].weights[0][:] = 0.0
        assert sol(np.array([1.0]))[0] == before

    def test_wrong_arity_rejected(self):
        state = fit(decay_problem(), small_config(epochs=1))
        sol = get_solution(state, "latest")
        with pytest.raises(ValueError, match="expected 1"):
            sol(np.zeros(3), np.zeros(3))


def bundle_problem(n=64):
    def residual(u, coords, params):
        t, = coords
        return [ad.diff(u[0], t) + u[0]]

    return Problem(residual, 1, ("t",), Uniform1D(0.0, 1.0, n),
                   Uniform1D(0.0, 1.0, n, "equally-spaced"))


def bundle_layout():
    return BundleLayout(theta_ic={"u0": (0.5, 1.5)})


class TestBundle:
    def cfg(self, epochs=3):
        return SolverConfig(networks=[MLPSpec(2, (8,), 1, seed=0)],
                            conditions=[IVP1(0.0, "u0")],
                            epochs=epochs, seed=0)

    def test_fit_bundle_runs_and_condition_exact(self):
        state = fit_bundle(bundle_problem(), bundle_layout(), self.cfg())
        sol = get_solution(state, "latest")
        out = sol(np.array([0.0]), u0=np.array([0.77]))
        assert out[0] == pytest.approx(0.77, abs=1e-14)

    def test_theta_by_position_or_name(self):
        state = fit_bundle(bundle_problem(), bundle_layout(), self.cfg())
        sol = get_solution(state, "latest")
        t = np.array([0.3, 0.6])
        u0 = np.array([1.0, 1.2])
        np.testing.assert_array_equal(sol(t, u0), sol(t, u0=u0))

    def test_unknown_theta_name(self):
        state = fit_bundle(bundle_problem(), bundle_layout(), self.cfg())
        sol = get_solution(state, "latest")
        with pytest.raises(ValueError, match="unknown parameters"):
            sol(np.array([0.0]), lam=np.array([1.0]))

    def test_input_dim_check(self):
        cfg = self.cfg()
        cfg.networks = [MLPSpec(5, (8,), 1, seed=0)]
        with pytest.raises(ValueError, match="input_dim"):
            fit_bundle(bundle_problem(), bundle_layout(), cfg)


class TestInverse:
    def make_solution(self):
        # zero network: the trial solution collapses to u(t) = u0 exactly
        net = MLP.init(MLPSpec(2, (4,), 1, seed=0))
        for k in range(len(net.weights)):
            net.weights[k] = np.zeros_like(net.weights[k])
        return Solution([net], [IVP1(0.0, "u0")], ("t",), bundle_layout())

    def test_recovers_parameter(self):
        sol = self.make_solution()
        data = [(t, 0.8) for t in np.linspace(0, 1, 10)]
        theta = fit_inverse(sol, data, {"u0": 1.2}, steps=300, lr=0.1)
        assert theta["u0"] == pytest.approx(0.8, abs=1e-3)

    def test_result_clipped_to_range(self):
        sol = self.make_solution()
        data = [(t, 9.0) for t in np.linspace(0, 1, 5)]
        theta = fit_inverse(sol, data, {"u0": 1.0}, steps=200, lr=0.5)
        assert theta["u0"] == pytest.approx(1.5, abs=1e-9)

    def test_zero_steps_returns_init(self):
        sol = self.make_solution()
        theta = fit_inverse(sol, [(0.5, 0.8)], {"u0": 1.1}, steps=0)
        assert theta["u0"] == 1.1

    def test_requires_observations_and_layout(self):
        sol = self.make_solution()
        with pytest.raises(ValueError, match="observation"):
            fit_inverse(sol, [], {"u0": 1.0})
        plain = Solution(sol.networks, sol.conditions, ("t",), None)
        with pytest.raises(ValueError, match="bundle"):
            fit_inverse(plain, [(0.0, 1.0)], {"u0": 1.0})
        with pytest.raises(ValueError, match="unknown parameter"):
            fit_inverse(sol, [(0.0, 1.0)], {"beta": 1.0})
