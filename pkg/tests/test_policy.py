import numpy as np
import pytest

from safeclone import policy as pol
from safeclone.errors import ContractError, FormatError, TrainingDivergedError
from safeclone.observations import ObsSchema
from safeclone.seeding import substream

SCHEMA = ObsSchema("dubins_state_goal")


def _random_policy(layer_sizes, bound, seed=0):
    return pol.init_policy(layer_sizes, bound, SCHEMA, substream(seed, "init"))


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        p = _random_policy([4, 8, 2], [1.0, 0.5])
        for w in p.weights:
            w[:] = 0.0
        assert np.array_equal(p.forward(np.ones(4)), [0.0, 0.0])

    def test_outputs_always_within_bounds(self):
        rng = substream(1, "draws")
        for trial in range(1000):
            p = _random_policy([3, 6, 1], [0.7], seed=trial)
            for w, b in zip(p.weights, p.biases):
                w *= rng.uniform(0.5, 20.0)
                b += rng.normal(0, 5.0, size=b.shape)
            out = p.forward(rng.normal(0, 10.0, size=3))
            assert np.all(np.abs(out) <= 0.7)

    def test_single_layer_is_scaled_tanh(self):
        p = pol.MlpPolicy(weights=[np.array([[1.0]])], biases=[np.array([0.0])],
                          action_bound=np.array([0.9]), obs_schema=SCHEMA)
        for x in (-2.0, -0.3, 0.0, 1.7):
            assert np.isclose(p.forward([x])[0], 0.9 * np.tanh(x), atol=1e-15)

    def test_dimension_mismatch(self):
        p = _random_policy([4, 8, 2], [1.0, 1.0])
        with pytest.raises(ContractError):
            p.forward(np.ones(5))

    def test_batched_forward_matches_loop(self):
        p = _random_policy([5, 7, 2], [1.0, 1.0], seed=3)
        rng = substream(3, "batch")
        X = rng.normal(size=(11, 5))
        batched = p.forward(X)
        looped = np.stack([p.forward(x) for x in X])
        assert np.allclose(batched, looped, atol=1e-15)


class TestGradients:
    def test_analytic_matches_central_differences(self):
        p = _random_policy([4, 5, 3, 2], [0.8, 1.2], seed=7)
        rng = substream(7, "data")
        X = rng.normal(size=(6, 4))
        Y = rng.uniform(-0.5, 0.5, size=(6, 2))
        loss, gw, gb = pol.loss_and_grads(p, X, Y)

        def numeric_loss():
            err = p.forward(X) - Y
            return float(np.mean(err * err))

        h = 1e-6
        for params, grads in ((p.weights, gw), (p.biases, gb)):
            for arr, grad in zip(params, grads):
                flat = arr.ravel()
                gflat = grad.ravel()
                for idx in range(flat.size):
                    keep = flat[idx]
                    flat[idx] = keep + h
                    up = numeric_loss()
                    flat[idx] = keep - h
                    down = numeric_loss()
                    flat[idx] = keep
                    fd = (up - down) / (2 * h)
                    denom = max(abs(fd), abs(gflat[idx]), 1e-8)
                    assert abs(fd - gflat[idx]) / denom < 1e-5

    def test_loss_is_mean_squared_error(self):
        p = _random_policy([2, 3, 1], [1.0], seed=9)
        X = np.array([[0.1, -0.2], [0.5, 0.3]])
        Y = np.array([[0.0], [0.2]])
        loss, _, _ = pol.loss_and_grads(p, X, Y)
        err = p.forward(X) - Y
        assert np.isclose(loss, np.mean(err * err), atol=1e-15)


class TestTraining:
    def test_memorizes_a_single_pair(self):
        X = np.tile([[0.3, -0.7, 0.1]], (64, 1))
        Y = np.tile([[0.25]], (64, 1))
        cfg = pol.TrainConfig(epochs=150, batch_size=16, hidden=(16,), seed=0)
        p, report = pol.train_arrays(X, Y, [1.0], SCHEMA, cfg)
        assert report.val_loss[-1] < 1e-4

    def test_training_is_deterministic(self):
        rng = substream(11, "data")
        X = rng.normal(size=(120, 4))
        Y = np.tanh(X[:, :1] - X[:, 1:2])
        cfg = pol.TrainConfig(epochs=20, batch_size=32, hidden=(8, 8), seed=5)
        p1, r1 = pol.train_arrays(X, Y, [1.0], SCHEMA, cfg)
        p2, r2 = pol.train_arrays(X, Y, [1.0], SCHEMA, cfg)
        for w1, w2 in zip(p1.weights, p2.weights):
            assert np.array_equal(w1, w2)
        assert r1.train_loss == r2.train_loss

    def test_divergence_reports_epoch(self):
        # infinite learning rate drives mixed-sign infinities into the matmul
        X = np.tile([[1.0, -1.0]], (32, 1))
        Y = np.tile([[0.5]], (32, 1))
        cfg = pol.TrainConfig(epochs=50, batch_size=8, hidden=(4,),
                              learning_rate=np.inf, seed=0)
        with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError) as exc:
            pol.train_arrays(X, Y, [1.0], SCHEMA, cfg)
        assert exc.value.epoch == 0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ContractError):
            pol.train_arrays(np.empty((0, 3)), np.empty((0, 1)), [1.0], SCHEMA,
                             pol.TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ContractError):
            pol.TrainConfig(validation_fraction=0.0)
        with pytest.raises(ContractError):
            pol.TrainConfig(batch_size=0)

    def test_fit_quality_on_clean_demonstrations(self):
        # goal-pursuit expert whose action is a smooth function of the
        # observation: clean labels must be reproduced on held-out states
        from safeclone import dynamics, guidance, mppi, tasks, worlds
        from safeclone.dynamics import wrap_angle

        class SmoothExpertTask(tasks.Task):
            def make_expert(self, world):
                gx, gy = world.goal.center

                def expert(state):
                    bearing = np.arctan2(gy - state[1], gx - state[0])
                    err = float(wrap_angle(bearing - state[2]))
                    return np.clip(np.array([1.5 * err]), -1.0, 1.0)

                return expert

        world = worlds.World(np.empty((0, 2)), np.empty(0),
                             goal=worlds.DiskGoal((10.0, 0.0), 0.5),
                             bounds=((-1.0, 11.0), (-4.0, 4.0)))
        task = SmoothExpertTask(
            name="dubins_smooth", model=dynamics.DubinsCar(), gen_spec=None,
            fixed_world=world, expert_id="dubins_mpc", expert_params={},
            obs_schema=SCHEMA, start={"y_range": (-2.5, 2.5)})
        cfg = guidance.GuidanceConfig(
            d_max_ratio=0.0,
            mppi=mppi.MppiConfig(num_samples=16, horizon=4, elite_k=2,
                                 input_bound=[1.0]),
            seed=13)
        dataset = guidance.collect_noisy(task, cfg, 8, 150, "gaussian", 0.0)
        trained, report = pol.train(
            dataset, task.obs_schema,
            pol.TrainConfig(epochs=150, batch_size=64, seed=1))
        assert report.action_variance > 1e-4
        assert report.val_loss[-1] < 0.1 * report.action_variance


class TestSaveLoad:
    def test_round_trip_outputs_identical(self):
        p = _random_policy([6, 16, 16, 2], [0.4, 0.4], seed=21)
        back = pol.load(pol.save(p))
        rng = substream(21, "probe")
        X = rng.normal(size=(100, 6))
        assert np.array_equal(back.forward(X), p.forward(X))
        assert back.layer_sizes == p.layer_sizes
        assert back.obs_schema == p.obs_schema

    def test_truncated_payload_rejected(self):
        blob = pol.save(_random_policy([3, 4, 1], [1.0]))
        with pytest.raises(FormatError):
            pol.load(blob[:-17])

    def test_garbage_header_rejected(self):
        with pytest.raises(FormatError):
            pol.load(b"\x00\x01\x02 no header here")
        with pytest.raises(FormatError):
            pol.load(b'{"format": "something-else"}\n')

    def test_observation_size_mismatch_rejected(self):
        blob = pol.save(_random_policy([3, 4, 1], [1.0]))
        with pytest.raises(FormatError):
            pol.load(blob, expect_obs_dim=5)
        assert pol.load(blob, expect_obs_dim=3).layer_sizes[0] == 3

    def test_parameter_count(self):
        p = _random_policy([4, 8, 2], [1.0, 1.0])
        assert p.num_params == (4 + 1) * 8 + (8 + 1) * 2
