import numpy as np
import pytest
import scipy.stats

from safeclone import data, guidance, mppi
from safeclone.errors import ContractError
from safeclone.guidance import (
    GuidanceConfig,
    bang_bang_disturbance,
    collect,
    collect_noisy,
    guided_expert_action,
    optimal_disturbance,
)


def _small_mppi(n_u=1):
    return mppi.MppiConfig(num_samples=32, horizon=8, elite_k=4,
                           input_bound=np.full(n_u, 0.5), seed=0)


class TestBangBang:
    def test_positive_input_opposed(self):
        assert np.array_equal(bang_bang_disturbance([0.3], [0.4]), [-0.4])

    def test_negative_input_opposed(self):
        assert np.array_equal(bang_bang_disturbance([-0.3], [0.4]), [0.4])

    def test_zero_bound_gives_zero(self):
        assert np.array_equal(bang_bang_disturbance([0.3], [0.0]), [-0.0])

    def test_zero_input_tie_break(self):
        assert np.array_equal(bang_bang_disturbance([0.0], [0.4]), [0.0])

    def test_componentwise(self):
        d = bang_bang_disturbance([0.2, -0.1], [0.3, 0.3])
        assert np.array_equal(d, [-0.3, 0.3])


class TestOptimalDisturbance:
    def test_zero_bound_returns_zero(self, dubins, verification_world):
        d = optimal_disturbance(dubins, verification_world, [0.0, 0.0, 0.0],
                                [0.0], _small_mppi())
        assert np.array_equal(d, [0.0])

    def test_magnitude_is_exactly_the_bound(self, dubins, verification_world):
        d = optimal_disturbance(dubins, verification_world, [0.0, -1.0, 0.0],
                                [0.25], _small_mppi())
        assert abs(d[0]) == 0.25

    def test_bound_at_or_above_control_limit_rejected(self, dubins,
                                                      verification_world):
        with pytest.raises(ContractError):
            optimal_disturbance(dubins, verification_world, [0.0, 0.0, 0.0],
                                [1.0], _small_mppi())


class TestGuidedAction:
    def test_plain_addition(self):
        expert = lambda s: np.array([0.2])
        out = guided_expert_action(expert, None, np.array([-0.5]), [1.0])
        assert np.allclose(out, [-0.3])

    def test_clamped_to_actuator_bound(self):
        expert = lambda s: np.array([0.9])
        out = guided_expert_action(expert, None, np.array([0.5]), [1.0])
        assert np.array_equal(out, [1.0])

    def test_zero_disturbance_is_identity(self):
        expert = lambda s: np.array([0.37])
        out = guided_expert_action(expert, None, np.array([0.0]), [1.0])
        assert np.array_equal(out, [0.37])


class TestCollect:
    def test_zero_bound_degenerates_to_plain_collection(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=3)
        adversarial = collect(stub_task, cfg, num_demos=3, traj_len=15)
        plain = collect_noisy(stub_task, cfg, 3, 15, "gaussian", 0.0)
        for a, b in zip(adversarial.demos, plain.demos):
            assert np.array_equal(a.states, b.states)
            assert np.array_equal(a.expert_actions, b.expert_actions)
            assert np.array_equal(a.disturbances, b.disturbances)
            assert a.status == b.status

    def test_clean_labels_reproducible_post_hoc(self, dubins):
        from safeclone.tasks import dubins_corridor_task

        task = dubins_corridor_task()
        cfg = GuidanceConfig(d_max_ratio=0.5, mppi=_small_mppi(), seed=1)
        dataset = collect(task, cfg, num_demos=2, traj_len=25)
        for demo in dataset.demos:
            expert = task.make_expert(demo.world)
            for state, action in zip(demo.states, demo.expert_actions):
                assert np.array_equal(expert(state), action)

    def test_bang_bang_magnitudes_match_sampled_bound(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.6, mppi=_small_mppi(), seed=2)
        dataset = collect(stub_task, cfg, num_demos=3, traj_len=20)
        u_max = stub_task.model.control_bounds
        for demo in dataset.demos:
            expected = demo.d_bar[:, None] * u_max
            hit = np.abs(demo.disturbances) == expected
            zero = demo.disturbances == 0.0
            assert np.all(hit | zero)
            assert np.all(demo.d_bar < 0.6)

    def test_determinism(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.4, mppi=_small_mppi(), seed=9)
        a = collect(stub_task, cfg, 2, 10)
        b = collect(stub_task, cfg, 2, 10)
        for da, db in zip(a.demos, b.demos):
            assert np.array_equal(da.states, db.states)
            assert np.array_equal(da.disturbances, db.disturbances)

    def test_early_termination_status(self, dubins):
        from safeclone.tasks import dubins_corridor_task

        task = dubins_corridor_task()
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=4)
        dataset = collect_noisy(task, cfg, 3, 500, "gaussian", 0.0)
        assert all(d.status in data.STATUSES for d in dataset.demos)
        assert any(d.status == "goal" for d in dataset.demos)
        for demo in dataset.demos:
            if demo.status == "goal":
                assert len(demo) < 500

    def test_invalid_ratio_rejected(self):
        with pytest.raises(ContractError):
            GuidanceConfig(d_max_ratio=1.0, mppi=_small_mppi())

    def test_invalid_sizes_rejected(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.1, mppi=_small_mppi(), seed=0)
        with pytest.raises(ContractError):
            collect(stub_task, cfg, 0, 5)
        with pytest.raises(ContractError):
            collect(stub_task, cfg, 1, 0)


class TestCollectNoisy:
    def test_zero_sigma_equals_plain(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=5)
        a = collect_noisy(stub_task, cfg, 2, 12, "gaussian", 0.0)
        assert np.all(np.concatenate([d.disturbances for d in a.demos]) == 0.0)

    def test_uniform_histogram_is_flat(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=6)
        dataset = collect_noisy(stub_task, cfg, 20, 500, "uniform", 0.5)
        d = np.concatenate([demo.disturbances[:, 0] for demo in dataset.demos])
        assert len(d) == 10_000
        counts, _ = np.histogram(d, bins=20, range=(-0.5, 0.5))
        _, p = scipy.stats.chisquare(counts)
        assert p > 1e-3

    def test_gaussian_mean_unbiased(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=7)
        sigma = 0.3
        dataset = collect_noisy(stub_task, cfg, 20, 500, "gaussian", sigma)
        d = np.concatenate([demo.disturbances[:, 0] for demo in dataset.demos])
        assert abs(d.mean()) <= 3 * sigma / np.sqrt(len(d))

    def test_unknown_kind_rejected(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=0)
        with pytest.raises(ContractError):
            collect_noisy(stub_task, cfg, 1, 5, "salt-and-pepper", 0.1)


class TestDatasetPersistence:
    def test_csv_manifest_round_trip(self, tmp_path, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.3, mppi=_small_mppi(), seed=8)
        dataset = collect(stub_task, cfg, 3, 10)
        data.save_dataset(dataset, tmp_path / "d.csv", tmp_path / "m.json")
        back = data.load_dataset(tmp_path / "d.csv", tmp_path / "m.json")
        assert back.num_records == dataset.num_records
        assert back.model_params == dataset.model_params
        for a, b in zip(dataset.demos, back.demos):
            assert np.array_equal(a.states, b.states)
            assert np.array_equal(a.expert_actions, b.expert_actions)
            assert np.array_equal(a.disturbances, b.disturbances)
            assert np.array_equal(a.d_bar, b.d_bar)
            assert a.status == b.status
            assert np.array_equal(a.world.centers, b.world.centers)

    def test_status_counts(self, stub_task):
        cfg = GuidanceConfig(d_max_ratio=0.0, mppi=_small_mppi(), seed=8)
        dataset = collect_noisy(stub_task, cfg, 4, 5, "gaussian", 0.0)
        counts = dataset.status_counts()
        assert counts["timeout"] == 4  # stub world has an unreachable goal
