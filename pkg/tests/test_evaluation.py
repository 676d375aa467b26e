import numpy as np
import pytest

from safeclone import evaluation as ev
from safeclone import mppi, policy as pol, worlds
from safeclone.errors import ContractError, SolverFailedError
from safeclone.observations import ObsSchema
from safeclone.seeding import substream


def straight_controller(state):
    return np.array([0.0])


class TestRolloutPolicy:
    def test_unobstructed_expert_reaches_goal(self, dubins):
        from safeclone.tasks import dubins_corridor_task

        task = dubins_corridor_task()
        world = worlds.World(np.empty((0, 2)), np.empty(0),
                             goal=worlds.DiskGoal((10.0, 0.0), 0.5),
                             bounds=((-1.0, 11.0), (-4.0, 4.0)))
        expert = task.make_expert(world)
        r = ev.rollout_policy(dubins, world, expert, [0.0, 1.0, 0.0], 400)
        assert r.status == "goal"
        assert r.min_clearance == world.free_distance

    def test_straight_into_obstacle_collides_at_known_step(self, dubins):
        world = worlds.World([(1.0, 0.0)], [0.5], bounds=((-2, 4), (-2, 2)))
        r = ev.rollout_policy(dubins, world, straight_controller,
                              [0.0, 0.0, 0.0], 50)
        assert r.status == "collision"
        # boundary at x = 0.5 is reached on exactly the fifth 0.1 m step
        assert r.steps == 5
        assert r.min_clearance <= 0.0

    def test_zero_step_budget_times_out(self, dubins, single_obstacle_world):
        r = ev.rollout_policy(dubins, single_obstacle_world, straight_controller,
                              [-3.0, 0.0, 0.0], 0)
        assert r.status == "timeout"
        assert r.trajectory.shape == (1, 3)
        assert r.actions.shape == (0, 1)

    def test_colliding_start_rejected(self, dubins, single_obstacle_world):
        with pytest.raises(ContractError):
            ev.rollout_policy(dubins, single_obstacle_world, straight_controller,
                              [0.0, 0.0, 0.0], 10)

    def test_status_matches_clearance_sign(self, dubins):
        rng = substream(17, "consistency")
        spec = worlds.dubins_corridor_spec()
        for i in range(10):
            world = worlds.generate_world(int(rng.integers(1e9)), spec)
            r = ev.rollout_policy(dubins, world, straight_controller,
                                  [0.0, rng.uniform(-2, 2), 0.0], 120)
            assert (r.status == "collision") == (r.min_clearance <= 0.0)


class TestSafetyFilter:
    def _filter(self, model, world, horizon=30, seed=0):
        backup = mppi.MppiConfig(num_samples=128, horizon=max(horizon, 1),
                                 elite_k=8, input_bound=model.control_bounds)
        return ev.SafetyFilter(model, world, ev.FilterConfig(
            horizon=horizon, backup=backup, seed=seed))

    def test_passthrough_in_open_space(self, dubins):
        world = worlds.World([(100.0, 100.0)], [1.0], bounds=((-5, 205), (-5, 205)))
        f = self._filter(dubins, world)
        action, intervened, degraded = f.apply([0.0, 0.0, 0.0],
                                               np.array([0.1]),
                                               straight_controller)
        assert not intervened and not degraded
        assert np.array_equal(action, [0.1])

    def test_intervenes_when_heading_into_obstacle(self, dubins):
        world = worlds.World([(1.5, 0.0)], [0.5], bounds=((-2, 4), (-2, 2)))
        f = self._filter(dubins, world, horizon=50)
        action, intervened, degraded = f.apply([0.0, 0.0, 0.0],
                                               np.array([0.0]),
                                               straight_controller)
        assert intervened and not degraded

    def test_zero_horizon_always_passes_through(self, dubins):
        world = worlds.World([(0.6, 0.0)], [0.5], bounds=((-2, 4), (-2, 2)))
        f = self._filter(dubins, world, horizon=0)
        action, intervened, _ = f.apply([0.0, 0.0, 0.0], np.array([0.0]),
                                        straight_controller)
        assert not intervened and np.array_equal(action, [0.0])

    def test_filtered_rollout_identical_without_obstacles(self, dubins):
        world = worlds.World(np.empty((0, 2)), np.empty(0),
                             goal=worlds.DiskGoal((5.0, 0.0), 0.3),
                             bounds=((-1, 6), (-3, 3)))
        f = self._filter(dubins, world)
        plain = ev.rollout_policy(dubins, world, straight_controller,
                                  [0.0, 0.0, 0.0], 60)
        filtered = ev.rollout_policy(dubins, world, straight_controller,
                                     [0.0, 0.0, 0.0], 60, f)
        assert filtered.filter_interventions == 0
        assert np.array_equal(plain.trajectory, filtered.trajectory)

    def test_filter_prevents_scripted_collision(self, dubins):
        # straight nominal into an obstacle 2.5 m ahead with ample lead time
        world = worlds.World([(2.5, 0.0)], [0.6], bounds=((-2, 6), (-3, 3)))
        f = self._filter(dubins, world, horizon=30, seed=3)
        r = ev.rollout_policy(dubins, world, straight_controller,
                              [0.0, 0.0, 0.0], 80, f)
        assert r.status != "collision"
        assert r.filter_interventions > 0

    def test_backup_failure_degrades_to_nominal(self, dubins, monkeypatch):
        world = worlds.World([(1.0, 0.0)], [0.5], bounds=((-2, 4), (-2, 2)))
        f = self._filter(dubins, world, horizon=20)

        def broken_solve(*args, **kwargs):
            raise SolverFailedError("no usable rollouts")

        monkeypatch.setattr(ev.mppi, "solve", broken_solve)
        action, intervened, degraded = f.apply([0.0, 0.0, 0.0], np.array([0.0]),
                                               straight_controller)
        assert degraded and not intervened
        assert np.array_equal(action, [0.0])

    def test_one_shot_wrapper(self, dubins):
        world = worlds.World([(1.5, 0.0)], [0.5], bounds=((-2, 4), (-2, 2)))
        action, intervened = ev.safety_filter(dubins, world, [0.0, 0.0, 0.0],
                                              np.array([0.0]), horizon=50,
                                              controller=straight_controller)
        assert intervened


class TestExperiments:
    def _tiny_spec(self, arms, seeds=(0,), rollouts=2):
        return ev.ExperimentSpec(
            task_name="dubins_corridor",
            arms=arms,
            num_demos=2, traj_len=40,
            train_seeds=seeds,
            n_eval_rollouts=rollouts,
            guidance_mppi=mppi.MppiConfig(num_samples=24, horizon=8, elite_k=4,
                                          input_bound=[0.5]),
            train=pol.TrainConfig(epochs=5, batch_size=32, hidden=(8,)),
            seed=0)

    def test_single_condition_single_rollout(self):
        spec = self._tiny_spec((ev.ArmSpec("bc", "none"),), rollouts=1)
        report = ev.run_experiment(spec)
        assert len(report.conditions) == 1
        assert len(report.conditions[0].rollouts) == 1
        assert report.conditions[0].rollouts[0]["status"] in (
            "goal", "collision", "timeout")
        agg = report.aggregates["bc"]
        total = (agg["collision_rate"]["mean"] + agg["success_rate"]["mean"]
                 + agg["timeout_rate"]["mean"])
        assert np.isclose(total, 1.0)

    def test_seed_determinism(self):
        spec = self._tiny_spec((ev.ArmSpec("adv", "adversarial", d_max_ratio=0.4),))
        a = ev.run_experiment(spec)
        b = ev.run_experiment(spec)
        assert a.to_json() == b.to_json()

    def test_metric_rates_sum_to_one_per_condition(self):
        spec = self._tiny_spec((ev.ArmSpec("bc", "none"),), seeds=(0, 1),
                               rollouts=3)
        report = ev.run_experiment(spec)
        for c in report.conditions:
            assert np.isclose(c.collision_rate + c.success_rate + c.timeout_rate,
                              1.0)

    def test_matched_noise_energy(self):
        g, u = ev.matched_noise_arms(0.5)
        # E|N(0, s)| = s sqrt(2/pi) and E|U(-a, a)| = a/2 both equal 0.25
        assert np.isclose(g.noise_scale * np.sqrt(2 / np.pi), 0.25)
        assert np.isclose(u.noise_scale / 2, 0.25)

    def test_policies_shared_across_filter_variants(self):
        # same collection signature trains once; rollouts differ via filter
        spec = ev.ExperimentSpec(
            task_name="quad_course",
            arms=(ev.ArmSpec("bc", "none"),
                  ev.ArmSpec("bc_filtered", "none", filtered=True)),
            num_demos=2, traj_len=30,
            train_seeds=(0,),
            n_eval_rollouts=2,
            guidance_mppi=mppi.MppiConfig(num_samples=24, horizon=8, elite_k=4,
                                          input_bound=[0.1745, 0.1745]),
            train=pol.TrainConfig(epochs=5, batch_size=32, hidden=(8,)),
            filter=ev.FilterConfig(horizon=10),
            seed=0)
        report = ev.run_experiment(spec)
        assert {c.arm for c in report.conditions} == {"bc", "bc_filtered"}
