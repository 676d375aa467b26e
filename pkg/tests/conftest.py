import numpy as np
import pytest

from safeclone import dynamics, tasks, worlds
from safeclone.observations import ObsSchema


@pytest.fixture
def dubins():
    return dynamics.DubinsCar(dt=0.1, speed=1.0, omega_max=1.0)


@pytest.fixture
def quad():
    return dynamics.PlanarQuadrotor(dt=0.1, tilt_max=0.1745)


@pytest.fixture
def single_obstacle_world():
    return worlds.World(centers=[(0.0, 0.0)], radii=[1.0],
                        bounds=((-4.0, 4.0), (-4.0, 4.0)))


@pytest.fixture
def verification_world():
    return worlds.two_obstacle_world()


class StubDubinsTask(tasks.Task):
    """Dubins task with a trivial constant expert; keeps collection mechanics
    real while making expert queries free."""

    def make_expert(self, world):
        bound = self.model.control_bounds

        def expert(state):
            return np.clip(np.array([0.1]), -bound, bound)

        expert.control_bounds = bound
        return expert


@pytest.fixture
def stub_task():
    # empty world with a far goal: rollouts run to the full horizon
    world = worlds.World(np.empty((0, 2)), np.empty(0),
                         goal=worlds.DiskGoal((1e6, 0.0), 0.5),
                         bounds=((-10.0, 10.0), (-10.0, 10.0)))
    return StubDubinsTask(
        name="dubins_stub",
        model=dynamics.DubinsCar(),
        gen_spec=None,
        fixed_world=world,
        expert_id="dubins_mpc",
        expert_params={},
        obs_schema=ObsSchema("dubins_state_goal"),
        start={"y_range": (-2.0, 2.0)},
    )
