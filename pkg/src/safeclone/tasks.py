"""Task presets bundling model, world distribution, expert, and observations.

A task answers: which dynamics, how worlds are drawn, how initial states are
sampled, which expert demonstrates, and what the learned policy observes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dynamics, experts, worlds
from .errors import ContractError
from .observations import ObsSchema, make_obs_map
from .seeding import derive_seed, substream


@dataclass
class Task:
    name: str
    model: object
    gen_spec: worlds.GenerationSpec | None
    fixed_world: worlds.World | None
    expert_id: str
    expert_params: dict
    obs_schema: ObsSchema
    start: dict = field(default_factory=dict)

    def world_for(self, seed: int, index: int) -> worlds.World:
        if self.fixed_world is not None:
            return self.fixed_world
        return worlds.generate_world(derive_seed(seed, "world", index), self.gen_spec)

    def make_expert(self, world):
        return experts.make_expert(self.expert_id, self.model, world,
                                   **self.expert_params)

    def sample_start(self, world, rng) -> np.ndarray:
        if self.name.startswith("dubins"):
            lo, hi = self.start.get("y_range", (-2.0, 2.0))
            return np.array([0.0, rng.uniform(lo, hi), 0.0])
        lo, hi = self.start.get("y_range", (1.0, 4.0))
        return np.array([0.0, rng.uniform(lo, hi),
                         self.start.get("v_x", 1.0), 0.0])

    def obs_map(self):
        return make_obs_map(self.obs_schema)


def dubins_corridor_task(obs: str = "dubins_scan_goal") -> Task:
    """Corridor navigation with randomly generated obstacle fields."""
    return Task(
        name="dubins_corridor",
        model=dynamics.DubinsCar(dt=0.1, speed=1.0, omega_max=1.0),
        gen_spec=worlds.dubins_corridor_spec(),
        fixed_world=None,
        expert_id="dubins_mpc",
        expert_params={},
        obs_schema=ObsSchema(obs, {"n_rays": 8, "fov": 1.5 * np.pi,
                                   "max_range": 5.0} if obs == "dubins_scan_goal" else {}),
        start={"y_range": (-2.0, 2.0)},
    )


def quad_course_task() -> Task:
    """Cluttered quadrotor course: fly to the 4 m mark through cylinders."""
    return Task(
        name="quad_course",
        model=dynamics.PlanarQuadrotor(dt=0.1, tilt_max=0.1745),
        gen_spec=worlds.quad_course_spec(),
        fixed_world=None,
        expert_id="quad_mpc",
        expert_params={},
        obs_schema=ObsSchema("quad_scan_vel", {"n_rays": 8, "max_range": 5.0}),
        start={"y_range": (1.0, 4.0), "v_x": 1.0},
    )


def make_task(name: str, **overrides) -> Task:
    if name == "dubins_corridor":
        return dubins_corridor_task(**overrides)
    if name == "quad_course":
        return quad_course_task(**overrides)
    raise ContractError(f"unknown task {name!r}")


def sample_starts(task: Task, world, n: int, seed: int) -> np.ndarray:
    rng = substream(seed, "starts")
    return np.stack([task.sample_start(world, rng) for _ in range(n)])
