"""Adversarial disturbance extraction and guided data collection.

The adversary solves the shrunken-bound safety maximization at the current
state, reads the sign of the first optimal input, and applies the opposing
bang-bang disturbance to the expert's action. Recorded labels stay the clean
expert actions; only the executed action carries the disturbance.
"""

from dataclasses import dataclass

import numpy as np

from . import mppi
from .data import Dataset, Demonstration
from .errors import ContractError
from .seeding import derive_seed, substream


@dataclass(frozen=True)
class GuidanceConfig:
    d_max_ratio: float  # disturbance bound ceiling, as a fraction of u_max
    mppi: mppi.MppiConfig
    per_step_resample: bool = True  # ratio ~ U(0, d_max_ratio) each step; else fixed
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.d_max_ratio < 1.0:
            raise ContractError("d_max_ratio must lie in [0, 1)")

    def to_json(self) -> dict:
        return {"d_max_ratio": self.d_max_ratio, "mppi": self.mppi.to_json(),
                "per_step_resample": self.per_step_resample, "seed": self.seed}


def bang_bang_disturbance(first_input, d_bar) -> np.ndarray:
    """Opposing bang-bang disturbance: -d_bar where w > 0, +d_bar where w < 0,
    zero where the input is exactly zero (no safety-relevant direction)."""
    return -np.asarray(d_bar, dtype=float) * np.sign(first_input)


def optimal_disturbance(model, world, state, d_bar, config: mppi.MppiConfig,
                        warm_start=None) -> np.ndarray:
    """Worst-case disturbance at ``state`` for a per-component bound ``d_bar``.

    Solves the combined-input problem with bound u_max - d_bar and recovers
    the bang-bang disturbance from the first input's sign.
    """
    d_bar = np.atleast_1d(np.asarray(d_bar, dtype=float))
    u_max = model.control_bounds
    if np.any(d_bar < 0) or np.any(d_bar >= u_max):
        raise ContractError("d_bar must lie in [0, u_max) per component")
    cfg = config.with_bound(u_max - d_bar)
    result = mppi.solve(model, world, state, cfg, warm_start=warm_start)
    return bang_bang_disturbance(mppi.extract_first_input(result), d_bar)


def guided_expert_action(expert, state, disturbance, u_max) -> np.ndarray:
    """Expert action plus disturbance, clamped to the actuator bound.

    The clamp applies to execution only; the clean expert action is what a
    dataset records.
    """
    u_max = np.asarray(u_max, dtype=float)
    return np.clip(expert(state) + disturbance, -u_max, u_max)


def _collect(task, config: GuidanceConfig, num_demos: int, traj_len: int,
             method: str, noise_scale: float, on_diagnostics=None) -> Dataset:
    if num_demos < 1 or traj_len < 1:
        raise ContractError("num_demos and traj_len must be >= 1")
    if method not in ("adversarial", "gaussian", "uniform"):
        raise ContractError(f"unknown collection method {method!r}")
    model = task.model
    u_max = model.control_bounds
    demos = []
    for k in range(num_demos):
        world = task.world_for(config.seed, k)
        expert = task.make_expert(world)
        rng = substream(config.seed, "demo", k)
        x = task.sample_start(world, rng)
        states, actions, dists, bounds = [], [], [], []
        status = "timeout"
        warm = None
        for t in range(traj_len):
            action = expert(x)
            if method == "adversarial":
                ratio = (rng.uniform(0.0, config.d_max_ratio)
                         if config.per_step_resample else config.d_max_ratio)
                d_bar = ratio * u_max
                cfg = config.mppi.with_bound(
                    u_max - d_bar, seed=derive_seed(config.seed, "mppi", k, t))
                result = mppi.solve(model, world, x, cfg, warm_start=warm,
                                    on_diagnostics=on_diagnostics)
                warm = mppi.shift_sequence(result.optimal_sequence)
                d = bang_bang_disturbance(mppi.extract_first_input(result), d_bar)
                bound_record = ratio
            elif method == "gaussian":
                d = rng.normal(0.0, noise_scale * u_max, size=model.n_u)
                bound_record = noise_scale
            else:
                d = rng.uniform(-noise_scale * u_max, noise_scale * u_max,
                                size=model.n_u)
                bound_record = noise_scale
            states.append(x)
            actions.append(action)
            dists.append(d)
            bounds.append(bound_record)
            executed = np.clip(action + d, -u_max, u_max)
            x = model.step(x, executed)
            if bool(world.is_collision(model.positions(x))):
                status = "collision"
                break
            if bool(world.is_at_goal(model.positions(x))):
                status = "goal"
                break
        demos.append(Demonstration(
            demo_id=k,
            states=np.asarray(states),
            expert_actions=np.asarray(actions),
            disturbances=np.asarray(dists),
            d_bar=np.asarray(bounds, dtype=float),
            status=status,
            world=world,
        ))
    meta = {"method": method, "config": config.to_json(),
            "noise_scale": noise_scale, "num_demos": num_demos,
            "traj_len": traj_len, "task": task.name}
    return Dataset(demos=demos, model_params=model.params(), guidance_meta=meta)


def collect(task, config: GuidanceConfig, num_demos: int, traj_len: int,
            on_diagnostics=None) -> Dataset:
    """Guided data collection: per step, sample the disturbance bound, solve
    for the worst-case disturbance, record the clean expert pair, and step the
    system under the disturbed action. Deterministic given ``config.seed``."""
    return _collect(task, config, num_demos, traj_len, "adversarial", 0.0,
                    on_diagnostics=on_diagnostics)


def collect_noisy(task, config: GuidanceConfig, num_demos: int, traj_len: int,
                  kind: str, scale_ratio: float, on_diagnostics=None) -> Dataset:
    """Noise-injection baselines: disturbance drawn from a Gaussian (sigma =
    scale_ratio * u_max) or a symmetric uniform (half-width scale_ratio *
    u_max) instead of the adversarial rule. Labels stay clean."""
    return _collect(task, config, num_demos, traj_len, kind, scale_ratio,
                    on_diagnostics=on_diagnostics)
