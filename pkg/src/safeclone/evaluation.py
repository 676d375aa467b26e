"""Rollout harness, safety metrics, predictive safety filter, experiments.

An experiment crosses collection methods with training seeds, trains a policy
per cell, and evaluates every policy on a shared bank of held-out worlds and
starts, so arm-to-arm comparisons are paired.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import guidance, mppi, policy as policy_mod
from .data import Dataset
from .errors import ContractError, SolverFailedError
from .seeding import derive_seed, substream

log = logging.getLogger(__name__)


@dataclass
class RolloutResult:
    trajectory: np.ndarray  # (T+1, n_x)
    actions: np.ndarray  # (T, n_u)
    status: str  # goal | collision | timeout
    min_clearance: float  # min over visited states of the signed distance
    filter_interventions: int = 0
    diverged: bool = False

    @property
    def steps(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class FilterConfig:
    horizon: int = 50  # prediction steps; 0 disables intervention entirely
    backup: mppi.MppiConfig | None = None
    requery_policy: bool = True  # predict policy-in-the-loop; else hold nominal
    seed: int = 0

    def to_json(self) -> dict:
        return {"horizon": self.horizon,
                "backup": None if self.backup is None else self.backup.to_json(),
                "requery_policy": self.requery_policy, "seed": self.seed}


class SafetyFilter:
    """Predictive filter: forward-simulate the nominal behavior; if a collision
    is predicted within the horizon, substitute a clearance-maximizing MPC
    action computed at the full control bound."""

    def __init__(self, model, world, config: FilterConfig):
        self.model = model
        self.world = world
        self.config = config
        backup = config.backup or mppi.MppiConfig(
            num_samples=256, horizon=max(config.horizon, 1), elite_k=16,
            input_bound=model.control_bounds)
        self.backup = replace(backup, input_bound=model.control_bounds,
                              sampling_std=None)

    def predicts_collision(self, state, nominal, controller=None) -> bool:
        x = np.asarray(state, dtype=float)
        action = np.asarray(nominal, dtype=float)
        for _ in range(self.config.horizon):
            x = self.model.step(x, action)
            if bool(self.world.is_collision(self.model.positions(x))):
                return True
            if self.config.requery_policy and controller is not None:
                action = controller(x)
        return False

    def apply(self, state, nominal, controller=None, step_index: int = 0):
        """Returns (action, intervened, degraded)."""
        if self.config.horizon == 0:
            return nominal, False, False
        if not self.predicts_collision(state, nominal, controller):
            return nominal, False, False
        cfg = replace(self.backup,
                      seed=derive_seed(self.config.seed, "backup", step_index))
        try:
            result = mppi.solve(self.model, self.world, state, cfg)
        except SolverFailedError:
            log.warning("safety filter backup solve failed; passing nominal through")
            return nominal, False, True
        return mppi.extract_first_input(result), True, False


def safety_filter(model, world, state, nominal, horizon: int,
                  backup_config: mppi.MppiConfig | None = None, controller=None,
                  seed: int = 0):
    """One-shot filter decision: (action, intervened flag).

    Convenience wrapper over SafetyFilter for single queries; rollouts should
    construct the filter once and reuse it.
    """
    f = SafetyFilter(model, world,
                     FilterConfig(horizon=horizon, backup=backup_config, seed=seed))
    action, intervened, _ = f.apply(state, nominal, controller)
    return action, intervened


def rollout_policy(model, world, controller, x0, max_steps: int,
                   safety_filter: SafetyFilter | None = None) -> RolloutResult:
    """Step under ``controller`` until goal, collision, or the step budget.

    ``controller`` is any deterministic state -> action map. A supplied filter
    wraps every nominal action before execution.
    """
    x = np.asarray(x0, dtype=float)
    if bool(world.is_collision(model.positions(x))):
        raise ContractError("rollout must start collision-free")
    trajectory = [x]
    actions = []
    min_clearance = float(world.signed_distance(model.positions(x)))
    interventions = 0
    status = "timeout"
    diverged = False
    for t in range(max_steps):
        action = np.asarray(controller(x), dtype=float)
        if safety_filter is not None:
            action, intervened, _ = safety_filter.apply(x, action, controller, t)
            interventions += int(intervened)
        x = model.step(x, action)
        actions.append(action)
        trajectory.append(x)
        if not np.all(np.isfinite(x)):
            status = "collision"
            diverged = True
            min_clearance = -np.inf
            break
        min_clearance = min(min_clearance,
                            float(world.signed_distance(model.positions(x))))
        if bool(world.is_collision(model.positions(x))):
            status = "collision"
            break
        if bool(world.is_at_goal(model.positions(x))):
            status = "goal"
            break
    return RolloutResult(
        trajectory=np.asarray(trajectory), actions=np.asarray(actions).reshape(-1, model.n_u),
        status=status, min_clearance=min_clearance,
        filter_interventions=interventions, diverged=diverged)


def policy_controller(policy: policy_mod.MlpPolicy, obs_map, world):
    """Adapter turning a trained policy into a state -> action controller."""

    def controller(state):
        return policy.forward(obs_map(state, world))

    return controller


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArmSpec:
    """One collection condition: how disturbances are injected during
    demonstration collection, and whether evaluation wraps the policy in the
    predictive safety filter."""

    name: str
    method: str  # adversarial | gaussian | uniform | none
    d_max_ratio: float = 0.0  # adversarial bound ceiling (fraction of u_max)
    noise_scale: float = 0.0  # sigma or half-width (fraction of u_max)
    filtered: bool = False

    def collection_key(self) -> tuple:
        return (self.method, round(self.d_max_ratio, 12), round(self.noise_scale, 12))

    def to_json(self) -> dict:
        return {"name": self.name, "method": self.method,
                "d_max_ratio": self.d_max_ratio, "noise_scale": self.noise_scale,
                "filtered": self.filtered}


def matched_noise_arms(d_max_ratio: float) -> tuple[ArmSpec, ArmSpec]:
    """Gaussian and uniform baselines whose expected |d| matches the
    adversarial arm: E|d| = d_max_ratio * u_max / 2 per component."""
    target = d_max_ratio / 2.0
    sigma = target * np.sqrt(np.pi / 2.0)  # E|N(0, s)| = s sqrt(2/pi)
    half_width = 2.0 * target  # E|U(-a, a)| = a / 2
    return (ArmSpec("gaussian", "gaussian", noise_scale=float(sigma)),
            ArmSpec("uniform", "uniform", noise_scale=float(half_width)))


@dataclass(frozen=True)
class ExperimentSpec:
    task_name: str
    arms: tuple
    num_demos: int = 40
    traj_len: int = 150
    train_seeds: tuple = (0, 1, 2, 3, 4)
    n_eval_rollouts: int = 20
    guidance_mppi: mppi.MppiConfig = None
    train: policy_mod.TrainConfig = None
    filter: FilterConfig | None = None
    timeout_factor: float = 3.0
    eval_seed: int = 9090
    seed: int = 0
    task_overrides: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "task": self.task_name,
            "arms": [a.to_json() for a in self.arms],
            "num_demos": self.num_demos,
            "traj_len": self.traj_len,
            "train_seeds": list(self.train_seeds),
            "n_eval_rollouts": self.n_eval_rollouts,
            "guidance_mppi": self.guidance_mppi.to_json(),
            "train": self.train.to_json(),
            "filter": None if self.filter is None else self.filter.to_json(),
            "timeout_factor": self.timeout_factor,
            "eval_seed": self.eval_seed,
            "seed": self.seed,
            "task_overrides": dict(self.task_overrides),
        }


@dataclass
class ConditionResult:
    arm: str
    train_seed: int
    collision_rate: float
    success_rate: float
    timeout_rate: float
    mean_min_clearance: float
    mean_steps_to_goal: float
    rollouts: list = field(default_factory=list)  # per-rollout dicts


@dataclass
class ExperimentReport:
    spec: dict
    conditions: list  # ConditionResult
    aggregates: dict  # arm -> {metric: {mean, std}}
    timeout_steps: int
    config_fingerprint: str = ""

    def arm_mean(self, arm: str, metric: str) -> float:
        return self.aggregates[arm][metric]["mean"]

    def to_json(self) -> dict:
        return {
            "spec": self.spec,
            "timeout_steps": self.timeout_steps,
            "config_fingerprint": self.config_fingerprint,
            "aggregates": self.aggregates,
            "conditions": [
                {"arm": c.arm, "train_seed": c.train_seed,
                 "collision_rate": _json_num(c.collision_rate),
                 "success_rate": _json_num(c.success_rate),
                 "timeout_rate": _json_num(c.timeout_rate),
                 "mean_min_clearance": _json_num(c.mean_min_clearance),
                 "mean_steps_to_goal": _json_num(c.mean_steps_to_goal)}
                for c in self.conditions
            ],
        }


def _json_num(value):
    value = float(value)
    return value if np.isfinite(value) else None


def summarize_rollouts(results) -> dict:
    n = len(results)
    statuses = [r.status for r in results]
    goal_steps = [r.steps for r in results if r.status == "goal"]
    return {
        "collision_rate": statuses.count("collision") / n,
        "success_rate": statuses.count("goal") / n,
        "timeout_rate": statuses.count("timeout") / n,
        "mean_min_clearance": float(np.mean([r.min_clearance for r in results])),
        "mean_steps_to_goal": float(np.mean(goal_steps)) if goal_steps else float("nan"),
    }


def _collect_for_arm(task, arm: ArmSpec, spec: ExperimentSpec, seed: int) -> Dataset:
    cfg = guidance.GuidanceConfig(
        d_max_ratio=arm.d_max_ratio if arm.method == "adversarial" else 0.0,
        mppi=spec.guidance_mppi, seed=seed)
    if arm.method == "adversarial":
        return guidance.collect(task, cfg, spec.num_demos, spec.traj_len)
    if arm.method == "none":
        return guidance.collect_noisy(task, cfg, spec.num_demos, spec.traj_len,
                                      "gaussian", 0.0)
    return guidance.collect_noisy(task, cfg, spec.num_demos, spec.traj_len,
                                  arm.method, arm.noise_scale)


def run_experiment(spec: ExperimentSpec, on_progress=None) -> ExperimentReport:
    """Full pipeline for every (arm, training seed) cell; deterministic.

    Evaluation worlds and starts come from a seed range disjoint from the
    collection seeds and are shared across all cells. The step budget is
    ``timeout_factor`` times the expert's median steps-to-goal on those
    worlds.
    """
    from .tasks import make_task

    task = make_task(spec.task_name, **spec.task_overrides)
    model = task.model
    obs_map = task.obs_map()

    eval_worlds = [task.world_for(spec.eval_seed, 10_000 + i)
                   for i in range(spec.n_eval_rollouts)]
    start_rng = substream(spec.eval_seed, "eval-starts")
    eval_starts = [task.sample_start(w, start_rng) for w in eval_worlds]

    expert_results = []
    for world, x0 in zip(eval_worlds, eval_starts):
        expert = task.make_expert(world)
        expert_results.append(rollout_policy(model, world, expert, x0,
                                             max_steps=spec.traj_len * 4))
    expert_steps = [r.steps for r in expert_results if r.status == "goal"]
    if not expert_steps:
        raise ContractError("expert failed on every evaluation world")
    timeout_steps = int(np.ceil(spec.timeout_factor * float(np.median(expert_steps))))

    conditions = []
    policies: dict[tuple, policy_mod.MlpPolicy] = {}
    for arm in spec.arms:
        for train_seed in spec.train_seeds:
            key = arm.collection_key() + (train_seed,)
            if key not in policies:
                dataset = _collect_for_arm(
                    task, arm, spec, derive_seed(spec.seed, "collect", key))
                trained, _ = policy_mod.train(
                    dataset, task.obs_schema,
                    replace(spec.train, seed=derive_seed(spec.seed, "train", key)))
                policies[key] = trained
            trained = policies[key]
            results = []
            for i, (world, x0) in enumerate(zip(eval_worlds, eval_starts)):
                controller = policy_controller(trained, obs_map, world)
                sfilter = None
                if arm.filtered:
                    fcfg = spec.filter or FilterConfig()
                    sfilter = SafetyFilter(model, world, replace(
                        fcfg, seed=derive_seed(spec.eval_seed, "filter", arm.name,
                                               train_seed, i)))
                results.append(rollout_policy(model, world, controller, x0,
                                              timeout_steps, sfilter))
            m = summarize_rollouts(results)
            conditions.append(ConditionResult(
                arm=arm.name, train_seed=train_seed,
                rollouts=[{"status": r.status, "steps": r.steps,
                           "min_clearance": r.min_clearance,
                           "filter_interventions": r.filter_interventions}
                          for r in results],
                **m))
            if on_progress is not None:
                on_progress(arm.name, train_seed, m)

    aggregates = {}
    for arm in spec.arms:
        rows = [c for c in conditions if c.arm == arm.name]
        aggregates[arm.name] = {}
        for metric in ("collision_rate", "success_rate", "timeout_rate",
                       "mean_min_clearance", "mean_steps_to_goal"):
            vals = np.array([getattr(c, metric) for c in rows])
            finite = vals[np.isfinite(vals)]
            aggregates[arm.name][metric] = {
                "mean": float(np.mean(finite)) if len(finite) else None,
                "std": float(np.std(finite)) if len(finite) else None,
            }
    return ExperimentReport(spec=spec.to_json(), conditions=conditions,
                            aggregates=aggregates, timeout_steps=timeout_steps)
