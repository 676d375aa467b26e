"""Sampling-based solver for the single-input safety maximization.

Control and disturbance are folded into one input w with the shrunken bound
|w| <= u_max - d_max. The solver samples N input sequences, scores each by the
worst signed distance its rollout ever attains, keeps the top-k, and blends
them with an exponentially weighted (max-shifted, numerically stable) average.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, SolverFailedError
from .seeding import substream


@dataclass(frozen=True)
class MppiConfig:
    num_samples: int = 1000
    horizon: int = 20
    elite_k: int = 10
    temperature: float = 0.05
    input_bound: np.ndarray = field(default_factory=lambda: np.array([0.5]))
    sampling_std: np.ndarray | None = None  # default 0.5 * input_bound
    seed: int = 0
    batch_size: int | None = None  # rollout chunking hint; never changes results

    def __post_init__(self):
        object.__setattr__(self, "input_bound",
                           np.atleast_1d(np.asarray(self.input_bound, dtype=float)))
        if self.sampling_std is not None:
            object.__setattr__(self, "sampling_std",
                               np.atleast_1d(np.asarray(self.sampling_std, dtype=float)))
        self.validate()

    def validate(self):
        if self.num_samples < 1:
            raise ContractError("num_samples must be >= 1")
        if not (1 <= self.elite_k <= self.num_samples):
            raise ContractError("elite_k must satisfy 1 <= elite_k <= num_samples")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if self.temperature <= 0:
            raise ContractError("temperature must be positive")
        if np.any(self.input_bound < 0):
            raise ContractError("input_bound components must be >= 0")
        if self.sampling_std is not None and np.any(self.sampling_std <= 0):
            raise ContractError("sampling_std components must be positive")

    @property
    def std(self) -> np.ndarray:
        if self.sampling_std is not None:
            return self.sampling_std
        return 0.5 * self.input_bound

    def with_bound(self, bound, seed=None) -> "MppiConfig":
        return replace(self, input_bound=np.asarray(bound, dtype=float),
                       sampling_std=None, seed=self.seed if seed is None else seed)

    def to_json(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "horizon": self.horizon,
            "elite_k": self.elite_k,
            "temperature": self.temperature,
            "input_bound": [float(b) for b in self.input_bound],
            "sampling_std": None if self.sampling_std is None
            else [float(s) for s in self.sampling_std],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MppiConfig":
        std = doc.get("sampling_std")
        return cls(
            num_samples=int(doc.get("num_samples", 1000)),
            horizon=int(doc.get("horizon", 20)),
            elite_k=int(doc.get("elite_k", 10)),
            temperature=float(doc.get("temperature", 0.05)),
            input_bound=np.asarray(doc["input_bound"], dtype=float),
            sampling_std=None if std is None else np.asarray(std, dtype=float),
            seed=int(doc.get("seed", 0)),
        )


@dataclass(frozen=True)
class MppiResult:
    optimal_sequence: np.ndarray  # (H, n_u), within bounds
    cost: float  # worst clearance of the blended sequence's own rollout
    elite_costs: np.ndarray  # (elite_k,), descending
    elite_weights: np.ndarray  # (elite_k,), sums to 1
    samples_evaluated: int


def safety_cost(model, world, x0, seq) -> float:
    """Worst signed distance along the rollout of ``seq`` from ``x0``.

    The minimum runs over x_0..x_H, so an empty sequence scores l(x_0).
    """
    x0 = np.asarray(x0, dtype=float)
    seq = np.asarray(seq, dtype=float).reshape(-1, model.n_u)
    cost = float(world.signed_distance(model.positions(x0)))
    x = x0
    for k in range(seq.shape[0]):
        x = model.step(x, seq[k])
        cost = min(cost, float(world.signed_distance(model.positions(x))))
    return cost


def _batch_costs(model, world, x0, seqs) -> np.ndarray:
    """Vectorized safety cost of (B, H, n_u) sequences from a shared x0."""
    b, horizon, _ = seqs.shape
    x = np.broadcast_to(x0, (b, model.n_x)).copy()
    cost = np.full(b, float(world.signed_distance(model.positions(x0))))
    for k in range(horizon):
        x = model.step(x, seqs[:, k, :])
        np.minimum(cost, world.signed_distance(model.positions(x)), out=cost)
    return cost


def shift_sequence(seq) -> np.ndarray:
    """Receding-horizon warm start: drop the first row, repeat the last."""
    seq = np.asarray(seq, dtype=float)
    return np.concatenate([seq[1:], seq[-1:]], axis=0)


def solve(model, world, x0, config: MppiConfig, warm_start=None,
          on_diagnostics=None) -> MppiResult:
    """One MPPI solve. Deterministic given ``config.seed``.

    Sampling happens in a single up-front draw keyed only by the seed, and
    rollout evaluation is chunked by ``batch_size``, so results are identical
    regardless of how the evaluation work is scheduled.
    """
    t_start = time.perf_counter() if on_diagnostics is not None else 0.0
    n_u = len(config.input_bound)
    if n_u != model.n_u:
        raise ContractError(
            f"input_bound has {n_u} components, model expects {model.n_u}")
    x0 = np.asarray(x0, dtype=float)
    bound = config.input_bound
    base = np.zeros((config.horizon, n_u)) if warm_start is None \
        else np.clip(np.asarray(warm_start, dtype=float), -bound, bound)
    if base.shape != (config.horizon, n_u):
        raise ContractError("warm start shape does not match (horizon, n_u)")

    rng = substream(config.seed, "mppi-noise")
    noise = rng.normal(0.0, 1.0, size=(config.num_samples, config.horizon, n_u))
    samples = np.clip(base + noise * config.std, -bound, bound)

    costs = np.empty(config.num_samples)
    chunk = config.batch_size or config.num_samples
    for start in range(0, config.num_samples, chunk):
        stop = min(start + chunk, config.num_samples)
        costs[start:stop] = _batch_costs(model, world, x0, samples[start:stop])

    usable = np.isfinite(costs)
    if not np.any(usable):
        raise SolverFailedError("all sampled rollouts diverged")
    costs = np.where(usable, costs, -np.inf)

    order = np.argsort(-costs, kind="stable")[: config.elite_k]
    elite_costs = costs[order]
    weights = np.exp((elite_costs - elite_costs[0]) / config.temperature)
    weights /= weights.sum()
    combined = np.einsum("e,ehu->hu", weights, samples[order])
    combined = np.clip(combined, -bound, bound)

    result = MppiResult(
        optimal_sequence=combined,
        cost=safety_cost(model, world, x0, combined),
        elite_costs=elite_costs,
        elite_weights=weights,
        samples_evaluated=config.num_samples,
    )
    if on_diagnostics is not None:
        on_diagnostics({
            "elite_costs": [float(c) for c in elite_costs],
            "cost": result.cost,
            "samples": config.num_samples,
            "wall_time_s": time.perf_counter() - t_start,
        })
    return result


def extract_first_input(result: MppiResult) -> np.ndarray:
    """First row of the optimal sequence: the input actually applied."""
    return result.optimal_sequence[0]
