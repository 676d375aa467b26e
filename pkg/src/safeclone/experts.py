"""Expert controllers used during demonstration collection.

Experts carry privileged world knowledge and are deterministic pure functions
of state, so recorded action labels can be re-derived exactly. The quadrotor
expert is a sampling MPC whose noise stream is keyed by a hash of the query
state, which keeps it Markov and reproducible.
"""

import numpy as np

from .errors import ContractError
from .seeding import state_keyed_seed


class DubinsMpcExpert:
    """Sampling MPC planner: minimize distance-to-goal, penalize collisions.

    The noise stream is keyed by a hash of the query state, so the planner is
    a deterministic pure function of state.
    """

    def __init__(self, model, world, num_samples: int = 384, horizon: int = 25,
                 elite_k: int = 16, temperature: float = 0.05,
                 clearance_weight: float = 3.0, clearance_cap: float = 0.4,
                 seed_salt: int = 0):
        if world.goal is None:
            raise ContractError("Dubins expert needs a goal in the world")
        self.model = model
        self.world = world
        self.num_samples = num_samples
        self.horizon = horizon
        self.elite_k = elite_k
        self.temperature = temperature
        self.clearance_weight = clearance_weight
        self.clearance_cap = clearance_cap
        self.seed_salt = seed_salt
        self.control_bounds = model.control_bounds

    def _scores(self, x0, seqs) -> np.ndarray:
        n = seqs.shape[0]
        gx, gy = self.world.goal.center
        x = np.broadcast_to(x0, (n, self.model.n_x)).copy()
        clearance = np.full(n, self.world.signed_distance(x0[:2]))
        goal_dist = np.full(n, np.hypot(x0[0] - gx, x0[1] - gy))
        for k in range(self.horizon):
            x = self.model.step(x, seqs[:, k, :])
            np.minimum(clearance, self.world.signed_distance(x[:, :2]), out=clearance)
            np.minimum(goal_dist, np.hypot(x[:, 0] - gx, x[:, 1] - gy), out=goal_dist)
        safety = self.clearance_weight * np.minimum(clearance, self.clearance_cap)
        safety = np.where(clearance <= 0.0, -100.0, safety)
        return -goal_dist + safety

    def __call__(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        rng = np.random.default_rng(state_keyed_seed(state, self.seed_salt))
        bound = self.control_bounds
        seqs = np.clip(
            rng.normal(0.0, 0.6 * bound, size=(self.num_samples, self.horizon, 1)),
            -bound, bound)
        scores = self._scores(state, seqs)
        order = np.argsort(-scores, kind="stable")[: self.elite_k]
        w = np.exp((scores[order] - scores[order[0]]) / self.temperature)
        w /= w.sum()
        first = np.einsum("e,eu->u", w, seqs[order, 0, :])
        return np.clip(first, -bound, bound)


class QuadMpcExpert:
    """Sampling MPC for the planar quadrotor: maximize forward progress while
    keeping clearance from the obstacles. Deterministic per state."""

    def __init__(self, model, world, num_samples: int = 256, horizon: int = 30,
                 elite_k: int = 16, temperature: float = 0.05,
                 clearance_weight: float = 6.0, clearance_cap: float = 0.5,
                 speed_limit: float = 1.6, speed_weight: float = 1.0,
                 seed_salt: int = 0):
        self.model = model
        self.world = world
        self.num_samples = num_samples
        self.horizon = horizon
        self.elite_k = elite_k
        self.temperature = temperature
        self.clearance_weight = clearance_weight
        self.clearance_cap = clearance_cap
        self.speed_limit = speed_limit
        self.speed_weight = speed_weight
        self.seed_salt = seed_salt
        self.control_bounds = model.control_bounds

    def _scores(self, x0, seqs) -> np.ndarray:
        n = seqs.shape[0]
        x = np.broadcast_to(x0, (n, self.model.n_x)).copy()
        clearance = np.full(n, self.world.signed_distance(x0[:2]))
        overspeed = np.zeros(n)
        for k in range(self.horizon):
            x = self.model.step(x, seqs[:, k, :])
            np.minimum(clearance, self.world.signed_distance(x[:, :2]), out=clearance)
            speed = np.hypot(x[:, 2], x[:, 3])
            np.maximum(overspeed, speed - self.speed_limit, out=overspeed)
        progress = np.minimum(x[:, 0], 4.3)
        safety = self.clearance_weight * np.minimum(clearance, self.clearance_cap)
        safety = np.where(clearance <= 0.0, -100.0, safety)
        return progress + safety - self.speed_weight * overspeed**2

    def __call__(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        rng = np.random.default_rng(state_keyed_seed(state, self.seed_salt))
        bound = self.control_bounds
        noise = np.clip(
            rng.normal(0.0, 0.6 * bound, size=(self.num_samples, self.horizon, 2)),
            -bound, bound)
        # constant-input primitives guarantee sustained brake/swerve candidates
        grid = np.linspace(-1.0, 1.0, 5)
        prims = np.stack([
            np.full((self.horizon, 2), (a * bound[0], b * bound[1]))
            for a in grid for b in grid
        ])
        seqs = np.concatenate([prims, noise])
        scores = self._scores(state, seqs)
        order = np.argsort(-scores, kind="stable")[: self.elite_k]
        w = np.exp((scores[order] - scores[order[0]]) / self.temperature)
        w /= w.sum()
        first = np.einsum("e,eu->u", w, seqs[order, 0, :])
        return np.clip(first, -bound, bound)


_EXPERTS = {"dubins_mpc": DubinsMpcExpert, "quad_mpc": QuadMpcExpert}


def make_expert(expert_id: str, model, world, **params):
    try:
        cls = _EXPERTS[expert_id]
    except KeyError:
        raise ContractError(f"unknown expert id {expert_id!r}") from None
    return cls(model, world, **params)
