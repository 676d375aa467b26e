"""Observation builders mapping (state, world) to policy inputs.

Each schema has a string id, stored in policy files so a loaded policy knows
what it expects. Range readings are normalized to [0, 1] by the scan's
maximum range.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .worlds import ScanConfig


@dataclass(frozen=True)
class ObsSchema:
    id: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "params": dict(self.params)}

    @classmethod
    def from_json(cls, doc) -> "ObsSchema":
        return cls(id=doc["id"], params=dict(doc.get("params", {})))


def _scan_config(params) -> ScanConfig:
    return ScanConfig(
        n_rays=int(params.get("n_rays", 8)),
        fov=float(params.get("fov", 2.0 * np.pi)),
        max_range=float(params.get("max_range", 5.0)),
    )


class ObsMap:
    """Callable (state, world) -> observation vector with a known dimension."""

    def __init__(self, schema: ObsSchema):
        self.schema = schema
        p = schema.params
        if schema.id == "dubins_state_goal":
            self.dim = 5
        elif schema.id == "dubins_scan_goal":
            self.scan = _scan_config(p)
            self.goal_scale = float(p.get("goal_scale", 10.0))
            self.dim = self.scan.n_rays + 2
        elif schema.id == "quad_scan_vel":
            self.scan = _scan_config(p)
            self.vel_scale = float(p.get("vel_scale", 2.0))
            self.dim = self.scan.n_rays + 2
        else:
            raise ContractError(f"unknown observation schema {schema.id!r}")

    def __call__(self, state, world) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if self.schema.id == "dubins_state_goal":
            gx, gy = world.goal.center
            return np.array([state[0], state[1], state[2],
                             gx - state[0], gy - state[1]])
        if self.schema.id == "dubins_scan_goal":
            x, y, theta = state
            scan = world.raycast((x, y), theta, self.scan)
            gx, gy = world.goal.center
            dx, dy = gx - x, gy - y
            cos_t, sin_t = np.cos(theta), np.sin(theta)
            body = np.array([cos_t * dx + sin_t * dy, -sin_t * dx + cos_t * dy])
            return np.concatenate([scan.distances / self.scan.max_range,
                                   body / self.goal_scale])
        # quad_scan_vel: body frame is world-aligned (no heading state)
        ranges = world.ray_distances(state[:2], self.scan.ray_angles,
                                     self.scan.max_range)
        return np.concatenate([ranges / self.scan.max_range,
                               state[2:4] / self.vel_scale])

    def batch(self, states, world) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if self.schema.id == "dubins_state_goal":
            gx, gy = world.goal.center
            return np.column_stack([states[:, 0], states[:, 1], states[:, 2],
                                    gx - states[:, 0], gy - states[:, 1]])
        if self.schema.id == "dubins_scan_goal":
            theta = states[:, 2]
            angles = theta[:, None] + self.scan.ray_angles[None, :]
            ranges = world.ray_distances(states[:, :2], angles, self.scan.max_range)
            gx, gy = world.goal.center
            dx, dy = gx - states[:, 0], gy - states[:, 1]
            cos_t, sin_t = np.cos(theta), np.sin(theta)
            body = np.column_stack([cos_t * dx + sin_t * dy,
                                    -sin_t * dx + cos_t * dy])
            return np.concatenate([ranges / self.scan.max_range,
                                   body / self.goal_scale], axis=1)
        ranges = world.ray_distances(states[:, :2],
                                     np.broadcast_to(self.scan.ray_angles,
                                                     (len(states), self.scan.n_rays)),
                                     self.scan.max_range)
        return np.concatenate([ranges / self.scan.max_range,
                               states[:, 2:4] / self.vel_scale], axis=1)


def make_obs_map(schema_or_id, **params) -> ObsMap:
    if isinstance(schema_or_id, ObsSchema):
        return ObsMap(schema_or_id)
    return ObsMap(ObsSchema(id=schema_or_id, params=params))
