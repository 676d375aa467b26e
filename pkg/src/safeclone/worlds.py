"""Obstacle worlds: failure set, signed distance, range sensing, generation.

Obstacles are circles, which keeps the signed-distance function and the
ray-circle intersections closed-form and exact. The failure set is the
sub-zero level set of ``signed_distance`` (boundary states count as failures).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, GenerationInfeasibleError

DEFAULT_MAX_RANGE = 5.0  # m, also sets the free-space sentinel = 10x this


@dataclass(frozen=True)
class DiskGoal:
    center: tuple[float, float]
    radius: float

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        d = np.hypot(points[..., 0] - self.center[0], points[..., 1] - self.center[1])
        return d <= self.radius

    def to_json(self) -> dict:
        return {"kind": "disk", "x": self.center[0], "y": self.center[1], "r": self.radius}


@dataclass(frozen=True)
class LineGoal:
    """Finish line: the goal is reached once p_x >= x_line."""

    x_line: float

    def contains(self, points):
        return np.asarray(points, dtype=float)[..., 0] >= self.x_line

    def to_json(self) -> dict:
        return {"kind": "line", "x": self.x_line}


def _goal_from_json(doc):
    if doc is None:
        return None
    if doc["kind"] == "disk":
        return DiskGoal((float(doc["x"]), float(doc["y"])), float(doc["r"]))
    if doc["kind"] == "line":
        return LineGoal(float(doc["x"]))
    raise ContractError(f"unknown goal kind {doc['kind']!r}")


@dataclass(frozen=True)
class ScanConfig:
    n_rays: int = 8
    fov: float = 2.0 * np.pi  # rad; 2*pi means evenly spaced all around
    max_range: float = DEFAULT_MAX_RANGE

    @property
    def ray_angles(self) -> np.ndarray:
        if self.fov >= 2.0 * np.pi - 1e-12:
            return -np.pi + 2.0 * np.pi * np.arange(self.n_rays) / self.n_rays
        return np.linspace(-self.fov / 2.0, self.fov / 2.0, self.n_rays)


@dataclass(frozen=True)
class RangeScan:
    distances: np.ndarray  # (n_rays,), 0 < d <= max_range
    ray_angles: np.ndarray  # rad, relative to heading
    max_range: float


class World:
    """Immutable circle-obstacle environment with goal region and bounds."""

    def __init__(self, centers, radii, goal=None, bounds=((-5.0, 5.0), (-5.0, 5.0)),
                 free_distance: float = 10.0 * DEFAULT_MAX_RANGE):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        self.radii = np.asarray(radii, dtype=float).reshape(-1)
        if self.centers.shape[0] != self.radii.shape[0]:
            raise ContractError("obstacle centers and radii disagree in length")
        if np.any(self.radii <= 0):
            raise ContractError("all obstacle radii must be positive")
        self.goal = goal
        self.bounds = (tuple(map(float, bounds[0])), tuple(map(float, bounds[1])))
        self.free_distance = float(free_distance)
        if isinstance(goal, DiskGoal) and self.centers.size:
            d = np.hypot(*(self.centers - np.asarray(goal.center)).T) - self.radii
            if np.any(d < goal.radius):
                raise ContractError("goal disk intersects an obstacle")

    @property
    def num_obstacles(self) -> int:
        return len(self.radii)

    def signed_distance(self, points):
        """min_i (||p - c_i|| - r_i); negative inside an obstacle.

        With no obstacles returns the free-space sentinel everywhere.
        """
        points = np.asarray(points, dtype=float)
        if self.num_obstacles == 0:
            return np.full(points.shape[:-1], self.free_distance)
        diff = points[..., None, :] - self.centers  # (..., M, 2)
        d = np.sqrt(np.sum(diff * diff, axis=-1)) - self.radii
        return np.min(d, axis=-1)

    def is_collision(self, points):
        return self.signed_distance(points) <= 0.0

    def is_at_goal(self, points):
        if self.goal is None:
            return np.zeros(np.shape(points)[:-1], dtype=bool)
        return self.goal.contains(points)

    def ray_distances(self, origins, angles, max_range: float) -> np.ndarray:
        """First-hit distances along world-frame ``angles`` from ``origins``.

        origins (..., 2) and angles (..., R) broadcast; returns (..., R),
        clipped to ``max_range`` where nothing is hit.
        """
        origins = np.asarray(origins, dtype=float)
        angles = np.asarray(angles, dtype=float)
        shape = np.broadcast_shapes(origins.shape[:-1] + (1,), angles.shape)
        if self.num_obstacles == 0:
            return np.full(shape, max_range)
        ux, uy = np.cos(angles), np.sin(angles)
        fx = origins[..., None, 0] - self.centers[:, 0]  # (..., M)
        fy = origins[..., None, 1] - self.centers[:, 1]
        c = fx * fx + fy * fy - self.radii**2  # > 0 outside
        # quadratic t^2 + b t + c = 0 with b = 2 f.u; first hit is the smaller root
        b = 2.0 * (ux[..., None] * fx[..., None, :] + uy[..., None] * fy[..., None, :])
        disc = b * b - 4.0 * c[..., None, :]
        hit = disc >= 0.0
        t = np.where(hit, (-b - np.sqrt(np.maximum(disc, 0.0))) / 2.0, np.inf)
        t = np.where(t > 1e-12, t, np.inf)
        return np.minimum(np.min(t, axis=-1), max_range)

    def raycast(self, origin, heading: float, scan: ScanConfig) -> RangeScan:
        """Closed-form ray-circle scan from a free-space origin."""
        origin = np.asarray(origin, dtype=float)
        if bool(self.is_collision(origin)):
            raise ContractError("raycast origin lies inside an obstacle")
        angles = heading + scan.ray_angles
        d = self.ray_distances(origin, angles, scan.max_range)
        return RangeScan(distances=d, ray_angles=scan.ray_angles, max_range=scan.max_range)

    def to_json(self) -> dict:
        return {
            "obstacles": [
                {"x": float(c[0]), "y": float(c[1]), "r": float(r)}
                for c, r in zip(self.centers, self.radii)
            ],
            "goal": None if self.goal is None else self.goal.to_json(),
            "bounds": {"x": list(self.bounds[0]), "y": list(self.bounds[1])},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "World":
        obs = doc.get("obstacles", [])
        centers = [(o["x"], o["y"]) for o in obs]
        radii = [o["r"] for o in obs]
        return cls(
            np.array(centers, dtype=float).reshape(-1, 2),
            np.array(radii, dtype=float),
            goal=_goal_from_json(doc.get("goal")),
            bounds=(doc["bounds"]["x"], doc["bounds"]["y"]),
        )


@dataclass(frozen=True)
class GenerationSpec:
    """Parameters for random world generation with placement rejection."""

    count_range: tuple[int, int]
    center_x: tuple[float, float]
    center_y: tuple[float, float]
    radius_range: tuple[float, float]
    bounds: tuple[tuple[float, float], tuple[float, float]]
    goal: object = None
    # segments ((x0, y0), (x1, y1), margin) that obstacles must stay clear of
    keep_clear: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "count_range": list(self.count_range),
            "center_x": list(self.center_x),
            "center_y": list(self.center_y),
            "radius_range": list(self.radius_range),
            "bounds": {"x": list(self.bounds[0]), "y": list(self.bounds[1])},
            "goal": None if self.goal is None else self.goal.to_json(),
            "keep_clear": [[list(a), list(b), m] for a, b, m in self.keep_clear],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GenerationSpec":
        return cls(
            count_range=tuple(doc["count_range"]),
            center_x=tuple(doc["center_x"]),
            center_y=tuple(doc["center_y"]),
            radius_range=tuple(doc["radius_range"]),
            bounds=(tuple(doc["bounds"]["x"]), tuple(doc["bounds"]["y"])),
            goal=_goal_from_json(doc.get("goal")),
            keep_clear=tuple(
                (tuple(a), tuple(b), float(m)) for a, b, m in doc.get("keep_clear", [])
            ),
        )


def _segment_distance(point, a, b) -> float:
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(point - (a + t * ab))))


def generate_world(seed: int, spec: GenerationSpec, max_rejects: int = 1000) -> World:
    """Sample a world; deterministic given seed.

    Placements that intrude on keep-clear segments (or the goal disk) are
    rejected and resampled; ``max_rejects`` consecutive rejections raise
    GenerationInfeasibleError.
    """
    lo, hi = spec.count_range
    if hi < lo or spec.radius_range[1] < spec.radius_range[0]:
        raise ContractError("generation spec has an empty range")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(lo, hi + 1))
    clear = list(spec.keep_clear)
    if isinstance(spec.goal, DiskGoal):
        clear.append((spec.goal.center, spec.goal.center, spec.goal.radius + 0.2))
    centers, radii = [], []
    rejects = 0
    while len(centers) < count:
        c = np.array([rng.uniform(*spec.center_x), rng.uniform(*spec.center_y)])
        r = rng.uniform(*spec.radius_range)
        if any(_segment_distance(c, a, b) < r + m for a, b, m in clear):
            rejects += 1
            if rejects >= max_rejects:
                raise GenerationInfeasibleError(
                    f"{max_rejects} consecutive placement rejections"
                )
            continue
        rejects = 0
        centers.append(c)
        radii.append(r)
    return World(np.array(centers).reshape(-1, 2), np.array(radii),
                 goal=spec.goal, bounds=spec.bounds)


def dubins_corridor_spec() -> GenerationSpec:
    """Corridor navigation: obstacles in a central band, disk goal at (10, 0)."""
    return GenerationSpec(
        count_range=(4, 4),
        center_x=(2.5, 7.5),
        center_y=(-2.0, 2.0),
        radius_range=(0.1, 1.0),
        bounds=((-1.0, 11.0), (-4.0, 4.0)),
        goal=DiskGoal((10.0, 0.0), 0.5),
        keep_clear=(((0.0, -2.4), (0.0, 2.4), 0.4),),
    )


def quad_course_spec() -> GenerationSpec:
    """Cluttered course: 1-10 cylinders in [0.5, 4.5]^2, finish line at 4 m."""
    return GenerationSpec(
        count_range=(1, 10),
        center_x=(0.5, 4.5),
        center_y=(0.5, 4.5),
        radius_range=(0.1, 0.8),
        bounds=((-0.5, 5.5), (0.0, 5.0)),
        goal=LineGoal(4.0),
        keep_clear=(((0.0, 0.8), (0.0, 4.2), 0.45),),
    )


def two_obstacle_world() -> World:
    """The fixed two-obstacle field used for disturbance-field verification."""
    return World(
        centers=[(-1.5, 1.0), (1.5, -1.0)],
        radii=[1.0, 1.0],
        goal=None,
        bounds=((-4.0, 4.0), (-4.0, 4.0)),
    )
