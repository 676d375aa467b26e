"""Demonstration datasets and their on-disk format.

A dataset is a flat CSV of per-step records plus a JSON manifest carrying the
model parameters, per-demonstration worlds, the guidance configuration, and a
code version string, so a collection run is reproducible from its artifacts.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .worlds import World

STATUSES = ("goal", "collision", "timeout")


@dataclass
class Demonstration:
    demo_id: int
    states: np.ndarray  # (T_k, n_x)
    expert_actions: np.ndarray  # (T_k, n_u), clean labels
    disturbances: np.ndarray  # (T_k, n_u), applied during collection
    d_bar: np.ndarray  # (T_k,), per-step bound (or noise scale) as a ratio of u_max
    status: str
    world: World

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class Dataset:
    demos: list[Demonstration]
    model_params: dict
    guidance_meta: dict = field(default_factory=dict)

    @property
    def num_records(self) -> int:
        return sum(len(d) for d in self.demos)

    def stacked(self):
        """(states, actions, demo_index) over all records, in demo order."""
        states = np.concatenate([d.states for d in self.demos])
        actions = np.concatenate([d.expert_actions for d in self.demos])
        index = np.concatenate([
            np.full(len(d), i, dtype=int) for i, d in enumerate(self.demos)
        ])
        return states, actions, index

    def status_counts(self) -> dict:
        return {s: sum(1 for d in self.demos if d.status == s) for s in STATUSES}


def save_dataset(dataset: Dataset, csv_path, manifest_path,
                 extra_manifest: dict | None = None):
    if not dataset.demos:
        n_x = n_u = 0
    else:
        n_x = dataset.demos[0].states.shape[1]
        n_u = dataset.demos[0].expert_actions.shape[1]
    header = (["demo_id", "t"]
              + [f"x_{i}" for i in range(n_x)]
              + [f"a_{i}" for i in range(n_u)]
              + [f"d_{i}" for i in range(n_u)]
              + ["d_bar", "status"])
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for demo in dataset.demos:
            for t in range(len(demo)):
                row = [demo.demo_id, t]
                row += [repr(float(v)) for v in demo.states[t]]
                row += [repr(float(v)) for v in demo.expert_actions[t]]
                row += [repr(float(v)) for v in demo.disturbances[t]]
                row += [repr(float(demo.d_bar[t])), demo.status]
                writer.writerow(row)
    from . import __version__

    manifest = {
        "version": __version__,
        "model": dataset.model_params,
        "guidance": dataset.guidance_meta,
        "demos": [
            {"demo_id": d.demo_id, "status": d.status, "length": len(d),
             "world": d.world.to_json()}
            for d in dataset.demos
        ],
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)


def load_dataset(csv_path, manifest_path) -> Dataset:
    with open(manifest_path) as f:
        manifest = json.load(f)
    try:
        worlds = {d["demo_id"]: World.from_json(d["world"]) for d in manifest["demos"]}
        statuses = {d["demo_id"]: d["status"] for d in manifest["demos"]}
    except KeyError as exc:
        raise FormatError(f"manifest is missing {exc}") from exc

    rows_by_demo: dict[int, list] = {}
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        n_x = sum(1 for h in header if h.startswith("x_"))
        n_u = sum(1 for h in header if h.startswith("a_"))
        for row in reader:
            rows_by_demo.setdefault(int(row[0]), []).append(row)

    demos = []
    for demo_id in sorted(rows_by_demo):
        rows = sorted(rows_by_demo[demo_id], key=lambda r: int(r[1]))
        arr = np.array([[float(v) for v in r[2 : 2 + n_x + 2 * n_u + 1]] for r in rows])
        demos.append(Demonstration(
            demo_id=demo_id,
            states=arr[:, :n_x],
            expert_actions=arr[:, n_x : n_x + n_u],
            disturbances=arr[:, n_x + n_u : n_x + 2 * n_u],
            d_bar=arr[:, -1],
            status=statuses.get(demo_id, rows[0][-1]),
            world=worlds[demo_id],
        ))
    return Dataset(demos=demos, model_params=manifest.get("model", {}),
                   guidance_meta=manifest.get("guidance", {}))
