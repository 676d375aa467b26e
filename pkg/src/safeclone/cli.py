"""Command-line entry point tying the pipeline together.

One subcommand per procedure: gen-world, verify, collect, train, eval,
experiment, check-reduction. All commands read a JSON config, are
deterministic given (config, seed), and embed a config fingerprint in every
artifact. Logs go to stderr; machine-readable artifacts go to files.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 missing artifact.
"""

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, dynamics, evaluation, guidance, mppi, oracle, policy, tasks, worlds
from .seeding import derive_seed, substream
from .errors import (
    ConfigError,
    ContractError,
    ConvergenceError,
    FormatError,
    GenerationInfeasibleError,
    MissingArtifactError,
    SolverFailedError,
    TrainingDivergedError,
)

log = logging.getLogger("safeclone")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4


def config_fingerprint(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigError(f"{context}.{key}" if context else key, "missing entry")
    return doc[key]


def _load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"file {path} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc


def _model_from(doc: dict):
    model_doc = dict(doc.get("model", {"id": "dubins3"}))
    model_id = model_doc.pop("id", "dubins3")
    try:
        return dynamics.make_model(model_id, **model_doc)
    except (ContractError, TypeError) as exc:
        raise ConfigError("model", str(exc)) from exc


def _mppi_from(doc: dict, model, seed: int) -> mppi.MppiConfig:
    mppi_doc = dict(doc.get("mppi", {}))
    mppi_doc.setdefault("input_bound", [float(b) for b in model.control_bounds])
    mppi_doc.setdefault("seed", seed)
    try:
        return mppi.MppiConfig.from_json(mppi_doc)
    except (ContractError, KeyError, TypeError) as exc:
        raise ConfigError("mppi", str(exc)) from exc


def _world_from(doc: dict, seed: int) -> worlds.World:
    world_doc = doc.get("world", {"preset": "two_obstacle"})
    if "file" in world_doc:
        path = Path(world_doc["file"])
        if not path.exists():
            raise MissingArtifactError(f"world file {path} does not exist")
        return worlds.World.from_json(json.loads(path.read_text()))
    if "preset" in world_doc:
        if world_doc["preset"] == "two_obstacle":
            return worlds.two_obstacle_world()
        raise ConfigError("world.preset", f"unknown preset {world_doc['preset']!r}")
    if "generator" in world_doc:
        spec = worlds.GenerationSpec.from_json(world_doc["generator"])
        return worlds.generate_world(int(world_doc.get("seed", seed)), spec)
    raise ConfigError("world", "expected one of: file, preset, generator")


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    log.info("wrote %s", path)


def _write_csv(path: Path, header: list, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    log.info("wrote %s", path)


def _fmt(value) -> str:
    return repr(float(value))


class _Ctx:
    """Per-invocation context: output dir, seed, optional diagnostics sink."""

    def __init__(self, out: Path, seed: int, diagnostics: bool):
        self.out = out
        self.seed = seed
        self._diag_file = None
        if diagnostics:
            out.mkdir(parents=True, exist_ok=True)
            self._diag_file = open(out / "diagnostics.jsonl", "w")

    @property
    def on_diagnostics(self):
        if self._diag_file is None:
            return None
        return lambda doc: self._diag_file.write(
            json.dumps(doc, sort_keys=True) + "\n")

    def close(self):
        if self._diag_file is not None:
            self._diag_file.close()


def cmd_gen_world(config: dict, ctx: _Ctx) -> int:
    world = _world_from(config, ctx.seed)
    doc = world.to_json()
    doc["config_fingerprint"] = config_fingerprint(config)
    _write_json(ctx.out / "world.json", doc)
    return 0


def cmd_verify(config: dict, ctx: _Ctx) -> int:
    """Disturbance-field verification: oracle value iteration vs sampling MPC."""
    out, seed = ctx.out, ctx.seed
    model = _model_from(config)
    if not isinstance(model, dynamics.DubinsCar):
        raise ConfigError("model.id", "verify requires the dubins3 model")
    world = _world_from(config, seed)
    odoc = dict(config.get("oracle", {}))
    d_bar = float(odoc.get("d_bar", 0.5 * model.control_bounds[0]))
    vdoc = dict(config.get("verify", {}))
    cfg = _mppi_from(config, model, seed)
    cfg = replace(cfg, input_bound=model.control_bounds - d_bar, sampling_std=None)

    log.info("running value iteration (shape=%s, d_bar=%.3f)",
             odoc.get("shape", [51, 51, 51]), d_bar)
    grid = oracle.value_iteration(
        model, world, d_bar=d_bar,
        shape=tuple(odoc.get("shape", (51, 51, 51))),
        num_controls=int(odoc.get("num_controls", 21)),
        tol=float(odoc.get("tol", 1e-6)),
        max_iters=int(odoc.get("max_iters", 500)),
        gradient_eps=float(odoc.get("gradient_eps", 1e-3)))
    oracle.save_value_grid(grid, out / "value_grid.bin")

    num_samples = int(vdoc.get("num_samples", 10000))
    method = vdoc.get("mode", "mppi")
    log.info("sampling %d states for the %s field comparison", num_samples, method)
    mse = oracle.disturbance_field_mse(grid, model, world, cfg, num_samples,
                                       seed, method=method,
                                       on_diagnostics=ctx.on_diagnostics)
    slice_rows = oracle.disturbance_field_slice(grid, model, world, cfg, seed)
    _write_csv(out / "disturbance_field.csv",
               ["x", "y", "d_mppi", "d_oracle", "degenerate"],
               zip((_fmt(v) for v in slice_rows["x"]),
                   (_fmt(v) for v in slice_rows["y"]),
                   (_fmt(v) for v in slice_rows["d_mppi"]),
                   (_fmt(v) for v in slice_rows["d_oracle"]),
                   (int(v) for v in slice_rows["degenerate"])))
    report = {
        "mse": mse,
        "num_samples": num_samples,
        "mode": method,
        "d_bar": d_bar,
        "grid": {"shape": list(grid.values.shape), "iterations": grid.iterations,
                 "converged": grid.converged, "tol": grid.tol},
        "mppi": cfg.to_json(),
        "config_fingerprint": config_fingerprint(config),
    }
    _write_json(out / "verify_report.json", report)
    print(f"disturbance-field MSE: {mse:.4f} over {num_samples} samples")
    return 0


def _task_from(config: dict) -> tasks.Task:
    name = config.get("task", "dubins_corridor")
    try:
        return tasks.make_task(name, **config.get("task_overrides", {}))
    except (ContractError, TypeError) as exc:
        raise ConfigError("task", str(exc)) from exc


def cmd_collect(config: dict, ctx: _Ctx) -> int:
    out, seed = ctx.out, ctx.seed
    task = _task_from(config)
    cdoc = dict(config.get("collect", {}))
    gdoc = dict(config.get("guidance", {}))
    gcfg = guidance.GuidanceConfig(
        d_max_ratio=float(gdoc.get("d_max_ratio", 0.5)),
        mppi=_mppi_from(config, task.model, seed),
        per_step_resample=bool(gdoc.get("per_step_resample", True)),
        seed=seed)
    num_demos = int(cdoc.get("num_demos", 40))
    traj_len = int(cdoc.get("traj_len", 150))
    method = cdoc.get("method", "adversarial")
    log.info("collecting %d demos (%s) on task %s", num_demos, method, task.name)
    if method == "adversarial":
        dataset = guidance.collect(task, gcfg, num_demos, traj_len,
                                   on_diagnostics=ctx.on_diagnostics)
    else:
        dataset = guidance.collect_noisy(task, gcfg, num_demos, traj_len,
                                         method, float(cdoc.get("noise_scale", 0.0)),
                                         on_diagnostics=ctx.on_diagnostics)
    out.mkdir(parents=True, exist_ok=True)
    data.save_dataset(dataset, out / "dataset.csv", out / "dataset_manifest.json",
                      extra_manifest={"config_fingerprint": config_fingerprint(config)})
    print(f"collected {dataset.num_records} records; statuses {dataset.status_counts()}")
    return 0


def cmd_train(config: dict, ctx: _Ctx) -> int:
    out, seed = ctx.out, ctx.seed
    dataset_dir = Path(config.get("dataset", out))
    csv_path = dataset_dir / "dataset.csv"
    manifest_path = dataset_dir / "dataset_manifest.json"
    if not csv_path.exists() or not manifest_path.exists():
        raise MissingArtifactError(f"dataset not found under {dataset_dir}")
    dataset = data.load_dataset(csv_path, manifest_path)
    task = _task_from(config)
    tdoc = dict(config.get("train", {}))
    tdoc.setdefault("seed", seed)
    tcfg = policy.TrainConfig.from_json(tdoc)
    log.info("training on %d records", dataset.num_records)
    trained, report = policy.train(dataset, task.obs_schema, tcfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "policy.bin").write_bytes(policy.save(trained))
    _write_json(out / "train_report.json", {
        "train_loss": report.train_loss,
        "val_loss": report.val_loss,
        "action_variance": report.action_variance,
        "num_train": report.num_train,
        "num_val": report.num_val,
        "config_fingerprint": config_fingerprint(config),
    })
    final = report.val_loss[-1] if report.val_loss else report.train_loss[-1]
    print(f"trained policy ({trained.num_params} params); final loss {final:.6f}")
    return 0


def cmd_eval(config: dict, ctx: _Ctx) -> int:
    out, seed = ctx.out, ctx.seed
    policy_path = Path(config.get("policy", out / "policy.bin"))
    if not policy_path.exists():
        raise MissingArtifactError(f"policy file {policy_path} does not exist")
    trained = policy.load(policy_path.read_bytes())
    task = _task_from(config)
    obs_map = task.obs_map()
    edoc = dict(config.get("eval", {}))
    n_rollouts = int(edoc.get("n_rollouts", 20))
    max_steps = int(edoc.get("max_steps", 300))
    fdoc = edoc.get("filter")
    results = []
    rows = []
    for i in range(n_rollouts):
        world = task.world_for(seed, 10_000 + i)
        x0 = task.sample_start(world, substream(seed, "eval-start", i))
        controller = evaluation.policy_controller(trained, obs_map, world)
        sfilter = None
        if fdoc:
            backup = None
            if fdoc.get("backup"):
                backup = mppi.MppiConfig.from_json(fdoc["backup"])
            sfilter = evaluation.SafetyFilter(task.model, world, evaluation.FilterConfig(
                horizon=int(fdoc.get("horizon", 50)), backup=backup,
                requery_policy=bool(fdoc.get("requery_policy", True)),
                seed=derive_seed(seed, "filter", i)))
        r = evaluation.rollout_policy(task.model, world, controller, x0,
                                      max_steps, sfilter)
        results.append(r)
        rows.append([i, r.status, r.steps, _fmt(r.min_clearance),
                     r.filter_interventions])
    metrics = evaluation.summarize_rollouts(results)
    _write_csv(out / "rollouts.csv",
               ["rollout", "status", "steps", "min_clearance", "filter_interventions"],
               rows)
    _write_json(out / "eval_report.json",
                {**metrics, "n_rollouts": n_rollouts,
                 "config_fingerprint": config_fingerprint(config)})
    print(f"eval: {metrics}")
    return 0


def cmd_experiment(config: dict, ctx: _Ctx) -> int:
    out, seed = ctx.out, ctx.seed
    edoc = dict(_require(config, "experiment", ""))
    task_name = edoc.get("task", config.get("task", "dubins_corridor"))
    task = tasks.make_task(task_name, **config.get("task_overrides", {}))
    arms = []
    for arm_doc in _require(edoc, "arms", "experiment"):
        arms.append(evaluation.ArmSpec(
            name=_require(arm_doc, "name", "experiment.arms"),
            method=arm_doc.get("method", "none"),
            d_max_ratio=float(arm_doc.get("d_max_ratio", 0.0)),
            noise_scale=float(arm_doc.get("noise_scale", 0.0)),
            filtered=bool(arm_doc.get("filtered", False))))
    fdoc = edoc.get("filter")
    spec = evaluation.ExperimentSpec(
        task_name=task_name,
        arms=tuple(arms),
        num_demos=int(edoc.get("num_demos", 40)),
        traj_len=int(edoc.get("traj_len", 150)),
        train_seeds=tuple(edoc.get("train_seeds", [0, 1, 2, 3, 4])),
        n_eval_rollouts=int(edoc.get("n_eval_rollouts", 20)),
        guidance_mppi=_mppi_from(config, task.model, seed),
        train=policy.TrainConfig.from_json(dict(config.get("train", {}))),
        filter=None if fdoc is None else evaluation.FilterConfig(
            horizon=int(fdoc.get("horizon", 50))),
        timeout_factor=float(edoc.get("timeout_factor", 3.0)),
        eval_seed=int(edoc.get("eval_seed", 9090)),
        seed=seed,
        task_overrides=dict(config.get("task_overrides", {})))
    report = evaluation.run_experiment(
        spec, on_progress=lambda arm, s, m: log.info(
            "%s seed %d: collision=%.2f success=%.2f", arm, s,
            m["collision_rate"], m["success_rate"]))
    report.config_fingerprint = config_fingerprint(config)
    _write_json(out / "experiment_report.json", report.to_json())
    rows = []
    for c in report.conditions:
        for i, r in enumerate(c.rollouts):
            rows.append([c.arm, c.train_seed, i, r["status"], r["steps"],
                         _fmt(r["min_clearance"]), r["filter_interventions"]])
    _write_csv(out / "experiment_rollouts.csv",
               ["arm", "train_seed", "rollout", "status", "steps",
                "min_clearance", "filter_interventions"], rows)
    for arm in arms:
        agg = report.aggregates[arm.name]
        print(f"{arm.name}: collision {agg['collision_rate']['mean']:.3f} "
              f"(std {agg['collision_rate']['std']:.3f}), "
              f"success {agg['success_rate']['mean']:.3f}")
    return 0


def cmd_check_reduction(config: dict, ctx: _Ctx) -> int:
    out, seed = ctx.out, ctx.seed
    rdoc = dict(config.get("reduction", {}))
    num = int(rdoc.get("num_instances", 50))
    tol = float(rdoc.get("tol", 1e-9))
    suite_seed = int(rdoc.get("seed", seed))
    suite = oracle.reduction_suite(num, seed=suite_seed)
    rows = []
    all_pass = True
    for i, inst in enumerate(suite):
        rep = oracle.check_reduction(inst)
        ok = rep.max_diff <= tol and rep.strategy_max_err <= tol
        all_pass &= ok
        rows.append({
            "instance": i, "horizon": inst.horizon, "nodes": len(inst.xs),
            "u_max": inst.u_max, "d_max": inst.d_max,
            "max_diff": rep.max_diff, "strategy_max_err": rep.strategy_max_err,
            "pass": ok,
        })
        print(f"instance {i:2d}: T={inst.horizon} n={len(inst.xs):3d} "
              f"max|V1-V2|={rep.max_diff:.3e} strategy_err={rep.strategy_max_err:.3e} "
              f"{'PASS' if ok else 'FAIL'}")
    _write_json(out / "reduction_report.json", {
        "tol": tol, "num_instances": num, "all_pass": all_pass,
        "instances": rows, "config_fingerprint": config_fingerprint(config)})
    print(f"reduction check: {'all pass' if all_pass else 'FAILURES PRESENT'} at {tol:g}")
    return 0 if all_pass else EXIT_NUMERICAL


COMMANDS = {
    "gen-world": cmd_gen_world,
    "verify": cmd_verify,
    "collect": cmd_collect,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "check-reduction": cmd_check_reduction,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safeclone",
        description="Adversarially guided data collection for safe behavior cloning")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="parallelism hint; never changes results")
        p.add_argument("--diagnostics", action="store_true",
                       help="emit per-solve diagnostics as JSON lines")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        out = Path(args.out or config.get("out", "runs/out"))
        out.mkdir(parents=True, exist_ok=True)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        ctx = _Ctx(out, seed, args.diagnostics)
        try:
            return COMMANDS[args.command](config, ctx)
        finally:
            ctx.close()
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        log.error("missing artifact: %s", exc)
        return EXIT_MISSING
    except (ConvergenceError, SolverFailedError, TrainingDivergedError,
            GenerationInfeasibleError, FormatError, ContractError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
