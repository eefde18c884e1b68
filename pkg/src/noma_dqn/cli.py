"""Command-line entry point: ``noma-dqn {train,sweep-lr,sweep-lambda,evaluate,plot}``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
Set ``NOMA_DQN_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, checkpoint, experiment, plot
from .config import ConfigError, RunManifest, apply_overrides, load_document, manifest_from_dict
from .experiment import RunSpec

log = logging.getLogger("noma_dqn")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class RuntimeFailure(RuntimeError):
    pass


def _setup_logging():
    level = os.environ.get("NOMA_DQN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _seed_list(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seed expects comma-separated integers, got {text!r}") from None
    if not seeds or any(s < 0 or s >= 2**64 for s in seeds):
        raise ConfigError("--seed values must be in [0, 2^64)")
    return seeds


def build_manifest(args) -> RunManifest:
    doc = load_document(args.config) if args.config else {}
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"experiment.seeds={json.dumps(_seed_list(args.seed))}")
    doc = apply_overrides(doc, overrides)
    return manifest_from_dict(doc, args.config, args.output)


def _prepare_output(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeFailure(f"cannot write to output directory {out}: {exc}") from None
    return out


def _write_result(out: Path, manifest: RunManifest, command: str, payload: dict):
    result = {
        "tool_version": __version__,
        "command": command,
        "config_hash": manifest.config_hash(),
        "seeds": list(manifest.seeds),
        **payload,
    }
    (out / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")


def _run_and_write(out: Path, manifest: RunManifest, specs: List[RunSpec], jobs: int,
                   param: str, command: str):
    try:
        results = experiment.run_all(specs, jobs)
    except Exception as exc:  # any run failure aborts the command with context
        raise RuntimeFailure(f"training failed: {exc}") from exc
    records = []
    for record, agent in results:
        experiment.write_run_csv(record, out / f"run_{record.tag}.csv")
        checkpoint.save(out / f"checkpoint_{record.tag}.bin", agent,
                        {"seed": record.seed, "total_steps": record.total_steps})
        log.info("finished %s in %.1fs", record.tag, record.duration_s)
        records.append(record)
    rows = experiment.aggregate(records, param)
    experiment.write_summary_csv(rows, out / "summary.csv")
    _write_result(out, manifest, command, {
        "runs": [experiment.record_summary(r) for r in records],
        "summary": rows,
    })
    return records


def cmd_train(manifest: RunManifest, out: Path, jobs: int = 1):
    plan = manifest.plan
    specs = [RunSpec(manifest.factory, manifest.agent, seed, plan.episodes,
                     plan.max_timesteps, plan.eval_episodes, f"seed{seed}")
             for seed in plan.seeds]
    return _run_and_write(out, manifest, specs, jobs, "lam", "train")


def cmd_sweep_lr(manifest: RunManifest, out: Path, jobs: int = 1):
    specs = experiment.lr_specs(manifest.factory, manifest.agent, manifest.plan)
    return _run_and_write(out, manifest, specs, jobs, "learning_rate", "sweep-lr")


def cmd_sweep_lambda(manifest: RunManifest, out: Path, jobs: int = 1):
    specs = experiment.lambda_specs(manifest.factory, manifest.agent, manifest.plan)
    return _run_and_write(out, manifest, specs, jobs, "lam", "sweep-lambda")


def cmd_evaluate(manifest: RunManifest, out: Path, checkpoint_path: str):
    if not Path(checkpoint_path).is_file():
        raise RuntimeFailure(f"checkpoint not found: {checkpoint_path}")
    try:
        agent = checkpoint.load(checkpoint_path)
    except (checkpoint.CheckpointError, KeyError, ValueError) as exc:
        raise RuntimeFailure(f"cannot load checkpoint {checkpoint_path}: {exc}") from None
    factory, plan = manifest.factory, manifest.plan
    n_actions = experiment.FactoryEnv(factory).n_actions
    if agent.params.layer_sizes[0] != 3 * factory.n_devices or agent.n_actions != n_actions:
        raise RuntimeFailure("checkpoint network does not match the configured factory")
    runs = []
    for seed in plan.seeds:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)).spawn(3)[2])
        metrics, se = experiment.greedy_evaluate(agent, factory, max(plan.eval_episodes, 1),
                                                 plan.max_timesteps, rng)
        runs.append({"seed": seed, "eval_spectral_efficiency": se,
                     "eval": {k: vars(v) for k, v in metrics.items()}})
    _write_result(out, manifest, "evaluate", {"checkpoint": str(checkpoint_path), "runs": runs})
    return runs


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", help="comma-separated seed list, overrides experiment.seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noma-dqn", description="Smart-factory NOMA allocation with a numpy DQN.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "train one agent per seed"),
                        ("sweep-lr", "train over the learning-rate grid"),
                        ("sweep-lambda", "train over the lambda grid")):
        _add_common(sub.add_parser(name, help=help_))
    ev = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    _add_common(ev)
    ev.add_argument("--checkpoint", required=True)
    pl = sub.add_parser("plot", help="render an SVG chart from CSV outputs")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--kind", required=True, choices=plot.KINDS)
    pl.add_argument("--output", required=True, help="SVG file to write")
    pl.add_argument("--force", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "plot":
            out = Path(args.output)
            if out.exists() and not args.force:
                raise ConfigError(f"{out} exists; pass --force to overwrite")
            svg = plot.make_plot(args.csv, args.kind)
            out.write_text(svg)
            return EXIT_OK
        manifest = build_manifest(args)
        out = _prepare_output(args.output, args.force)
        # provenance first: the resolved config lands before any run starts
        (out / "config.json").write_text(manifest.to_json())
        if args.command == "train":
            cmd_train(manifest, out, args.jobs)
        elif args.command == "sweep-lr":
            cmd_sweep_lr(manifest, out, args.jobs)
        elif args.command == "sweep-lambda":
            cmd_sweep_lambda(manifest, out, args.jobs)
        elif args.command == "evaluate":
            cmd_evaluate(manifest, out, args.checkpoint)
    except (ConfigError, plot.SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
