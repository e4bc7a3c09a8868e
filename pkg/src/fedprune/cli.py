"""Command line entry point: run experiments, sweep a config axis, and
report model costs from a checkpoint.

Config files are INI-style ``key = value`` sections; any field can be
overridden on the command line with ``--set key=value`` (bare keys work when
unambiguous, ``section.key`` always works).
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, costs
from .sim import ALGORITHMS, ConfigError, ExperimentConfig, load_checkpoint, \
    run_experiment

SECTIONS = {
    "data": ("data_kind", "classes", "per_class", "dim", "spread", "csv_path",
             "csv_header", "test_ratio", "server_ratio"),
    "federation": ("clients", "client_fraction", "alpha", "dev_ratio",
                   "dev_disjoint"),
    "model": ("hidden", "blocks", "bn_momentum", "bn_eps"),
    "training": ("algorithm", "rounds", "local_epochs", "batch_size", "lr",
                 "lr_decay", "weighted_aggregation", "pretrain_epochs"),
    "pruning": ("density", "pool_size", "pool_noise", "granularity", "order",
                "interval", "stop_round", "growth_fraction", "aggregate_std"),
    "run": ("seed", "bits"),
}
_FIELD_SECTION = {name: section for section, names in SECTIONS.items()
                  for name in names}
_FIELD_TYPE = {f.name: f.type for f in fields(ExperimentConfig)}

SWEEP_AXES = ("density", "alpha", "pool_size", "granularity", "seed")


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name == "hidden":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    kind = _FIELD_TYPE[name]
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def _format_value(name: str, value) -> str:
    if name == "hidden":
        return ",".join(str(int(v)) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigError([f"config parse error: {err}"])
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError([f"unknown config section [{section}]"])
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError([f"unknown key {key!r} in section "
                                   f"[{section}]"])
            try:
                values[key] = _parse_value(key, raw)
            except ValueError as err:
                raise ConfigError([str(err)])
    return ExperimentConfig(**values)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section, names in SECTIONS.items():
        lines.append(f"[{section}]")
        for name in names:
            lines.append(f"{name} = {_format_value(name, getattr(cfg, name))}")
        lines.append("")
    return "\n".join(lines)


def apply_overrides(cfg: ExperimentConfig, sets: list[str]) -> ExperimentConfig:
    for item in sets:
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not key=value"])
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if _FIELD_SECTION.get(key) != section:
                raise ConfigError([f"unknown override {section}.{key}"])
        elif key not in _FIELD_SECTION:
            raise ConfigError([f"unknown override key {key!r}"])
        try:
            setattr(cfg, key, _parse_value(key, raw))
        except ValueError as err:
            raise ConfigError([str(err)])
    return cfg


def run_id(cfg: ExperimentConfig) -> str:
    return (f"{cfg.algorithm.lower()}-d{cfg.density:g}-a{cfg.alpha:g}"
            f"-s{cfg.seed}")


def write_manifest(run_dir: Path, cfg: ExperimentConfig,
                   overrides: list[str]) -> Path:
    manifest = {
        "tool_version": __version__,
        "config": {section: {name: getattr(cfg, name) for name in names}
                   for section, names in SECTIONS.items()},
        "overrides": list(overrides),
        "resolved": {"seed": cfg.seed,
                     "pool_size": (cfg.resolved_pool_size()
                                   if cfg.algorithm != "DenseFedAvg" else 0)},
        "artifacts": {"metrics_csv": "metrics.csv",
                      "metrics_jsonl": "metrics.jsonl",
                      "checkpoint": "final.ckpt"},
    }
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True,
                               default=list) + "\n", encoding="utf-8")
    return path


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    apply_overrides(cfg, args.set or [])
    cfg.validate()
    run_dir = Path(args.out) / run_id(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(run_dir, cfg, args.set or [])
    metrics, _ = run_experiment(cfg, out_dir=run_dir)
    final = metrics[-1]
    print(f"{run_id(cfg)}: {cfg.rounds} rounds, "
          f"final accuracy {final.accuracy:.4f}, density {final.density:.4f}")
    print(f"artifacts in {run_dir}")
    return 0


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        print(f"error: sweep axis must be one of {SWEEP_AXES}",
              file=sys.stderr)
        return 2
    raw_values = [v for v in args.values.split(",") if v.strip()]
    if not raw_values:
        print("error: sweep needs at least one value", file=sys.stderr)
        return 2
    base = parse_config(args.config)
    apply_overrides(base, args.set or [])
    sweep_dir = Path(args.out)
    sweep_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for raw in raw_values:
        cfg = parse_config(args.config)
        apply_overrides(cfg, args.set or [])
        apply_overrides(cfg, [f"{args.axis}={raw.strip()}"])
        cfg.validate()
        run_dir = sweep_dir / run_id(cfg)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(run_dir, cfg, (args.set or [])
                       + [f"{args.axis}={raw.strip()}"])
        metrics, _ = run_experiment(cfg, out_dir=run_dir)
        final = metrics[-1]
        rows.append((run_id(cfg), raw.strip(), final))
        print(f"{run_id(cfg)}: final accuracy {final.accuracy:.4f}")
    summary = sweep_dir / "summary.csv"
    with open(summary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("run_id,axis,value,accuracy,loss,density,peak_flops,"
                 "memory_bytes\n")
        for rid, value, final in rows:
            fh.write(f"{rid},{args.axis},{value},{final.accuracy!r},"
                     f"{final.loss!r},{final.density!r},{final.peak_flops!r},"
                     f"{final.memory_bytes!r}\n")
    print(f"summary in {summary}")
    return 0


def cmd_cost(args) -> int:
    net, mask, _ = load_checkpoint(args.ckpt)
    bits = args.bits
    storage = costs.model_storage(net, mask, bits)
    dense_bytes = costs.dense_param_bytes(net, bits)
    sparse_bytes = storage.total_bytes
    act = costs.activation_bytes(net, args.batch, bits)
    f_d = costs.forward_flops(net, None, args.batch)
    f_s = costs.forward_flops(net, mask, args.batch)
    extra = (costs.collection_pass_flops(net, mask, list(net.prunable_keys()),
                                         args.batch) if mask else 0.0)
    memory = []
    flops = []
    for tag in costs.ALGORITHM_TAGS:
        memory.append(costs.training_memory(tag, dense_bytes, sparse_bytes,
                                            act, bits))
        peak = costs.round_peak_flops(
            tag, f_d, f_s, args.local_iters,
            extra if tag == costs.ALG_PROGRESSIVE else 0.0)
        flops.append(costs.FlopsReport(tag, f_d, f_s, args.local_iters, peak))
    blob = costs.reports_to_json(storage, memory, flops)
    if args.out:
        Path(args.out).write_text(blob + "\n", encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(blob)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedprune",
        description="desk-scale federated pruning simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config value (repeatable)")
    run.add_argument("--out", default="runs", help="output directory root")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True,
                       help=f"one of {', '.join(SWEEP_AXES)}")
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--out", default="sweeps")
    sweep.set_defaults(func=cmd_sweep)

    cost = sub.add_parser("cost", help="storage/memory/FLOPs report for a "
                                       "checkpoint")
    cost.add_argument("--ckpt", required=True)
    cost.add_argument("--bits", type=int, default=32)
    cost.add_argument("--batch", type=int, default=64)
    cost.add_argument("--local-iters", type=int, default=5)
    cost.add_argument("--out", default="")
    cost.set_defaults(func=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
