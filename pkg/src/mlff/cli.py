"""Command-line entry point.

Every subcommand is driven by a JSON configuration file; ``--set key=value``
overrides scalar keys with dotted paths.  All randomness is seeded from the
config (seed keys are required, never wall clock).  Exit codes: 0 success,
2 configuration error, 3 data/format error, 4 protocol error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .checkpoint import load_head, save_head
from .driver import (
    ExperimentConfig,
    evaluate_head,
    export_report_csv,
    load_report,
    run_experiment,
    save_report,
)
from .errors import ConfigurationError, DataError, MlffError, ProtocolError
from .model import FusionConfig, param_count, probe_param_count
from .rehearsal import STRATEGIES, entries_from_records, select_with_scores, write_selection_csv
from .store import (
    DatasetManifest,
    SynthSpec,
    augment_dataset,
    export_records_csv,
    partition_tasks,
    read_dataset,
    synth_generate,
    write_dataset,
)

log = logging.getLogger("mlff.cli")


def _setup_logging() -> None:
    level = os.environ.get("MLFF_LOG", "warning").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        level = "WARNING"
    logging.basicConfig(level=getattr(logging, level), format="%(name)s: %(message)s")


def _load_config(path: str, overrides: list[str]) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if isinstance(value, (dict, list)):
            raise ConfigurationError(f"--set only overrides scalar keys, got {key}={raw}")
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return cfg


def _check_keys(cfg: dict, allowed: set[str], required: set[str], context: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {context} keys: {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ConfigurationError(f"missing {context} keys: {sorted(missing)}")


def _require_file(path: str, key: str) -> str:
    if not Path(path).is_file():
        raise ConfigurationError(f"{key} does not exist: {path}")
    return path


def _write_resolved_config(cfg: dict, target: Path) -> None:
    target.write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n")


def _fusion_from_config(cfg: dict, manifest: DatasetManifest | None = None) -> FusionConfig:
    _check_keys(cfg, {"level_dims", "num_classes", "fused_dim"}, set(), "fusion")
    level_dims = cfg.get("level_dims")
    num_classes = cfg.get("num_classes")
    if manifest is not None:
        level_dims = level_dims or list(manifest.level_dims)
        num_classes = num_classes or manifest.num_classes
    if level_dims is None or num_classes is None:
        raise ConfigurationError("fusion.level_dims and fusion.num_classes are required")
    return FusionConfig(
        level_dims=tuple(level_dims),
        num_classes=int(num_classes),
        fused_dim=int(cfg.get("fused_dim", 0)),
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    _check_keys(cfg, {"output", "seed", "synth", "augment"}, {"output", "seed", "synth"}, "synth")
    spec = SynthSpec.from_dict(cfg["synth"])
    manifest, records = synth_generate(spec, int(cfg["seed"]))
    aug = cfg.get("augment")
    if aug:
        _check_keys(aug, {"num_variants", "sigma", "seed"}, {"num_variants", "sigma", "seed"},
                    "augment")
        records = augment_dataset(records, int(aug["num_variants"]), float(aug["sigma"]),
                                  int(aug["seed"]))
    out = Path(cfg["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(manifest, records, out)
    _write_resolved_config(cfg, out.with_name(out.name + ".config.json"))
    print(f"wrote {manifest.record_count} records to {out}")
    return 0


def cmd_run(cfg: dict) -> int:
    _check_keys(
        cfg,
        {"dataset", "output_dir", "train_per_task", "task_order", "fusion", "experiment"},
        {"dataset", "output_dir", "train_per_task", "experiment"},
        "run",
    )
    exp_raw = dict(cfg["experiment"])
    for seed_key in ("model_seed", "data_seed", "strategy_seed"):
        if seed_key not in exp_raw:
            raise ConfigurationError(f"experiment.{seed_key} must be set explicitly")
    experiment = ExperimentConfig.from_dict(exp_raw)
    manifest, records = read_dataset(_require_file(cfg["dataset"], "dataset"))
    fusion = _fusion_from_config(cfg.get("fusion", {}), manifest)
    stream = partition_tasks(
        records,
        split_seed=experiment.data_seed,
        train_per_task=int(cfg["train_per_task"]),
        task_order=cfg.get("task_order"),
    )
    report = run_experiment(experiment, stream, fusion)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_report(report, out_dir / "report.json")
    export_report_csv(report.payload(), out_dir / "report.csv")
    save_head(report.head, out_dir / "head.mlff", metadata={"af1": report.af1})
    _write_resolved_config(cfg, out_dir / "config.json")
    print(f"AF1 {report.af1:.4f}" + ("" if report.ff1 is None else f"  FF1 {report.ff1:.4f}"))
    print(f"report written to {out_dir / 'report.json'}")
    return 0


def cmd_select(cfg: dict) -> int:
    _check_keys(cfg, {"dataset", "output", "select"}, {"dataset", "output", "select"}, "select")
    sel = cfg["select"]
    _check_keys(
        sel,
        {"strategy", "budget", "seed", "k", "eval_subsample", "epsilon"},
        {"strategy", "budget", "seed"},
        "select",
    )
    if sel["strategy"] not in STRATEGIES:
        raise ConfigurationError(
            f"select.strategy must be one of {STRATEGIES}, got {sel['strategy']!r}"
        )
    _, records = read_dataset(_require_file(cfg["dataset"], "dataset"))
    candidates = entries_from_records(records)
    ids, scores = select_with_scores(
        sel["strategy"],
        candidates,
        int(sel["budget"]),
        int(sel["seed"]),
        k=int(sel.get("k", 5)),
        eval_subsample=int(sel.get("eval_subsample", 64)),
        epsilon=float(sel.get("epsilon", 1e-8)),
    )
    out = Path(cfg["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_selection_csv(out, candidates, ids, scores, sel["strategy"])
    _write_resolved_config(cfg, out.with_name(out.name + ".config.json"))
    print(f"selected {len(ids)} of {len(candidates)} candidates -> {out}")
    return 0


def cmd_eval(cfg: dict) -> int:
    _check_keys(cfg, {"dataset", "checkpoint", "output"}, {"dataset", "checkpoint"}, "eval")
    manifest, records = read_dataset(_require_file(cfg["dataset"], "dataset"))
    head, _meta = load_head(_require_file(cfg["checkpoint"], "checkpoint"))
    f1 = evaluate_head(head, records, manifest.level_dims, manifest.num_classes)
    print(f"macro F1 {f1:.6f} on {len(records)} records")
    if cfg.get("output"):
        out = Path(cfg["output"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({"macro_f1": f1, "records": len(records)}, sort_keys=True) + "\n")
        _write_resolved_config(cfg, out.with_name(out.name + ".config.json"))
    return 0


def cmd_param_count(cfg: dict) -> int:
    _check_keys(cfg, {"fusion", "probe"}, set(), "param-count")
    if ("fusion" in cfg) == ("probe" in cfg):
        raise ConfigurationError("param-count needs exactly one of fusion | probe")
    if "fusion" in cfg:
        counts = param_count(_fusion_from_config(cfg["fusion"]))
        for name, value in counts["branches"].items():
            print(f"{name:12s} {value:>12,}")
        print(f"{'hidden':12s} {counts['hidden']:>12,}")
        print(f"{'classifier':12s} {counts['classifier']:>12,}")
    else:
        probe = cfg["probe"]
        _check_keys(probe, {"kind", "in_dim", "hidden_dim", "num_classes"},
                    {"kind", "in_dim", "num_classes"}, "probe")
        counts = probe_param_count(
            probe["kind"],
            int(probe["in_dim"]),
            int(probe.get("hidden_dim", probe["in_dim"])),
            int(probe["num_classes"]),
        )
        for name, value in counts.items():
            if name != "total":
                print(f"{name:12s} {value:>12,}")
    print(f"{'total':12s} {counts['total']:>12,}")
    return 0


def cmd_export(cfg: dict) -> int:
    _check_keys(cfg, {"kind", "input", "output"}, {"kind", "input", "output"}, "export")
    out = Path(cfg["output"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg["kind"] == "report":
        doc = load_report(_require_file(cfg["input"], "input"))
        export_report_csv(doc["payload"], out)
    elif cfg["kind"] == "dataset":
        manifest, records = read_dataset(_require_file(cfg["input"], "input"))
        export_records_csv(manifest, records, out)
    else:
        raise ConfigurationError(f"export.kind must be report|dataset, got {cfg['kind']!r}")
    print(f"exported {cfg['kind']} to {out}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "select": cmd_select,
    "eval": cmd_eval,
    "param-count": cmd_param_count,
    "export": cmd_export,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="mlff",
        description="Multi-level feature fusion continual-learning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scalar config key (dotted path)")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args.set)
        return _COMMANDS[args.command](cfg)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except ProtocolError as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return 4
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except MlffError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
