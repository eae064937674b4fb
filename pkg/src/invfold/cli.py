"""Command-line entry point.

Single binary with subcommands covering the whole pipeline:

    gen-data     write a synthetic structure/sequence dataset
    pretrain-lm  masked-LM pretraining on sequences alone
    train        conditional masked-LM training of the full design stack
    design       iterative-refinement sequence design from structures
    eval         recovery / perplexity / context report
    sweep        temperature sweep for the accuracy-diversity trade-off
    gradcheck    finite-difference check of analytic gradients

Configuration comes from an optional YAML/JSON file (--config) plus
``--set dotted.key=value`` overrides; unknown keys are rejected. Every run
prints its fully resolved config. Exit codes: 0 success, 1 runtime failure,
2 usage, 3 config, 4 checkpoint, 5 data, 6 numerical check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field

import torch
import yaml

from . import CHECKPOINT_FORMAT_VERSION, __version__, rand
from .checkpoint import CheckpointError
from .config import ConfigError, from_dict, to_jsonable
from .dataset import DataError, SyntheticSpec, gen_synthetic, parse_dataset, write_dataset
from .decoding import DecodingConfig, batch_design
from .geometry import GeometryError
from .lm import LMConfig, MaskedLM, PretrainSchedule, pretrain_lm
from .metrics import diversity_sweep, evaluate
from .model import (
    ModelConfig,
    build_model,
    load_encoder_into,
    load_lm_into,
    load_model,
    save_lm,
    save_model,
)
from .structure import StructureError
from .training import TrainConfig, TrainingDiverged, model_gradcheck, train
from .vocab import detokenize

logger = logging.getLogger("invfold")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4
EXIT_DATA = 5
EXIT_NUMERIC = 6

PRECISIONS = {"f32": torch.float32, "f64": torch.float64}


@dataclass
class Globals:
    precision: str = "f32"
    threads: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


@dataclass
class GenDataCmd:
    out: str = "data.jsonl"
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)
    run: Globals = field(default_factory=Globals)


@dataclass
class PretrainCmd:
    data: str = "data.jsonl"
    out: str = "lm.ckpt"
    curve_out: str | None = None
    lm: LMConfig = field(default_factory=LMConfig)
    schedule: PretrainSchedule = field(default_factory=PretrainSchedule)
    run: Globals = field(default_factory=Globals)


@dataclass
class TrainCmd:
    data: str = "data.jsonl"
    out: str = "model.ckpt"
    metrics_out: str | None = None
    encoder_init: str | None = None
    lm_init: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: Globals = field(default_factory=Globals)


@dataclass
class DesignCmd:
    data: str = "data.jsonl"
    checkpoint: str = "model.ckpt"
    out: str = "designs.jsonl"
    n_workers: int = 0
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    run: Globals = field(default_factory=Globals)


@dataclass
class EvalCmd:
    data: str = "data.jsonl"
    checkpoint: str = "model.ckpt"
    out: str = "eval.json"
    contexts: bool = True
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    run: Globals = field(default_factory=Globals)


@dataclass
class SweepCmd:
    data: str = "data.jsonl"
    checkpoint: str = "model.ckpt"
    out: str = "sweep.jsonl"
    taus: tuple[float, ...] = (0.1, 0.5, 1.0, 1.2, 1.5)
    n_samples: int = 20
    max_structures: int | None = None
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    run: Globals = field(default_factory=Globals)


def _small_gradcheck_model() -> ModelConfig:
    return ModelConfig(
        encoder={"d_model": 16, "n_layers": 2, "graph": {"k_neighbors": 8}},
        lm={"d_model": 16, "n_layers": 2, "n_heads": 2},
        adapter_heads=2,
    )


@dataclass
class GradcheckCmd:
    data: str | None = None
    out: str | None = None
    n_structures: int = 2
    epsilon: float = 1e-4
    n_per_group: int = 32
    tolerance: float = 1e-4
    seed: int = 0
    model: ModelConfig = field(default_factory=_small_gradcheck_model)
    run: Globals = field(default_factory=Globals)


COMMANDS = {
    "gen-data": GenDataCmd,
    "pretrain-lm": PretrainCmd,
    "train": TrainCmd,
    "design": DesignCmd,
    "eval": EvalCmd,
    "sweep": SweepCmd,
    "gradcheck": GradcheckCmd,
}


def _set_nested(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {part!r} is not a section")
    node[parts[-1]] = value


def load_command_config(cls, config_path: str | None, overrides: list[str]):
    raw = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping at the top level")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r} has an unparseable value: {exc}") from exc
        _set_nested(raw, key.strip(), value)
    return from_dict(cls, raw)


def _apply_globals(run: Globals) -> None:
    torch.set_num_threads(run.threads)
    if run.deterministic:
        torch.use_deterministic_algorithms(True)


def _log_resolved(command: str, cfg) -> None:
    print(f"resolved-config {command}: " + json.dumps(to_jsonable(cfg), sort_keys=True))


def _load_data(path: str):
    try:
        return parse_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path!r}: {exc}") from exc


def _load_design_model(path: str, dtype):
    try:
        return load_model(path, dtype=dtype)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path!r}: {exc}") from exc


def cmd_gen_data(cfg: GenDataCmd) -> int:
    records = gen_synthetic(cfg.spec)
    write_dataset(records, cfg.out)
    print(f"wrote {len(records)} records to {cfg.out}")
    return EXIT_OK


def cmd_pretrain_lm(cfg: PretrainCmd) -> int:
    dataset = _load_data(cfg.data)
    corpus = [state.tokens for _, state in dataset]
    torch.manual_seed(rand.child_seed(cfg.schedule.seed, "init") & 0x7FFFFFFFFFFFFFFF)
    model = MaskedLM(cfg.lm)
    if cfg.run.dtype == torch.float64:
        model = model.double()
    model, curve = pretrain_lm(corpus, model, cfg.schedule)
    save_lm(cfg.out, model, step=curve[-1]["step"] if curve else 0, seed=cfg.schedule.seed)
    if cfg.curve_out:
        with open(cfg.curve_out, "w", encoding="utf-8") as fh:
            for row in curve:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    final = curve[-1]["loss"] if curve else float("nan")
    print(f"pretrained lm for {len(curve)} steps, final loss {final:.4f}; saved to {cfg.out}")
    return EXIT_OK


def cmd_train(cfg: TrainCmd) -> int:
    dataset = _load_data(cfg.data)
    model = build_model(cfg.model, seed=cfg.train.seed, dtype=cfg.run.dtype)
    if cfg.train.mode.startswith("pretrained-encoder") and not cfg.encoder_init:
        raise ConfigError(f"mode {cfg.train.mode!r} needs encoder_init")
    if cfg.encoder_init:
        load_encoder_into(model, cfg.encoder_init)
    if cfg.lm_init:
        load_lm_into(model, cfg.lm_init)
    result = train(dataset, model, cfg.train, dtype=cfg.run.dtype)
    last_step = result.metrics[-1]["step"] if result.metrics else 0
    save_model(cfg.out, model, step=last_step, seed=cfg.train.seed)
    if cfg.metrics_out:
        with open(cfg.metrics_out, "w", encoding="utf-8") as fh:
            for row in result.metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
            for row in result.val_history:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    final = result.metrics[-1]["loss"] if result.metrics else float("nan")
    val = result.val_history[-1]["val_recovery"] if result.val_history else float("nan")
    print(
        f"trained {last_step} steps, final loss {final:.4f}, "
        f"val recovery {val:.4f}; saved to {cfg.out}"
    )
    return EXIT_OK


def cmd_design(cfg: DesignCmd) -> int:
    model, _ = _load_design_model(cfg.checkpoint, cfg.run.dtype)
    dataset = _load_data(cfg.data)
    structures = [s for s, _ in dataset]
    outcomes = batch_design(model, structures, cfg.decoding, n_workers=cfg.n_workers)
    failures = 0
    with open(cfg.out, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            if outcome.error is not None:
                failures += 1
                fh.write(
                    json.dumps(
                        {"id": outcome.structure_id, "error": outcome.error}, sort_keys=True
                    )
                    + "\n"
                )
                continue
            for j, res in enumerate(outcome.results):
                row = {
                    "id": outcome.structure_id,
                    "sample": j,
                    "sequence": res.sequence,
                    "logprobs": [float(v) for v in res.logprobs],
                    "steps_used": res.steps_used,
                    "converged": res.converged,
                }
                if cfg.decoding.record_trajectory:
                    row["trajectory"] = [detokenize(t) for t in res.trajectory]
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"designed {len(outcomes) - failures}/{len(outcomes)} structures -> {cfg.out}")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_eval(cfg: EvalCmd) -> int:
    model, _ = _load_design_model(cfg.checkpoint, cfg.run.dtype)
    dataset = _load_data(cfg.data)
    report = evaluate(model, dataset, cfg.decoding, with_contexts=cfg.contexts)
    with open(cfg.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(
        f"proteins {report['n_proteins']}  median recovery {report['median_recovery']:.4f}  "
        f"mean recovery {report['mean_recovery']:.4f}  perplexity {report['perplexity']:.4f}"
    )
    if cfg.contexts:
        for category, cells in report["contexts"].items():
            parts = [f"{cls} {cell['recovery']:.4f} (n={cell['count']})" for cls, cell in cells.items()]
            print(f"  {category}: " + "  ".join(parts))
    return EXIT_OK


def cmd_sweep(cfg: SweepCmd) -> int:
    model, _ = _load_design_model(cfg.checkpoint, cfg.run.dtype)
    dataset = _load_data(cfg.data)
    if cfg.max_structures is not None:
        dataset = dataset[: cfg.max_structures]
    rows = diversity_sweep(model, dataset, cfg.taus, cfg.n_samples, cfg.decoding)
    with open(cfg.out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print("tau    recovery  distinct  pairwise-identity")
    for row in rows:
        print(
            f"{row['tau']:<6g} {row['mean_recovery']:.4f}    {row['distinct_fraction']:.4f}"
            f"    {row['mean_pairwise_identity']:.4f}"
        )
    return EXIT_OK


def cmd_gradcheck(cfg: GradcheckCmd) -> int:
    if cfg.data:
        dataset = _load_data(cfg.data)[: cfg.n_structures]
    else:
        spec = SyntheticSpec(n_samples=cfg.n_structures, length_range=(12, 16), seed=cfg.seed)
        dataset = gen_synthetic(spec)
    model = build_model(cfg.model, seed=cfg.seed, dtype=torch.float64)
    report = model_gradcheck(
        model,
        dataset,
        epsilon=cfg.epsilon,
        n_per_group=cfg.n_per_group,
        seed=cfg.seed,
        tolerance=cfg.tolerance,
    )
    for group in report.groups:
        print(
            f"group {group.group:<8s} checked {group.n_checked:3d} coords  "
            f"max rel err {group.max_rel_err:.3e}"
        )
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump(to_jsonable(report.groups), fh, sort_keys=True, indent=2)
            fh.write("\n")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"gradcheck {verdict}: max rel err {report.max_rel_err:.3e} vs tolerance {report.tolerance:g}")
    return EXIT_OK if report.passed else EXIT_NUMERIC


RUNNERS = {
    "gen-data": cmd_gen_data,
    "pretrain-lm": cmd_pretrain_lm,
    "train": cmd_train,
    "design": cmd_design,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}

# Frequently used flags promoted from --set for convenience; each maps to a
# dotted config key per command.
FLAG_KEYS = {
    "gen-data": {"out": "out", "seed": "spec.seed", "n_samples": "spec.n_samples"},
    "pretrain-lm": {"data": "data", "out": "out", "seed": "schedule.seed"},
    "train": {
        "data": "data",
        "out": "out",
        "seed": "train.seed",
        "encoder_init": "encoder_init",
        "lm_init": "lm_init",
        "mode": "train.mode",
    },
    "design": {
        "data": "data",
        "out": "out",
        "checkpoint": "checkpoint",
        "seed": "decoding.seed",
        "steps": "decoding.steps",
        "strategy": "decoding.strategy",
        "temperature": "decoding.temperature",
        "init": "decoding.init",
        "n_samples": "decoding.n_samples",
    },
    "eval": {"data": "data", "out": "out", "checkpoint": "checkpoint", "seed": "decoding.seed"},
    "sweep": {
        "data": "data",
        "out": "out",
        "checkpoint": "checkpoint",
        "seed": "decoding.seed",
        "n_samples": "n_samples",
    },
    "gradcheck": {"seed": "seed", "out": "out"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invfold", description="structure-conditioned protein sequence design"
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"invfold {__version__} (checkpoint format {CHECKPOINT_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} command")
        p.add_argument("--config", default=None, help="YAML or JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path, YAML value)",
        )
        for flag, key in FLAG_KEYS[name].items():
            p.add_argument(
                f"--{flag.replace('_', '-')}",
                dest=f"flag_{flag}",
                default=None,
                help=f"shortcut for --set {key}=...",
            )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    overrides = list(args.overrides)
    for flag, key in FLAG_KEYS[command].items():
        value = getattr(args, f"flag_{flag}")
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        cfg = load_command_config(COMMANDS[command], args.config, overrides)
        _apply_globals(cfg.run)
        _log_resolved(command, cfg)
        return RUNNERS[command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DataError, StructureError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary, message over traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
