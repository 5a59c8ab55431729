"""``neurotune`` command line.

Exit codes: 0 ok, 1 run failure, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import ConfigError, format_validation_error, load_experiment_config
from .container import ContainerError, TrialSet, read_container, write_container
from .io_util import atomic_write_text

log = logging.getLogger("neurotune")

EXIT_OK, EXIT_RUN, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects key=value, got '{item}'")
        out[key] = _parse_value(value)
    return out


def _load_json_arg(text: str, what: str) -> dict:
    path = Path(text)
    try:
        data = json.loads(path.read_text()) if path.suffix == ".json" or path.is_file() else json.loads(text)
    except FileNotFoundError as exc:
        raise InputError(f"{what}: file not found: {text}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{what}: expected a JSON object")
    return data


# -- preprocess ------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    from .signalprep import PipelineConfig, preprocess

    ts = read_container(args.inp)
    overrides = {} if args.threshold_mm is None else {"threshold_mm": args.threshold_mm}
    cfg = PipelineConfig.for_style(args.style, **overrides)
    outs = [preprocess(rec, cfg) for rec in ts.recordings()]
    first = outs[0].recording
    X = np.stack([o.recording.data for o in outs]).astype(np.float32)
    result = TrialSet(X, ts.y, ts.subjects, first.fs, first.channel_names, first.channel_positions,
                      {**ts.meta, "preprocess": {"style": args.style, "stages": list(outs[0].stages)}})
    out = write_container(args.out, result)
    mapping = {
        "style": args.style,
        "fs": first.fs,
        "stages": list(outs[0].stages),
        "input_channels": list(ts.channel_names),
        "output_channels": list(first.channel_names),
        "threshold_mm": cfg.threshold_mm,
        "mapping": outs[0].mapping or {},
    }
    atomic_write_text(out / "mapping.json", json.dumps(mapping, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(result)} trials at {first.fs:g} Hz, {result.n_channels} channels to {out}")
    return EXIT_OK


# -- count-params ----------------------------------------------------------------

def cmd_count_params(args) -> int:
    from .lora import LoraConfig, inject
    from .modelzoo import build_model, count_params, freeze, load_model_config

    overrides = _overrides(args.set)
    try:
        cfg = load_model_config(args.model, **overrides)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    model = build_model(cfg)
    adapted = None
    if args.lora:
        lcfg = LoraConfig.model_validate(_load_json_arg(args.lora, "--lora"))
        adapted = inject(model, lcfg)
    elif args.freeze != "none":
        freeze(model, args.freeze)
    report = count_params(model)
    payload = {"model": cfg.name or cfg.family, **report.to_dict()}
    if adapted is not None:
        payload["lora"] = {"conv_rank": adapted.conv_rank, "breakdown": adapted.breakdown(),
                           "formula": adapted.formula_count()}
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(report.format_table(only_nonzero=args.trainable_only))
        print(f"trainable {report.trainable:,} of {report.total:,} ({100.0 * report.trainable / report.total:.3f}%)")
    if args.json:
        atomic_write_text(args.json, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- train / ablate / report -------------------------------------------------------

def _experiment(args):
    from .evalharness import HarnessContext

    cfg = load_experiment_config(args.config)
    updates = {}
    if args.out:
        updates["output_dir"] = str(args.out)
    if args.workers:
        updates["harness"] = cfg.harness.model_copy(update={"workers": args.workers})
    if updates:
        cfg = cfg.model_copy(update=updates)
    return cfg, HarnessContext.build(cfg)


def _failed_runs(out: Path) -> int:
    from .evalharness.reports import load_records

    return sum(rec["result"]["status"] != "ok" for rec in load_records(out))


def cmd_train(args) -> int:
    from .evalharness import run_training, variant_from_config

    cfg, ctx = _experiment(args)
    written = run_training(ctx, variant_from_config(cfg), cfg.output_dir, cfg.harness.workers)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_RUN if _failed_runs(Path(cfg.output_dir)) else EXIT_OK


def cmd_ablate(args) -> int:
    from .evalharness import run_ablation

    cfg, ctx = _experiment(args)
    written = run_ablation(ctx, cfg.output_dir, cfg.harness.workers)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_RUN if _failed_runs(Path(cfg.output_dir)) else EXIT_OK


def cmd_report(args) -> int:
    from .evalharness import build_report

    for root in args.runs:
        if not (Path(root) / "runs").is_dir():
            raise InputError(f"no run records under {root}")
    written = build_report(args.runs, args.out)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_OK


# -- synth / pretrain ----------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synthdata import SynthSpec, generate

    base = SynthSpec().to_dict()
    if args.spec:
        base.update(_load_json_arg(args.spec, "--spec"))
    for key in ("subjects", "trials_per_subject", "channels", "fs", "duration_s", "noise_std", "seed"):
        value = getattr(args, key)
        if value is not None:
            base[key] = value
    try:
        spec = SynthSpec.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise InputError(f"synthetic spec: {exc}") from exc
    ts = generate(spec)
    out = write_container(args.out, ts)
    print(f"wrote {len(ts)} trials ({ts.n_channels} ch, {ts.n_samples} samples @ {ts.fs:g} Hz) to {out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    from .diffcore import save_checkpoint
    from .evalharness import TrainSettings, default_lr, fit, perturb_backbone, prepare_inputs
    from .modelzoo import build_model, load_model_config

    try:
        cfg = load_model_config(args.model, **_overrides(args.set))
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc
    ts = read_container(args.data)
    model = build_model(cfg)
    settings = TrainSettings(args.epochs, args.batch_size, args.lr or default_lr(cfg.family))
    losses = fit(model, prepare_inputs(ts, cfg), ts.y, settings, args.seed)
    if args.perturb:
        perturb_backbone(model, args.perturb, np.random.default_rng(args.seed + 1))
    save_checkpoint(args.out, model.state_dict())
    print(f"epoch losses: {', '.join(f'{x:.4f}' for x in losses)}")
    print(f"checkpoint: {args.out}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurotune", description="Low-rank fine-tuning of EEG models.")
    p.add_argument("--version", action="version", version=f"neurotune {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", help="resample/filter/re-reference a trial container")
    s.add_argument("--in", dest="inp", required=True, type=Path)
    s.add_argument("--style", required=True, choices=["labram", "neurogpt"])
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--threshold-mm", type=float)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("count-params", help="per-layer parameter report")
    s.add_argument("--model", required=True, help="bundled config name or JSON path")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="model config override")
    s.add_argument("--lora", help="adapter config (JSON file or inline JSON)")
    s.add_argument("--freeze", choices=["none", "backbone", "all"], default="none")
    s.add_argument("--format", choices=["table", "json"], default="table")
    s.add_argument("--trainable-only", action="store_true")
    s.add_argument("--json", type=Path, help="also write the report as JSON")
    s.set_defaults(func=cmd_count_params)

    for name, func, text in (("train", cmd_train, "cross-validate one fine-tuning variant"),
                             ("ablate", cmd_ablate, "rank sweep, layer combinations and dropout study")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, help="override output_dir")
        s.add_argument("--workers", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="merge run sets into tables, t-tests and plot data")
    s.add_argument("--runs", nargs="+", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic trial container")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--spec", help="JSON file or inline JSON with generator fields")
    s.add_argument("--subjects", type=int)
    s.add_argument("--trials-per-subject", dest="trials_per_subject", type=int)
    s.add_argument("--channels", type=int)
    s.add_argument("--fs", type=float)
    s.add_argument("--duration-s", dest="duration_s", type=float)
    s.add_argument("--noise-std", dest="noise_std", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pretrain", help="train a backbone on a container and save a checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--data", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--perturb", type=float, default=0.0, help="noise scale added to backbone weights afterwards")
    s.set_defaults(func=cmd_pretrain)
    return p


def main(argv=None) -> int:
    from .evalharness import ResumeConflict

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(format_validation_error(exc, args.command), file=sys.stderr)
    except (ConfigError, ContainerError, InputError, ResumeConflict) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # noqa: BLE001
        log.debug("run failure", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
