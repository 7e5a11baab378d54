"""Command-line pipeline.

Subcommands::

    gen-data             synthetic labeled / unlabeled / held-out datasets
    train                --phase supervised | semisup
    filter-unlabeled     drop unlabeled rows confidently assigned to a known identity
    eval                 TAR@FAR, center distance and activation statistics
    analyze-centers      average pairwise cosine distance of head rows
    analyze-activations  max-activation CDF and mean on a dataset
    verify-gradients     finite-difference self-test

Exit status is 0 on success, 1 on usage errors and 2 on data or model
errors. Option values resolve as: command-line flag, then the ``--config``
JSON file, then built-in defaults. Each output file gets a
``<output>.manifest.json`` next to it describing the run.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields
from importlib import metadata

import numpy as np

from . import gradcheck
from .data import (
    DatasetFormatError,
    UNLABELED,
    SampleSet,
    gen_universe,
    plant_known,
    read_dataset,
    sample_heldout,
    sample_labeled,
    sample_unlabeled,
    write_dataset,
)
from .evaluation import DEFAULT_FARS, DEFAULT_THRESHOLDS, activation_stats, center_sparsity, evaluate
from .filtering import DEFAULT_THRESHOLD, filter_overlap
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .numerics import DimensionError
from .parallel import default_workers
from .trainer import TrainConfig, train_semisupervised, train_supervised

log = logging.getLogger("uirloss")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _version():
    try:
        return metadata.version("uirloss")
    except metadata.PackageNotFoundError:
        return "unknown"


def _floats(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}")


def _bool(text):
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# Per-subcommand defaults. Flags are parsed with SUPPRESS so only values the
# user actually typed override the config file.
GEN_DEFAULTS = {
    "seed": 0,
    "d_input": 32,
    "n_known": 50,
    "per_identity": 200,
    "n_unknown": 100,
    "unlabeled_total": 4000,
    "n_heldout": 50,
    "heldout_per_identity": 20,
    "zipf_exponent": 1.5,
    "noise_sigma": 0.1,
    "n_planted": 0,
    "planted_sigma": 0.02,
}

TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}
TRAIN_DEFAULTS["hidden"] = list(TRAIN_DEFAULTS["hidden"])

FILTER_DEFAULTS = {"threshold": DEFAULT_THRESHOLD, "scale": None, "bins": 10}

EVAL_DEFAULTS = {
    "far": list(DEFAULT_FARS),
    "postprocess": "N1F1",
    "thresholds": list(DEFAULT_THRESHOLDS),
    "impostor_multiple": 10,
    "seed": 0,
    "scale": None,
}

ACT_DEFAULTS = {"thresholds": list(DEFAULT_THRESHOLDS), "scale": None}

GRAD_DEFAULTS = {"seed": 0, "instances": 100}

_TYPES = {bool: _bool, int: int, float: float}


def _add_options(p, defaults, special=None):
    special = special or {}
    for name, default in defaults.items():
        flag = "--" + name.replace("_", "-")
        if name in special:
            p.add_argument(flag, dest=name, default=argparse.SUPPRESS, **special[name])
            continue
        kind = _TYPES.get(type(default), str)
        p.add_argument(flag, dest=name, type=kind, default=argparse.SUPPRESS,
                       help=f"default: {default}")


def _common(p):
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads for data-parallel sections (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="uirloss", description="Unknown identity rejection toolkit.")
    parser.add_argument("--version", action="version", version=f"uirloss {_version()}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="write synthetic datasets")
    _common(p)
    p.add_argument("--out-dir", required=True)
    _add_options(p, GEN_DEFAULTS)

    p = sub.add_parser("train", help="supervised or semi-supervised training")
    _common(p)
    p.add_argument("--phase", required=True, choices=("supervised", "semisup"))
    p.add_argument("--labeled", required=True)
    p.add_argument("--unlabeled", help="filtered unlabeled pool (semisup only)")
    p.add_argument("--checkpoint-in")
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--log", help="per-epoch records as JSON lines")
    p.add_argument("--n-known", type=int, help="number of known identities (supervised)")
    _add_options(p, TRAIN_DEFAULTS, {"hidden": {"type": _ints}})

    p = sub.add_parser("filter-unlabeled", help="discard likely known identities")
    _common(p)
    p.add_argument("--unlabeled", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the report here instead of stdout")
    _add_options(p, FILTER_DEFAULTS, {"scale": {"type": float}})

    p = sub.add_parser("eval", help="verification and open-set metrics")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--report", help="write the report here instead of stdout")
    _add_options(p, EVAL_DEFAULTS, {
        "far": {"type": _floats},
        "thresholds": {"type": _floats},
        "scale": {"type": float},
    })

    p = sub.add_parser("analyze-centers", help="average pairwise center distance")
    _common(p)
    p.add_argument("--checkpoint", required=True, action="append",
                   help="repeat to compare several models")
    p.add_argument("--report")

    p = sub.add_parser("analyze-activations", help="max-activation CDF and mean")
    _common(p)
    p.add_argument("--checkpoint", required=True, action="append")
    p.add_argument("--dataset", required=True)
    p.add_argument("--report")
    _add_options(p, ACT_DEFAULTS, {"thresholds": {"type": _floats}, "scale": {"type": float}})

    p = sub.add_parser("verify-gradients", help="finite-difference gradient checks")
    _common(p)
    p.add_argument("--report")
    _add_options(p, GRAD_DEFAULTS)
    return parser


def _resolve(args, defaults):
    """Merge defaults < config file < explicit flags."""
    opts = dict(defaults)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        opts.update(cfg)
    for name in defaults:
        if hasattr(args, name):
            opts[name] = getattr(args, name)
    return opts


def _workers(args):
    if args.workers is None:
        return default_workers()
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    return args.workers


def _write_manifest(output, command, config, inputs, outputs, seed, started):
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "tool_version": _version(),
        "wall_time": time.perf_counter() - started,
    }
    with open(output + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scale_for(opts, header):
    if opts.get("scale") is not None:
        return float(opts["scale"])
    return float(header.get("config", {}).get("scale", TRAIN_DEFAULTS["scale"]))


def cmd_gen_data(args, started):
    o = _resolve(args, GEN_DEFAULTS)
    seed = o["seed"]
    try:
        uni = gen_universe(o["n_known"], o["n_unknown"] + o["n_heldout"], o["d_input"], seed)
        labeled = sample_labeled(uni, o["per_identity"], o["noise_sigma"], seed)
        unl = sample_unlabeled(uni, o["unlabeled_total"], o["zipf_exponent"], o["noise_sigma"],
                               seed, identities=np.arange(o["n_unknown"]))
        if o["n_planted"]:
            unl = plant_known(unl, uni, o["n_planted"], o["planted_sigma"], seed)
        held = sample_heldout(uni, np.arange(o["n_unknown"], o["n_unknown"] + o["n_heldout"]),
                              o["heldout_per_identity"], o["noise_sigma"], seed)
    except (ValueError, DimensionError) as exc:
        raise UsageError(str(exc))
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = {}
    for name, ss in (("labeled", labeled), ("unlabeled", unl), ("heldout", held)):
        path = os.path.join(args.out_dir, f"{name}.txt")
        write_dataset(ss, path)
        outputs[name] = path
    # true identities of the unlabeled rows, for analysis only
    prov = os.path.join(args.out_dir, "unlabeled_identities.txt")
    np.savetxt(prov, unl.identities, fmt="%d")
    outputs["unlabeled_identities"] = prov
    _write_manifest(os.path.join(args.out_dir, "gen-data"), "gen-data", o, {}, outputs, seed,
                    started)
    return 0


def cmd_train(args, started):
    o = _resolve(args, TRAIN_DEFAULTS)
    if args.phase == "semisup" and not args.checkpoint_in:
        raise UsageError("--phase semisup requires --checkpoint-in")
    if args.phase == "semisup" and not args.unlabeled:
        raise UsageError("--phase semisup requires --unlabeled")
    try:
        cfg = TrainConfig.from_dict(o)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    labeled = read_dataset(args.labeled)
    if labeled.is_unlabeled or np.any(labeled.labels == UNLABELED):
        raise DatasetFormatError(f"{args.labeled}: labeled dataset contains unlabeled rows")
    inputs = {"labeled": args.labeled}
    if args.phase == "supervised":
        model = None
        if args.checkpoint_in:
            model, _ = load_checkpoint(args.checkpoint_in)
            inputs["checkpoint"] = args.checkpoint_in
        model, tlog = _guard(lambda: train_supervised(cfg, labeled, model=model,
                                                      n_known=args.n_known))
        phase = "supervised"
    else:
        model, _ = load_checkpoint(args.checkpoint_in)
        unl = read_dataset(args.unlabeled)
        if len(unl) and not unl.is_unlabeled:
            raise DatasetFormatError(f"{args.unlabeled}: unlabeled dataset contains labels")
        inputs.update(checkpoint=args.checkpoint_in, unlabeled=args.unlabeled)
        model, tlog = _guard(lambda: train_semisupervised(cfg, model, labeled, unl))
        phase = "semisupervised"
    save_checkpoint(model, args.checkpoint_out, phase=phase, config=cfg.to_dict())
    outputs = {"checkpoint": args.checkpoint_out}
    if args.log:
        with open(args.log, "w") as fh:
            for rec in tlog.to_dict()["records"]:
                fh.write(json.dumps({"batch_size": tlog.batch_size, **rec}, sort_keys=True) + "\n")
        outputs["log"] = args.log
    _write_manifest(args.checkpoint_out, f"train --phase {args.phase}", cfg.to_dict(), inputs,
                    outputs, cfg.seed, started)
    return 0


def _guard(fn):
    # shape or label problems between model and data are data errors
    try:
        return fn()
    except (DimensionError, IndexError) as exc:
        raise DatasetFormatError(f"data does not fit the model: {exc}")
    except ValueError as exc:
        if "label" in str(exc) or "no labeled data" in str(exc):
            raise DatasetFormatError(str(exc))
        raise


def cmd_filter(args, started):
    o = _resolve(args, FILTER_DEFAULTS)
    model, header = load_checkpoint(args.checkpoint)
    unl = read_dataset(args.unlabeled)
    if len(unl) and not unl.is_unlabeled:
        raise DatasetFormatError(f"{args.unlabeled}: unlabeled dataset contains labels")
    if not 0 < o["threshold"] <= 1:
        raise UsageError("--threshold must lie in (0, 1]")
    s = _scale_for(o, header)
    kept, report = _guard(lambda: filter_overlap(model, unl, o["threshold"], s=s,
                                                 workers=_workers(args), bins=o["bins"]))
    write_dataset(kept, args.out)
    doc = {"command": "filter-unlabeled", "scale": s, **report.to_dict()}
    _emit(doc, args.report)
    outputs = {"dataset": args.out}
    if args.report:
        outputs["report"] = args.report
    _write_manifest(args.out, "filter-unlabeled", {**o, "scale": s},
                    {"unlabeled": args.unlabeled, "checkpoint": args.checkpoint}, outputs, None,
                    started)
    return 0


def cmd_eval(args, started):
    o = _resolve(args, EVAL_DEFAULTS)
    model, header = load_checkpoint(args.checkpoint)
    samples = read_dataset(args.dataset)
    if np.any(samples.labels == UNLABELED):
        raise DatasetFormatError(f"{args.dataset}: evaluation rows need identity labels")
    s = _scale_for(o, header)
    try:
        report = _guard(lambda: evaluate(
            model, samples, o["far"], o["postprocess"], o["thresholds"], s=s,
            impostor_multiple=o["impostor_multiple"], seed=o["seed"], workers=_workers(args),
        ))
    except DatasetFormatError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc))
    _emit(report.to_dict(), args.report)
    if args.report:
        _write_manifest(args.report, "eval", {**o, "scale": s},
                        {"checkpoint": args.checkpoint, "dataset": args.dataset},
                        {"report": args.report}, o["seed"], started)
    return 0


def cmd_centers(args, started):
    doc = {"command": "analyze-centers", "models": []}
    for path in args.checkpoint:
        model, header = load_checkpoint(path)
        doc["models"].append({
            "checkpoint": path,
            "phase": header.get("phase"),
            "n_known": model.n_known,
            "avg_center_distance": center_sparsity(model.head),
        })
    _emit(doc, args.report)
    if args.report:
        _write_manifest(args.report, "analyze-centers", {}, {"checkpoints": args.checkpoint},
                        {"report": args.report}, None, started)
    return 0


def cmd_activations(args, started):
    o = _resolve(args, ACT_DEFAULTS)
    samples = read_dataset(args.dataset)
    doc = {"command": "analyze-activations", "dataset": args.dataset, "models": []}
    for path in args.checkpoint:
        model, header = load_checkpoint(path)
        s = _scale_for(o, header)
        try:
            cdf, mean = _guard(lambda: activation_stats(model, samples.inputs, o["thresholds"], s,
                                                        _workers(args)))
        except DatasetFormatError:
            raise
        except ValueError as exc:
            raise UsageError(str(exc))
        doc["models"].append({
            "checkpoint": path,
            "phase": header.get("phase"),
            "scale": s,
            "activation_cdf": {repr(float(k)): v for k, v in cdf.items()},
            "mean_activation": mean,
        })
    _emit(doc, args.report)
    if args.report:
        _write_manifest(args.report, "analyze-activations", o,
                        {"checkpoints": args.checkpoint, "dataset": args.dataset},
                        {"report": args.report}, None, started)
    return 0


def cmd_verify(args, started):
    o = _resolve(args, GRAD_DEFAULTS)
    if o["instances"] < 1:
        raise UsageError("--instances must be at least 1")
    errors = gradcheck.run_all(seed=o["seed"], instances=o["instances"])
    worst = max(errors.values())
    ok = worst < gradcheck.TOLERANCE
    doc = {
        "command": "verify-gradients",
        "max_relative_error": errors,
        "worst": worst,
        "tolerance": gradcheck.TOLERANCE,
        "passed": ok,
    }
    _emit(doc, args.report)
    print(f"max relative error {worst:.3e} ({'ok' if ok else 'FAILED'})", file=sys.stderr)
    return 0 if ok else 2


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "filter-unlabeled": cmd_filter,
    "eval": cmd_eval,
    "analyze-centers": cmd_centers,
    "analyze-activations": cmd_activations,
    "verify-gradients": cmd_verify,
}


def run(argv=None):
    """Run one command; returns the process exit status."""
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, started)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"file error: {exc.filename or exc}: not found", file=sys.stderr)
        return 2
    except (IsADirectoryError, PermissionError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except DatasetFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
