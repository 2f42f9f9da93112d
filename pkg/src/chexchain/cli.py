"""Command-line interface.

Subcommands: synth, train, eval, predict, gradcheck.
Common flags: --config <path>, --seed <int>, --out <dir>; flags override
config-file values.  Exit codes: 0 success, 1 validation error, 2 runtime
failure.  Every command that takes --out echoes its effective configuration
there so the run can be reproduced exactly.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint as ckpt_mod
from . import config as config_mod
from . import data as data_mod
from . import gradcheck as gradcheck_mod
from . import synth as synth_mod
from . import train as train_mod
from .errors import ChexError, ConfigurationError, IngestionError, UsageError

logger = logging.getLogger("chexchain")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (validation) on bad usage instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _ensure_out_dir(path: str) -> None:
    if path is None:
        raise ConfigurationError("--out is required")
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"output directory is not writable: {path}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ----- synth ---------------------------------------------------------------


def cmd_synth(args) -> int:
    _ensure_out_dir(args.out)
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}")
        unknown = sorted(set(raw) - {"spec", "n"})
        if unknown:
            raise ConfigurationError(f"unknown config key {unknown[0]!r}")
        spec = (
            synth_mod.spec_from_dict(raw["spec"])
            if "spec" in raw
            else synth_mod.default_spec()
        )
        n = int(raw.get("n", args.n))
    else:
        spec = synth_mod.default_spec()
        n = args.n
    if args.seed is not None:
        spec = synth_mod.spec_from_dict(
            {**synth_mod.spec_to_dict(spec), "seed": args.seed}
        )
    if n < 1:
        raise ConfigurationError(f"--n must be positive, got {n}")
    sidecar = synth_mod.write_dataset(spec, n, args.out)
    logger.info(
        "wrote %d examples to %s (joint bound %.4f, marginal bound %.4f)",
        n,
        args.out,
        sidecar["joint_bound"],
        sidecar["marginal_bound"],
    )
    return EXIT_OK


# ----- train ---------------------------------------------------------------


def _load_ordered_datasets(run_config):
    """Load, split, and apply the configured label ordering.

    Frequency ordering is computed from training-split counts only.
    Returns (train, val, test, ordering permutation).
    """
    from .orderings import order_labels

    run_config.validate_paths()
    identity = range(len(run_config.label_names))
    base = data_mod.load_dataset(
        run_config.image_dir,
        run_config.labels_csv,
        run_config.resolution,
        identity,
        label_names=run_config.label_names,
    )
    if len(base) == 0:
        raise IngestionError(f"dataset {run_config.labels_csv} is empty")
    train_ds, val_ds, test_ds = data_mod.split(base, run_config.seed)
    counts = train_ds.label_counts()
    perm = order_labels(run_config.label_names, counts, run_config.ordering_mode)
    return (
        train_ds.reorder(perm),
        val_ds.reorder(perm),
        test_ds.reorder(perm),
        perm,
    )


def cmd_train(args) -> int:
    if args.config is None:
        raise ConfigurationError("--config is required")
    _ensure_out_dir(args.out)
    run_config = config_mod.load_run_config(args.config, seed_override=args.seed)
    train_ds, val_ds, _, _ = _load_ordered_datasets(run_config)
    logger.info(
        "training %s on %d examples (%d validation), ordering %s",
        run_config.model.kind,
        len(train_ds),
        len(val_ds),
        run_config.ordering_mode,
    )
    result = train_mod.train(
        run_config.model,
        train_ds,
        val_ds,
        run_config.train,
        augment_params=run_config.augment,
    )
    ckpt_mod.save(result.checkpoint, os.path.join(args.out, "checkpoint.bin"))
    with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8") as fh:
        fh.write(
            train_mod.history_to_csv(
                result.history, run_config.model.kind, run_config.ordering_mode
            )
        )
    _write_json(
        os.path.join(args.out, "effective_config.json"),
        config_mod.run_config_to_dict(run_config),
    )
    logger.info(
        "done: %s after %d updates (best at %d); artifacts in %s",
        result.stop_reason,
        result.final_update,
        result.checkpoint.update,
        args.out,
    )
    return EXIT_OK


# ----- eval ----------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.config is None:
        raise ConfigurationError("--config is required")
    _ensure_out_dir(args.out)
    ckpt = ckpt_mod.load(args.checkpoint)
    run_config = config_mod.load_run_config(args.config, seed_override=args.seed)
    run_config.validate_paths()
    if tuple(run_config.label_names) != tuple(_base_names(ckpt)):
        raise UsageError(
            f"label ordering mismatch: checkpoint schema {_base_names(ckpt)} "
            f"vs config schema {list(run_config.label_names)}"
        )
    base = data_mod.load_dataset(
        run_config.image_dir,
        run_config.labels_csv,
        run_config.resolution,
        ckpt.ordering,
        label_names=_base_names(ckpt),
    )
    if args.split == "all":
        dataset = base
    else:
        train_ds, val_ds, test_ds = data_mod.split(base, run_config.seed)
        dataset = {"train": train_ds, "val": val_ds, "test": test_ds}[args.split]
    report = train_mod.evaluate(ckpt, dataset)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_kv_text())
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    _write_json(
        os.path.join(args.out, "eval_config.json"),
        {
            "checkpoint": os.path.abspath(args.checkpoint),
            "split": args.split,
            "run_config": config_mod.run_config_to_dict(run_config),
        },
    )
    print(report.to_kv_text(), end="")
    return EXIT_OK


def _base_names(ckpt) -> list:
    """Checkpoint label names are stored in chain order; undo the permutation."""
    base = [None] * len(ckpt.label_names)
    for pos, j in enumerate(ckpt.ordering):
        base[j] = ckpt.label_names[pos]
    return base


# ----- predict ---------------------------------------------------------------


def cmd_predict(args) -> int:
    ckpt = ckpt_mod.load(args.checkpoint)
    model = ckpt_mod.restore_model(ckpt)
    resolution = ckpt.model_config.encoder.input_resolution
    out_fh = sys.stdout
    close = False
    if args.out is not None:
        _ensure_out_dir(args.out)
        out_fh = open(os.path.join(args.out, "predictions.csv"), "w", encoding="utf-8", newline="")
        close = True
    writer = csv.writer(out_fh)
    writer.writerow(["image", "label", "bit", "probability"])
    failures = 0
    try:
        for path in args.images:
            try:
                image = data_mod.decode_image(path, resolution)
            except (OSError, ValueError) as exc:
                print(f"error: {path}: {exc}", file=sys.stderr)
                failures += 1
                continue
            bits, probs = model.predict(image[None, None, :, :])
            for pos, name in enumerate(ckpt.label_names):
                writer.writerow(
                    [path, name, int(bits[0, pos]), repr(float(probs[0, pos]))]
                )
    finally:
        if close:
            out_fh.close()
    return EXIT_RUNTIME if failures else EXIT_OK


# ----- gradcheck -------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    results = gradcheck_mod.run_op_suite(seeds=args.seeds)
    width = max(len(name) for name, _, _ in results)
    lines = []
    for name, worst, passed in results:
        lines.append(f"{name:<{width}}  {worst:.3e}  {'PASS' if passed else 'FAIL'}")
    table = "\n".join(lines) + "\n"
    print(table, end="")
    if args.out is not None:
        _ensure_out_dir(args.out)
        with open(os.path.join(args.out, "gradcheck.txt"), "w", encoding="utf-8") as fh:
            fh.write(table)
    return EXIT_OK if all(passed for _, _, passed in results) else EXIT_RUNTIME


# ----- entry point -----------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="chexchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset with oracle sidecar")
    common(p)
    p.add_argument("--n", type=int, default=100, help="number of examples")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument(
        "--split",
        choices=("train", "val", "test", "all"),
        default="test",
        help="which split of the configured dataset to score",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict labels for images")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("images", nargs="+", help="image files")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    common(p)
    p.add_argument("--seeds", type=int, default=20, help="random repetitions per op")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    except (ConfigurationError, UsageError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ChexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failure of any other stripe
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
