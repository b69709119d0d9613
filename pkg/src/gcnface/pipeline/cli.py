"""Command-line entry point.

Subcommands: ``synth`` (write a dataset), ``train``, ``infer``, ``eval``,
``render`` (ground-truth render of one sample, no checkpoint needed), and
``gradcheck`` (the finite-difference audit).  Global flags: ``--config``
loads a key-value config file, ``--seed`` and ``--out`` override the
corresponding config fields.

Exit codes: 0 on success, 1 when gradcheck finds a failing component,
2 on any package error.  Errors print one machine-readable line to stderr
of the form ``error: {"kind": ..., "message": ...}``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from ..errors import GcnFaceError
from .config import RunConfig, load_config, save_config
from .dataset import load_dataset, save_dataset, synth_dataset
from .evaluate import evaluate
from .gradsuite import run_gradcheck_suite
from .inference import infer
from .training import train


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key-value config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the config output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcnface",
        description="coarse-to-fine face reconstruction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--count", type=int, help="samples to generate "
                   "(default: dataset_size from the config)")

    p = sub.add_parser("train", help="train the refinement networks")
    _add_common(p)
    p.add_argument("--dataset", help="dataset file (default: synthesize)")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("infer", help="export reconstruction for one sample")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("eval", help="metric report over a dataset")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("render", help="render one sample's ground truth")
    _add_common(p)
    p.add_argument("--dataset", help="dataset file (default: synthesize)")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference audit")
    _add_common(p)
    return parser


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config.validate()


def _get_dataset(config: RunConfig, path):
    if path:
        return load_dataset(path)
    return synth_dataset(config, config.dataset_size)


def _cmd_synth(args) -> int:
    config = _load_run_config(args)
    count = args.count if args.count is not None else config.dataset_size
    dataset = synth_dataset(config, count)
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "dataset.bin")
    save_dataset(path, dataset)
    save_config(os.path.join(config.out_dir, "config.txt"), config)
    print(f"wrote {len(dataset)} samples to {path}")
    return 0


def _cmd_train(args) -> int:
    config = _load_run_config(args)
    dataset = _get_dataset(config, args.dataset)
    summary = train(config, dataset, resume=args.resume)
    print(f"trained {summary['steps']} steps; "
          f"checkpoint {summary['checkpoint']}; log {summary['log']}")
    return 0


def _cmd_infer(args) -> int:
    config = _load_run_config(args)
    dataset = load_dataset(args.dataset)
    paths = infer(config, args.checkpoint, dataset, args.index, config.out_dir)
    print(f"wrote {len(paths)} files to {config.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_run_config(args)
    dataset = load_dataset(args.dataset)
    os.makedirs(config.out_dir, exist_ok=True)
    out_path = os.path.join(config.out_dir, "eval_report.jsonl")
    report = evaluate(config, args.checkpoint, dataset, out_path=out_path)
    agg = report["aggregate"]
    print(json.dumps(agg))
    print(f"wrote report to {out_path}")
    return 0


def _cmd_render(args) -> int:
    from ..render import save_png

    config = _load_run_config(args)
    dataset = _get_dataset(config, args.dataset)
    if not 0 <= args.index < len(dataset):
        raise GcnFaceError(
            f"sample index {args.index} outside dataset of {len(dataset)}"
        )
    sample = dataset[args.index]
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, f"sample_{args.index:03d}.png")
    save_png(path, sample.image)
    print(f"wrote {path}")
    return 0


def _cmd_gradcheck(args) -> int:
    config = _load_run_config(args)
    rows = run_gradcheck_suite(seed=config.seed)
    failures = 0
    for row in rows:
        status = "PASS" if row.passed else "FAIL"
        print(f"component={row.component} error={row.error:.3e} "
              f"threshold={row.threshold:.1e} status={status}")
        failures += not row.passed
    print(f"{len(rows) - failures}/{len(rows)} components passed")
    return 0 if failures == 0 else 1


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "render": _cmd_render,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (GcnFaceError, OSError) as exc:
        line = json.dumps({"kind": type(exc).__name__, "message": str(exc)})
        print(f"error: {line}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
