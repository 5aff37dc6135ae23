"""CLI: export layer tensors from a model, or build toy fixtures.

Subcommands:
  init-toy       write a seed-built toy model checkpoint
  dump           run a model over input slices and export dumps
  make-fixtures  toy-model dumps over procedural slices
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .fixtures import make_toy_fixtures
from .hooks import DEFAULT_LAYERS, HookConfig, HookError, dump_slice
from .model import build_toy_model, load_toy_model, save_toy_model


def cmd_init_toy(args: argparse.Namespace) -> int:
    model = build_toy_model(args.seed)
    path = save_toy_model(model, args.out, seed=args.seed)
    print(f"toy model (seed {args.seed}) saved to {path}")
    return 0


def cmd_dump(args: argparse.Namespace) -> int:
    model = load_toy_model(args.model)
    layers = tuple(part.strip() for part in args.layers.split(",")) if args.layers else DEFAULT_LAYERS
    wanted = tuple(part.strip() for part in args.slices.split(",")) if args.slices else None
    config = HookConfig(layer_names=layers, out_dir=Path(args.out), slice_ids=wanted)
    input_dir = Path(args.input_dir)
    slice_paths = [p for p in sorted(input_dir.glob("*.npy")) if config.wants(p.stem)]
    if not slice_paths:
        print(f"ERROR EmptyInput: no matching input slices (*.npy) in {input_dir}", file=sys.stderr)
        return 1
    gt_dir = Path(args.gt_dir) if args.gt_dir else None
    for path in slice_paths:
        image = np.load(path).astype(np.float64)
        gt = None
        if gt_dir is not None:
            gt_path = gt_dir / path.name
            if gt_path.is_file():
                gt = np.load(gt_path)
        dump_slice(model, image, path.stem, config, gt_mask=gt)
    print(f"dumped {len(slice_paths)} slice(s) to {args.out}")
    return 0


def cmd_make_fixtures(args: argparse.Namespace) -> int:
    manifests = make_toy_fixtures(args.seed, args.count, args.out)
    print(f"wrote {len(manifests)} fixture manifest(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segdiag-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-toy", help="write a seed-built toy model checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="toy_model.pt")
    p.set_defaults(func=cmd_init_toy)

    p = sub.add_parser("dump", help="export layer dumps for input slices")
    p.add_argument("--model", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--layers", help="comma-separated layer names")
    p.add_argument("--slices", help="comma-separated slice ids to dump (default: all)")
    p.add_argument("--gt-dir", help="optional ground-truth masks matched by filename")
    p.add_argument("--out", default="dumps")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("make-fixtures", help="toy-model dumps over procedural slices")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--out", default="fixtures")
    p.set_defaults(func=cmd_make_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HookError as exc:
        print(f"ERROR HookError: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"ERROR Internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
