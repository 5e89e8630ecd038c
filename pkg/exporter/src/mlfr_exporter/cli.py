"""mlfr-export: torch checkpoint -> MLFR container + reference outputs.

The checkpoint must be a full pickled module (torch.save(model, path)).
"""

from __future__ import annotations

import argparse
import sys

import torch

from .export import ExportError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlfr-export", description=__doc__)
    parser.add_argument("checkpoint", help="torch.save()d model file")
    parser.add_argument("--input-shape", required=True,
                        help="comma-separated model input shape, e.g. 3,16,16")
    parser.add_argument("--out", required=True, help="container output path")
    parser.add_argument("--refs", required=True, help="reference-output JSON path")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        model = torch.load(args.checkpoint, map_location="cpu", weights_only=False)
    except Exception as e:
        print(f"mlfr-export: cannot load checkpoint: {e}", file=sys.stderr)
        return 2
    shape = tuple(int(s) for s in args.input_shape.split(","))
    try:
        export(model, shape, args.out, args.refs, reference_seed=args.seed)
    except ExportError as e:
        print(f"mlfr-export: {e}", file=sys.stderr)
        return 3
    return 0


def entry() -> None:
    sys.exit(main())
