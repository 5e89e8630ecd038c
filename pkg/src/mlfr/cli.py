"""Command-line surface.

Subcommands: explain, aopc, segment, dict-learn, encode. Every command is
deterministic given its flags; randomness is always derived from --seed.

Exit codes: 2 unreadable/invalid model file, 3 unusable image input,
4 unreadable/invalid dictionary, 5 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import decoders, dictlearn, evaluation, render, segmentation
from .container import ContainerError, load_network
from .lrp import alphabeta_rule, epsilon_rule
from .nn import Network, NumericalError, ShapeError, forward

EXIT_BAD_MODEL = 2
EXIT_BAD_IMAGE = 3
EXIT_BAD_DICTIONARY = 4
EXIT_NUMERICAL = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_model(path) -> Network:
    try:
        return load_network(path)
    except (ContainerError, OSError, ValueError) as e:
        raise CliError(EXIT_BAD_MODEL, f"model: {e}") from e


def _load_image_for(network: Network, path) -> np.ndarray:
    try:
        image = render.load_image(path)
    except (OSError, ValueError) as e:
        raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
    shape = network.input_shape
    if len(shape) == 3:
        try:
            image = render.adapt_channels(image, shape[0])
        except ValueError as e:
            raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
        if image.shape != shape:
            raise CliError(
                EXIT_BAD_IMAGE,
                f"image: shape {image.shape} does not match model input {shape}",
            )
    elif image.size != int(np.prod(shape)):
        raise CliError(
            EXIT_BAD_IMAGE,
            f"image: {image.size} values cannot feed a model expecting {shape}",
        )
    return image


def _load_dictionary(path) -> dictlearn.Dictionary:
    if not path:
        raise CliError(EXIT_BAD_DICTIONARY, "dictionary: --dictionary is required in dictionary mode")
    try:
        return dictlearn.load_dictionary(path)
    except (ContainerError, OSError, ValueError) as e:
        raise CliError(EXIT_BAD_DICTIONARY, f"dictionary: {e}") from e


def _rule_from_args(args):
    if args.rule == "epsilon":
        return epsilon_rule(args.epsilon)
    return alphabeta_rule(args.alpha)


def _quickshift_params(args) -> segmentation.QuickshiftParams:
    return segmentation.QuickshiftParams(
        kernel_size=args.kernel_size,
        max_dist=args.max_dist,
        ratio=args.ratio,
        seed=args.seed,
    )


def _build_report(network, image, args):
    """Segment or encode, build the decoder, and explain the model's
    decision. Returns (report, decoder, feature_masks)."""
    model_input = image.reshape(network.input_shape)
    try:
        output, _ = forward(network, model_input)
    except NumericalError as e:
        raise CliError(EXIT_NUMERICAL, str(e)) from e
    class_index = args.class_index if args.class_index is not None else int(output.argmax())
    rule = _rule_from_args(args)

    if args.mode == "segments":
        try:
            labels = segmentation.quickshift(image, _quickshift_params(args))
        except ValueError as e:
            raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
        decoder, encoding = decoders.segmentation_decoder(image, labels)
        masks = decoder.feature_masks()
    else:
        dictionary = _load_dictionary(args.dictionary)
        if dictionary.atoms_matrix.shape[0] != image.size:
            raise CliError(
                EXIT_BAD_DICTIONARY,
                f"dictionary: atom dimension {dictionary.atoms_matrix.shape[0]} does not "
                f"match image size {image.size}",
            )
        decoder, encoding = decoders.dictionary_decoder(dictionary, image, args.gamma2)
        masks = decoders.atom_support_masks(decoder, args.theta)

    try:
        report = decoders.mlfr_explain(network, decoder, encoding, class_index, rule)
    except (NumericalError, FloatingPointError) as e:
        raise CliError(EXIT_NUMERICAL, str(e)) from e
    return report, decoder, masks


def cmd_explain(args) -> int:
    network = _load_model(args.model)
    image = _load_image_for(network, args.image)
    report, decoder, masks = _build_report(network, image, args)

    top_k = min(args.top_k, report.num_features)
    spec = render.OverlaySpec(top_k=top_k, dim_factor=args.dim_factor, outline=args.outline)
    mask = render.selected_mask(masks, report, top_k)
    original = render.load_image(args.image)
    overlay = render.render_overlay(original, mask, spec)
    if args.out:
        render.save_image(overlay, args.out)
    if args.heatmap:
        render.save_image(render.pixel_heatmap(report), args.heatmap)
    if args.json:
        atom_masks = masks if report.feature_kind == "atom" else None
        doc = decoders.report_to_json(report, atom_masks=atom_masks)
        Path(args.json).write_text(decoders.report_json_dumps(doc), encoding="utf-8")
    return 0


def _sorted_images(images_dir) -> list[Path]:
    root = Path(images_dir)
    if not root.is_dir():
        raise CliError(EXIT_BAD_IMAGE, f"image: {images_dir} is not a directory")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise CliError(EXIT_BAD_IMAGE, f"image: no PNG files in {images_dir}")
    return paths


def cmd_aopc(args) -> int:
    network = _load_model(args.model)
    paths = _sorted_images(args.images_dir)
    images = [_load_image_for(network, p) for p in paths]
    first = images[0].shape
    for p, im in zip(paths, images):
        if im.shape != first:
            raise CliError(
                EXIT_BAD_IMAGE,
                f"image: {p.name} has shape {im.shape}, others have {first}; "
                "aopc requires uniformly sized images",
            )

    threads = max(1, int(os.environ.get("MLFR_THREADS", "1")))

    def run(fn, items):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def prepare(item):
        index, image = item
        report, decoder, _ = _build_report(network, image, args)
        order = decoders.top_k_features(report, report.num_features)
        if args.mode == "segments":
            regions = evaluation.segment_flip_regions(decoder, order)
        else:
            regions = evaluation.atom_flip_regions(decoder, order, args.theta)
        return report.class_index, regions

    prepared = run(prepare, list(enumerate(images)))
    min_regions = min(len(regions) for _, regions in prepared)
    L = args.L if args.L is not None else min_regions
    if L > min_regions:
        offender = paths[[len(r) for _, r in prepared].index(min_regions)]
        raise CliError(
            EXIT_BAD_IMAGE,
            f"image: --L {L} exceeds the {min_regions} regions of {offender.name}",
        )

    def evaluate(item):
        index, (class_index, regions) = item
        curve = evaluation.morf_curve(
            network, images[index], regions, class_index, L, args.seed, image_index=index
        )
        baseline = None
        if args.baseline_seeds:
            baseline = evaluation.random_baseline(
                network,
                images[index],
                regions,
                class_index,
                L,
                args.baseline_seeds,
                image_index=index,
            )
        return curve, baseline

    results = run(evaluate, list(enumerate(prepared)))

    curves = [r[0] for r in results]
    result = evaluation.aopc(curves)
    random_mean = None
    if args.baseline_seeds:
        random_mean = float(np.mean([r[1].aopc for r in results]))

    if args.csv:
        # curves are also reported relative to the per-image mean random
        # curve when a baseline is available (ordering "relative")
        lines = ["image_id,k,drop,ordering,seed"]
        for path, (curve, baseline) in zip(paths, results):
            for k, drop in enumerate(curve.drops):
                lines.append(f"{path.stem},{k},{drop!r},{curve.ordering},{curve.seed}")
            if baseline is not None:
                for bcurve in baseline.per_image_curves:
                    for k, drop in enumerate(bcurve.drops):
                        lines.append(f"{path.stem},{k},{drop!r},{bcurve.ordering},{bcurve.seed}")
                mean_random = np.mean([bc.drops for bc in baseline.per_image_curves], axis=0)
                for k, (drop, rnd) in enumerate(zip(curve.drops, mean_random)):
                    lines.append(f"{path.stem},{k},{float(drop - rnd)!r},relative,{curve.seed}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")

    if args.json:
        summary = {
            "schema": "mlfr-aopc-v1",
            "L": curves[0].L,
            "n_images": len(paths),
            "aopc": result.aopc,
            "seed": args.seed,
            "baseline_seeds": args.baseline_seeds or None,
            "random_baseline_aopc": random_mean,
            "relative_to_random": None if random_mean is None else result.aopc - random_mean,
        }
        Path(args.json).write_text(
            json.dumps(summary, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
        )
    return 0


def cmd_segment(args) -> int:
    try:
        image = render.load_image(args.image)
        labels = segmentation.quickshift(image, _quickshift_params(args))
    except (OSError, ValueError) as e:
        raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
    if args.out:
        render.save_image(render.labels_to_image(labels), args.out)
    if args.json:
        doc = segmentation.labels_to_json(labels)
        Path(args.json).write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
        )
    return 0


def cmd_dict_learn(args) -> int:
    paths = _sorted_images(args.images_dir)
    columns = []
    for p in paths:
        try:
            columns.append(render.load_image(p).reshape(-1))
        except (OSError, ValueError) as e:
            raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
    sizes = {c.shape[0] for c in columns}
    if len(sizes) != 1:
        raise CliError(EXIT_BAD_IMAGE, "image: training images must all have the same size")
    data = np.stack(columns, axis=1)
    config = dictlearn.DictLearnConfig(
        atoms=args.atoms,
        gamma1=args.gamma1,
        gamma2=args.gamma2,
        max_iters=args.max_iters,
        tolerance=args.tolerance,
        seed=args.seed,
    )
    try:
        dictionary = dictlearn.learn_dictionary(data, config)
    except FloatingPointError as e:
        raise CliError(EXIT_NUMERICAL, str(e)) from e
    dictlearn.save_dictionary(dictionary, args.out)
    return 0


def cmd_encode(args) -> int:
    dictionary = _load_dictionary(args.dictionary)
    try:
        image = render.load_image(args.image)
    except (OSError, ValueError) as e:
        raise CliError(EXIT_BAD_IMAGE, f"image: {e}") from e
    flat = image.reshape(-1)
    if dictionary.atoms_matrix.shape[0] != flat.shape[0]:
        raise CliError(
            EXIT_BAD_DICTIONARY,
            f"dictionary: atom dimension {dictionary.atoms_matrix.shape[0]} does not "
            f"match image size {flat.shape[0]}",
        )
    encoding = dictlearn.sparse_encode(dictionary, flat, args.gamma2)
    doc = {
        "schema": "mlfr-encoding-v1",
        "gamma2": args.gamma2,
        "coefficients": [float(v) for v in encoding.coefficients],
        "converged": encoding.converged,
        "sweeps": encoding.sweeps,
    }
    Path(args.json).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    return 0


def _add_rule_flags(p):
    p.add_argument("--rule", choices=["epsilon", "alphabeta"], default="epsilon")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--alpha", type=float, default=2.0)


def _add_quickshift_flags(p):
    p.add_argument("--kernel-size", type=float, default=4.0)
    p.add_argument("--max-dist", type=float, default=200.0)
    p.add_argument("--ratio", type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlfr",
        description="Middle-level feature relevance explanations and their evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="explain one image; write overlay/heatmap/report")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mode", choices=["segments", "dictionary"], default="segments")
    _add_rule_flags(p)
    p.add_argument("--class-index", type=int, default=None)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--dim-factor", type=float, default=0.3)
    p.add_argument("--outline", action="store_true")
    p.add_argument("--dictionary", default=None)
    p.add_argument("--gamma2", type=float, default=0.0)
    p.add_argument("--theta", type=float, default=0.05)
    _add_quickshift_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--heatmap", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("aopc", help="MoRF curves and AOPC over an image directory")
    p.add_argument("--model", required=True)
    p.add_argument("--images-dir", required=True)
    p.add_argument("--mode", choices=["segments", "dictionary"], default="segments")
    _add_rule_flags(p)
    p.add_argument("--class-index", type=int, default=None)
    p.add_argument("--dictionary", default=None)
    p.add_argument("--gamma2", type=float, default=0.0)
    p.add_argument("--theta", type=float, default=0.05)
    _add_quickshift_flags(p)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--baseline-seeds",
        type=lambda s: [int(v) for v in s.split(",") if v != ""],
        default=None,
    )
    p.add_argument("--csv", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_aopc)

    p = sub.add_parser("segment", help="quickshift superpixels to PNG/JSON")
    p.add_argument("--image", required=True)
    _add_quickshift_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("dict-learn", help="learn a dictionary from an image directory")
    p.add_argument("--images-dir", required=True)
    p.add_argument("--atoms", type=int, required=True)
    p.add_argument("--gamma1", type=float, default=0.0)
    p.add_argument("--gamma2", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dict_learn)

    p = sub.add_parser("encode", help="sparse-encode one image against a dictionary")
    p.add_argument("--dictionary", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--gamma2", type=float, default=0.1)
    p.add_argument("--json", required=True)
    p.set_defaults(func=cmd_encode)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"mlfr: {e}", file=sys.stderr)
        return e.code
    except (ShapeError, ValueError, IndexError) as e:
        print(f"mlfr: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry() -> None:
    sys.exit(main())
