"""Command line front end: ``embexport export`` and ``embexport train``."""

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import torch

from .config import ExportConfig
from .dgst import read_labels
from .errors import ExportError
from .export import export_embeddings, load_image
from .model import build_repnet
from .train import toy_train


def _add_config_flags(parser):
    parser.add_argument("--backbone", type=str, default=None)
    parser.add_argument("--depth", type=int, default=None)
    parser.add_argument("--stride", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None, dest="rng_seed")


def _build_config(args):
    overrides = {}
    for field in fields(ExportConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    return replace(ExportConfig(), **overrides)


def cmd_export(args):
    cfg = _build_config(args)
    image = load_image(args.image)
    model = build_repnet(cfg)
    field = export_embeddings(model, image, args.out, cfg)
    print(f"wrote {args.out} shape {field.shape} stride {cfg.stride}")
    return 0


def cmd_train(args):
    cfg = _build_config(args)
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    entries = manifest.get("images")
    if not isinstance(entries, list) or not entries:
        raise ExportError(f"{args.manifest}: manifest needs a non-empty 'images' list")
    samples = []
    for entry in entries:
        image = load_image(manifest_path.parent / entry["image"])
        labels = read_labels(manifest_path.parent / entry["labels"])
        if labels.shape != image.shape[:2]:
            raise ExportError(
                f"{entry['labels']}: label shape {labels.shape} does not match "
                f"image shape {image.shape[:2]}"
            )
        samples.append((image, labels))
    model = build_repnet(cfg)
    result = toy_train(model, samples, cfg)
    print(f"trained {cfg.epochs} epochs on {len(samples)} images: "
          f"loss {result.loss_history[-1]:.4f} accuracy {result.accuracy:.4f}")
    if args.out is not None:
        torch.save(result.model.state_dict(), args.out)
        print(f"wrote {args.out}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export per-pixel embedding fields from a convolutional backbone.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="embed one image and write a tensor file")
    p_export.add_argument("--image", required=True)
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--weights", type=str, default=None)
    _add_config_flags(p_export)
    p_export.set_defaults(func=cmd_export)

    p_train = sub.add_parser("train", help="fit the backbone on labeled images")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--out", type=str, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--lr", type=float, default=None, dest="learning_rate")
    p_train.add_argument("--boundary-weight", type=float, default=None,
                         dest="boundary_weight")
    p_train.add_argument("--boundary-distance", type=float, default=None,
                         dest="boundary_distance")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
