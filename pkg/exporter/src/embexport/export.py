"""Turning images into embedding tensor files."""

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .dgst import write_embedding
from .errors import ExportError


def load_image(path):
    """Load an image file as a float (H, W, 3) array in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise ExportError(f"cannot read image {path}: {exc}") from exc


def compute_embeddings(model, image):
    """Run the backbone on one image and return the (H', W', N) field."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ExportError(f"image must be (H, W, 3), got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ExportError("image values must lie in [0, 1]")
    device = next(model.parameters()).device
    batch = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0).to(device)
    model.eval()
    with torch.no_grad():
        out = model(batch)
    return out.squeeze(0).permute(1, 2, 0).cpu().numpy()


def export_embeddings(model, image, out_path, cfg):
    """Embed one image, write the tensor file plus a JSON sidecar.

    The sidecar (``<out_path>.json``) records the output stride and the
    source image dimensions, which the consumer needs to resample the
    field back to pixel resolution. Returns the embedding array.
    """
    arr = np.asarray(image, dtype=np.float32)
    field = compute_embeddings(model, arr)
    write_embedding(out_path, field)
    sidecar = {
        "stride": cfg.stride,
        "source_h": int(arr.shape[0]),
        "source_w": int(arr.shape[1]),
    }
    Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return field
