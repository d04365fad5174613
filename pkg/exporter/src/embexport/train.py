"""Small-scale supervised fitting of the embedding backbone.

Training treats every segment of every image as its own class: label maps
get disjoint global id ranges, a shared 1x1 head scores all of them, and
the softmax for one image is restricted to the ids that occur in it. Ids
from other images are masked to -inf before normalization, so their logits
receive identically zero gradient. Pixels near a segment boundary carry
extra loss weight, the rest weight 1.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage
from torch import nn

from .errors import ExportError


def downsample_labels(labels, stride):
    """Nearest-neighbor subsample of a label map onto the output grid.

    Raises if subsampling drops a segment entirely: a vanished class can
    never be predicted, which silently caps the reachable accuracy.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ExportError(f"label map must be 2-dimensional, got shape {arr.shape}")
    h, w = arr.shape
    rows = np.arange(math.ceil(h / stride)) * stride
    cols = np.arange(math.ceil(w / stride)) * stride
    coarse = arr[np.ix_(rows, cols)]
    lost = np.setdiff1d(np.unique(arr), np.unique(coarse))
    if lost.size:
        raise ExportError(
            f"segments {lost.tolist()} vanish when subsampled at stride {stride}"
        )
    return coarse


def boundary_weights(labels, stride, boundary_distance, boundary_weight):
    """Per-pixel loss weights on the output grid.

    Boundary pixels are found at full resolution (either side of a
    4-neighbor label change), distances are Euclidean to the nearest one,
    and the resulting weight map is subsampled like the labels.
    """
    arr = np.asarray(labels)
    boundary = np.zeros(arr.shape, dtype=bool)
    vert = arr[1:, :] != arr[:-1, :]
    horz = arr[:, 1:] != arr[:, :-1]
    boundary[1:, :] |= vert
    boundary[:-1, :] |= vert
    boundary[:, 1:] |= horz
    boundary[:, :-1] |= horz
    if boundary.any():
        dist = ndimage.distance_transform_edt(~boundary)
    else:
        dist = np.full(arr.shape, np.inf)
    weights = np.where(dist <= boundary_distance, boundary_weight, 1.0)
    rows = np.arange(math.ceil(arr.shape[0] / stride)) * stride
    cols = np.arange(math.ceil(arr.shape[1] / stride)) * stride
    return weights[np.ix_(rows, cols)].astype(np.float32)


def restricted_cross_entropy(logits, targets, allowed, weights):
    """Weighted cross entropy over a restricted class set.

    logits are (G, P), targets and weights are (P,), allowed is a (G,)
    bool mask. Classes outside the mask are forced to -inf before the
    log-softmax, so they get zero probability and zero gradient.
    """
    if bool((~allowed[targets]).any()):
        raise ExportError("target class outside the allowed set")
    mask = ~allowed.unsqueeze(1)
    logp = logits.masked_fill(mask, float("-inf")).log_softmax(dim=0)
    nll = -logp[targets, torch.arange(targets.shape[0], device=targets.device)]
    return (weights * nll).sum() / weights.sum()


@dataclass
class TrainResult:
    """Fitted modules plus how well they memorized the training pixels."""

    model: nn.Module
    head: nn.Module
    accuracy: float
    loss_history: list


def _prepare(samples, cfg):
    """Validate samples and assign global class ids per image."""
    if not samples:
        raise ExportError("no training samples")
    prepared = []
    offset = 0
    for image, labels in samples:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ExportError(f"image must be (H, W, 3), got shape {arr.shape}")
        coarse = downsample_labels(labels, cfg.stride)
        ids = np.unique(coarse)
        local = np.searchsorted(ids, coarse)
        weights = boundary_weights(labels, cfg.stride,
                                   cfg.boundary_distance, cfg.boundary_weight)
        prepared.append((arr, local + offset, weights, offset, offset + ids.size))
        offset += ids.size
    return prepared, offset


def toy_train(model, samples, cfg):
    """Fit the backbone plus a fresh 1x1 head on a handful of images.

    samples is a sequence of (image, label_map) pairs; images are float
    (H, W, 3) in [0, 1] and label maps are integer (H, W). Returns the
    fitted modules, the pooled pixel accuracy over the training images
    (restricted argmax, eval mode), and the per-epoch mean loss.
    """
    torch.manual_seed(cfg.rng_seed)
    prepared, total_classes = _prepare(samples, cfg)
    device = torch.device(cfg.device)
    head = nn.Conv2d(cfg.depth, total_classes, 1).to(device)
    params = list(model.parameters()) + list(head.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate)

    tensors = []
    for arr, targets, weights, lo, hi in prepared:
        batch = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0).to(device)
        allowed = torch.zeros(total_classes, dtype=torch.bool, device=device)
        allowed[lo:hi] = True
        tensors.append((
            batch,
            torch.from_numpy(targets.reshape(-1).astype(np.int64)).to(device),
            torch.from_numpy(weights.reshape(-1)).to(device),
            allowed,
        ))

    history = []
    model.train()
    head.train()
    for _ in range(cfg.epochs):
        epoch_loss = 0.0
        for batch, targets, weights, allowed in tensors:
            optimizer.zero_grad()
            logits = head(model(batch)).squeeze(0).reshape(total_classes, -1)
            loss = restricted_cross_entropy(logits, targets, allowed, weights)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
        history.append(epoch_loss / len(tensors))

    model.eval()
    head.eval()
    correct = 0
    total = 0
    with torch.no_grad():
        for batch, targets, _, allowed in tensors:
            logits = head(model(batch)).squeeze(0).reshape(total_classes, -1)
            logits = logits.masked_fill(~allowed.unsqueeze(1), float("-inf"))
            correct += int((logits.argmax(dim=0) == targets).sum())
            total += targets.shape[0]
    return TrainResult(model=model, head=head,
                       accuracy=correct / total, loss_history=history)
