"""Dilated fully convolutional backbone with multi-stage fusion.

The network is a bottleneck-residual stack in four stages (3, 4, 6 and 3
blocks). Spatial reduction stops once the feature maps reach the configured
output stride; the last two stages trade further striding for dilation
(rates 2 and 4), so the taps fused at the end all live on the same grid.
The ends of stages two, three and four are concatenated, projected to the
output depth, and passed through one residual block.
"""

import pickle
import zipfile

import torch
from torch import nn

from .errors import ExportError

# stem width and per-stage bottleneck planes; block outputs are 4x planes
_PLANS = {
    "resnet50": (64, (64, 128, 256, 512)),
    "small": (32, (16, 32, 64, 128)),
}
_STAGE_BLOCKS = (3, 4, 6, 3)
_EXPANSION = 4


def _conv_bn(in_ch, out_ch, kernel, stride=1, dilation=1):
    pad = dilation * (kernel // 2)
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=pad,
                  dilation=dilation, bias=False),
        nn.BatchNorm2d(out_ch),
    )


class Bottleneck(nn.Module):
    """1x1 reduce, 3x3 spatial, 1x1 expand, residual add."""

    def __init__(self, in_ch, planes, stride=1, dilation=1):
        super().__init__()
        out_ch = planes * _EXPANSION
        self.reduce = _conv_bn(in_ch, planes, 1)
        self.spatial = _conv_bn(planes, planes, 3, stride=stride, dilation=dilation)
        self.expand = _conv_bn(planes, out_ch, 1)
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = _conv_bn(in_ch, out_ch, 1, stride=stride)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = self.relu(self.reduce(x))
        out = self.relu(self.spatial(out))
        return self.relu(self.expand(out) + identity)


def _stage(in_ch, planes, blocks, stride, dilation):
    layers = [Bottleneck(in_ch, planes, stride=stride, dilation=dilation)]
    for _ in range(blocks - 1):
        layers.append(Bottleneck(planes * _EXPANSION, planes, dilation=dilation))
    return nn.Sequential(*layers)


class RepNet(nn.Module):
    """Embedding backbone: images (B, 3, H, W) to fields (B, N, H/s, W/s)."""

    def __init__(self, cfg):
        super().__init__()
        if cfg.backbone not in _PLANS:
            raise ExportError(
                f"unknown backbone {cfg.backbone!r}, expected one of {sorted(_PLANS)}"
            )
        stem_ch, planes = _PLANS[cfg.backbone]
        # distribute the stride-2 reductions over stem conv, pool, stage two
        reductions = {1: (1, 1, 1), 2: (2, 1, 1), 4: (2, 2, 1), 8: (2, 2, 2)}
        s_conv, s_pool, s_mid = reductions[cfg.stride]

        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_ch, 7, stride=s_conv, padding=3, bias=False),
            nn.BatchNorm2d(stem_ch),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=s_pool, padding=1),
        )
        self.stage1 = _stage(stem_ch, planes[0], _STAGE_BLOCKS[0], stride=1, dilation=1)
        self.stage2 = _stage(planes[0] * _EXPANSION, planes[1], _STAGE_BLOCKS[1],
                             stride=s_mid, dilation=1)
        self.stage3 = _stage(planes[1] * _EXPANSION, planes[2], _STAGE_BLOCKS[2],
                             stride=1, dilation=2)
        self.stage4 = _stage(planes[2] * _EXPANSION, planes[3], _STAGE_BLOCKS[3],
                             stride=1, dilation=4)

        fused_in = (planes[1] + planes[2] + planes[3]) * _EXPANSION
        self.project = nn.Sequential(
            nn.Conv2d(fused_in, cfg.depth, 1, bias=False),
            nn.BatchNorm2d(cfg.depth),
            nn.ReLU(inplace=True),
        )
        self.fuse = nn.Sequential(
            _conv_bn(cfg.depth, cfg.depth, 3),
            nn.ReLU(inplace=True),
            _conv_bn(cfg.depth, cfg.depth, 3),
        )
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        x = self.stage1(self.stem(x))
        mid = self.stage2(x)
        deep = self.stage3(mid)
        top = self.stage4(deep)
        fused = self.project(torch.cat([mid, deep, top], dim=1))
        return self.relu(self.fuse(fused) + fused)


def build_repnet(cfg):
    """Construct (and optionally load) the backbone, moved to cfg.device.

    Initialization is seeded by cfg.rng_seed, so two builds of the same
    config carry identical weights.
    """
    torch.manual_seed(cfg.rng_seed)
    model = RepNet(cfg)
    if cfg.weights is not None:
        try:
            state = torch.load(cfg.weights, map_location=cfg.device, weights_only=True)
            model.load_state_dict(state)
        except FileNotFoundError:
            raise
        except (OSError, RuntimeError, ValueError, EOFError,
                pickle.UnpicklingError, zipfile.BadZipFile) as exc:
            raise ExportError(f"cannot load weights from {cfg.weights}: {exc}") from exc
    return model.to(cfg.device)
