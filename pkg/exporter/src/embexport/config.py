"""Export and training configuration."""

from dataclasses import dataclass

from .errors import ExportError

VALID_STRIDES = (1, 2, 4, 8)


@dataclass(frozen=True)
class ExportConfig:
    """Backbone, output geometry, and toy-training knobs.

    ``weights`` is None for random initialization or a path to a saved
    state dict; there is no network download path. ``boundary_weight`` and
    ``boundary_distance`` shape the training loss: pixels within
    ``boundary_distance`` of a segment boundary (Euclidean, full
    resolution) have their cross-entropy scaled by ``boundary_weight``.
    """

    backbone: str = "resnet50"
    weights: str | None = None
    depth: int = 512
    stride: int = 4
    boundary_weight: float = 2.0
    boundary_distance: float = 5.0
    epochs: int = 200
    learning_rate: float = 1e-3
    device: str = "cpu"
    rng_seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ExportError(f"depth must be >= 1, got {self.depth}")
        if self.stride not in VALID_STRIDES:
            raise ExportError(f"stride must be one of {VALID_STRIDES}, got {self.stride}")
        if self.boundary_weight <= 0:
            raise ExportError(f"boundary_weight must be > 0, got {self.boundary_weight}")
        if self.boundary_distance < 0:
            raise ExportError(f"boundary_distance must be >= 0, got {self.boundary_distance}")
        if self.epochs < 0:
            raise ExportError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ExportError(f"learning_rate must be > 0, got {self.learning_rate}")
