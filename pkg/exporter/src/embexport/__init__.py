"""Per-pixel embedding exporter.

Builds a dilated fully convolutional backbone, runs it over images, and
writes the resulting embedding fields in the tensor container format the
segmentation engine consumes. Includes a toy training loop for fitting
the backbone to a handful of labeled images.
"""

from .config import ExportConfig
from .dgst import read_labels, write_embedding
from .errors import ExportError
from .export import compute_embeddings, export_embeddings, load_image
from .model import RepNet, build_repnet
from .train import (
    TrainResult,
    boundary_weights,
    downsample_labels,
    restricted_cross_entropy,
    toy_train,
)

__all__ = [
    "ExportConfig",
    "ExportError",
    "RepNet",
    "TrainResult",
    "boundary_weights",
    "build_repnet",
    "compute_embeddings",
    "downsample_labels",
    "export_embeddings",
    "load_image",
    "read_labels",
    "restricted_cross_entropy",
    "toy_train",
    "write_embedding",
]

__version__ = "0.1.0"
