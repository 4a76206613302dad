"""Frozen-backbone image feature extraction into the FVF1 format."""

from .backbones import BackboneSpec, WeightsUnavailableError, build_backbone, get_spec
from .extract import extract_folder, extract_medmnist
from .fvf import read_fvf, write_fvf

__version__ = "0.1.0"

__all__ = [
    "BackboneSpec", "WeightsUnavailableError", "build_backbone", "get_spec",
    "extract_folder", "extract_medmnist", "read_fvf", "write_fvf",
    "__version__",
]
