"""Deterministic volumetric augmentation and evaluation for brain tumor segmentation."""
__version__ = "0.1.0"

from .errors import BrainAugError
from .nifti import load_mask, load_volume, save_mask, save_volume
from .volume import Case, Grade, SegMask, Volume

__all__ = [
    "BrainAugError", "Case", "Grade", "SegMask", "Volume",
    "load_mask", "load_volume", "save_mask", "save_volume",
]
