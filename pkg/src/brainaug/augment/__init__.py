"""Seeded augmentation transforms and their composition."""
from .base import Context, Transform
from .config import (
    TRANSFORMS,
    dump_pipeline_spec,
    load_pipeline_spec,
    load_preset,
    preset_config,
    preset_names,
    spec_from_dict,
    spec_to_dict,
)
from .intensity import (
    GaussianNoise,
    NormalizeNonZero,
    RandScaleIntensity,
    RandShiftIntensity,
    gaussian_noise,
    normalize_nonzero,
    rand_scale_intensity,
    rand_shift_intensity,
)
from .mixing import MSR, SPN, SpnPermutation, blend, make_spn_permutation, msr, spn
from .pipeline import AugmentationPipeline, AugmentResult, PipelineSpec, execute, run_pipeline
from .spatial import (
    RandElasticAffine,
    RandFlipZ,
    RandSpatialCrop,
    rand_elastic_affine,
    rand_flip_z,
    rand_spatial_crop,
)

__all__ = [
    "Context", "Transform", "TRANSFORMS",
    "NormalizeNonZero", "RandScaleIntensity", "RandShiftIntensity", "GaussianNoise",
    "RandSpatialCrop", "RandFlipZ", "RandElasticAffine", "MSR", "SPN", "SpnPermutation",
    "normalize_nonzero", "rand_scale_intensity", "rand_shift_intensity", "gaussian_noise",
    "rand_spatial_crop", "rand_flip_z", "rand_elastic_affine",
    "msr", "spn", "blend", "make_spn_permutation",
    "PipelineSpec", "AugmentationPipeline", "AugmentResult", "execute", "run_pipeline",
    "spec_from_dict", "spec_to_dict", "load_pipeline_spec", "dump_pipeline_spec",
    "load_preset", "preset_config", "preset_names",
]
