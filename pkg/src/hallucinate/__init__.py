"""Patch-based image hallucination: upsampling by large factors using
high-frequency detail drawn from sample images."""

from .config import HallucinationConfig, translation_only_config
from .errors import (HallucinateError, InputTooSmallError, NoSamplesError,
                     SolverError)
from .evaluation import (bt_probability, bt_scores, degrade, psnr,
                         reconstruction_error, self_oracle)
from .imgcore import load_image, save_image
from .pipeline import compute_schedule, hallucinate
from .samples import SampleEntry, SampleSet, load_local_samples, \
    load_manifest_samples

__version__ = "1.0.0"

__all__ = [
    "HallucinationConfig", "translation_only_config",
    "HallucinateError", "InputTooSmallError", "NoSamplesError", "SolverError",
    "bt_probability", "bt_scores", "degrade", "psnr", "reconstruction_error",
    "self_oracle", "load_image", "save_image", "compute_schedule",
    "hallucinate", "SampleEntry", "SampleSet", "load_local_samples",
    "load_manifest_samples", "__version__",
]
