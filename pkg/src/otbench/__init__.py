"""otbench: fundus-image preprocessing, paired augmentation, evaluation
metrics and a reproducible cross-validated benchmark harness for ocular
toxoplasmosis classification and lesion segmentation."""

__version__ = "0.1.0"

from .errors import DegenerateInputError, OtbenchError, TrainingError, ValidationError

__all__ = [
    "__version__",
    "OtbenchError",
    "ValidationError",
    "DegenerateInputError",
    "TrainingError",
]
