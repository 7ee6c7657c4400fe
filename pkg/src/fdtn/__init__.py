"""Frequency-domain video prediction.

Motion between frames is encoded as a per-frequency-bin phase difference
field, advanced by complex rotation, and corrected by small learned
networks trained through the prediction recurrence.
"""

from . import _threads  # noqa: F401  (must precede numpy-importing modules)
from .freqcore import PhaseField, apply_transform, encode_transform
from .gridfft import ComplexGrid, RealGrid, dft_reference, fft_forward, fft_inverse
from .model import (
    FdtnConfig,
    FdtnModel,
    copy_last_baseline,
    evaluate,
    mse_loss,
    rollout,
    train_bptt,
)

__all__ = [
    "RealGrid",
    "ComplexGrid",
    "PhaseField",
    "fft_forward",
    "fft_inverse",
    "dft_reference",
    "encode_transform",
    "apply_transform",
    "FdtnConfig",
    "FdtnModel",
    "rollout",
    "mse_loss",
    "train_bptt",
    "evaluate",
    "copy_last_baseline",
]

__version__ = "0.1.0"
