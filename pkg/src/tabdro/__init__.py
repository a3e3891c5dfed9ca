"""Robust self-supervised pre-training for tabular data.

Pipeline: masked-reconstruction pre-training of an encoder-decoder, then one
robustified checkpoint per categorical feature (upweighted fine-tuning or
balanced-subset head retraining), max-reconstruction-loss routing into a
downstream linear classifier, and subgroup/slice evaluation of the result.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
