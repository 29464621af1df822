"""Biomedical relation extraction over text graphs.

A self-contained float64 tensor engine with reverse-mode differentiation
drives a Bi-LSTM + multi-head-attention + multi-graph-GCN classifier,
with corpus ingestion, cross-validation, ablation, and transfer-learning
harnesses on top.
"""

__version__ = "0.1.0"

from .autodiff import Adam, Tensor, backward, grad_check, no_grad, reset_tape
from .layers import ModelConfig
from .pipeline import ABLATION_VARIANTS, ModelState, init_model, make_variant
from .training import TaskData, TrainPlan

__all__ = [
    "Adam",
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
    "reset_tape",
    "ModelConfig",
    "ABLATION_VARIANTS",
    "ModelState",
    "init_model",
    "make_variant",
    "TaskData",
    "TrainPlan",
    "__version__",
]
