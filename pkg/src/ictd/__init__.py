"""In-context kernel TD: a fixed-weight nonlinear transformer that runs kernel
temporal-difference policy evaluation in its forward pass."""

__version__ = "0.1.0"

from .kernels import KernelFamily, KernelOverflowError, KernelSpec, affinity_matrix, kernel_eval
from .mrp import LinearValueDomain, SyntheticDomain, Transition, Transitions, get_preset
from .td import TdConfig, TdState, evaluate_value, residual_step, td_step
from .transformer import LayerWeights, PromptMatrix, build_prompt, forward, predict_raw, read_value

__all__ = [
    "KernelFamily", "KernelOverflowError", "KernelSpec", "affinity_matrix", "kernel_eval",
    "LinearValueDomain", "SyntheticDomain", "Transition", "Transitions", "get_preset",
    "TdConfig", "TdState", "evaluate_value", "residual_step", "td_step",
    "LayerWeights", "PromptMatrix", "build_prompt", "forward", "predict_raw", "read_value",
]
