"""Reversible and lifted non-reversible samplers for finite mixture allocations."""

from .model import (AllocationState, Dataset, ModelKind, ModelSpec, simulate_dataset,
                    simulate_fixed_mixture)
from .samplers import Chain, ConditionalParams, StepOutcome, VelocityState, init_state

__all__ = [
    "AllocationState", "Chain", "ConditionalParams", "Dataset", "ModelKind", "ModelSpec",
    "StepOutcome", "VelocityState", "init_state", "simulate_dataset", "simulate_fixed_mixture",
]
__version__ = "0.1.0"
