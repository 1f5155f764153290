"""Multi-scale temporal homeostasis for small dense networks.

Four regulators acting on different step cadences (ultra-fast emergency
suppression, fast calcium homeostasis, medium synaptic scaling, slow
structural shrinkage), a coordinator that arbitrates between them, health
monitoring with a health-scaled learning rate, and an experiment harness.
"""
from .coordinator import CoordinatorState, InterventionLedger, coordinate
from .health import adaptive_lr, assess_health, realism_score
from .network import build_model, forward, regulate_weights
from .numerics import MSTHError
from .regulators import RegulatorConfig, Scale, StepSchedule
from .training import OptimizerState, PerturbationSpec, Trainer

__version__ = "0.1.0"

__all__ = [
    "CoordinatorState", "InterventionLedger", "MSTHError", "OptimizerState", "PerturbationSpec",
    "RegulatorConfig", "Scale", "StepSchedule", "Trainer", "adaptive_lr", "assess_health", "build_model",
    "coordinate", "forward", "realism_score", "regulate_weights",
]
