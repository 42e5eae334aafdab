"""Exact simulation of the multistage epidemic chain and path diagnostics."""
from .compensator import CompensatorPaths, compensator_paths, martingale_at
from .model import ModelParams, check_state, initial_state, transition_rates
from .paths import hitting_time, last_positive_time, shift_and_project
from .simulate import BatchResult, StopRule, Trajectory, simulate_batch, simulate_path, simulate_tau_leap

__all__ = [
    "BatchResult", "CompensatorPaths", "ModelParams", "StopRule", "Trajectory",
    "check_state", "compensator_paths", "hitting_time", "initial_state", "last_positive_time",
    "martingale_at", "shift_and_project", "simulate_batch", "simulate_path", "simulate_tau_leap",
    "transition_rates",
]
