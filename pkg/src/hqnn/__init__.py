"""Hybrid quantum-classical CNN toolkit: a numpy statevector simulator, parametrized
4-qubit circuits, a from-scratch CNN stack and the training/evaluation pipeline."""
from .circuits import CIRCUIT_NAMES, get_circuit, run_circuit
from .hybrid import HybridModel, TrainConfig, train

__all__ = ["CIRCUIT_NAMES", "HybridModel", "TrainConfig", "get_circuit", "run_circuit", "train"]
__version__ = "0.1.0"
