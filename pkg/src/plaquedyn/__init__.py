"""Dynamics of early plaque formation: equilibria, bifurcations, integration and a 1-D reaction-diffusion extension."""

from .model_core import DomainError, ModelParams, ReducedState, FullState

__version__ = "0.1.0"

__all__ = ["DomainError", "ModelParams", "ReducedState", "FullState", "__version__"]
