"""Simulation and cost-modelling toolkit for data-center fabrics with a
reconfigurable THz wireless overlay."""

from . import channel, collectives, costmodels, fabric, orchestrator, padp, simcore

__all__ = ["channel", "collectives", "costmodels", "fabric", "orchestrator", "padp", "simcore"]
__version__ = "0.1.0"
