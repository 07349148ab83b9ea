"""loopsim: event-driven simulation of photonic spiking networks built
from superconducting loop neurons, with structural synthesis, criticality
analysis, and light-speed scaling calculators."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    NS,
    PS,
    US,
    MS,
    Edge,
    LoopConfig,
    LoopState,
    NetworkSpec,
    NeuronSpec,
    RngStream,
    SpikeLog,
    SynapseState,
    effective_weight,
    load_network,
    save_network,
    validate_network,
)
from .engine import ExternalInput, run  # noqa: F401
