"""Classical simulation toolkit for nearest-neighbour matchgate circuits."""

from .circuit import (
    Circuit,
    Computational,
    Gate,
    Guard,
    InputSpec,
    Macro,
    Matchgate,
    MatchgateAngles,
    Measure,
    Tilted,
    bits_input,
    instantiate_segments,
    matchgate_from_angles,
    matchgate_from_components,
)
from .serialize import parse_circuit, serialize_circuit

__all__ = [
    "Circuit",
    "Computational",
    "Gate",
    "Guard",
    "InputSpec",
    "Macro",
    "Matchgate",
    "MatchgateAngles",
    "Measure",
    "Tilted",
    "bits_input",
    "instantiate_segments",
    "matchgate_from_angles",
    "matchgate_from_components",
    "parse_circuit",
    "serialize_circuit",
]

__version__ = "0.1.0"
