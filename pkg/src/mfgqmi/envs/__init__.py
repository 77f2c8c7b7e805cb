from .base import (
    EnvironmentModel,
    constant_kernel,
    inverse_cdf,
    sample_action,
    sample_transition,
    tabular_env,
)
from .ring_road import RingRoadParams, make_ring_road
from .sioux_falls import (
    NetworkTopology,
    load_topology,
    make_sioux_falls,
    parse_topology,
    sioux_falls_path,
)

__all__ = [
    "EnvironmentModel",
    "NetworkTopology",
    "RingRoadParams",
    "constant_kernel",
    "inverse_cdf",
    "load_topology",
    "make_ring_road",
    "make_sioux_falls",
    "parse_topology",
    "sample_action",
    "sample_transition",
    "sioux_falls_path",
    "tabular_env",
]
