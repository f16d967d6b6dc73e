"""Analytical multiport pixel electromagnetic simulator.

Given the prior impedance matrix of every virtual port in a pixel design
space, predict the I/O-port response of any pixel/via pattern by a
closed-form multiport reduction.
"""
__version__ = "0.1.0"

from .errors import MapesError, SingularSystem  # noqa: E402
from .metrics import ErrorReport, compare_report, e_mean  # noqa: E402
from .pattern import (  # noqa: E402
    FINITE,
    OPEN,
    SHORT,
    IoSelection,
    LoadAssignment,
    PixelPattern,
    map_to_loads,
    parse_pattern,
    random_pattern,
)
from .prior_io import (  # noqa: E402
    PartitionedPrior,
    PriorData,
    cache_read,
    cache_write,
    partition,
    read_touchstone,
    write_touchstone,
)
from .solver import NetworkResponse, evaluate, evaluate_batch, reduce, s_to_z, z_to_s  # noqa: E402
from .synth import SynthParams, SyntheticNetwork, extract_prior, generate, oracle_solve  # noqa: E402
from .topology import (  # noqa: E402
    DesignSpace,
    PortClass,
    PortTopology,
    count_ports,
    enumerate_ports,
    export_port_map,
    read_port_map,
)
