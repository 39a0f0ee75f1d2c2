"""Packet-level simulator for host-driven load balancing in leaf-spine RDMA fabrics."""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, load_preset
from .engine import Engine, RngStream, SimulationError
from .loadbalancer import HopperParams
from .run import Simulation, default_hopper_params, make_baseline_table
from .topology import build_asymmetric_testbed, build_leaf_spine
from .transport import DcqcnParams, TransportParams
from .workload import FlowSpec, SizeCdf

__all__ = [
    "ConfigError",
    "DcqcnParams",
    "Engine",
    "FlowSpec",
    "HopperParams",
    "RngStream",
    "RunConfig",
    "SimulationError",
    "Simulation",
    "SizeCdf",
    "TransportParams",
    "build_asymmetric_testbed",
    "build_leaf_spine",
    "default_hopper_params",
    "load_preset",
    "make_baseline_table",
    "__version__",
]
