"""Cycle-level simulator of a tile-based accelerator SoC with a multi-plane
2D-mesh NoC, point-to-point accelerator communication and a dataflow runtime."""
from .errors import (AcceleratorError, AllocationError, ConfigError, DeadlockError, ModelError,
                     ValidationError)
from .noc import Coord, Mesh, MsgType, NocConfig, Packet, Plane, route_xy
from .p2p import P2pConfig, p2p_configure
from .report import RunReport, parse_csv, write_csv
from .runtime import (Allocator, DataflowGraph, DeviceRegistry, Edge, Node, Runtime,
                      run_dataflow, validate)
from .soc import Soc, SocConfig, build_soc

__all__ = [
    "AcceleratorError", "AllocationError", "Allocator", "ConfigError", "Coord", "DataflowGraph",
    "DeadlockError", "DeviceRegistry", "Edge", "Mesh", "ModelError", "MsgType", "NocConfig",
    "Node", "P2pConfig", "Packet", "Plane", "RunReport", "Runtime", "Soc", "SocConfig",
    "ValidationError", "build_soc", "p2p_configure", "parse_csv", "route_xy", "run_dataflow",
    "validate", "write_csv",
]
