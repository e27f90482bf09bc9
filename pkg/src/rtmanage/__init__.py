"""Schedulability analysis, admission control and simulation for component
systems whose structure changes at run time under a periodic management task."""

from .model import (
    Binding,
    Component,
    ManagementOpSpec,
    ManagementTaskConfig,
    OpRegistry,
    Request,
    SystemState,
    TaskSet,
    make_state,
)
from .analysis import response_time, response_time_with_mgmt
from .admission import admit_request, register_operation, unregister_operation
from .simulator import SimConfig, Simulation, simulate

__all__ = [
    "Binding", "Component", "ManagementOpSpec", "ManagementTaskConfig", "OpRegistry", "Request",
    "SystemState", "TaskSet", "make_state", "response_time", "response_time_with_mgmt",
    "admit_request", "register_operation", "unregister_operation", "SimConfig", "Simulation",
    "simulate",
]
__version__ = "0.1.0"
