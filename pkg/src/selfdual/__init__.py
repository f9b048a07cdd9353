"""Selfdual variational solvers for gradient flows and Hamiltonian systems.

A trajectory is found by minimizing a nonnegative functional whose minimum
value is zero exactly at solutions; the achieved value is a certificate.
"""

from . import convex
from .errors import (ConfigError, ConjugateError, ContractError, OracleError, ProxError,
                     SolverError)
from .lagrangians import (BoundaryCondition, BoundaryKind, FlowKind, Problem, asd_check,
                          extract_second_order, gradient_flow_functional, hamiltonian_j1,
                          hamiltonian_j2, make_boundary, second_order_reduce)
from .paths import Path, PathGrid, read_csv, write_csv
from .solver import (Method, Schedule, SolveReport, SolverOptions, certify, minimize,
                     resonance_guard)

__version__ = "0.1.0"

__all__ = [
    "convex", "ConfigError", "ConjugateError", "ContractError", "OracleError", "ProxError",
    "SolverError", "BoundaryCondition", "BoundaryKind", "FlowKind", "Problem", "asd_check",
    "extract_second_order", "gradient_flow_functional", "hamiltonian_j1", "hamiltonian_j2",
    "make_boundary", "second_order_reduce", "Path", "PathGrid", "read_csv", "write_csv",
    "Method", "Schedule", "SolveReport", "SolverOptions", "certify", "minimize",
    "resonance_guard",
]
