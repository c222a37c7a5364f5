"""Grid laboratory for prime ends, Mazurkiewicz distances and p-harmonic solves."""
from __future__ import annotations

from .domain import DomainError, DomainSpec, GridDomain, generate
from .metrics import MazBracket, inner_distance, mazurkiewicz_distance
from .pmin import ConvergenceError, InfeasibleError, SolverOptions
from .prime_end import BoundaryNode, Chain, build_boundary_nodes, pushforward, pullback
from .sobolev_capacity import GridFunction, capacity, compare_capacities, energy
from .solver import DirichletProblem, ObstacleProblem, PerronReport, perron_gap, solve_dirichlet, solve_obstacle

__version__ = "0.1.0"
