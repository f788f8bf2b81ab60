from .model import BINARY, CONTINUOUS, MAXIMIZE, MINIMIZE, LinExpr, MilpModel, Row, Var, Variable, big_m_for
from .mps import fmt_number, write_mps
from .solve import (BACKENDS, FEASIBLE_GAP, INFEASIBLE, OPTIMAL, SOLVER_ERROR, TIME_LIMIT, UNBOUNDED, Solution,
                    SolverConfig, read_solution, solve, write_solution)
