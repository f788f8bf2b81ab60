"""Solve adapters.

Three backends sit behind :func:`solve`:

``highs``    scipy's bundled HiGHS, in process (default)
``highspy``  the HiGHS Python bindings, fed the MPS text through a file
``cbc``      an external CBC executable driven through MPS and solution files

Every incumbent is polished: binaries are rounded, fixed, and the remaining
LP re-solved so continuous values carry no rounding noise from the search.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..errors import BackendUnavailable
from .model import MAXIMIZE, MilpModel
from .mps import fmt_number, write_mps

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible_gap"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time_limit"
SOLVER_ERROR = "solver_error"
STATUSES = (OPTIMAL, FEASIBLE_GAP, INFEASIBLE, UNBOUNDED, TIME_LIMIT, SOLVER_ERROR)

BACKENDS = ("highs", "highspy", "cbc")
CBC_ENV = "CSTDISPATCH_CBC"


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "highs"
    time_limit_s: float = 3600.0
    mip_gap_target: float = 0.005
    threads: int = 1
    binary_integrality_tolerance: float = 1e-6
    polish: bool = True
    executable: str | None = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown solver backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if not 0 <= self.mip_gap_target < 1:
            raise ValueError("mip_gap_target must lie in [0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not 0 <= self.binary_integrality_tolerance < 0.5:
            raise ValueError("binary_integrality_tolerance must lie in [0, 0.5)")


@dataclass
class Solution:
    status: str
    objective_value: float | None = None
    values: dict | None = None
    mip_gap: float | None = None
    runtime_s: float = 0.0
    backend: str = ""
    message: str = ""
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def has_values(self):
        return self.values is not None

    @property
    def ok(self):
        return self.status in (OPTIMAL, FEASIBLE_GAP) or (self.status == TIME_LIMIT and self.has_values)

    def __getitem__(self, name):
        return self.values[name]


def _round_binaries(model, x, tol):
    x = np.array(x, dtype=float)
    for i in model.binary_indices():
        r = round(x[i])
        if abs(x[i] - r) > tol:
            return None, model.variables[i].name
        x[i] = r
    return x, None


def _polish(model, x):
    """Fix binaries at ``x`` and re-solve the continuous part."""
    c, a, lo, hi, lb, ub, integ = model.to_arrays()
    lb = lb.copy()
    ub = ub.copy()
    bins = integ.astype(bool)
    lb[bins] = x[bins]
    ub[bins] = x[bins]
    cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    res = milp(c, bounds=Bounds(lb, ub), constraints=cons, options={"presolve": True})
    if res.status != 0 or res.x is None:
        return None
    y = np.array(res.x)
    y[bins] = x[bins]
    return y


def _finish(model, config, status, x, gap, t0, backend, message=""):
    if x is None:
        return Solution(status, mip_gap=gap, runtime_s=time.perf_counter() - t0, backend=backend, message=message)
    x, bad = _round_binaries(model, x, config.binary_integrality_tolerance)
    if x is None:
        return Solution(SOLVER_ERROR, runtime_s=time.perf_counter() - t0, backend=backend,
                        message=f"binary {bad} outside integrality tolerance")
    if config.polish:
        y = _polish(model, x)
        if y is None:
            log.warning("LP polish failed; keeping raw incumbent")
        else:
            x = y
    if status == OPTIMAL and gap is not None and gap > 1e-9:
        status = FEASIBLE_GAP
    values = {v.name: float(xi) for v, xi in zip(model.variables, x)}
    return Solution(status, float(model.evaluate_objective(x)), values, gap,
                    time.perf_counter() - t0, backend, message, x)


def _solve_scipy(model, config):
    t0 = time.perf_counter()
    c, a, lo, hi, lb, ub, integ = model.to_arrays()
    cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    opts = {"disp": False, "time_limit": float(config.time_limit_s), "mip_rel_gap": float(config.mip_gap_target),
            "presolve": True}
    res = milp(c, integrality=integ, bounds=Bounds(lb, ub), constraints=cons, options=opts)
    gap = getattr(res, "mip_gap", None)
    gap = None if gap is None or not np.isfinite(gap) else float(gap)
    if res.status == 0:
        return _finish(model, config, OPTIMAL, res.x, gap if integ.any() else 0.0, t0, "highs")
    if res.status == 1:
        return _finish(model, config, TIME_LIMIT, res.x, gap, t0, "highs", res.message)
    if res.status == 2:
        return _finish(model, config, INFEASIBLE, None, None, t0, "highs", res.message)
    if res.status == 3:
        return _finish(model, config, UNBOUNDED, None, None, t0, "highs", res.message)
    return _finish(model, config, SOLVER_ERROR, None, None, t0, "highs", res.message)


def _solve_highspy(model, config):
    try:
        import highspy
    except ImportError as exc:
        raise BackendUnavailable("backend 'highspy' needs the highspy package (pip install highspy)") from exc
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.mps"
        path.write_text(write_mps(model))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("time_limit", float(config.time_limit_s))
        h.setOptionValue("mip_rel_gap", float(config.mip_gap_target))
        h.setOptionValue("threads", int(config.threads))
        if h.readModel(str(path)) != highspy.HighsStatus.kOk:
            return Solution(SOLVER_ERROR, backend="highspy", message="highspy could not read the MPS file")
        h.run()
    ms = h.getModelStatus()
    MS = highspy.HighsModelStatus
    info = h.getInfo()
    gap = float(info.mip_gap) if model.binary_indices() and np.isfinite(info.mip_gap) else 0.0
    has_sol = info.primal_solution_status == 2
    x = None
    if has_sol:
        lp = h.getLp()
        names = list(lp.col_names_)
        col = np.array(h.getSolution().col_value)
        pos = {n: i for i, n in enumerate(names)}
        x = np.array([col[pos[v.name]] for v in model.variables])
    if ms == MS.kOptimal:
        return _finish(model, config, OPTIMAL, x, gap, t0, "highspy")
    if ms in (MS.kInfeasible,):
        return _finish(model, config, INFEASIBLE, None, None, t0, "highspy")
    if ms in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
        return _finish(model, config, UNBOUNDED if ms == MS.kUnbounded else INFEASIBLE, None, None, t0, "highspy")
    if ms in (MS.kTimeLimit, MS.kIterationLimit, MS.kSolutionLimit, MS.kInterrupt):
        return _finish(model, config, TIME_LIMIT, x if has_sol else None, gap, t0, "highspy", str(ms))
    return _finish(model, config, SOLVER_ERROR, None, None, t0, "highspy", str(ms))


def find_cbc(config):
    exe = config.executable or os.environ.get(CBC_ENV) or shutil.which("cbc")
    if not exe or not Path(exe).exists():
        raise BackendUnavailable(
            f"backend 'cbc' needs the CBC executable: put 'cbc' on PATH, set {CBC_ENV}, "
            "or set solver.executable in the config")
    return exe


def _solve_cbc(model, config):
    exe = find_cbc(config)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        mps = Path(tmp) / "model.mps"
        sol = Path(tmp) / "model.sol"
        # CBC 2.10 needs the FREE tag to parse free format and ignores OBJSENSE
        text = write_mps(model).split("\n", 1)
        mps.write_text(f"{text[0]} FREE\n{text[1]}")
        direction = "-max" if model.sense == MAXIMIZE else "-min"
        cmd = [exe, str(mps), direction, "-sec", fmt_number(config.time_limit_s), "-ratio", fmt_number(config.mip_gap_target),
               "-threads", str(config.threads), "-solve", "-solu", str(sol)]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=config.time_limit_s + 60)
        except (OSError, subprocess.TimeoutExpired) as exc:
            return Solution(SOLVER_ERROR, backend="cbc", message=str(exc))
        if not sol.exists():
            return Solution(SOLVER_ERROR, backend="cbc", message=proc.stdout[-2000:])
        lines = sol.read_text().splitlines()
    head = lines[0].lower() if lines else ""
    gap = None
    if head.startswith("optimal"):
        status = OPTIMAL
        gap = 0.0
    elif "infeasible" in head:
        return _finish(model, config, INFEASIBLE, None, None, t0, "cbc", lines[0])
    elif "unbounded" in head:
        return _finish(model, config, UNBOUNDED, None, None, t0, "cbc", lines[0])
    elif "stopped" in head:
        status = TIME_LIMIT
    else:
        return _finish(model, config, SOLVER_ERROR, None, None, t0, "cbc", lines[0] if lines else "empty")
    x = np.zeros(len(model.variables))
    for ln in lines[1:]:
        parts = ln.replace("**", " ").split()
        if len(parts) >= 3 and model.has_variable(parts[1]):
            x[model.var_index(parts[1])] = float(parts[2])
    if status == TIME_LIMIT and "no integer" in head:
        x = None
    return _finish(model, config, status, x, gap, t0, "cbc", lines[0])


def solve(model: MilpModel, config: SolverConfig | None = None) -> Solution:
    config = config or SolverConfig()
    model.validate()
    if config.backend == "highs":
        return _solve_scipy(model, config)
    if config.backend == "highspy":
        return _solve_highspy(model, config)
    return _solve_cbc(model, config)


def write_solution(solution: Solution, path):
    """Plain-text solution file: a status header then ``name=value`` lines."""
    lines = [f"# status: {solution.status}"]
    if solution.objective_value is not None:
        lines.append(f"# objective: {solution.objective_value!r}")
    if solution.mip_gap is not None:
        lines.append(f"# mip_gap: {solution.mip_gap!r}")
    lines.append(f"# backend: {solution.backend}")
    lines.append(f"# runtime_s: {solution.runtime_s:.3f}")
    for name, v in (solution.values or {}).items():
        lines.append(f"{name}={v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path) -> Solution:
    header = {}
    values = {}
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("#"):
            k, _, v = ln[1:].partition(":")
            header[k.strip()] = v.strip()
        elif "=" in ln:
            k, _, v = ln.partition("=")
            values[k] = float(v)
    status = header.get("status", SOLVER_ERROR)
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r} in {path}")
    obj = float(header["objective"]) if "objective" in header else None
    gap = float(header["mip_gap"]) if "mip_gap" in header else None
    return Solution(status, obj, values or None, gap, float(header.get("runtime_s", 0.0)),
                    header.get("backend", ""))
