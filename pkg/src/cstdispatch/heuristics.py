"""Benchmark dispatch plans: perfect knowledge and Heuristics 1-3."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .errors import SolverError
from .formulation import CostModel, DispatchPlan, FormulationOptions, build_deterministic, extract_dispatch_plan
from .milp import SolverConfig, solve
from .plant import PlantDesign, WeatherTrajectory
from .sampling import k_medoids
from .simulator import simulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanningConfig:
    options: FormulationOptions = field(default_factory=FormulationOptions)
    solver: SolverConfig = field(default_factory=SolverConfig)
    jobs: int = 1
    # (first step, number of steps) applied to every two-day window
    horizon: tuple | None = None

    def crop(self, traj: WeatherTrajectory):
        if self.horizon is None:
            return traj
        return traj.window(*self.horizon)


@dataclass
class CandidateTable:
    candidates: list                 # [(window_id, DispatchPlan)]
    saa_scores: np.ndarray           # candidates x evaluation trajectories
    selected: int
    evaluation_ids: list = field(default_factory=list)

    @property
    def means(self):
        return self.saa_scores.mean(axis=1)

    @property
    def selected_plan(self):
        return self.candidates[self.selected][1]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["candidate_window"] + [f"eval_{e}" for e in self.evaluation_ids] + ["saa", "selected"])
        for i, (wid, _) in enumerate(self.candidates):
            w.writerow([wid] + [repr(float(v)) for v in self.saa_scores[i]]
                       + [repr(float(self.means[i])), int(i == self.selected)])
        return buf.getvalue()


def _pairs(windows):
    return [(i, w) if isinstance(w, WeatherTrajectory) else (w[0], w[1]) for i, w in enumerate(windows)]


def _map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(*a) for a in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(_star, [(fn, a) for a in items]))


def _star(arg):
    fn, a = arg
    return fn(*a)


def solve_deterministic(plant, costs, traj, prices, cfg: PlanningConfig):
    """Deterministic solve on the cropped trajectory; returns (plan, solution)."""
    model, ix = build_deterministic(plant, costs, cfg.crop(traj), prices, cfg.options, name="deterministic")
    sol = solve(model, cfg.solver)
    if not sol.ok:
        raise SolverError(f"deterministic solve ended with status {sol.status}: {sol.message}")
    return extract_dispatch_plan(sol, ix, plant), sol


def perfect_knowledge(plant: PlantDesign, costs: CostModel, traj, prices, cfg: PlanningConfig) -> DispatchPlan:
    return solve_deterministic(plant, costs, traj, prices, cfg)[0]


def _candidate(plant, costs, wid, traj, prices, cfg):
    try:
        return wid, perfect_knowledge(plant, costs, traj, prices, cfg)
    except SolverError as exc:
        log.warning("candidate from window %s dropped: %s", wid, exc)
        return wid, None


def _profit(plant, costs, plan, traj, prices, cfg):
    return simulate(plant, costs, plan, cfg.crop(traj), prices, cfg.options).breakdown.profit


def _score_row(plant, costs, plan, trajs, prices, cfg):
    return [_profit(plant, costs, plan, t, prices, cfg) for t in trajs]


def saa_select(candidates, evaluation_trajectories, simulate_fn, evaluation_ids=None, score_rows=None):
    """Score every candidate on every evaluation trajectory and pick the best mean.

    ``simulate_fn(plan, traj)`` returns a profit.  Ties go to the lowest
    candidate window id, then the lowest position.
    """
    if not candidates or not evaluation_trajectories:
        raise ValueError("saa_select needs candidates and evaluation trajectories")
    if score_rows is None:
        score_rows = [[simulate_fn(plan, t) for t in evaluation_trajectories] for _, plan in candidates]
    scores = np.array(score_rows, dtype=float).reshape(len(candidates), len(evaluation_trajectories))
    means = scores.mean(axis=1)
    best = float(means.max())
    tol = 1e-9 * max(1.0, abs(best))
    tied = [i for i in range(len(candidates)) if means[i] >= best - tol]
    sel = min(tied, key=lambda i: (_id_key(candidates[i][0]), i))
    ids = evaluation_ids if evaluation_ids is not None else list(range(len(evaluation_trajectories)))
    return CandidateTable(list(candidates), scores, sel, list(ids))


def _id_key(wid):
    return (0, wid, "") if isinstance(wid, (int, np.integer)) else (1, 0, str(wid))


def _select(plant, costs, candidate_pairs, eval_pairs, prices, cfg):
    jobs = cfg.jobs
    built = _map(_candidate, [(plant, costs, wid, tr, prices, cfg) for wid, tr in candidate_pairs], jobs)
    cands = [(wid, plan) for wid, plan in built if plan is not None]
    if not cands:
        raise SolverError("every candidate solve failed")
    trajs = [t for _, t in eval_pairs]
    rows = _map(_score_row, [(plant, costs, plan, trajs, prices, cfg) for _, plan in cands], jobs)
    return saa_select(cands, trajs, None, [w for w, _ in eval_pairs], rows)


def heuristic_1(plant, costs, scenario_space, prices, cfg: PlanningConfig):
    """One deterministic candidate per scenario, chosen by its mean over the scenarios."""
    pairs = list(scenario_space.scenarios) if hasattr(scenario_space, "scenarios") else _pairs(scenario_space)
    table = _select(plant, costs, pairs, pairs, prices, cfg)
    return table.selected_plan, table


def most_recent(pairs, n):
    """The ``n`` windows with the latest start dates (kept in input order)."""
    ranked = sorted(range(len(pairs)), key=lambda i: pairs[i][1].start_timestamp, reverse=True)[:n]
    return [pairs[i] for i in sorted(ranked)]


def heuristic_2(plant, costs, sampling_windows, prices, cfg: PlanningConfig, subset_size=None):
    """Candidates from the (most recent) sampling windows, scored on the whole sampling set."""
    pairs = _pairs(sampling_windows)
    if not pairs:
        raise ValueError("sampling set is empty")
    n = len(pairs) if subset_size is None else int(subset_size)
    if not 1 <= n <= len(pairs):
        raise ValueError(f"subset size {n} outside 1..{len(pairs)}")
    table = _select(plant, costs, most_recent(pairs, n), pairs, prices, cfg)
    return table.selected_plan, table


def one_day_profiles(windows):
    """Distinct calendar days (as one-day trajectories) contained in the windows."""
    days = {}
    for _, tr in _pairs(windows):
        per_day = int(round(24 / tr.dt_hours))
        for j in range(len(tr) // per_day):
            day = tr.window(j * per_day, per_day)
            days.setdefault(day.start_timestamp, day)
    return [days[k] for k in sorted(days)]


def typical_day_window(sampling_windows, seed=0):
    days = one_day_profiles(sampling_windows)
    if not days:
        raise ValueError("no one-day profiles in the sampling set")
    med = k_medoids([d.dni for d in days], 1, seed=seed)[0]
    day = days[med]
    nxt = WeatherTrajectory(day.start_timestamp + timedelta(days=1), day.dt_hours, day.dni, day.t_amb, day.wind)
    return day.concat(nxt)


def heuristic_3(plant, costs, sampling_windows, prices, cfg: PlanningConfig, seed=0):
    """Deterministic plan for the medoid day repeated over both days."""
    return perfect_knowledge(plant, costs, typical_day_window(sampling_windows, seed), prices, cfg)
