"""Scenario selection: energy ECDF, stratified draws and k-medoids."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .plant import LossModel, OpticalEfficiencyTable, PlantDesign, WeatherTrajectory, scenario_potential_energy


@dataclass
class EnergyEcdf:
    entries: list                                   # [(window_id, e_in)] ascending in e_in
    trajectories: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.entries)

    @property
    def energies(self):
        return np.array([e for _, e in self.entries])

    @property
    def window_ids(self):
        return [w for w, _ in self.entries]

    def probabilities(self):
        n = len(self.entries)
        return np.arange(1, n + 1) / n

    def to_csv(self):
        lines = ["rank,window_id,e_in_mwh,cdf"]
        for i, ((wid, e), p) in enumerate(zip(self.entries, self.probabilities())):
            lines.append(f"{i},{wid},{e!r},{p!r}")
        return "\n".join(lines) + "\n"


@dataclass
class ScenarioSpace:
    scenarios: list                                 # [(window_id, WeatherTrajectory)]
    strata: list = field(default_factory=list)      # [(first_rank, last_rank_exclusive)]
    seed: int | None = None
    energies: list = field(default_factory=list)

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("scenario space is empty")
        n, dt = len(self.scenarios[0][1]), self.scenarios[0][1].dt_hours
        for _, tr in self.scenarios:
            if len(tr) != n or tr.dt_hours != dt:
                raise ValueError("all scenarios must share length and step")

    @property
    def n_s(self):
        return len(self.scenarios)

    @property
    def window_ids(self):
        return [w for w, _ in self.scenarios]

    @property
    def trajectories(self):
        return [t for _, t in self.scenarios]

    def manifest(self):
        return {
            "n_s": self.n_s,
            "seed": self.seed,
            "window_ids": self.window_ids,
            "start_timestamps": [t.start_timestamp.isoformat() for t in self.trajectories],
            "energies_mwh": list(self.energies),
            "strata": [list(s) for s in self.strata],
        }

    def to_json(self):
        return json.dumps(self.manifest(), indent=1)


def _pairs(windows):
    out = []
    for i, w in enumerate(windows):
        out.append((i, w) if isinstance(w, WeatherTrajectory) else (w[0], w[1]))
    return out


def build_ecdf(windows, plant: PlantDesign, loss: LossModel, eff: OpticalEfficiencyTable) -> EnergyEcdf:
    """Score each window by its collectable energy and sort ascending.

    ``windows`` holds trajectories (ids are their positions) or
    ``(window_id, trajectory)`` pairs.  Ties keep window-id order.
    """
    pairs = _pairs(windows)
    if not pairs:
        raise ValueError("no windows to score")
    scored = [(wid, scenario_potential_energy(tr, plant, loss, eff)) for wid, tr in pairs]
    scored.sort(key=lambda t: (t[1], t[0]))
    return EnergyEcdf(scored, dict(pairs))


def strata_bounds(n, n_s):
    """Contiguous equal-count strata over ``range(n)``; sizes differ by at most one."""
    if not 1 <= n_s <= n:
        raise ValueError(f"need 1 <= n_s <= {n}, got {n_s}")
    base, extra = divmod(n, n_s)
    out, start = [], 0
    for i in range(n_s):
        size = base + (1 if i < extra else 0)
        out.append((start, start + size))
        start += size
    return out


def stratified_sample(ecdf: EnergyEcdf, n_s, seed) -> ScenarioSpace:
    n = len(ecdf)
    if n_s > n:
        raise ValueError(f"cannot draw {n_s} strata from {n} windows")
    bounds = strata_bounds(n, n_s)
    rng = np.random.default_rng(seed)
    chosen = []
    for lo, hi in bounds:
        r = int(rng.integers(lo, hi))
        chosen.append(ecdf.entries[r])
    scen = [(wid, ecdf.trajectories[wid]) for wid, _ in chosen]
    return ScenarioSpace(scen, bounds, seed, [e for _, e in chosen])


# --- k-medoids -----------------------------------------------------------------------

def _distances(profiles):
    x = np.asarray(profiles, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0)
    d = np.sqrt(d2)
    np.fill_diagonal(d, 0.0)
    return d


def medoid_cost(profiles, medoids):
    d = _distances(profiles)
    return float(d[:, list(medoids)].min(axis=1).sum())


def k_medoids(profiles, k, max_iter=100, seed=0):
    """PAM clustering; returns sorted indices of the medoid profiles."""
    x = np.asarray(profiles, dtype=float)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got {k}")
    d = _distances(x)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)          # tie-break order for the greedy build

    medoids = []
    nearest = np.full(n, np.inf)
    for _ in range(k):
        best, best_cost = None, np.inf
        for c in order:
            if c in medoids:
                continue
            cost = np.minimum(nearest, d[:, c]).sum()
            if cost < best_cost - 1e-12:
                best, best_cost = int(c), cost
        medoids.append(best)
        nearest = np.minimum(nearest, d[:, best])

    cost = nearest.sum()
    for _ in range(max_iter):
        best_swap, best_cost = None, cost
        for mi in range(k):
            others = [m for j, m in enumerate(medoids) if j != mi]
            base = d[:, others].min(axis=1) if others else np.full(n, np.inf)
            for c in order:
                if c in medoids:
                    continue
                trial = np.minimum(base, d[:, c]).sum()
                if trial < best_cost - 1e-12:
                    best_swap, best_cost = (mi, int(c)), trial
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
    return sorted(medoids)
