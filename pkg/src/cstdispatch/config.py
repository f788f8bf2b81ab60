"""Run configuration: one JSON file, validated on load, echoed with provenance tags."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import two_tier_price_profile
from .errors import ConfigError
from .formulation import CostModel, FormulationOptions
from .heuristics import PlanningConfig
from .milp import SolverConfig
from .plant import LossModel, OpticalEfficiencyTable, PlantDesign

BUNDLED = "bundled"

# Values that are modelling choices of this package rather than plant or tariff
# data.  The echoed config marks each with "source: default" unless overridden.
DESIGN_DEFAULTS = {
    "loss": {"rad_coeffs": [20.0], "conv_coeffs": [10.0, 0.0, 0.0, 0.0]},
    "efficiency": 0.6,
    "daylight": {},
    "epsilon": 1e-3,
    "prices": {"peak_windows": [[17.0, 21.0]], "peak_price": 120.0, "offpeak_price": 40.0, "unit": "per MWh"},
    "data": {"path": BUNDLED, "month": 1, "schema": {}},
    "partition": {"first_testing_year": 2014},
    "sampling": {"n_s": 3, "seed": 0},
    "solver": {f.name: f.default for f in fields(SolverConfig)},
    "horizon": None,
    "heuristics": {"h2_subset_size": None, "sensitivity_sizes": [5, 10, 20]},
    "seed": 0,
    "jobs": None,
    "output_dir": "runs",
}

SECTIONS = ("plant", "costs") + tuple(DESIGN_DEFAULTS)


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict) and k not in ("daylight",):
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    raw: dict
    overridden: set = field(default_factory=set)
    path: str | None = None

    # --- construction --------------------------------------------------------------
    @classmethod
    def from_dict(cls, user: dict | None = None, path=None):
        user = dict(user or {})
        unknown = set(user) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
        base = {"plant": asdict(PlantDesign()), "costs": asdict(CostModel()), **copy.deepcopy(DESIGN_DEFAULTS)}
        for sec in ("plant", "costs"):
            bad = set(user.get(sec, {})) - set(base[sec])
            if bad:
                raise ConfigError(f"unknown {sec} fields: {', '.join(sorted(bad))}")
        cfg = cls(_merge(base, user), set(user), str(path) if path else None)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {p}: {exc.strerror}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{p}: top level must be an object")
        return cls.from_dict(user, p)

    def with_overrides(self, **kw):
        """Apply dotted-key overrides such as ``sampling.n_s=5``."""
        raw = copy.deepcopy(self.raw)
        touched = set(self.overridden)
        for key, val in kw.items():
            if val is None:
                continue
            parts = key.split(".")
            node = raw
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    node[p] = {}
                node = node[p]
            node[parts[-1]] = val
            touched.add(parts[0])
        cfg = RunConfig(raw, touched, self.path)
        cfg.validate()
        return cfg

    # --- validation ----------------------------------------------------------------
    def validate(self):
        r = self.raw
        try:
            self.plant
            self.costs
            self.options
            self.solver
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        pr = r["prices"]
        for k in ("peak_price", "offpeak_price"):
            if not isinstance(pr.get(k), (int, float)):
                raise ConfigError(f"prices.{k} must be a number")
        if not isinstance(pr.get("peak_windows"), list):
            raise ConfigError("prices.peak_windows must be a list of [start, end] hours")
        n_s, seed = r["sampling"].get("n_s"), r["sampling"].get("seed")
        if not isinstance(n_s, int) or n_s < 1:
            raise ConfigError("sampling.n_s must be a positive integer")
        if not isinstance(seed, int):
            raise ConfigError("sampling.seed must be an integer")
        month = r["data"].get("month")
        if not isinstance(month, int) or not 1 <= month <= 12:
            raise ConfigError("data.month must be an integer 1..12")
        h = r["horizon"]
        if h is not None:
            if not (isinstance(h, dict) and isinstance(h.get("start_step"), int) and isinstance(h.get("steps"), int)
                    and h["start_step"] >= 0 and h["steps"] >= 1):
                raise ConfigError("horizon must be null or {\"start_step\": int >= 0, \"steps\": int >= 1}")
        sub = r["heuristics"].get("h2_subset_size")
        if sub is not None and (not isinstance(sub, int) or sub < 1):
            raise ConfigError("heuristics.h2_subset_size must be null or a positive integer")
        sizes = r["heuristics"].get("sensitivity_sizes", [])
        if not all(isinstance(s, int) and s >= 1 for s in sizes) or sizes != sorted(sizes):
            raise ConfigError("heuristics.sensitivity_sizes must be ascending positive integers")
        if r["jobs"] is not None and (not isinstance(r["jobs"], int) or r["jobs"] < 1):
            raise ConfigError("jobs must be null or a positive integer")
        part = r["partition"]
        if not ("first_testing_year" in part or "sampling" in part):
            raise ConfigError("partition needs 'first_testing_year' or explicit 'sampling'/'testing' lists")

    # --- typed views ---------------------------------------------------------------
    @property
    def plant(self):
        return PlantDesign(**self.raw["plant"])

    @property
    def costs(self):
        return CostModel(**self.raw["costs"])

    @property
    def options(self):
        loss = LossModel(**self.raw["loss"])
        eff = OpticalEfficiencyTable(self.raw["efficiency"])
        daylight = {int(m): tuple(v) for m, v in self.raw["daylight"].items()}
        return FormulationOptions(epsilon=float(self.raw["epsilon"]), daylight=daylight, loss=loss, efficiency=eff)

    @property
    def solver(self):
        return SolverConfig(**self.raw["solver"])

    @property
    def horizon(self):
        h = self.raw["horizon"]
        return None if h is None else (h["start_step"], h["steps"])

    def planning(self, jobs=None):
        j = jobs or self.raw["jobs"] or 1
        return PlanningConfig(self.options, self.solver, int(j), self.horizon)

    def prices(self, dt, steps_per_window):
        """Price vector over the (possibly cropped) horizon of a window starting at midnight."""
        first, n = self.horizon or (0, steps_per_window)
        pr = self.raw["prices"]
        return two_tier_price_profile(n, dt, pr["peak_windows"], pr["peak_price"], pr["offpeak_price"],
                                      start_hour=first * dt)

    # --- echo ----------------------------------------------------------------------
    def resolved(self):
        """Full config; design-choice sections left at their defaults carry a source tag."""
        out = {}
        for k in SECTIONS:
            v = copy.deepcopy(self.raw[k])
            if k in DESIGN_DEFAULTS and k not in self.overridden:
                out[k] = {"value": v, "source": "default"}
            else:
                out[k] = v
        return out

    def to_json(self):
        return json.dumps(self.resolved(), indent=1, sort_keys=True)
