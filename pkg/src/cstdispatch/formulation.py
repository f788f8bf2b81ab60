"""Stochastic dispatch MILP: one plan shared by every scenario, one set of
control variables per scenario.

Indexing is zero-based.  Step ``k`` of scenario ``s`` looks back to step
``k-1``; at ``k = 0`` the previous values are the cold-start constants (all
modes, switches and thermal states zero, storage at its floor, no output).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import logic
from .errors import ConfigError, ExtractionError
from .milp import BINARY, LinExpr, MilpModel, big_m_for
from .plant import (LossModel, OpticalEfficiencyTable, PlantDesign, WeatherTrajectory,
                    potential_power_series)

PLAN_BINARIES = ("y_r", "y_rsup", "y_rsd", "y_c", "y_csup", "y_csd")
PLAN_CONTINUOUS = ("qhat_r", "qhat_c")
MODE_BINARIES = ("d_rsup", "d_rsu", "d_r", "d_rsd", "d_csup", "d_csu", "d_c", "d_csd")
SWITCHES = ("z1", "z2", "z3", "z4", "z5", "z6", "z7", "z8", "z9")
CONTROL_CONTINUOUS = ("q_ract", "q_cact", "e_rsu", "e_csu", "phi_r", "phi_c", "w", "w_ramp", "w_sell",
                      "w_buy", "soc", "avail_st", "q_avail", "q_avail_gen")
CONTROL_SYMBOLS = MODE_BINARIES + SWITCHES + CONTROL_CONTINUOUS


@dataclass(frozen=True)
class CostModel:
    c_rec: float = 3.7
    c_c: float = 1.7
    c_rsup: float = 7000.0
    c_csup: float = 5451.0
    c_dw: float = 0.59
    alpha_r_sd: float = 7000.0
    alpha_c_sd: float = 5451.0
    lambda_discount: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"costs.{k} must be a finite non-negative number")
        if not 0 < self.lambda_discount <= 1:
            raise ConfigError("costs.lambda_discount must lie in (0, 1]")

    def discount(self, k):
        """Weight of zero-based step ``k``."""
        return self.lambda_discount ** (k + 1)


@dataclass(frozen=True)
class FormulationOptions:
    """Model-level settings that are not plant or cost data."""

    epsilon: float = logic.EPS
    # month -> (sunrise_hour, sunset_hour); missing months fall back to the
    # span of positive irradiance across the scenarios
    daylight: dict = field(default_factory=dict)
    loss: LossModel = field(default_factory=LossModel)
    efficiency: OpticalEfficiencyTable = field(default_factory=OpticalEfficiencyTable)


def check_design_for_step(design: PlantDesign, dt):
    """Startup energies must be whole multiples of one step's draw."""
    for label, energy, power in (("receiver", design.e_r, design.q_ru), ("power block", design.e_c, design.q_c)):
        if power <= 0 or energy <= 0:
            raise ConfigError(f"{label} startup power and energy must be positive")
        n = energy / (dt * power)
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ConfigError(f"{label} startup energy {energy} is not a whole number of steps "
                              f"at {power} MW and dt={dt} h")
    if design.q_ru > design.q_rl:
        raise ConfigError("receiver startup draw q_ru may not exceed the minimum generation q_rl")


# --- dispatch plan --------------------------------------------------------------

@dataclass
class DispatchPlan:
    y_r: np.ndarray
    y_rsup: np.ndarray
    y_rsd: np.ndarray
    y_c: np.ndarray
    y_csup: np.ndarray
    y_csd: np.ndarray
    q_r_hat: np.ndarray
    q_c_hat: np.ndarray

    def __post_init__(self):
        n = None
        for name in PLAN_FIELDS:
            a = np.array(getattr(self, name), dtype=float if name.startswith("q") else int)
            if a.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            if n is None:
                n = a.size
            elif a.size != n:
                raise ValueError("plan fields must share one horizon length")
            setattr(self, name, a)

    @property
    def horizon(self):
        return self.y_r.size

    @classmethod
    def all_off(cls, k):
        z = np.zeros(k, dtype=int)
        return cls(z, z, z, z, z, z, np.zeros(k), np.zeros(k))

    def violations(self, design: PlantDesign, daylight=None, tol=1e-6):
        """Human-readable list of broken plan constraints (empty when valid)."""
        out = []
        yr, yrsup, yrsd = self.y_r, self.y_rsup, self.y_rsd
        yc, ycsup, ycsd = self.y_c, self.y_csup, self.y_csd
        for name in PLAN_BINARIES:
            a = getattr(self, _FIELD[name])
            if np.any((a != 0) & (a != 1)):
                out.append(f"{name} not binary")
        if out:
            return out
        prev = lambda a: np.concatenate([[0], a[:-1]])
        checks = [
            ("A.2 receiver startup event", yrsup >= yr - prev(yr)),
            ("A.3 receiver startup only from off", yrsup + prev(yr) <= 1),
            ("A.4 receiver shutdown at end of run", (yrsd >= yr - np.append(yr[1:], yr[-1:]))[:-1]),
            ("A.5 receiver off after shutdown", (prev(yrsd) + yr <= 1)[1:]),
            ("A.26 PB startup event", ycsup >= yc - prev(yc)),
            ("A.27 PB shutdown after run", ycsd >= prev(yc) - yc),
            ("A.28 PB shutdown exclusive", ycsd + yc <= 1),
            ("A.29 PB shutdown needs prior run", ycsd <= prev(yc)),
        ]
        for label, ok in checks:
            bad = np.flatnonzero(~np.asarray(ok))
            if bad.size:
                out.append(f"{label} violated at steps {bad.tolist()}")
        on_r = yr - yrsup
        if np.any(on_r < 0):
            out.append("receiver startup planned outside receiver operation")
        lo, hi = design.q_rl * on_r, design.q_rlim * on_r
        bad = np.flatnonzero((self.q_r_hat < lo - tol) | (self.q_r_hat > hi + tol))
        if bad.size:
            out.append(f"receiver setpoint envelope violated at steps {bad.tolist()}")
        on_c = yc - ycsup
        lo = design.q_l * on_c + design.q_c * ycsup
        hi = design.q_u * on_c + design.q_c * ycsup
        bad = np.flatnonzero((self.q_c_hat < lo - tol) | (self.q_c_hat > hi + tol) | (on_c < 0))
        if bad.size:
            out.append(f"PB setpoint envelope violated at steps {bad.tolist()}")
        if daylight is not None:
            bad = np.flatnonzero((yr == 1) & ~np.asarray(daylight, dtype=bool))
            if bad.size:
                out.append(f"A.1 receiver planned outside daylight at steps {bad.tolist()}")
        return out

    def validate(self, design, daylight=None, tol=1e-6):
        v = self.violations(design, daylight, tol)
        if v:
            raise ValueError("invalid dispatch plan: " + "; ".join(v))
        return self

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in PLAN_FIELDS}

    @classmethod
    def from_dict(cls, d):
        missing = [n for n in PLAN_FIELDS if n not in d]
        if missing:
            raise ValueError(f"plan is missing fields {missing}")
        return cls(**{n: d[n] for n in PLAN_FIELDS})

    def to_json(self):
        return json.dumps(self.to_dict())

    def __eq__(self, other):
        if not isinstance(other, DispatchPlan):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PLAN_FIELDS)


PLAN_FIELDS = ("y_r", "y_rsup", "y_rsd", "y_c", "y_csup", "y_csd", "q_r_hat", "q_c_hat")
_FIELD = dict(zip(PLAN_BINARIES + PLAN_CONTINUOUS, PLAN_FIELDS))


# --- index map -------------------------------------------------------------------

@dataclass
class BigMRecord:
    rows: tuple
    expr: LinExpr
    m: float


@dataclass
class SmilpIndexMap:
    horizon: int
    n_scenarios: int
    dt: float
    plan: dict = field(default_factory=dict)          # (symbol, k) -> name
    control: dict = field(default_factory=dict)       # (symbol, k, s) -> name
    q_p: np.ndarray | None = None                     # (n_scenarios, horizon) snapped potential power
    daylight: np.ndarray | None = None
    scenario_ids: list = field(default_factory=list)
    big_m: list = field(default_factory=list)

    def plan_name(self, sym, k):
        return self.plan[(sym, k)]

    def control_name(self, sym, k, s):
        return self.control[(sym, k, s)]

    def to_json(self):
        return json.dumps({
            "horizon": self.horizon, "n_scenarios": self.n_scenarios, "dt": self.dt,
            "scenario_ids": list(self.scenario_ids),
            "plan": {f"{sym}[{k}]": n for (sym, k), n in self.plan.items()},
            "control": {f"{sym}[{k},{s}]": n for (sym, k, s), n in self.control.items()},
        }, indent=1)


# --- daylight ------------------------------------------------------------------

def daylight_mask(trajectories, daylight_hours=None):
    """Steps whose start lies strictly inside the daylight window.

    ``daylight_hours`` maps month -> (rise, set).  Without an entry the window
    is the span of time-of-day with positive irradiance in any trajectory.
    """
    daylight_hours = daylight_hours or {}
    ref = trajectories[0]
    hours = ref.hours_of_day()
    months = np.array([ts.month for ts in ref.timestamps()])
    mask = np.zeros(len(ref), dtype=bool)
    fallback = None
    for i, (h, m) in enumerate(zip(hours, months)):
        win = daylight_hours.get(int(m)) or daylight_hours.get(str(int(m)))
        if win is None:
            if fallback is None:
                fallback = _positive_dni_span(trajectories)
            if fallback is None:
                continue
            rise, set_ = fallback
            mask[i] = rise <= h <= set_
        else:
            rise, set_ = win
            mask[i] = rise < h < set_
    return mask


def _positive_dni_span(trajectories):
    lit = []
    for tr in trajectories:
        lit.extend(tr.hours_of_day()[tr.dni > 0].tolist())
    if not lit:
        return None
    return min(lit), max(lit)


# --- model building -----------------------------------------------------------------

# --- linearised row groups ------------------------------------------------------
# Each helper adds the rows for one logical rule to ``model``.  Arguments are
# variable handles or constants (the cold-start values before the horizon).

def bound_magnitude(model, expr):
    """Largest |expr| over the variable bounds."""
    expr = LinExpr.of(expr)
    mag = abs(expr.const)
    for i, c in expr.terms.items():
        var = model.variables[i]
        mag += abs(c) * max(abs(var.lower), abs(var.upper))
    return mag


def switch_rows(model, tag, expr, z, one_when_nonneg, eps):
    """Bind binary ``z`` to the sign of ``expr`` with an ``eps`` dead band.

    one_when_nonneg=True:   z = 1  <=>  expr >= 0,  z = 0  <=>  expr <= -eps
    one_when_nonneg=False:  z = 1  <=>  expr <= -eps,  z = 0  <=>  expr >= 0
    """
    expr = LinExpr.of(expr)
    M = big_m_for(bound_magnitude(model, expr) + eps)
    a, b = f"{tag}_lo", f"{tag}_hi"
    if one_when_nonneg:
        model.add_constraint(a, expr + M * (1 - LinExpr.of(z)), ">=", 0.0)
        model.add_constraint(b, expr - M * z, "<=", -eps)
    else:
        model.add_constraint(a, expr + M * z, ">=", 0.0)
        model.add_constraint(b, expr + M * z, "<=", M - eps)
    return BigMRecord((a, b), expr, M)


def band_rows(model, tag, expr, slack, M):
    """-M*slack <= expr <= M*slack."""
    a, b = f"{tag}_lo", f"{tag}_hi"
    model.add_constraint(a, expr + M * slack, ">=", 0.0)
    model.add_constraint(b, expr - M * slack, "<=", 0.0)
    return BigMRecord((a, b), LinExpr.of(expr), M)


def receiver_startup_rows(model, t, rsu, yr, r_prev, z1, z2_prev):
    model.add_constraint(f"A8_{t}", rsu - yr + r_prev + z1 + z2_prev, ">=", 0.0)
    model.add_constraint(f"A9_{t}", rsu - yr, "<=", 0.0)
    model.add_constraint(f"A10_{t}", rsu + z1, "<=", 1.0)
    model.add_constraint(f"A11_{t}", rsu + z2_prev, "<=", 1.0)
    model.add_constraint(f"A12_{t}", rsu + r_prev, "<=", 1.0)


def receiver_generating_rows(model, t, r, yr, z2, r_prev, z3):
    model.add_constraint(f"A14_{t}", r - yr - z2 - r_prev + z3, ">=", -1.0)
    model.add_constraint(f"A15_{t}", r - yr, "<=", 0.0)
    model.add_constraint(f"A16_{t}", r - z2 - r_prev, "<=", 0.0)
    model.add_constraint(f"A17_{t}", r + z3, "<=", 1.0)


def receiver_charge_rows(model, t, q_ract, q_avail_gen, qr_hat, z4, z5, r, design, eps):
    """Generation envelope plus the three-case charge rule; returns the big-M records."""
    d = design
    model.add_constraint(f"E16lo_{t}", q_ract - d.q_rl * r, ">=", 0.0)
    model.add_constraint(f"E16hi_{t}", q_ract - d.q_rlim * r, "<=", 0.0)
    recs = [switch_rows(model, f"A18_{t}", d.q_rl - LinExpr.of(q_avail_gen), z4, True, eps),
            switch_rows(model, f"A19_{t}", qr_hat - LinExpr.of(q_avail_gen), z5, True, eps)]
    diff = q_ract - LinExpr.of(q_avail_gen)
    recs.append(band_rows(model, f"A20_{t}", diff, 1 + LinExpr.of(z4) - z5, big_m_for(bound_magnitude(model, diff))))
    diff = q_ract - LinExpr.of(qr_hat)
    recs.append(band_rows(model, f"A21_{t}", diff, LinExpr.of(z5), big_m_for(bound_magnitude(model, diff))))
    return recs


def pb_startup_rows(model, t, csu, yc, c_prev, z6_prev, z7):
    model.add_constraint(f"A32_{t}", csu - yc + c_prev + z6_prev + z7, ">=", 0.0)
    model.add_constraint(f"A33_{t}", csu - yc, "<=", 0.0)
    model.add_constraint(f"A34_{t}", csu + z6_prev, "<=", 1.0)
    model.add_constraint(f"A35_{t}", csu + z7, "<=", 1.0)
    model.add_constraint(f"A36_{t}", csu + c_prev, "<=", 1.0)


class _Builder:
    def __init__(self, design, costs, trajectories, prices, options, name):
        self.d = design
        self.c = costs
        self.trajs = trajectories
        self.p = np.asarray(prices, dtype=float)
        self.o = options
        self.eps = options.epsilon
        self.K = len(trajectories[0])
        self.S = len(trajectories)
        self.dt = trajectories[0].dt_hours
        self.m = MilpModel(name)
        self.ix = SmilpIndexMap(self.K, self.S, self.dt)
        self.v = {}

    # helpers
    def var(self, sym, k, s=None, kind="continuous", lb=0.0, ub=math.inf):
        name = f"{sym}_k{k}" if s is None else f"{sym}_k{k}_s{s}"
        h = self.m.add_variable(name, kind, lb, ub)
        key = (sym, k) if s is None else (sym, k, s)
        self.v[key] = h
        (self.ix.plan if s is None else self.ix.control)[key] = name
        return h

    def P(self, sym, k):
        return self.v[(sym, k)]

    def X(self, sym, k, s):
        """Control value at step k; the cold-start constant before the horizon."""
        if k < 0:
            return self.initial[sym]
        return self.v[(sym, k, s)]

    def row(self, name, lhs, sense, rhs=0.0):
        self.m.add_constraint(name, lhs, sense, rhs)

    def bound_magnitude(self, expr):
        return bound_magnitude(self.m, expr)

    def switch(self, tag, expr, z, one_when_nonneg):
        self.ix.big_m.append(switch_rows(self.m, tag, expr, z, one_when_nonneg, self.eps))

    def indicator_band(self, tag, expr, slack, M):
        self.ix.big_m.append(band_rows(self.m, tag, expr, slack, M))

    # model
    def build(self):
        d, K, S, dt = self.d, self.K, self.S, self.dt
        qp = np.vstack([potential_power_series(t, d, self.o.loss, self.o.efficiency) for t in self.trajs])
        qp = logic.snap_potential_power(qp, d, self.eps)
        self.ix.q_p = qp
        mask = daylight_mask(self.trajs, self.o.daylight)
        self.ix.daylight = mask
        self.initial = {sym: 0.0 for sym in CONTROL_SYMBOLS}
        self.initial["soc"] = d.s_min
        qc_hat_max = max(d.q_u, d.q_c)

        for k in range(K):
            for sym in PLAN_BINARIES:
                ub = 0.0 if sym == "y_r" and not mask[k] else 1.0
                self.var(sym, k, kind=BINARY, lb=0.0, ub=ub)
            self.var("qhat_r", k, ub=d.q_rlim)
            self.var("qhat_c", k, ub=qc_hat_max)
        self._plan_rows()

        w_buy_max = (d.l_r * (d.q_rlim + d.q_ru) + d.l_c * d.q_u + d.w_h + 2 * d.e_hs / dt)
        avail_max = d.e_u - d.s_min + dt * d.q_rlim
        for s in range(S):
            for k in range(K):
                q = float(qp[s, k])
                for sym in MODE_BINARIES + SWITCHES:
                    self.var(sym, k, s, BINARY, 0.0, 1.0)
                self.var("q_ract", k, s, ub=d.q_rlim)
                self.var("q_cact", k, s, ub=d.q_u)
                self.var("e_rsu", k, s, ub=d.e_r)
                self.var("e_csu", k, s, ub=d.e_c)
                self.var("phi_r", k, s, ub=d.e_r)
                self.var("phi_c", k, s, ub=d.e_c)
                self.var("w", k, s, ub=d.w_u)
                self.var("w_ramp", k, s, ub=d.w_u)
                self.var("w_sell", k, s, ub=d.w_u * (1 - d.eta_c))
                self.var("w_buy", k, s, ub=w_buy_max)
                self.var("soc", k, s, lb=d.s_min, ub=d.e_u)
                self.var("avail_st", k, s, ub=avail_max)
                self.var("q_avail", k, s, lb=q - d.q_ru - d.q_rsd, ub=q)
                self.var("q_avail_gen", k, s, lb=-d.q_ru - d.q_rsd, ub=q)
            for k in range(K):
                self._receiver_rows(k, s, float(qp[s, k]))
                self._pb_rows(k, s)
        self._objective()
        return self.m, self.ix

    def _plan_rows(self):
        d, K = self.d, self.K
        P = self.P
        zero = 0.0
        for k in range(K):
            yr, yrsup = P("y_r", k), P("y_rsup", k)
            yc, ycsup, ycsd = P("y_c", k), P("y_csup", k), P("y_csd", k)
            yr_prev = P("y_r", k - 1) if k else zero
            yc_prev = P("y_c", k - 1) if k else zero
            self.row(f"A2_k{k}", yrsup - yr + yr_prev, ">=")
            self.row(f"A3_k{k}", yrsup + yr_prev, "<=", 1)
            if k:
                self.row(f"A4_k{k}", P("y_rsd", k - 1) - yr_prev + yr, ">=")
                self.row(f"A5_k{k}", P("y_rsd", k - 1) + yr, "<=", 1)
            on_r = yr - yrsup
            self.row(f"E17lo_k{k}", P("qhat_r", k) - d.q_rl * on_r, ">=")
            self.row(f"E17hi_k{k}", P("qhat_r", k) - d.q_rlim * on_r, "<=")
            self.row(f"A26_k{k}", ycsup - yc + yc_prev, ">=")
            self.row(f"A27_k{k}", ycsd - yc_prev + yc, ">=")
            self.row(f"A28_k{k}", ycsd + yc, "<=", 1)
            self.row(f"A29_k{k}", ycsd - yc_prev, "<=")
            on_c = yc - ycsup
            self.row(f"E30lo_k{k}", P("qhat_c", k) - d.q_l * on_c - d.q_c * ycsup, ">=")
            self.row(f"E30hi_k{k}", P("qhat_c", k) - d.q_u * on_c - d.q_c * ycsup, "<=")

    def _receiver_rows(self, k, s, qp):
        d, dt, K = self.d, self.dt, self.K
        X = lambda sym, kk=k: self.X(sym, kk, s)
        t = f"k{k}_s{s}"
        yr, qr_hat, yrsd = self.P("y_r", k), self.P("qhat_r", k), self.P("y_rsd", k)
        rsu, r, rsd, rsup = X("d_rsu"), X("d_r"), X("d_rsd"), X("d_rsup")
        rsu_p, r_p = X("d_rsu", k - 1), X("d_r", k - 1)

        # thermal state during startup
        self.row(f"E9_{t}", X("e_rsu") + X("phi_r") - X("e_rsu", k - 1) - dt * d.q_ru * rsu, "=")
        self.row(f"E10_{t}", X("e_rsu") - d.e_r * rsu, "<=")
        self.row(f"E11_{t}", X("phi_r") - d.e_r * rsu_p, "<=")
        self.row(f"E12_{t}", X("phi_r") + d.e_r * rsu, "<=", d.e_r)

        # switches 1 and 2
        self.switch(f"A6_{t}", LinExpr(const=qp - d.q_rl), X("z1"), one_when_nonneg=False)
        self.switch(f"A7_{t}", X("e_rsu") - d.e_r, X("z2"), one_when_nonneg=True)

        # startup mode
        receiver_startup_rows(self.m, t, rsu, yr, r_p, X("z1"), X("z2", k - 1))
        # startup event on the first startup step only
        self.row(f"E14_{t}", rsup - rsu + rsu_p, ">=")
        self.row(f"T14a_{t}", rsup - rsu, "<=")
        self.row(f"T14b_{t}", rsup + rsu_p, "<=", 1)

        # power use and generation limits
        self.row(f"E15_{t}", X("q_ract") + d.q_ru * rsu + d.q_rsd * rsd, "<=", qp)
        self.row(f"E18_{t}", X("q_avail") + d.q_ru * rsu + d.q_rsd * rsd, "=", qp)
        self.switch(f"A13_{t}", d.q_rl - X("q_avail"), X("z3"), one_when_nonneg=True)

        # generation mode
        receiver_generating_rows(self.m, t, r, yr, X("z2"), r_p, X("z3"))

        # actual charge: three-case rule
        self.row(f"E20_{t}", X("q_avail_gen") - qp * r + d.q_ru * rsu + d.q_rsd * rsd, "=")
        self.ix.big_m.extend(receiver_charge_rows(self.m, t, X("q_ract"), X("q_avail_gen"), qr_hat, X("z4"), X("z5"),
                                                  r, d, self.eps))

        # shutdown
        if k:
            rsd_p = X("d_rsd", k - 1)
            self.row(f"A22_{t}", rsd_p - r_p + r, ">=")
            self.row(f"A23_{t}", rsd_p + r, "<=", 1)
        self.row(f"A24_{t}", rsd - r, "<=")
        self.indicator_band(f"A25_{t}", LinExpr.of(rsd) - 1, 2 - LinExpr.of(yrsd) - r, big_m_for(1.0))
        # an unplanned drain only when generation really stops next step
        if k + 1 < K:
            self.row(f"T25_{t}", rsd - yrsd + self.X("d_r", k + 1, s), "<=", 1)
        else:
            self.row(f"T25_{t}", rsd - yrsd, "<=")

    def _pb_rows(self, k, s):
        d, dt = self.d, self.dt
        X = lambda sym, kk=k: self.X(sym, kk, s)
        t = f"k{k}_s{s}"
        yc, qc_hat, ycsd = self.P("y_c", k), self.P("qhat_c", k), self.P("y_csd", k)
        csu, c, csd, csup = X("d_csu"), X("d_c"), X("d_csd"), X("d_csup")
        csu_p, c_p = X("d_csu", k - 1), X("d_c", k - 1)

        self.row(f"E22_{t}", X("e_csu") + X("phi_c") - X("e_csu", k - 1) - dt * d.q_c * csu, "=")
        self.row(f"E23_{t}", X("phi_c") - d.e_c * csu_p, "<=")
        self.row(f"E24_{t}", X("phi_c") + d.e_c * csu, "<=", d.e_c)
        self.row(f"E25_{t}", X("e_csu") - d.e_c * csu, "<=")
        self.row(f"E26_{t}", X("avail_st") - X("soc", k - 1) - dt * X("q_ract"), "=", -d.s_min)

        self.switch(f"A30_{t}", X("e_csu") - d.e_c, X("z6"), one_when_nonneg=True)
        self.switch(f"A31_{t}", dt * d.q_c - X("avail_st"), X("z7"), one_when_nonneg=True)

        z6 = X("z6")
        pb_startup_rows(self.m, t, csu, yc, c_p, X("z6", k - 1), X("z7"))
        self.row(f"E28_{t}", csup - csu + csu_p, ">=")
        self.row(f"T28a_{t}", csup - csu, "<=")
        self.row(f"T28b_{t}", csup + csu_p, "<=", 1)

        # generation: allowed after warm-up or in continuation, and required
        # unless storage or the setpoint cannot sustain it
        self.row(f"E29_{t}", c - z6 - c_p, "<=")
        z8, z9 = X("z8"), X("z9")
        self.switch(f"G1_{t}", X("avail_st") - dt * qc_hat, z8, one_when_nonneg=False)
        self.switch(f"G2_{t}", qc_hat - d.q_c * csu - d.q_l, z9, one_when_nonneg=False)
        self.row(f"G3_{t}", c - yc - z6 - c_p + z8 + z9, ">=", -1)
        self.row(f"G4_{t}", c - yc, "<=")

        self.row(f"E31lo_{t}", X("q_cact") - d.q_l * c, ">=")
        self.row(f"E31hi_{t}", X("q_cact") - d.q_u * c, "<=")
        self.row(f"E32hi_{t}", X("q_cact") + d.q_c * csu - qc_hat, "<=")
        M32 = big_m_for(max(d.q_u, d.q_c) + d.q_c)
        self.row(f"E32lo_{t}", X("q_cact") + d.q_c * csu - qc_hat - M32 * c, ">=", -M32)

        # electricity
        self.row(f"A37_{t}", X("w") - d.eta_p * X("q_cact") - (d.w_u - d.eta_p * d.q_u) * c, "=")
        self.row(f"A38_{t}", X("w_ramp") - X("w") + X("w", k - 1), ">=")
        self.row(f"A39_{t}", X("w_ramp") + X("w") - X("w", k - 1), ">=")
        self.row(f"A40_{t}", X("w_sell") - (1 - d.eta_c) * X("w"), "=")
        self.row(f"A41_{t}", X("w_buy") - d.l_r * X("q_ract") - d.l_r * d.q_ru * X("d_rsu") - d.l_c * X("q_cact")
                 - d.w_h * X("d_r") - (d.e_hs / dt) * (X("d_rsd") + X("d_rsu")), "=")

        # shutdown
        self.indicator_band(f"A42_{t}", LinExpr.of(csd) - 1, 2 - LinExpr.of(ycsd) - c_p, big_m_for(1.0))
        self.row(f"A43_{t}", csd - c_p + c, ">=")
        self.row(f"A44_{t}", csd + c, "<=", 1)
        self.row(f"T42_{t}", csd - c_p, "<=")

        # storage balance; bounds on soc carry the level limits
        self.row(f"E33_{t}", X("soc") - X("soc", k - 1) - dt * X("q_ract") + dt * X("q_cact") + dt * d.q_c * csu, "=")

    def _objective(self):
        obj = LinExpr()
        c, dt = self.c, self.dt
        for s in range(self.S):
            for k in range(self.K):
                wgt = c.discount(k) / self.S
                X = lambda sym: self.X(sym, k, s)
                p = float(self.p[k])
                term = (dt * p * X("w_sell") - dt * p * X("w_buy")
                        - dt * (c.c_rec * X("q_ract") + c.c_c * X("w"))
                        - c.c_dw * X("w_ramp") - c.c_rsup * X("d_rsup") - c.alpha_r_sd * X("d_rsd")
                        - c.c_csup * X("d_csup") - c.alpha_c_sd * X("d_csd"))
                obj = obj + wgt * term
        self.m.set_objective(obj, "max")


def _check_inputs(trajectories, prices):
    if not trajectories:
        raise ConfigError("scenario space is empty")
    n, dt = len(trajectories[0]), trajectories[0].dt_hours
    for t in trajectories:
        if len(t) != n or abs(t.dt_hours - dt) > 1e-12:
            raise ConfigError("all scenarios must share length and step")
    if len(prices) != n:
        raise ConfigError(f"price profile has {len(prices)} steps but the horizon has {n}")


def _prices(prices):
    return getattr(prices, "prices", prices)


def build_smilp(plant: PlantDesign, costs: CostModel, scenarios, prices, options: FormulationOptions | None = None,
                name="smilp"):
    """Build the scenario-coupled model.

    ``scenarios`` is a ScenarioSpace, or any sequence of trajectories or
    ``(window_id, trajectory)`` pairs.
    """
    options = options or FormulationOptions()
    pairs = _scenario_pairs(scenarios)
    trajs = [t for _, t in pairs]
    prices = _prices(prices)
    _check_inputs(trajs, prices)
    check_design_for_step(plant, trajs[0].dt_hours)
    b = _Builder(plant, costs, trajs, prices, options, name)
    model, ix = b.build()
    ix.scenario_ids = [wid for wid, _ in pairs]
    return model, ix


def build_deterministic(plant, costs, trajectory: WeatherTrajectory, prices, options=None, name="smilp"):
    return build_smilp(plant, costs, [trajectory], prices, options, name)


def _scenario_pairs(scenarios):
    items = getattr(scenarios, "scenarios", scenarios)
    out = []
    for i, it in enumerate(items):
        if isinstance(it, WeatherTrajectory):
            out.append((i, it))
        else:
            wid, tr = it
            out.append((wid, tr))
    return out


# --- extraction ---------------------------------------------------------------------

def _round_binary(v, tol, label):
    r = round(v)
    if r not in (0, 1) or abs(v - r) > tol:
        raise ExtractionError(f"{label} = {v!r} is not within {tol} of a binary value")
    return int(r)


def extract_dispatch_plan(solution, index_map: SmilpIndexMap, design: PlantDesign | None = None, tol=1e-6):
    if not solution.has_values:
        raise ExtractionError(f"solution has no values (status {solution.status})")
    K = index_map.horizon
    vals = solution.values
    cols = {}
    for sym in PLAN_BINARIES:
        cols[_FIELD[sym]] = [_round_binary(vals[index_map.plan_name(sym, k)], tol, f"{sym}[{k}]") for k in range(K)]
    for sym in PLAN_CONTINUOUS:
        cols[_FIELD[sym]] = [vals[index_map.plan_name(sym, k)] for k in range(K)]
    plan = DispatchPlan(**cols)
    if design is not None:
        _clip_setpoints(plan, design)
        plan.validate(design, index_map.daylight)
    return plan


def _clip_setpoints(plan, design):
    on_r = plan.y_r - plan.y_rsup
    plan.q_r_hat = np.clip(plan.q_r_hat, design.q_rl * on_r, design.q_rlim * np.maximum(on_r, 0))
    on_c = plan.y_c - plan.y_csup
    plan.q_c_hat = np.clip(plan.q_c_hat, design.q_l * on_c + design.q_c * plan.y_csup,
                           design.q_u * np.maximum(on_c, 0) + design.q_c * plan.y_csup)


def extract_control_trajectories(solution, index_map: SmilpIndexMap, s, tol=1e-6):
    """Per-step control values of scenario ``s`` as ``{symbol: array}``."""
    if not solution.has_values:
        raise ExtractionError(f"solution has no values (status {solution.status})")
    if not 0 <= s < index_map.n_scenarios:
        raise ExtractionError(f"scenario {s} out of range")
    K = index_map.horizon
    vals = solution.values
    out = {}
    for sym in MODE_BINARIES + SWITCHES:
        out[sym] = np.array([_round_binary(vals[index_map.control_name(sym, k, s)], tol, f"{sym}[{k},{s}]")
                             for k in range(K)], dtype=int)
    for sym in CONTROL_CONTINUOUS:
        out[sym] = np.array([vals[index_map.control_name(sym, k, s)] for k in range(K)])
    return out
