"""Rule-based plant simulation of a dispatch plan against one weather trajectory."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from . import logic
from .formulation import CostModel, DispatchPlan, FormulationOptions, check_design_for_step
from .plant import PlantDesign, WeatherTrajectory, dumped_power, potential_power_series

EVENT_TYPES = ("rsup", "rsd_planned", "rsd_forced", "csup", "csd_planned", "csd_forced")

TRACE_COLUMNS = ("q_p", "d_rsup", "d_rsu", "d_r", "d_rsd", "d_csup", "d_csu", "d_c", "d_csd",
                 "z1", "z2", "z3", "z4", "z6", "z7", "z8", "z9",
                 "e_rsu", "e_csu", "q_ract", "q_drain", "dump", "q_avail", "q_avail_gen", "avail_st", "q_cact",
                 "soc", "w", "w_ramp", "w_sell", "w_buy", "price", "profit")


@dataclass
class PlantState:
    storage: float
    e_rsu: float = 0.0
    e_csu: float = 0.0
    receiver_mode: str = "off"
    pb_mode: str = "off"
    w_prev: float = 0.0


@dataclass
class ProfitBreakdown:
    revenue: float = 0.0
    purchase_cost: float = 0.0
    receiver_opex: float = 0.0
    receiver_sd_cost: float = 0.0
    pb_opex: float = 0.0
    pb_sd_cost: float = 0.0
    profit: float = 0.0
    dispatched_mwh: float = 0.0
    undiscounted_revenue: float = 0.0

    @property
    def receiver_cost(self):
        return self.receiver_opex + self.receiver_sd_cost

    @property
    def pb_cost(self):
        return self.pb_opex + self.pb_sd_cost

    def to_dict(self):
        d = asdict(self)
        d["receiver_cost"] = self.receiver_cost
        d["pb_cost"] = self.pb_cost
        return d


@dataclass
class SimulationResult:
    trace: dict
    events: list
    breakdown: ProfitBreakdown
    dt: float
    start_timestamp: object = None

    @property
    def horizon(self):
        return len(self.trace["soc"])

    def event_counts(self):
        counts = {e: 0 for e in EVENT_TYPES}
        for step in self.events:
            for e in step:
                counts[e] += 1
        return counts

    def to_csv(self):
        """One row per step; columns are ``step``, TRACE_COLUMNS, ``events``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("step",) + TRACE_COLUMNS + ("events",))
        for k in range(self.horizon):
            row = [k]
            for c in TRACE_COLUMNS:
                v = self.trace[c][k]
                row.append(int(v) if np.issubdtype(np.asarray(self.trace[c]).dtype, np.integer) else repr(float(v)))
            row.append(";".join(self.events[k]))
            w.writerow(row)
        return buf.getvalue()


def _receiver_lookahead(plan, qp, design, eps):
    """run_ok[j]: would a receiver generating at j-1 keep generating at j?

    Continuing at j means the step-j power, less the drain if j turns out to be
    the last generating step, still covers minimum generation.  Whether j is
    last depends on j+1, so the recursion runs backwards.
    """
    K = plan.horizon
    run_ok = np.zeros(K + 1, dtype=bool)
    last = np.zeros(K, dtype=bool)
    for j in range(K - 1, -1, -1):
        last[j] = bool(plan.y_rsd[j]) or (j < K - 1 and not run_ok[j + 1])
        run_ok[j] = (bool(plan.y_r[j]) and plan.q_r_hat[j] >= design.q_rl - logic.TOL
                     and not logic.z_avail_low(qp[j] - design.q_rsd * last[j], design.q_rl, eps))
    return run_ok[:K], last


def _as_prices(prices, k):
    p = np.asarray(getattr(prices, "prices", prices), dtype=float)
    if p.size != k:
        raise ValueError(f"price profile has {p.size} steps but the plan has {k}")
    return p


def simulate(plant: PlantDesign, costs: CostModel, plan: DispatchPlan, traj: WeatherTrajectory, prices,
             options: FormulationOptions | None = None) -> SimulationResult:
    options = options or FormulationOptions()
    d = plant
    K = plan.horizon
    if len(traj) != K:
        raise ValueError(f"plan horizon {K} does not match trajectory length {len(traj)}")
    plan.validate(d)
    p = _as_prices(prices, K)
    dt = traj.dt_hours
    check_design_for_step(d, dt)
    eps = options.epsilon
    qp = logic.snap_potential_power(potential_power_series(traj, d, options.loss, options.efficiency), d, eps)
    run_ok, last_if_running = _receiver_lookahead(plan, qp, d, eps)

    tr = {c: np.zeros(K, dtype=int if c.startswith(("d_", "z")) else float) for c in TRACE_COLUMNS}
    tr["q_p"][:] = qp
    tr["price"][:] = p
    events = [[] for _ in range(K)]
    st = PlantState(storage=d.s_min)
    prev = dict(d_r=0, d_rsu=0, z2=0, d_c=0, d_csu=0, z6=0)
    bd = ProfitBreakdown()

    for k in range(K):
        q = float(qp[k])
        yr, yc = int(plan.y_r[k]), int(plan.y_c[k])
        qr_hat, qc_hat = float(plan.q_r_hat[k]), float(plan.q_c_hat[k])

        # receiver startup
        z1 = int(logic.z_potential_low(q, d.q_rl, eps))
        rsu = logic.receiver_startup(yr, z1, prev["z2"], prev["d_r"])
        e_rsu = st.e_rsu + dt * d.q_ru if rsu else 0.0
        z2 = int(logic.z_warm(e_rsu, d.e_r))

        # receiver generation
        if prev["d_r"]:
            gen = bool(run_ok[k])
            last = bool(last_if_running[k])
        elif z2 and yr and qr_hat >= d.q_rl - logic.TOL:
            last = bool(plan.y_rsd[k]) or (k < K - 1 and not run_ok[k + 1])
            gen = not logic.z_avail_low(q - d.q_ru * rsu - d.q_rsd * last, d.q_rl, eps)
        else:
            gen, last = False, False
        r = int(gen)
        rsd = int(gen and last)
        q_avail_gen = q * r - d.q_ru * rsu - d.q_rsd * rsd
        q_ract = logic.receiver_charge(q_avail_gen, qr_hat, d.q_rl) if r else 0.0
        q_drain = d.q_rsd * rsd

        # power block, with curtailment of receiver charge if storage would overflow
        for _ in range(64):
            pb = _pb_step(d, dt, st, prev, yc, qc_hat, q_ract)
            s_new = st.storage + dt * (q_ract - pb["q_cact"] - d.q_c * pb["d_csu"])
            if s_new <= d.e_u + logic.TOL or not r:
                break
            q_cut = q_ract - (s_new - d.e_u) / dt
            if q_cut >= d.q_rl - logic.TOL:
                q_ract = max(q_cut, d.q_rl)
                continue
            # curtailed below minimum generation: receiver is forced off and drains now
            r, q_ract = 0, 0.0
            rsd = 1
            q_avail_gen = -d.q_ru * rsu - d.q_rsd * rsd
            q_drain = min(d.q_rsd, max(0.0, q - d.q_ru * rsu))
        else:  # pragma: no cover - the cut sequence is monotone and terminates quickly
            raise RuntimeError("storage curtailment did not converge")
        s_new = min(max(s_new, d.s_min), d.e_u)

        dump = dumped_power(q, rsu, False, q_ract + q_drain, d)
        q_avail = q - d.q_ru * rsu - d.q_rsd * rsd

        # electricity
        c_on = pb["d_c"]
        w = d.eta_p * pb["q_cact"] + c_on * (d.w_u - d.eta_p * d.q_u)
        ramp = abs(w - st.w_prev)
        w_sell = w * (1 - d.eta_c)
        w_buy = (d.l_r * (q_ract + d.q_ru * rsu) + d.l_c * pb["q_cact"] + d.w_h * r
                 + (d.e_hs / dt) * (rsd + rsu))

        # events
        rsup = int(rsu and not prev["d_rsu"])
        csup = int(pb["d_csu"] and not prev["d_csu"])
        csd = int(prev["d_c"] and not c_on)
        if rsup:
            events[k].append("rsup")
        if rsd:
            events[k].append("rsd_planned" if plan.y_rsd[k] and r else "rsd_forced")
        if csup:
            events[k].append("csup")
        if csd:
            events[k].append("csd_planned" if plan.y_csd[k] else "csd_forced")

        # profit
        wgt = costs.discount(k)
        rev = wgt * dt * p[k] * w_sell
        buy = wgt * dt * p[k] * w_buy
        r_opex = wgt * (dt * costs.c_rec * q_ract + costs.c_rsup * rsup)
        r_sd = wgt * costs.alpha_r_sd * rsd
        c_opex = wgt * (dt * costs.c_c * w + costs.c_dw * ramp + costs.c_csup * csup)
        c_sd = wgt * costs.alpha_c_sd * csd
        step_profit = rev - buy - r_opex - r_sd - c_opex - c_sd
        bd.revenue += rev
        bd.purchase_cost += buy
        bd.receiver_opex += r_opex
        bd.receiver_sd_cost += r_sd
        bd.pb_opex += c_opex
        bd.pb_sd_cost += c_sd
        bd.profit += step_profit
        bd.dispatched_mwh += dt * w_sell
        bd.undiscounted_revenue += dt * p[k] * w_sell

        vals = dict(d_rsup=rsup, d_rsu=rsu, d_r=r, d_rsd=rsd, d_csup=csup, d_csu=pb["d_csu"], d_c=c_on,
                    d_csd=csd, z1=z1, z2=z2, z3=int(logic.z_avail_low(q_avail, d.q_rl, eps)),
                    z4=int(logic.z_avail_low(q_avail_gen, d.q_rl, eps)), z6=pb["z6"], z7=pb["z7"],
                    z8=pb["z8"], z9=pb["z9"], e_rsu=e_rsu, e_csu=pb["e_csu"], q_ract=q_ract, q_drain=q_drain,
                    dump=dump, q_avail=q_avail, q_avail_gen=q_avail_gen, avail_st=pb["phi"],
                    q_cact=pb["q_cact"], soc=s_new, w=w, w_ramp=ramp, w_sell=w_sell, w_buy=w_buy,
                    profit=step_profit)
        for c, v in vals.items():
            tr[c][k] = v

        st = PlantState(storage=s_new, e_rsu=e_rsu, e_csu=pb["e_csu"],
                        receiver_mode="generating" if r else ("startup" if rsu else "off"),
                        pb_mode="generating" if c_on else ("startup" if pb["d_csu"] else "off"), w_prev=w)
        prev = dict(d_r=r, d_rsu=rsu, z2=z2, d_c=c_on, d_csu=pb["d_csu"], z6=pb["z6"])

    return SimulationResult(tr, events, bd, dt, traj.start_timestamp)


def _pb_step(d, dt, st, prev, yc, qc_hat, q_ract):
    phi = st.storage - d.s_min + dt * q_ract
    z7 = int(logic.z_storage_short_for_startup(phi, dt, d.q_c))
    csu = logic.pb_startup(yc, prev["d_c"], prev["z6"], z7) and qc_hat >= d.q_c - logic.TOL
    csu = int(csu)
    e_csu = st.e_csu + dt * d.q_c if csu else 0.0
    z6 = int(logic.z_warm(e_csu, d.e_c))
    z8 = int(logic.z_storage_short_for_setpoint(phi, dt, qc_hat))
    z9 = int(logic.z_load_short(qc_hat, d.q_c, csu, d.q_l))
    c_on = int(bool(yc) and (bool(z6) or bool(prev["d_c"])) and not z8 and not z9)
    q_cact = min(max(qc_hat - d.q_c * csu, d.q_l), d.q_u) if c_on else 0.0
    return dict(phi=phi, z6=z6, z7=z7, z8=z8, z9=z9, d_csu=csu, e_csu=e_csu, d_c=c_on, q_cact=q_cact)


def profit_components(result: SimulationResult, prices, costs: CostModel) -> ProfitBreakdown:
    """Recompute the profit breakdown from a trace."""
    tr = result.trace
    K = result.horizon
    p = _as_prices(prices, K)
    dt = result.dt
    wgt = np.array([costs.discount(k) for k in range(K)])
    bd = ProfitBreakdown()
    bd.revenue = float(np.sum(wgt * dt * p * tr["w_sell"]))
    bd.purchase_cost = float(np.sum(wgt * dt * p * tr["w_buy"]))
    bd.receiver_opex = float(np.sum(wgt * (dt * costs.c_rec * tr["q_ract"] + costs.c_rsup * tr["d_rsup"])))
    bd.receiver_sd_cost = float(np.sum(wgt * costs.alpha_r_sd * tr["d_rsd"]))
    bd.pb_opex = float(np.sum(wgt * (dt * costs.c_c * tr["w"] + costs.c_dw * tr["w_ramp"]
                                     + costs.c_csup * tr["d_csup"])))
    bd.pb_sd_cost = float(np.sum(wgt * costs.alpha_c_sd * tr["d_csd"]))
    bd.profit = bd.revenue - bd.purchase_cost - bd.receiver_cost - bd.pb_cost
    bd.dispatched_mwh = float(np.sum(dt * tr["w_sell"]))
    bd.undiscounted_revenue = float(np.sum(dt * p * tr["w_sell"]))
    return bd
