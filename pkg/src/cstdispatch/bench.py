"""Plan evaluation over weather sets, summary statistics and report rendering."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np
from scipy.special import betainc

from .formulation import DispatchPlan
from .heuristics import PlanningConfig, _map, _pairs, heuristic_2, perfect_knowledge
from .simulator import EVENT_TYPES, SimulationResult, simulate

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
PK = "pk"
CATEGORIES = ("scenario", "sampling", "testing")
COMPONENTS = ("revenue", "purchase_cost", "receiver_cost", "pb_cost", "profit")
COST_COMPONENTS = ("purchase_cost", "receiver_cost", "pb_cost")
LABELS = {"revenue": "Revenue", "purchase_cost": "Purchase", "receiver_cost": "Receiver cost",
          "pb_cost": "Power block cost", "profit": "Profit"}
TAPS = (2.5, 50.0, 97.5)

RECORD_COLUMNS = ("plan", "window_id", "start") + COMPONENTS + (
    "dispatched_mwh", "undiscounted_revenue") + EVENT_TYPES + ("runtime_s",)


class ReportError(ValueError):
    pass


@dataclass
class EvaluationRecord:
    window_id: object
    result: SimulationResult
    runtime_s: float
    plan: DispatchPlan | None = None

    @property
    def breakdown(self):
        return self.result.breakdown

    def component(self, name):
        return float(getattr(self.breakdown, name))


def _evaluate_one(plant, costs, plan_source, wid, traj, prices, cfg):
    t0 = time.perf_counter()
    cropped = cfg.crop(traj)
    plan = perfect_knowledge(plant, costs, traj, prices, cfg) if _is_pk(plan_source) else plan_source
    res = simulate(plant, costs, plan, cropped, prices, cfg.options)
    return EvaluationRecord(wid, res, time.perf_counter() - t0, plan if _is_pk(plan_source) else None)


def _is_pk(src):
    return isinstance(src, str) and src == PK


def evaluate_plan(plant, costs, plan_source, weather_set, prices, cfg: PlanningConfig | None = None):
    """Simulate a fixed plan on every trajectory, or re-optimise per trajectory for ``PK``."""
    cfg = cfg or PlanningConfig()
    if not _is_pk(plan_source) and not isinstance(plan_source, DispatchPlan):
        raise TypeError(f"plan_source must be a DispatchPlan or {PK!r}")
    pairs = _pairs(weather_set)
    recs = _map(_evaluate_one, [(plant, costs, plan_source, w, t, prices, cfg) for w, t in pairs], cfg.jobs)
    log.info("evaluated %d trajectories in %.2f s", len(recs), sum(r.runtime_s for r in recs))
    return recs


# --- statistics -----------------------------------------------------------------------

def dwa_price(records):
    """Revenue per MWh dispatched over all records; ``None`` when nothing was dispatched.

    Records may be evaluation records, profit breakdowns or
    ``(revenue, dispatched_mwh)`` pairs.
    """
    rev = mwh = 0.0
    for r in records:
        if isinstance(r, tuple):
            a, b = r
        else:
            bd = getattr(r, "breakdown", r)
            a, b = bd.undiscounted_revenue, bd.dispatched_mwh
        rev += a
        mwh += b
    return rev / mwh if mwh > 0 else None


def percentile_summary(values, taps=TAPS):
    """Percentiles by linear interpolation between order statistics (rank p/100*(n-1))."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("percentile_summary needs at least one value")
    return {float(t): float(np.percentile(v, t, method="linear")) for t in taps}


def welch_t_test(a, b):
    """Two-sided Welch test; returns (t, dof, p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("welch_t_test needs at least two values per sample")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if not se2 > 0:
        raise ValueError("welch_t_test: both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    p = float(betainc(dof / 2, 0.5, dof / (dof + t * t)))
    return float(t), float(dof), min(1.0, p)


# --- report ---------------------------------------------------------------------------

@dataclass
class PlanSummary:
    n: int
    means: dict
    percentiles: dict          # component -> {tap: value}
    dwa: float | None
    event_means: dict
    runtime_s: float
    identity_residual: float

    def to_dict(self):
        return {"n": self.n, "means": self.means,
                "percentiles": {c: {str(k): v for k, v in p.items()} for c, p in self.percentiles.items()},
                "dwa_price": self.dwa, "event_means": self.event_means, "runtime_s": self.runtime_s,
                "identity_residual": self.identity_residual}


def summarize(records) -> PlanSummary:
    if not records:
        raise ReportError("cannot summarise an empty record list")
    cols = {c: np.array([r.component(c) for r in records]) for c in COMPONENTS}
    means = {c: float(v.mean()) for c, v in cols.items()}
    resid = means["profit"] - (means["revenue"] - means["purchase_cost"] - means["receiver_cost"] - means["pb_cost"])
    events = {e: float(np.mean([r.result.event_counts()[e] for r in records])) for e in EVENT_TYPES}
    return PlanSummary(len(records), means, {c: percentile_summary(v) for c, v in cols.items()},
                       dwa_price(records), events, float(sum(r.runtime_s for r in records)), abs(resid))


@dataclass
class EvaluationReport:
    category: str
    summaries: dict                                   # plan name -> PlanSummary
    records: dict = field(repr=False, default_factory=dict)
    t_tests: dict = field(default_factory=dict)       # (a, b) -> (t, dof, p) or None

    @classmethod
    def from_records(cls, records_by_plan, category):
        if category not in CATEGORIES:
            raise ReportError(f"unknown category {category!r}; choose from {', '.join(CATEGORIES)}")
        if not records_by_plan:
            raise ReportError("no plans to report")
        summaries = {}
        for name, recs in records_by_plan.items():
            if not recs:
                raise ReportError(f"plan {name!r} has no evaluation records (empty weather set?)")
            summaries[name] = summarize(recs)
        names = list(records_by_plan)
        tests = {}
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                pa = [r.component("profit") for r in records_by_plan[a]]
                pb = [r.component("profit") for r in records_by_plan[b]]
                try:
                    tests[(a, b)] = welch_t_test(pa, pb)
                except ValueError:
                    tests[(a, b)] = None
        return cls(category, summaries, dict(records_by_plan), tests)

    @property
    def plans(self):
        return list(self.summaries)

    def max_identity_residual(self):
        return max(s.identity_residual for s in self.summaries.values())

    def to_dict(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "category": self.category,
            "plans": {n: s.to_dict() for n, s in self.summaries.items()},
            "t_tests": [{"a": a, "b": b, "t": v and v[0], "dof": v and v[1], "p_value": v and v[2]}
                        for (a, b), v in self.t_tests.items()],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for name, recs in self.records.items():
            for r in recs:
                bd = r.breakdown
                ev = r.result.event_counts()
                start = r.result.start_timestamp.isoformat() if r.result.start_timestamp else ""
                w.writerow([name, r.window_id, start] + [repr(r.component(c)) for c in COMPONENTS]
                           + [repr(bd.dispatched_mwh), repr(bd.undiscounted_revenue)]
                           + [ev[e] for e in EVENT_TYPES] + [f"{r.runtime_s:.4f}"])
        return buf.getvalue()

    def to_text(self):
        """Aligned table: means, then median and 2.5/97.5 percentiles; costs in parentheses."""
        names = self.plans
        rows = [["", *names]]

        def cell(comp, v):
            return f"({abs(v):,.0f})" if comp in COST_COMPONENTS else f"{v:,.0f}"

        rows.append([f"Mean over {self.category} set", *[""] * len(names)])
        for c in COMPONENTS:
            rows.append(["  " + LABELS[c], *[cell(c, self.summaries[n].means[c]) for n in names]])
        rows.append(["  DWA price", *[("-" if self.summaries[n].dwa is None else f"{self.summaries[n].dwa:,.2f}")
                                      for n in names]])
        rows.append(["Profit percentiles", *[""] * len(names)])
        for tap, label in zip(TAPS, ("2.5%", "median", "97.5%")):
            rows.append(["  " + label, *[f"{self.summaries[n].percentiles['profit'][tap]:,.0f}" for n in names]])
        rows.append(["Mean events", *[""] * len(names)])
        for e in EVENT_TYPES:
            rows.append(["  " + e, *[f"{self.summaries[n].event_means[e]:.2f}" for n in names]])
        rows.append(["Runtime (s)", *[f"{self.summaries[n].runtime_s:.2f}" for n in names]])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [rows[0][0].ljust(widths[0]) + "  " + "  ".join(h.rjust(w) for h, w in zip(rows[0][1:], widths[1:]))]
        lines.append("-" * len(lines[0]))
        for r in rows[1:]:
            lines.append(r[0].ljust(widths[0]) + "  " + "  ".join(c.rjust(w) for c, w in zip(r[1:], widths[1:])))
        if self.t_tests:
            lines.append("")
            lines.append("Welch t-tests on profit")
            for (a, b), v in self.t_tests.items():
                lines.append(f"  {a} vs {b}: " + ("undefined (zero variance)" if v is None
                                                  else f"t={v[0]:.3f} dof={v[1]:.1f} p={v[2]:.4g}"))
        return "\n".join(lines) + "\n"

    def to_svg(self):
        labels = self.plans
        mean = [self.summaries[n].means["profit"] for n in labels]
        lo = [self.summaries[n].percentiles["profit"][2.5] for n in labels]
        hi = [self.summaries[n].percentiles["profit"][97.5] for n in labels]
        return bar_chart_svg(labels, mean, lo, hi, f"Profit on {self.category} set")


# --- sensitivity ------------------------------------------------------------------------

@dataclass
class SensitivityRow:
    size: int
    plan: DispatchPlan
    expected_profit: float
    saa: float
    wall_clock_s: float


def sensitivity_h2(plant, costs, sampling_windows, testing_windows, prices, cfg: PlanningConfig, sizes):
    """Heuristic-2 on the most recent ``size`` windows, scored on the testing set."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    n = len(_pairs(sampling_windows))
    rows = []
    for size in sizes:
        if not 1 <= size <= n:
            log.warning("skipping subset size %s: sampling set has %d windows", size, n)
            continue
        t0 = time.perf_counter()
        plan, table = heuristic_2(plant, costs, sampling_windows, prices, cfg, subset_size=size)
        wall = time.perf_counter() - t0
        recs = evaluate_plan(plant, costs, plan, testing_windows, prices, cfg)
        exp = float(np.mean([r.component("profit") for r in recs])) if recs else float("nan")
        rows.append(SensitivityRow(size, plan, exp, float(table.means[table.selected]), wall))
    return rows


def sensitivity_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("size", "expected_profit", "saa", "wall_clock_s"))
    for r in rows:
        w.writerow((r.size, repr(r.expected_profit), repr(r.saa), f"{r.wall_clock_s:.4f}"))
    return buf.getvalue()


def sensitivity_svg(rows):
    return line_chart_svg([r.size for r in rows], [r.expected_profit for r in rows],
                          "Heuristic-2 subset size", "Expected profit on testing set")


# --- SVG --------------------------------------------------------------------------------

W, H, PAD = 640, 360, 60


def _scale(lo, hi):
    if hi - lo < 1e-12:
        lo, hi = lo - 1, hi + 1
    return lo, hi


def _frame(title, body, ylo, yhi):
    ticks = []
    for i in range(5):
        v = ylo + (yhi - ylo) * i / 4
        y = H - PAD - (H - 2 * PAD) * i / 4
        ticks.append(f'<line x1="{PAD - 4}" y1="{y:.1f}" x2="{PAD}" y2="{y:.1f}" stroke="black"/>'
                     f'<text x="{PAD - 6}" y="{y + 4:.1f}" font-size="10" text-anchor="end">{v:,.0f}</text>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
            f'<rect width="{W}" height="{H}" fill="white"/>\n'
            f'<text x="{W / 2}" y="24" font-size="14" text-anchor="middle">{escape(title)}</text>\n'
            f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>\n'
            f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>\n'
            + "".join(ticks) + "\n" + body + "\n</svg>\n")


def bar_chart_svg(labels, values, lo=None, hi=None, title=""):
    lo = list(values) if lo is None else list(lo)
    hi = list(values) if hi is None else list(hi)
    ymin, ymax = _scale(min(0.0, *lo, *values), max(0.0, *hi, *values))

    def y(v):
        return H - PAD - (H - 2 * PAD) * (v - ymin) / (ymax - ymin)

    n = max(len(labels), 1)
    slot = (W - 2 * PAD) / n
    parts = []
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = PAD + slot * i + slot * 0.2
        top, base = min(y(v), y(0)), max(y(v), y(0))
        cx = x + slot * 0.3
        parts.append(f'<rect x="{x:.1f}" y="{top:.1f}" width="{slot * 0.6:.1f}" height="{base - top:.1f}" fill="#4a7ab5"/>')
        parts.append(f'<line x1="{cx:.1f}" y1="{y(lo[i]):.1f}" x2="{cx:.1f}" y2="{y(hi[i]):.1f}" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{H - PAD + 16}" font-size="11" text-anchor="middle">{escape(str(lab))}</text>')
    return _frame(title, "\n".join(parts), ymin, ymax)


def line_chart_svg(xs, ys, xlabel="", title=""):
    if not xs:
        return _frame(title, "", 0.0, 1.0)
    ymin, ymax = _scale(min(ys), max(ys))
    xmin, xmax = _scale(min(xs), max(xs))

    def px(v):
        return PAD + (W - 2 * PAD) * (v - xmin) / (xmax - xmin)

    def py(v):
        return H - PAD - (H - 2 * PAD) * (v - ymin) / (ymax - ymin)

    pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
    body = [f'<polyline points="{pts}" fill="none" stroke="#b5504a" stroke-width="2"/>']
    for x, y in zip(xs, ys):
        body.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="#b5504a"/>')
        body.append(f'<text x="{px(x):.1f}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{x}</text>')
    body.append(f'<text x="{W / 2}" y="{H - 14}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    return _frame(title, "\n".join(body), ymin, ymax)
