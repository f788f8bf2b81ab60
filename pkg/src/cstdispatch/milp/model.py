"""Solver-independent MILP container with a small builder API."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import sparse

CONTINUOUS = "continuous"
BINARY = "binary"
MAXIMIZE = "max"
MINIMIZE = "min"

_NAME_RE = re.compile(r"[A-Za-z0-9_]{1,255}")
_SENSES = {"<=": "<=", "L": "<=", ">=": ">=", "G": ">=", "=": "=", "==": "=", "E": "="}
# Constant rows are checked with this absolute slack.
_CONST_ROW_TOL = 1e-9


class Var:
    """Handle for a model column.  Supports linear arithmetic."""

    __slots__ = ("index", "name")

    def __init__(self, index, name):
        self.index = index
        self.name = name

    def __index__(self):
        return self.index

    def __int__(self):
        return self.index

    def __repr__(self):
        return f"Var({self.index}, {self.name!r})"

    def _expr(self):
        return LinExpr({self.index: 1.0})

    def __add__(self, o):
        return self._expr() + o

    __radd__ = __add__

    def __sub__(self, o):
        return self._expr() - o

    def __rsub__(self, o):
        return (-1.0) * self._expr() + o

    def __mul__(self, k):
        return self._expr() * k

    __rmul__ = __mul__

    def __neg__(self):
        return self._expr() * -1.0


class LinExpr:
    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    @staticmethod
    def of(x):
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Var):
            return LinExpr({x.index: 1.0})
        return LinExpr(const=float(x))

    def copy(self):
        return LinExpr(self.terms, self.const)

    def __add__(self, o):
        o = LinExpr.of(o)
        out = self.copy()
        for i, c in o.terms.items():
            out.terms[i] = out.terms.get(i, 0.0) + c
        out.const += o.const
        return out

    __radd__ = __add__

    def __sub__(self, o):
        return self + LinExpr.of(o) * -1.0

    def __rsub__(self, o):
        return LinExpr.of(o) - self

    def __mul__(self, k):
        k = float(k)
        return LinExpr({i: c * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"LinExpr({self.terms}, {self.const})"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lower: float
    upper: float


@dataclass(frozen=True)
class Row:
    name: str
    sense: str
    rhs: float
    coeffs: tuple  # ((var_index, coef), ...) in first-seen order, merged


def _check_name(name):
    if not isinstance(name, str) or not _NAME_RE.fullmatch(name):
        raise ValueError(f"invalid name {name!r}: must match [A-Za-z0-9_]{{1,255}}")


class MilpModel:
    def __init__(self, name="model"):
        _check_name(name)
        self.name = name
        self.variables: list[Variable] = []
        self.rows: list[Row] = []
        self.objective: dict = {}
        self.objective_constant = 0.0
        self.sense = MAXIMIZE
        self._var_ix: dict = {}
        self._row_ix: dict = {}

    # -- builder -----------------------------------------------------------
    def add_variable(self, name, kind=CONTINUOUS, lower=0.0, upper=math.inf):
        _check_name(name)
        if name in self._var_ix:
            raise ValueError(f"duplicate variable name {name!r}")
        if kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {kind!r}")
        lower, upper = float(lower), float(upper)
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ValueError(f"invalid bounds [{lower}, {upper}] for {name!r}")
        if kind == BINARY and (lower < 0 or upper > 1):
            raise ValueError(f"binary {name!r} needs bounds within [0, 1]")
        idx = len(self.variables)
        self.variables.append(Variable(name, kind, lower, upper))
        self._var_ix[name] = idx
        return Var(idx, name)

    def _coeff_items(self, coeffs):
        if isinstance(coeffs, (LinExpr, Var)):
            expr = LinExpr.of(coeffs)
            if expr.const != 0.0:
                raise ValueError("add_row takes a constant-free expression; use add_constraint")
            items = expr.terms.items()
        elif isinstance(coeffs, dict):
            items = coeffs.items()
        else:
            items = coeffs
        merged: dict = {}
        n = len(self.variables)
        for h, c in items:
            i = self._var_ix[h] if isinstance(h, str) and h in self._var_ix else h
            if isinstance(i, str) or not isinstance(i, (int, np.integer, Var)) or not 0 <= int(i) < n:
                raise ValueError(f"coefficient references unknown variable {h!r}")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient on {h!r}")
            merged[int(i)] = merged.get(int(i), 0.0) + c
        return tuple((i, c) for i, c in merged.items() if c != 0.0)

    def add_row(self, name, coeffs, sense, rhs):
        _check_name(name)
        if name in self._row_ix:
            raise ValueError(f"duplicate row name {name!r}")
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        sense = _SENSES[sense]
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ValueError(f"non-finite rhs on row {name!r}")
        items = self._coeff_items(coeffs)
        if not items:
            ok = {"<=": 0.0 <= rhs + _CONST_ROW_TOL, ">=": 0.0 >= rhs - _CONST_ROW_TOL,
                  "=": abs(rhs) <= _CONST_ROW_TOL}[sense]
            if not ok:
                raise ValueError(f"constant row {name!r} is infeasible: 0 {sense} {rhs}")
        idx = len(self.rows)
        self.rows.append(Row(name, sense, rhs, items))
        self._row_ix[name] = idx
        return idx

    def add_constraint(self, name, lhs, sense, rhs=0.0):
        """Add ``lhs sense rhs`` where both sides may be expressions."""
        expr = LinExpr.of(lhs) - LinExpr.of(rhs)
        return self.add_row(name, LinExpr(expr.terms), sense, -expr.const)

    def set_objective(self, coeffs, sense=MAXIMIZE, constant=0.0):
        if sense not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"objective sense must be 'max' or 'min', got {sense!r}")
        if isinstance(coeffs, LinExpr):
            constant = constant + coeffs.const
            coeffs = LinExpr(coeffs.terms)
        self.objective = dict(self._coeff_items(coeffs))
        self.objective_constant = float(constant)
        self.sense = sense

    # -- queries -----------------------------------------------------------
    @property
    def shape(self):
        return len(self.variables), len(self.rows)

    def var_index(self, name):
        return self._var_ix[name]

    def row_index(self, name):
        return self._row_ix[name]

    def has_variable(self, name):
        return name in self._var_ix

    def binary_indices(self):
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    @property
    def nnz(self):
        return sum(len(r.coeffs) for r in self.rows)

    def validate(self):
        if len(self._var_ix) != len(self.variables) or len(self._row_ix) != len(self.rows):
            raise ValueError("name index out of sync with model contents")
        n = len(self.variables)
        for r in self.rows:
            for i, _ in r.coeffs:
                if not 0 <= i < n:
                    raise ValueError(f"row {r.name!r} references unknown column {i}")
        for i in self.objective:
            if not 0 <= i < n:
                raise ValueError(f"objective references unknown column {i}")
        for v in self.variables:
            if v.kind == BINARY and (v.lower < 0 or v.upper > 1):
                raise ValueError(f"binary {v.name!r} has bounds outside [0, 1]")
        return True

    def to_arrays(self):
        """Dense/sparse arrays in minimisation form ``min c.x``."""
        n = len(self.variables)
        c = np.zeros(n)
        for i, v in self.objective.items():
            c[i] = v
        if self.sense == MAXIMIZE:
            c = -c
        rows, cols, vals = [], [], []
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for r_i, r in enumerate(self.rows):
            for i, v in r.coeffs:
                rows.append(r_i)
                cols.append(i)
                vals.append(v)
            lo[r_i] = -np.inf if r.sense == "<=" else r.rhs
            hi[r_i] = np.inf if r.sense == ">=" else r.rhs
        a = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.rows), n))
        lb = np.array([v.lower for v in self.variables])
        ub = np.array([v.upper for v in self.variables])
        integrality = np.array([1 if v.kind == BINARY else 0 for v in self.variables])
        return c, a, lo, hi, lb, ub, integrality

    def evaluate_objective(self, x):
        return self.objective_constant + sum(c * x[i] for i, c in self.objective.items())

    def row_activity(self, x):
        return np.array([sum(c * x[i] for i, c in r.coeffs) for r in self.rows])

    def max_violation(self, x):
        """Largest absolute row or bound violation of point ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        act = self.row_activity(x)
        for a, r in zip(act, self.rows):
            if r.sense in ("<=", "="):
                worst = max(worst, a - r.rhs)
            if r.sense in (">=", "="):
                worst = max(worst, r.rhs - a)
        for xi, v in zip(x, self.variables):
            worst = max(worst, v.lower - xi, xi - v.upper)
        return worst


def big_m_for(bound_magnitude):
    """Big-M for a constraint family: 5% above the largest attainable magnitude."""
    m = float(bound_magnitude)
    if not math.isfinite(m) or m <= 0:
        raise ValueError(f"big-M needs a positive finite magnitude, got {bound_magnitude!r}")
    return m * 1.05
