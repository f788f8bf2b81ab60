"""Free-format MPS serialisation."""

from __future__ import annotations

import math

from .model import BINARY, MAXIMIZE, MilpModel

OBJ_ROW = "obj"
_SENSE_CODE = {"<=": "L", ">=": "G", "=": "E"}


def fmt_number(x):
    """Up to 12 significant digits; plain notation for 1e-4 <= |x| <= 1e12."""
    x = float(x)
    if x == 0:
        return "0"
    s = f"{x:.12g}"
    if "e" in s and 1e-4 <= abs(x) <= 1e12:
        s = f"{x:.0f}" if abs(x) >= 1 else f"{x:.16f}".rstrip("0")
    return s


def _obj_row_name(model):
    names = {r.name for r in model.rows}
    name = OBJ_ROW
    while name in names:
        name = "_" + name
    return name


def write_mps(model: MilpModel) -> str:
    try:
        model.validate()
    except ValueError as exc:
        raise ValueError(f"cannot serialise an invalid model: {exc}") from exc
    obj = _obj_row_name(model)
    out = [f"NAME {model.name}", "OBJSENSE", "    MAX" if model.sense == MAXIMIZE else "    MIN", "ROWS", f" N {obj}"]
    for r in model.rows:
        out.append(f" {_SENSE_CODE[r.sense]} {r.name}")

    # column-major view of the row coefficients, in row insertion order
    cols = [[] for _ in model.variables]
    for r in model.rows:
        for i, c in r.coeffs:
            cols[i].append((r.name, c))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for i, v in enumerate(model.variables):
        is_bin = v.kind == BINARY
        if is_bin and not in_int:
            out.append(f"    MARKER{marker} 'MARKER' 'INTORG'")
            marker += 1
            in_int = True
        elif not is_bin and in_int:
            out.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
            marker += 1
            in_int = False
        entries = []
        if i in model.objective:
            entries.append((obj, model.objective[i]))
        entries.extend(cols[i])
        if not entries:
            entries.append((obj, 0.0))
        for rname, c in entries:
            out.append(f"    {v.name} {rname} {fmt_number(c)}")
    if in_int:
        out.append(f"    MARKER{marker} 'MARKER' 'INTEND'")

    out.append("RHS")
    if model.objective_constant != 0:
        # objective RHS holds the negated constant offset
        out.append(f"    RHS {obj} {fmt_number(-model.objective_constant)}")
    for r in model.rows:
        if r.rhs != 0:
            out.append(f"    RHS {r.name} {fmt_number(r.rhs)}")

    out.append("BOUNDS")
    for v in model.variables:
        lo, up = v.lower, v.upper
        if v.kind == BINARY and lo == 0 and up == 1:
            out.append(f" BV BND {v.name}")
            continue
        if lo == up:
            out.append(f" FX BND {v.name} {fmt_number(lo)}")
            continue
        if lo == -math.inf and up == math.inf:
            out.append(f" FR BND {v.name}")
            continue
        if lo == -math.inf:
            out.append(f" MI BND {v.name}")
        elif lo != 0:
            out.append(f" LO BND {v.name} {fmt_number(lo)}")
        if up != math.inf:
            out.append(f" UP BND {v.name} {fmt_number(up)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
