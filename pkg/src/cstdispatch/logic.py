"""Switch thresholds and the direct (non-linearised) case functions.

The optimisation model encodes each strict comparison with a slack ``EPS``:
a switch is pinned to one value when its expression is >= 0 and to the other
when it is <= -EPS, and nothing in between is feasible.  The simulator places
its own thresholds inside that dead band so that any point the optimiser can
return is classified identically.  Expressions built only from weather
constants use the band midpoint; expressions involving state use ``TOL`` on
the physically safe side.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-3
TOL = 1e-6


# --- direct case functions ---------------------------------------------------

def receiver_startup(y_r, z1, z2_prev, dr_prev):
    """Startup mode: planned on, enough potential power, not yet warm, not generating."""
    return int(bool(y_r) and not z1 and not z2_prev and not dr_prev)


def receiver_generating(y_r, z2, dr_prev, z3):
    """Generation mode: planned on, warm (or already running), enough power after draws."""
    return int(bool(y_r) and (bool(z2) or bool(dr_prev)) and not z3)


def receiver_charge(q_avail_gen, q_r_hat, q_rl):
    """Actual receiver output given the power left for generation and the setpoint."""
    if q_avail_gen < q_rl:
        return 0.0
    if q_avail_gen < q_r_hat:
        return float(q_avail_gen)
    return float(q_r_hat)


def pb_startup(y_c, dc_prev, z6_prev, z7):
    """Power-block startup mode: planned on, idle, not yet warm, storage can fund the draw."""
    return int(bool(y_c) and not dc_prev and not z6_prev and not z7)


# --- switch evaluation with the simulator's thresholds ------------------------

def z_potential_low(q_p, q_rl, eps=EPS):
    return q_p - q_rl < -eps / 2


def z_warm(e, e_target):
    return e - e_target >= -TOL


def z_avail_low(q_avail, q_rl, eps=EPS):
    return q_avail - q_rl < eps / 2


def z_storage_short_for_startup(phi, dt, q_c):
    return phi - dt * q_c <= TOL


def z_storage_short_for_setpoint(phi, dt, q_c_hat):
    return phi - dt * q_c_hat < -TOL


def z_load_short(q_c_hat, q_c, in_startup, q_l):
    return q_c_hat - q_c * in_startup - q_l < -TOL


# --- dead-band snapping ---------------------------------------------------------

def snap_potential_power(q_p, design, eps=EPS):
    """Move potential-power values out of the switches' dead bands.

    A value inside a band would make the linearised rows for that step
    infeasible whatever the plan, so it is pushed to the nearer band edge.
    The shift is below ``eps`` and both the optimiser and the simulator see
    the same snapped series.
    """
    q = np.array(q_p, dtype=float)
    bands = [(design.q_rl - eps, design.q_rl)]
    for c in sorted({0.0, design.q_ru, design.q_rsd, design.q_ru + design.q_rsd}):
        bands.append((design.q_rl + c, design.q_rl + c + eps))
    flat = q.reshape(-1)
    for i, v in enumerate(flat):
        for lo, hi in bands:
            if lo < v < hi:
                flat[i] = lo if v - lo <= hi - v else hi
                break
    return q
