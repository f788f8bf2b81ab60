"""Physical model of the solar tower plant.

Powers are MW, energies MWh and step lengths hours throughout.  Irradiance
enters in kW/m2, so field area times irradiance gives kW and is divided by
1000 on the way out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PlantDesign:
    n_helio: int = 11547
    a_helio: float = 117.52
    reflectance_rho: float = 0.95
    availability_c: float = 1.0
    q_pipe: float = 2.0
    q_ru: float = 175.0
    e_r: float = 175.0
    q_rl: float = 175.0
    q_rlim: float = 700.0
    q_rsd: float = 43.75
    q_c: float = 164.3
    e_c: float = 164.3
    q_l: float = 65.7
    q_u: float = 329.0
    w_l: float = 115.0 * 65.7 / 329.0
    w_u: float = 115.0
    eta_p: float = 115.0 / 329.0
    e_u: float = 3290.0
    soc_min: float = 0.1
    l_r: float = 0.01
    l_c: float = 0.01
    w_h: float = 0.5
    e_hs: float = 0.2
    eta_c: float = 0.03

    def __post_init__(self):
        self.validate()

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"plant.{f.name} must be a finite non-negative number, got {v!r}")
        checks = [
            (0 < self.q_rl <= self.q_rlim, "need 0 < q_rl <= q_rlim"),
            (0 < self.q_l <= self.q_u, "need 0 < q_l <= q_u"),
            (0 < self.w_l <= self.w_u, "need 0 < w_l <= w_u"),
            (0 <= self.soc_min < 1, "need 0 <= soc_min < 1"),
            (self.e_u > 0, "need e_u > 0"),
            (self.availability_c <= 1, "availability_c must lie in [0, 1]"),
            (self.eta_c <= 1, "eta_c must lie in [0, 1]"),
            (self.eta_p * self.q_u <= self.w_u * (1 + 1e-12), "need eta_p * q_u <= w_u"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"invalid plant design: {msg}")

    @property
    def s_min(self):
        return self.soc_min * self.e_u

    @property
    def field_area(self):
        return self.n_helio * self.a_helio

    def with_updates(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class WeatherSample:
    dni: float
    t_amb: float = 25.0
    wind: float = 0.0

    def __post_init__(self):
        if self.dni < 0 or self.wind < 0:
            raise ValueError("dni and wind must be non-negative")


class WeatherTrajectory:
    """Uniformly spaced weather series.  Arrays are stored read-only."""

    def __init__(self, start_timestamp: datetime, dt_hours: float, dni, t_amb, wind):
        dni = np.array(dni, dtype=float)
        t_amb = np.array(t_amb, dtype=float)
        wind = np.array(wind, dtype=float)
        if dni.ndim != 1 or dni.size == 0:
            raise ValueError("trajectory must be a non-empty 1-D series")
        if t_amb.shape != dni.shape or wind.shape != dni.shape:
            raise ValueError("dni, t_amb and wind must have equal length")
        if not dt_hours > 0:
            raise ValueError("dt_hours must be positive")
        if np.any(dni < 0) or np.any(wind < 0):
            raise ValueError("dni and wind must be non-negative")
        for a in (dni, t_amb, wind):
            a.setflags(write=False)
        self.start_timestamp = start_timestamp
        self.dt_hours = float(dt_hours)
        self.dni = dni
        self.t_amb = t_amb
        self.wind = wind

    @classmethod
    def from_samples(cls, start_timestamp, dt_hours, samples: Sequence[WeatherSample]):
        return cls(start_timestamp, dt_hours,
                   [s.dni for s in samples], [s.t_amb for s in samples], [s.wind for s in samples])

    def __len__(self):
        return self.dni.size

    @property
    def samples(self):
        return [WeatherSample(float(d), float(t), float(w)) for d, t, w in zip(self.dni, self.t_amb, self.wind)]

    def timestamps(self):
        step = timedelta(hours=self.dt_hours)
        return [self.start_timestamp + i * step for i in range(len(self))]

    def hours_of_day(self):
        h0 = self.start_timestamp.hour + self.start_timestamp.minute / 60 + self.start_timestamp.second / 3600
        return (h0 + self.dt_hours * np.arange(len(self))) % 24.0

    def window(self, start_step, n_steps):
        if start_step < 0 or n_steps <= 0 or start_step + n_steps > len(self):
            raise ValueError(f"window [{start_step}, {start_step + n_steps}) outside trajectory of {len(self)} steps")
        sl = slice(start_step, start_step + n_steps)
        start = self.start_timestamp + timedelta(hours=self.dt_hours * start_step)
        return WeatherTrajectory(start, self.dt_hours, self.dni[sl], self.t_amb[sl], self.wind[sl])

    def concat(self, other):
        if abs(other.dt_hours - self.dt_hours) > 1e-12:
            raise ValueError("cannot join trajectories with different steps")
        expected = self.start_timestamp + timedelta(hours=self.dt_hours * len(self))
        if other.start_timestamp != expected:
            raise ValueError("trajectories are not contiguous")
        return WeatherTrajectory(self.start_timestamp, self.dt_hours,
                                 np.concatenate([self.dni, other.dni]),
                                 np.concatenate([self.t_amb, other.t_amb]),
                                 np.concatenate([self.wind, other.wind]))

    def __eq__(self, other):
        if not isinstance(other, WeatherTrajectory):
            return NotImplemented
        return (self.start_timestamp == other.start_timestamp and self.dt_hours == other.dt_hours
                and np.array_equal(self.dni, other.dni) and np.array_equal(self.t_amb, other.t_amb)
                and np.array_equal(self.wind, other.wind))

    def __repr__(self):
        return f"WeatherTrajectory({self.start_timestamp.isoformat()}, dt={self.dt_hours}, n={len(self)})"


@dataclass(frozen=True)
class LossModel:
    """Receiver heat losses.

    Radiative loss is a polynomial in ambient temperature (ascending powers,
    at most degree 4).  Convective loss is ``c0 + c1*T + c2*v + c3*T*v``.
    """

    rad_coeffs: tuple = (20.0,)
    conv_coeffs: tuple = (10.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "rad_coeffs", tuple(float(c) for c in self.rad_coeffs))
        conv = tuple(float(c) for c in self.conv_coeffs)
        if len(self.rad_coeffs) == 0 or len(self.rad_coeffs) > 5:
            raise ConfigError("rad_coeffs needs between 1 and 5 coefficients")
        if len(conv) == 0 or len(conv) > 4:
            raise ConfigError("conv_coeffs needs between 1 and 4 coefficients")
        object.__setattr__(self, "conv_coeffs", conv + (0.0,) * (4 - len(conv)))

    @classmethod
    def zero(cls):
        return cls((0.0,), (0.0,))

    def radiative(self, t_amb):
        t = np.asarray(t_amb, dtype=float)
        val = np.polynomial.polynomial.polyval(t, self.rad_coeffs)
        return np.maximum(val, 0.0)

    def convective(self, t_amb, wind):
        t = np.asarray(t_amb, dtype=float)
        v = np.asarray(wind, dtype=float)
        c0, c1, c2, c3 = self.conv_coeffs
        return np.maximum(c0 + c1 * t + c2 * v + c3 * t * v, 0.0)


class OpticalEfficiencyTable:
    """Field efficiency by month and time-of-day slot.

    ``table`` has shape (12, slots_per_day); a scalar gives a constant
    efficiency usable at any resolution.  NaN marks a missing entry.
    """

    def __init__(self, table=0.6):
        arr = np.array(table, dtype=float)
        if arr.ndim == 0:
            self.constant = float(arr)
            self.table = None
            vals = arr[None]
        else:
            if arr.ndim != 2 or arr.shape[0] != 12 or arr.shape[1] < 1:
                raise ConfigError("efficiency table must have shape (12, slots_per_day)")
            if (24 * 60) % arr.shape[1]:
                raise ConfigError("slots_per_day must divide a day into whole minutes")
            self.constant = None
            self.table = arr
            vals = arr[~np.isnan(arr)]
        if np.any(vals < 0) or np.any(vals > 1):
            raise ConfigError("optical efficiencies must lie in [0, 1]")

    @property
    def slot_minutes(self):
        return None if self.table is None else 1440 // self.table.shape[1]

    def series(self, traj: WeatherTrajectory):
        if self.table is None:
            return np.full(len(traj), self.constant)
        step_min = traj.dt_hours * 60
        if abs(step_min - round(step_min)) > 1e-9 or round(step_min) % self.slot_minutes:
            raise ConfigError(
                f"trajectory step of {step_min:g} min does not match efficiency slots of {self.slot_minutes} min")
        out = np.empty(len(traj))
        for i, ts in enumerate(traj.timestamps()):
            slot = (ts.hour * 60 + ts.minute) // self.slot_minutes
            v = self.table[ts.month - 1, slot]
            if np.isnan(v):
                raise ConfigError(f"no optical efficiency for month {ts.month}, slot {slot} ({ts.isoformat()})")
            out[i] = v
        return out


def heliostat_field_power(design: PlantDesign, sample: WeatherSample, eta_opt: float) -> float:
    if not 0 <= eta_opt <= 1:
        raise ValueError("eta_opt must lie in [0, 1]")
    kw = design.field_area * design.reflectance_rho * design.availability_c * eta_opt * sample.dni
    return kw / 1000.0


def receiver_potential_power(q_helio: float, sample: WeatherSample, design: PlantDesign, loss: LossModel) -> float:
    if q_helio < 0:
        raise ValueError("q_helio must be non-negative")
    losses = float(loss.radiative(sample.t_amb)) + float(loss.convective(sample.t_amb, sample.wind))
    return max(0.0, q_helio - losses - design.q_pipe)


def dumped_power(q_p, in_startup, in_shutdown, q_ract, design: PlantDesign):
    if in_startup and in_shutdown:
        raise ValueError("receiver cannot be in startup and shutdown in the same step")
    return max(0.0, q_p - design.q_ru * bool(in_startup) - design.q_rsd * bool(in_shutdown) - q_ract)


def net_output(w_gross, eta_c, w_purchased):
    return w_gross * (1.0 - eta_c) - w_purchased


def field_power_series(traj: WeatherTrajectory, design: PlantDesign, eff: OpticalEfficiencyTable):
    eta = eff.series(traj)
    return design.field_area * design.reflectance_rho * design.availability_c * eta * traj.dni / 1000.0


def potential_power_series(traj: WeatherTrajectory, design: PlantDesign, loss: LossModel,
                           eff: OpticalEfficiencyTable):
    """Vectorised receiver potential power for every step of ``traj``."""
    q_helio = field_power_series(traj, design, eff)
    losses = loss.radiative(traj.t_amb) + loss.convective(traj.t_amb, traj.wind)
    return np.maximum(0.0, q_helio - losses - design.q_pipe)


def scenario_potential_energy(traj: WeatherTrajectory, design: PlantDesign, loss: LossModel,
                              eff: OpticalEfficiencyTable) -> float:
    # Losses are only counted on steps where the field delivers power: a
    # drained receiver at night does not lose heat.
    q_helio = field_power_series(traj, design, eff)
    lit = q_helio > 0
    dt = traj.dt_hours
    e_helio = dt * float(q_helio.sum())
    e_rad = dt * float(loss.radiative(traj.t_amb)[lit].sum())
    e_conv = dt * float(loss.convective(traj.t_amb, traj.wind)[lit].sum())
    return max(0.0, e_helio - e_rad - e_conv)
