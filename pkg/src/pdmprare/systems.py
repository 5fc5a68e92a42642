"""Benchmark reliability systems.

Three models of increasing character:

* HeatedRoomModel: one temperature variable, two heaters in passive
  redundancy behind thermostat thresholds. Boundary jumps at the
  thresholds (with failure on demand), spontaneous failures of running
  heaters, spontaneous repairs. Critical region: temperature below 0.
* DamModel: one level variable fed by a constant inflow and drained
  through one of two valves. Purely spontaneous jumps (valves stick,
  valves get repaired); the level rises only when both valves are stuck
  and never drains. Critical region: level at or above xlim.
* ColdStandbyModel: no physical variable at all, a two-unit standby
  chain with an absorbing both-failed mode. Its failure probability is
  closed form, which makes it the calibration oracle for the samplers.

All flows, rate integrals and their inverses are closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .core import (
    BOUNDARY_SNAP,
    Mode,
    ModelValidationError,
    PdmpModel,
    State,
    TransitionTable,
)

INF = math.inf

ON = "on"
OFF = "off"
FAILED = "failed"

OPEN = "open"
CLOSED = "closed"
STUCK = "stuck"

#: statuses that count as failed for the working-component count
FAILED_STATUSES = frozenset({FAILED, STUCK})


# ---------------------------------------------------------------------------
# heated room


@dataclass(frozen=True)
class HeatedRoomParams:
    """Room with two heaters in passive redundancy.

    dx/dt = beta1 * (xe - x) + beta2 * [some heater on]. Heater 1 is
    asked first at the low threshold; heater 2 only when heater 1 is
    failed. Each demand fails with probability gamma. A running heater
    fails spontaneously at rate fail_a + fail_b * x; a failed heater is
    repaired at rate repair_rate. The default tf is calibrated so the
    failure probability sits inside [1e-5, 1e-4] (see
    manifests/heated_room_calibration.json).
    """

    xe: float = -5.0
    beta1: float = 0.1
    beta2: float = 3.0
    xmin: float = 15.0
    xmax: float = 25.0
    gamma: float = 0.01
    fail_a: float = 0.0021
    fail_b: float = 0.00015
    repair_rate: float = 0.2
    x0: float = 20.0
    m0: Mode = (ON, OFF)
    tf: float = 160.0

    def validate(self):
        if not (self.xe < 0.0 < self.xmin < self.xmax):
            raise ModelValidationError("need xe < 0 < xmin < xmax")
        if not (0.0 <= self.gamma < 1.0):
            raise ModelValidationError("gamma must be in [0, 1)")
        if self.beta1 <= 0.0:
            raise ModelValidationError("beta1 must be positive")
        # failure rate must stay nonnegative on the reachable band
        for x in (self.xe, self.xmax):
            if self.fail_a + self.fail_b * x < 0.0:
                raise ModelValidationError(f"failure rate negative at x={x}")
        if self.repair_rate < 0.0:
            raise ModelValidationError("repair_rate must be nonnegative")
        if not (self.xe < self.x0 <= self.xmax):
            raise ModelValidationError("x0 must lie in (xe, xmax]")
        for s in self.m0:
            if s not in (ON, OFF, FAILED):
                raise ModelValidationError(f"unknown heater status {s!r}")
        if len(self.m0) != 2:
            raise ModelValidationError("m0 must have two heater statuses")


class HeatedRoomModel(PdmpModel):
    def __init__(self, params: HeatedRoomParams = HeatedRoomParams()):
        params.validate()
        self.p = params

    # flow: x(t) = xinf + (x - xinf) * exp(-beta1 t)

    def _equilibrium(self, m: Mode) -> float:
        p = self.p
        return p.xe + (p.beta2 / p.beta1 if ON in m else 0.0)

    def flow(self, z: State, dt: float) -> State:
        if dt == 0.0:
            return z
        xinf = self._equilibrium(z.m)
        x = xinf + (z.x[0] - xinf) * math.exp(-self.p.beta1 * dt)
        return State((x,), z.m)

    def boundary_hit_time(self, z: State) -> float:
        p = self.p
        x = z.x[0]
        if ON in z.m:
            # heating: the only demand left is switching off at xmax
            if x >= p.xmax - BOUNDARY_SNAP:
                return 0.0
            xinf = self._equilibrium(z.m)
            if xinf <= p.xmax:
                return INF  # asymptotic approach, threshold never reached
            return math.log((xinf - x) / (xinf - p.xmax)) / p.beta1
        if OFF in z.m:
            # cooling with an operable heater: demand at xmin
            if x <= p.xmin + BOUNDARY_SNAP:
                return 0.0
            return math.log((x - p.xe) / (p.xmin - p.xe)) / p.beta1
        return INF  # both failed: no demand possible

    def total_rate(self, z: State) -> float:
        p = self.p
        n_on = z.m.count(ON)
        n_failed = z.m.count(FAILED)
        return n_on * (p.fail_a + p.fail_b * z.x[0]) + n_failed * p.repair_rate

    def transition_rates(self, z: State):
        p = self.p
        x = z.x[0]
        out = []
        for i, s in enumerate(z.m):
            if s == ON:
                m = tuple(FAILED if j == i else t for j, t in enumerate(z.m))
                out.append((m, p.fail_a + p.fail_b * x))
            elif s == FAILED:
                other = z.m[1 - i]
                # a repair below the demand threshold with the other heater
                # down comes back heating; anywhere else it comes back idle
                status = ON if (x <= p.xmin and other == FAILED) else OFF
                m = tuple(status if j == i else t for j, t in enumerate(z.m))
                out.append((m, p.repair_rate))
        return out

    def cumulative_rate(self, z: State, t: float) -> float:
        if t == 0.0:
            return 0.0
        p = self.p
        n_on = z.m.count(ON)
        n_failed = z.m.count(FAILED)
        xinf = self._equilibrium(z.m)
        c0 = n_on * (p.fail_a + p.fail_b * xinf) + n_failed * p.repair_rate
        c1 = n_on * p.fail_b * (z.x[0] - xinf)
        if math.isinf(t):
            return INF if c0 > 0.0 else (c1 / p.beta1 if c1 > 0 else 0.0)
        return c0 * t + c1 * (1.0 - math.exp(-p.beta1 * t)) / p.beta1

    def inverse_cumulative_rate(self, z: State, target: float, hi: float):
        p = self.p
        n_on = z.m.count(ON)
        n_failed = z.m.count(FAILED)
        xinf = self._equilibrium(z.m)
        c0 = n_on * (p.fail_a + p.fail_b * xinf) + n_failed * p.repair_rate
        c1 = n_on * p.fail_b * (z.x[0] - xinf)
        if c1 == 0.0:
            return target / c0 if c0 > 0.0 else None
        # safeguarded Newton on c0 s + c1 (1 - e^(-b s))/b - target
        b = p.beta1
        lo, up = 0.0, hi
        s = min(target / max(self.total_rate(z), 1e-300), hi)
        for _ in range(80):
            f = c0 * s + c1 * (1.0 - math.exp(-b * s)) / b - target
            if f < 0.0:
                lo = s
            else:
                up = s
            d = c0 + c1 * math.exp(-b * s)  # rate along the flow, positive here
            step = f / d if d > 0.0 else 0.0
            nxt = s - step
            if not (lo < nxt < up):
                nxt = 0.5 * (lo + up)
            if abs(nxt - s) <= 1e-13 * max(1.0, s):
                return nxt
            s = nxt
        return 0.5 * (lo + up)

    def boundary_kernel(self, z: State) -> TransitionTable:
        p = self.p
        x = z.x[0]
        if ON in z.m and x >= p.xmax - BOUNDARY_SNAP:
            # switching off never fails on demand
            m = tuple(OFF if s == ON else s for s in z.m)
            return TransitionTable(((State((p.xmax,), m), 1.0),), control=0)
        if ON not in z.m and OFF in z.m and x <= p.xmin + BOUNDARY_SNAP:
            return self._demand_kernel(z.m)
        raise ModelValidationError(f"{z} is not on a thermostat threshold")

    def _demand_kernel(self, m: Mode) -> TransitionTable:
        """Ask heater 1, falling back to heater 2 on demand failure."""
        p = self.p
        x = (p.xmin,)
        entries = []

        def with_status(mode, i, s):
            return tuple(s if j == i else t for j, t in enumerate(mode))

        if m[0] == OFF:
            ok = with_status(m, 0, ON)
            entries.append((State(x, ok), 1.0 - p.gamma))
            broken = with_status(m, 0, FAILED)
            if m[1] == OFF:
                entries.append((State(x, with_status(broken, 1, ON)), p.gamma * (1.0 - p.gamma)))
                entries.append((State(x, with_status(broken, 1, FAILED)), p.gamma * p.gamma))
            else:  # heater 2 already failed
                entries.append((State(x, broken), p.gamma))
        elif m[1] == OFF:  # heater 1 already failed, ask heater 2 directly
            entries.append((State(x, with_status(m, 1, ON)), 1.0 - p.gamma))
            entries.append((State(x, with_status(m, 1, FAILED)), p.gamma))
        else:
            raise ModelValidationError(f"no operable heater to ask at {m}")
        entries = [(s, q) for s, q in entries if q > 0.0]
        return TransitionTable(tuple(entries), control=0)

    def is_critical(self, z: State) -> bool:
        return z.x[0] < 0.0

    def critical_hit_time(self, z: State) -> float:
        x = z.x[0]
        if x < 0.0:
            return 0.0
        xinf = self._equilibrium(z.m)
        if xinf >= 0.0:
            return INF  # heating: never cools through zero
        return math.log((x - xinf) / (-xinf)) / self.p.beta1

    def initial_state(self) -> State:
        return State((self.p.x0,), self.p.m0)

    def horizon(self) -> float:
        return self.p.tf

    def probe_states(self, stream, count):
        p = self.p
        modes = [(ON, OFF), (OFF, OFF), (FAILED, ON), (FAILED, OFF), (OFF, FAILED),
                 (ON, FAILED), (OFF, ON), (FAILED, FAILED)]
        out = []
        for _ in range(count):
            m = modes[int(stream.uniform() * len(modes)) % len(modes)]
            if ON in m:
                lo, hi = p.xmin, p.xmax
            elif OFF in m:
                lo, hi = p.xmin, p.xmax
            else:
                lo, hi = p.xe * 0.5, p.xmax
            x = lo + (hi - lo) * stream.uniform()
            # keep probes safely interior
            x = min(max(x, lo + 1e-6), hi - 1e-6)
            out.append(State((x,), m))
        return out


# ---------------------------------------------------------------------------
# dam


@dataclass(frozen=True)
class DamParams:
    """Reservoir with inflow and two evacuation valves.

    The level rises at inflow/surface only while both valves are stuck;
    an open valve matches the inflow exactly, so the level never drains.
    stick_scope selects which valves can stick ("open": only the valve
    currently evacuating; "both": the closed standby as well).
    repair_crews selects the repair capacity ("single": one crew, total
    rate repair_rate however many valves are stuck; "per_valve": one
    crew per stuck valve). Defaults are the variant matching the
    reference failure probability (see manifests/dam_variants.json).
    """

    inflow: float = 10.0
    surface: float = 10.0
    xlim: float = 10.0
    stick_rate: float = 0.001
    repair_rate: float = 0.1
    tf: float = 50.0
    x0: float = 0.0
    m0: Mode = (OPEN, CLOSED)
    stick_scope: str = "open"
    repair_crews: str = "single"

    def validate(self):
        if self.inflow <= 0.0 or self.surface <= 0.0:
            raise ModelValidationError("inflow and surface must be positive")
        if self.stick_rate < 0.0 or self.repair_rate < 0.0:
            raise ModelValidationError("rates must be nonnegative")
        if self.x0 >= self.xlim:
            raise ModelValidationError("x0 must start below xlim")
        if self.stick_scope not in ("open", "both"):
            raise ModelValidationError(f"unknown stick_scope {self.stick_scope!r}")
        if self.repair_crews not in ("single", "per_valve"):
            raise ModelValidationError(f"unknown repair_crews {self.repair_crews!r}")
        for s in self.m0:
            if s not in (OPEN, CLOSED, STUCK):
                raise ModelValidationError(f"unknown valve status {s!r}")
        if len(self.m0) != 2:
            raise ModelValidationError("m0 must have two valve statuses")


class DamModel(PdmpModel):
    def __init__(self, params: DamParams = DamParams()):
        params.validate()
        self.p = params

    def _slope(self, m: Mode) -> float:
        if m[0] == STUCK and m[1] == STUCK:
            return self.p.inflow / self.p.surface
        return 0.0

    def flow(self, z: State, dt: float) -> State:
        if dt == 0.0:
            return z
        s = self._slope(z.m)
        if s == 0.0:
            return State(z.x, z.m)
        return State((z.x[0] + s * dt,), z.m)

    def boundary_hit_time(self, z: State) -> float:
        return INF  # every jump is spontaneous

    def transition_rates(self, z: State):
        p = self.p
        m = z.m
        out = []
        for i, s in enumerate(m):
            other = m[1 - i]
            if s == OPEN:
                # the working valve sticks; the standby takes over at once
                if other == CLOSED:
                    arr = tuple(STUCK if j == i else OPEN for j in range(2))
                else:
                    arr = tuple(STUCK if j == i else other for j in range(2))
                out.append((arr, p.stick_rate))
            elif s == CLOSED and p.stick_scope == "both":
                arr = tuple(STUCK if j == i else other for j in range(2))
                out.append((arr, p.stick_rate))
        n_stuck = m.count(STUCK)
        if n_stuck:
            each = p.repair_rate if p.repair_crews == "per_valve" else p.repair_rate / n_stuck
            for i, s in enumerate(m):
                if s == STUCK:
                    other = m[1 - i]
                    status = OPEN if other == STUCK else CLOSED
                    arr = tuple(status if j == i else other for j in range(2))
                    out.append((arr, each))
        return out

    def total_rate(self, z: State) -> float:
        p = self.p
        m = z.m
        sticking = sum(1 for s in m if s == OPEN or (s == CLOSED and p.stick_scope == "both"))
        rate = sticking * p.stick_rate
        n_stuck = m.count(STUCK)
        if n_stuck:
            rate += p.repair_rate * (n_stuck if p.repair_crews == "per_valve" else 1)
        return rate

    def cumulative_rate(self, z: State, t: float) -> float:
        return self.total_rate(z) * t

    def inverse_cumulative_rate(self, z: State, target: float, hi: float):
        lam = self.total_rate(z)
        return target / lam if lam > 0.0 else None

    def boundary_kernel(self, z: State) -> TransitionTable:
        raise ModelValidationError("the dam has no forced jumps")

    def is_critical(self, z: State) -> bool:
        return z.x[0] >= self.p.xlim

    def critical_hit_time(self, z: State) -> float:
        x = z.x[0]
        if x >= self.p.xlim:
            return 0.0
        s = self._slope(z.m)
        if s <= 0.0:
            return INF
        return (self.p.xlim - x) / s

    def initial_state(self) -> State:
        return State((self.p.x0,), self.p.m0)

    def horizon(self) -> float:
        return self.p.tf

    def probe_states(self, stream, count):
        modes = [(OPEN, CLOSED), (STUCK, OPEN), (CLOSED, OPEN), (OPEN, STUCK), (STUCK, STUCK)]
        out = []
        for _ in range(count):
            m = modes[int(stream.uniform() * len(modes)) % len(modes)]
            x = stream.uniform() * self.p.xlim * 0.9
            out.append(State((x,), m))
        return out


# ---------------------------------------------------------------------------
# cold standby


@dataclass(frozen=True)
class ColdStandbyParams:
    """Two-unit standby chain; the failure probability is closed form."""

    fail_rate: float = 0.1
    tf: float = 10.0

    def validate(self):
        if self.fail_rate < 0.0:
            raise ModelValidationError("fail_rate must be nonnegative")
        if self.tf <= 0.0:
            raise ModelValidationError("tf must be positive")


class ColdStandbyModel(PdmpModel):
    """(on, off) -> (failed, on) -> (failed, failed), rate fail_rate each.

    No physical variables, no boundaries; the both-failed mode is
    absorbing and is the critical region.
    """

    def __init__(self, params: ColdStandbyParams = ColdStandbyParams()):
        params.validate()
        self.p = params

    def flow(self, z: State, dt: float) -> State:
        return z

    def boundary_hit_time(self, z: State) -> float:
        return INF

    def transition_rates(self, z: State):
        if z.m == (ON, OFF):
            return [((FAILED, ON), self.p.fail_rate)]
        if z.m == (FAILED, ON):
            return [((FAILED, FAILED), self.p.fail_rate)]
        return []

    def total_rate(self, z: State) -> float:
        return self.p.fail_rate if ON in z.m else 0.0

    def cumulative_rate(self, z: State, t: float) -> float:
        return self.total_rate(z) * t

    def inverse_cumulative_rate(self, z: State, target: float, hi: float):
        lam = self.total_rate(z)
        return target / lam if lam > 0.0 else None

    def boundary_kernel(self, z: State) -> TransitionTable:
        raise ModelValidationError("the standby chain has no forced jumps")

    def is_critical(self, z: State) -> bool:
        return z.m == (FAILED, FAILED)

    def initial_state(self) -> State:
        return State((), (ON, OFF))

    def horizon(self) -> float:
        return self.p.tf

    def probe_states(self, stream, count):
        modes = [(ON, OFF), (FAILED, ON), (FAILED, FAILED)]
        return [State((), modes[i % 3]) for i in range(count)]


_SYSTEMS = {
    "heated_room": (HeatedRoomModel, HeatedRoomParams),
    "dam": (DamModel, DamParams),
    "cold_standby": (ColdStandbyModel, ColdStandbyParams),
}

SYSTEM_NAMES = tuple(_SYSTEMS)


def normalize_system_name(name: str) -> str:
    """Map spelling variants (HeatedRoom, heated-room, ...) to the key."""
    key = name.lower().replace("_", "").replace("-", "").replace(" ", "")
    for canonical in _SYSTEMS:
        if canonical.replace("_", "") == key:
            return canonical
    return name


def make_system(name: str, **overrides):
    """Build a model by config name with parameter overrides."""
    canonical = normalize_system_name(name)
    if canonical not in _SYSTEMS:
        raise ModelValidationError(f"unknown system {name!r}")
    model_cls, params_cls = _SYSTEMS[canonical]
    known = {f.name for f in fields(params_cls)}
    bad = sorted(set(overrides) - known)
    if bad:
        raise ModelValidationError(
            f"unknown {canonical} parameter(s) {bad}; valid: {sorted(known)}")
    params = replace(params_cls(), **overrides) if overrides else params_cls()
    return model_cls(params)
