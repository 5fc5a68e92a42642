"""Piecewise deterministic Markov process core.

A state couples a vector of physical variables x with a discrete mode m.
Between jumps the state follows the mode's deterministic flow; jumps are
either forced (the flow reaches the mode's boundary) or spontaneous
(first arrival of an inhomogeneous rate along the flow). Models plug in
by implementing PdmpModel; the functions below do the generic work:
jump-time sampling by inverse transform, the simulation loop, and the
deterministic "preponderant" extension that suppresses every spontaneous
jump and takes the control branch at every boundary.

Conventions used throughout:

* time is relative to the start of the simulated interval;
* a jump landing exactly on the horizon is included (closed interval);
* a state closer than BOUNDARY_SNAP to a threshold is on the boundary.

Survival records: alongside each trajectory the simulator accumulates
F(t), the probability that the process follows this exact skeleton up to
t. F decays continuously as exp(-integral of the jump rate) between
forced jumps and drops by the branch probability at each forced jump.
The record stores the discontinuities (time, value before, value after),
the terminal value F(horizon), and the state at the start of every
inter-jump interval so the continuous part can be re-inverted later.
Records stay exact only while no spontaneous jump has occurred; after
the first one the record is truncated there and flagged.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

from scipy.integrate import quad

from .streams import Stream

Mode = tuple  # tuple of small status strings, one per component

#: absolute snap distance: states this close to a threshold count as on it
BOUNDARY_SNAP = 1e-9

#: tolerance of the generic jump-time bisection (time units)
BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200

_INF = math.inf


class ModelValidationError(ValueError):
    """The model violates a structural requirement."""


class FlowDomainError(ValueError):
    """flow_advance asked to integrate past the boundary hit time."""


class UndefinedKernelError(ValueError):
    """Interior kernel requested where the total jump rate vanishes."""


class DegenerateRecordError(ValueError):
    """Differentiation requested on a record with terminal probability 1."""


@dataclass(frozen=True, slots=True)
class State:
    """Hybrid state: physical variables x and mode tuple m."""

    x: tuple
    m: Mode

    def __repr__(self):
        xs = ", ".join(f"{v:.6g}" for v in self.x)
        return f"State(({xs}), {'/'.join(self.m)})"


def states_close(a: State, b: State, xtol: float = 1e-12) -> bool:
    """Mode exactly equal, physical variables within xtol componentwise."""
    if a.m != b.m or len(a.x) != len(b.x):
        return False
    return all(abs(u - v) <= xtol for u, v in zip(a.x, b.x))


@dataclass(frozen=True, slots=True)
class JumpRecord:
    time: float
    departure: State
    arrival: State
    forced: bool


@dataclass(frozen=True, slots=True)
class TrajectorySkeleton:
    """Initial state, horizon, and the ordered jumps in (0, horizon].

    final is the state at the horizon; failed records whether the
    trajectory entered the critical region at any time up to (and
    including) the horizon.
    """

    initial: State
    horizon: float
    jumps: tuple
    final: State
    failed: bool


@dataclass(frozen=True, slots=True)
class SurvivalRecord:
    """Piecewise survival function F of a trajectory skeleton.

    breakpoints[k] = (s_k, pre_k, post_k): at the k-th forced jump F drops
    from pre_k to post_k. interval_states[i] is the state at the start of
    inter-jump interval i (len(breakpoints) + 1 intervals). terminal is
    F(horizon). preponderant is False when the trajectory contained a
    spontaneous jump, in which case the record is truncated at that jump.
    """

    breakpoints: tuple
    interval_states: tuple
    terminal: float
    horizon: float
    preponderant: bool

    def reconstruct_terminal(self, model) -> float:
        """Recompute terminal from the stored intervals (consistency check)."""
        if not self.preponderant:
            raise ValueError("cannot reconstruct a truncated record")
        fac = 1.0
        t_prev = 0.0
        for i, (s, pre, post) in enumerate(self.breakpoints):
            z = self.interval_states[i]
            fac *= math.exp(-model.cumulative_rate(z, s - t_prev))
            fac *= post / pre if pre > 0.0 else 0.0
            t_prev = s
        z = self.interval_states[len(self.breakpoints)]
        fac *= math.exp(-model.cumulative_rate(z, self.horizon - t_prev))
        return fac


@dataclass(frozen=True)
class TransitionTable:
    """Discrete arrival distribution of a jump.

    entries: tuple of (arrival state, probability), probabilities summing
    to 1. control indexes the designated no-failure branch of a boundary
    table (None for interior tables).
    """

    entries: tuple
    control: Optional[int] = None

    def validate(self, departure: State) -> list:
        problems = []
        total = math.fsum(p for _, p in self.entries)
        if abs(total - 1.0) > 1e-12:
            problems.append(f"probabilities sum to {total!r} at {departure}")
        seen = []
        for z, p in self.entries:
            if p < 0.0:
                problems.append(f"negative probability {p} at {departure}")
            if z == departure:
                problems.append(f"kernel jumps onto its departure state {departure}")
            for w in seen:
                if z == w:
                    problems.append(f"duplicate arrival {z} at {departure}")
            seen.append(z)
        return problems


class PdmpModel(ABC):
    """Model interface: flow, boundaries, rates, kernels, criticality.

    Subclasses implement the abstract methods with closed forms where
    available; the base class supplies generic quadrature and kernel
    helpers. States handed to boundary_kernel are on the boundary;
    states handed to rate and interior-kernel methods are interior.
    """

    @abstractmethod
    def flow(self, z: State, dt: float) -> State:
        """State reached from z after following the mode's flow for dt."""

    @abstractmethod
    def boundary_hit_time(self, z: State) -> float:
        """Time until the flow from z reaches the mode's boundary.

        0.0 when z is (within BOUNDARY_SNAP) on the boundary; inf when
        the flow never reaches it.
        """

    @abstractmethod
    def transition_rates(self, z: State) -> Sequence:
        """List of (arrival mode, rate >= 0) for spontaneous jumps at z."""

    @abstractmethod
    def boundary_kernel(self, z: State) -> TransitionTable:
        """Arrival distribution of the forced jump at boundary state z."""

    @abstractmethod
    def is_critical(self, z: State) -> bool:
        """Membership in the critical region D."""

    def critical_hit_time(self, z: State) -> float:
        """Time until the flow from z enters D; 0 if already inside, inf if never.

        Default suits models whose D is mode-defined: the flow alone never
        enters it.
        """
        return 0.0 if self.is_critical(z) else _INF

    def total_rate(self, z: State) -> float:
        return math.fsum(r for _, r in self.transition_rates(z))

    def cumulative_rate(self, z: State, t: float) -> float:
        """Integral of the total rate along the flow from z over [0, t].

        Generic adaptive quadrature; models override with closed forms.
        """
        if t == 0.0:
            return 0.0
        val, _err = quad(lambda u: self.total_rate(self.flow(z, u)), 0.0, t,
                         epsabs=1e-12, epsrel=1e-10, limit=200)
        return val

    def inverse_cumulative_rate(self, z: State, target: float, hi: float):
        """Solve cumulative_rate(z, s) == target for s in (0, hi].

        Return None to fall back on the generic bisection. Models with
        closed-form integrals override this.
        """
        return None

    def interior_kernel(self, z: State) -> TransitionTable:
        rates = self.transition_rates(z)
        lam = math.fsum(r for _, r in rates)
        if lam <= 0.0:
            raise UndefinedKernelError(f"total rate vanishes at {z}")
        entries = tuple((State(z.x, m), r / lam) for m, r in rates if r > 0.0)
        return TransitionTable(entries)

    def initial_state(self) -> State:
        raise NotImplementedError

    def horizon(self) -> float:
        raise NotImplementedError

    def probe_states(self, stream: Stream, count: int) -> list:
        """Random reachable states for property tests and self checks."""
        return [self.initial_state()]


# ---------------------------------------------------------------------------
# generic operations


def flow_advance(model: PdmpModel, z: State, dt: float) -> State:
    """Advance along the flow, refusing to integrate past the boundary."""
    if dt < 0.0:
        raise FlowDomainError(f"negative duration {dt}")
    t_star = model.boundary_hit_time(z)
    if dt > t_star:
        raise FlowDomainError(f"duration {dt} exceeds boundary hit time {t_star} from {z}")
    return model.flow(z, dt)


def cumulative_rate(model: PdmpModel, z: State, t: float) -> float:
    if t < 0.0:
        raise FlowDomainError(f"negative duration {t}")
    if t > model.boundary_hit_time(z):
        raise FlowDomainError("integration interval crosses the boundary")
    return model.cumulative_rate(z, t)


def _invert_rate_integral(model, z, target, hi):
    """Smallest s in (0, hi] with cumulative_rate(z, s) == target.

    Caller guarantees cumulative_rate(z, hi) >= target. Uses the model's
    closed-form inverse when provided, else bisection to BISECTION_TOL.
    """
    s = model.inverse_cumulative_rate(z, target, hi)
    if s is not None:
        return min(s, hi)
    lo, up = 0.0, hi
    for _ in range(BISECTION_MAX_ITER):
        if up - lo <= BISECTION_TOL:
            break
        mid = 0.5 * (lo + up)
        if model.cumulative_rate(z, mid) < target:
            lo = mid
        else:
            up = mid
    return up


def _next_jump_capped(model, z, stream, cap, t_star):
    """Inverse-transform jump time from z, reported only if it lands within cap.

    Consumes exactly one uniform. Returns (T, forced) with T <= cap, or
    None when the jump falls beyond cap (T > cap has then been decided,
    bitwise identically to the uncapped sampler).
    """
    u = stream.uniform()
    target = -math.log(u)
    if t_star <= cap:
        lam_star = model.cumulative_rate(z, t_star)
        if target >= lam_star:
            return t_star, True
        return _invert_rate_integral(model, z, target, t_star), False
    if model.cumulative_rate(z, cap) < target:
        return None
    return _invert_rate_integral(model, z, target, cap), False


def sample_jump_time(model: PdmpModel, z: State, stream: Stream):
    """Next jump time from interior state z: (T, forced).

    T is the boundary hit time with the atom probability exp(-Lambda(t*)),
    otherwise the inverse transform of the continuous part. Returns
    (inf, False) when the state can never jump (no boundary, rate
    integral bounded below the drawn target).
    """
    t_star = model.boundary_hit_time(z)
    if t_star == 0.0:
        raise FlowDomainError(f"{z} is a boundary state; sample_jump_time needs the interior")
    if not math.isinf(t_star):
        return _next_jump_capped(model, z, stream, t_star, t_star)  # always lands
    # no boundary: expand a bracket until the integral exceeds the target
    u = stream.uniform()
    target = -math.log(u)
    hi = 1.0
    lam_hi = model.cumulative_rate(z, hi)
    grew = 0
    while lam_hi < target:
        hi *= 2.0
        if hi > 1e30:
            return _INF, False
        new = model.cumulative_rate(z, hi)
        if new <= lam_hi:
            grew += 1
            if grew > 4:  # rate integral has plateaued: no jump ever
                return _INF, False
        else:
            grew = 0
        lam_hi = new
    return _invert_rate_integral(model, z, target, hi), False


def jump_distribution(model: PdmpModel, z: State) -> TransitionTable:
    """Arrival distribution at the pre-jump state z (boundary or interior)."""
    if model.boundary_hit_time(z) == 0.0:
        return model.boundary_kernel(z)
    return model.interior_kernel(z)


def _draw_arrival(table: TransitionTable, stream: Stream):
    i = stream.pick([p for _, p in table.entries])
    return table.entries[i]


class _RunResult:
    __slots__ = ("final", "failed", "jumps", "breakpoints", "interval_states",
                 "terminal", "preponderant", "initial")

    def __init__(self):
        self.jumps = []
        self.breakpoints = []
        self.interval_states = []
        self.terminal = 1.0
        self.preponderant = True
        self.failed = False


def _run(model, z0, horizon, stream, want_skeleton, want_record):
    """Shared simulation loop.

    want_skeleton keeps JumpRecords, want_record keeps survival data;
    both off gives the cheap propagation used by the particle methods.
    """
    if horizon < 0.0:
        raise FlowDomainError(f"negative horizon {horizon}")
    out = _RunResult()
    z = z0
    # a start state sitting on its boundary jumps before the interval proper
    if model.boundary_hit_time(z) == 0.0:
        table = model.boundary_kernel(z)
        arrival, q = _draw_arrival(table, stream)
        if want_record:
            out.breakpoints.append((0.0, 1.0, q))
            # zero-length interval before the jump keeps the
            # one-more-interval-than-breakpoints alignment
            out.interval_states.append(z)
            out.terminal = q
        z = arrival
    out.initial = z
    if want_record:
        out.interval_states.append(z)
    out.failed = model.is_critical(z)
    t = 0.0
    while True:
        if len(out.jumps) > _MAX_FORCED_JUMPS:
            raise ModelValidationError("simulation exceeded the jump budget; runaway model")
        remaining = horizon - t
        if remaining <= 0.0:
            out.final = z
            return out
        t_star = model.boundary_hit_time(z)
        res = _next_jump_capped(model, z, stream, remaining, t_star)
        if res is None:
            if not out.failed and model.critical_hit_time(z) <= remaining:
                out.failed = True
            if want_record and out.preponderant:
                out.terminal *= math.exp(-model.cumulative_rate(z, remaining))
            out.final = model.flow(z, remaining)
            return out
        T, forced = res
        if not out.failed and model.critical_hit_time(z) <= T:
            out.failed = True
        z_minus = model.flow(z, T)
        if forced:
            table = model.boundary_kernel(z_minus)
        else:
            table = model.interior_kernel(z_minus)
        arrival, q = _draw_arrival(table, stream)
        if want_record and out.preponderant:
            surv = math.exp(-model.cumulative_rate(z, T))
            if forced:
                pre = out.terminal * surv
                out.terminal = pre * q
                out.breakpoints.append((t + T, pre, out.terminal))
                out.interval_states.append(arrival)
            else:
                # truncate at the first spontaneous jump: F up to here is
                # exactly the would-be preponderant path's survival
                out.terminal *= surv
                out.preponderant = False
        elif not want_record and not forced:
            out.preponderant = False
        if want_skeleton:
            out.jumps.append(JumpRecord(t + T, z_minus, arrival, forced))
        else:
            out.jumps.append(None)
        if not out.failed and model.is_critical(arrival):
            out.failed = True
        z = arrival
        t += T


def simulate(model: PdmpModel, z0: State, horizon: float, stream: Stream):
    """Simulate over [0, horizon]; returns (TrajectorySkeleton, SurvivalRecord)."""
    out = _run(model, z0, horizon, stream, True, True)
    skel = TrajectorySkeleton(out.initial, horizon, tuple(out.jumps), out.final, out.failed)
    rec = SurvivalRecord(tuple(out.breakpoints), tuple(out.interval_states),
                         out.terminal, horizon, out.preponderant)
    return skel, rec


def propagate(model: PdmpModel, z0: State, horizon: float, stream: Stream):
    """Cheap simulation: returns (final state, failed, jump count)."""
    out = _run(model, z0, horizon, stream, False, False)
    return out.final, out.failed, len(out.jumps)


_MAX_FORCED_JUMPS = 10**6


def preponderant_extension(model: PdmpModel, z: State, dt: float):
    """Deterministic extension over [0, dt]: no spontaneous jumps, control
    branches at every boundary.

    Returns (TrajectorySkeleton, probability, SurvivalRecord); the
    probability is the product of exp(-Lambda) survival factors and
    control-branch masses, i.e. the chance that simulate() from z would
    reproduce exactly this skeleton.
    """
    if dt <= 0.0:
        raise FlowDomainError(f"extension duration must be positive, got {dt}")
    jumps = []
    breakpoints = []
    interval_states = [z]
    fac = 1.0
    failed = model.is_critical(z)
    t = 0.0
    cur = z
    # a start state sitting on its boundary (e.g. rounded onto an asymptotic
    # equilibrium) jumps before the interval proper, mirroring simulate():
    # the control branch fires at t = 0 and leaves no jump record
    if model.boundary_hit_time(cur) == 0.0:
        table = model.boundary_kernel(cur)
        if table.control is None:
            raise ModelValidationError(f"boundary table at {cur} has no control branch")
        arrival, q = table.entries[table.control]
        if q <= 0.0:
            raise ModelValidationError(f"control branch at {cur} has zero mass")
        fac = q
        breakpoints.append((0.0, 1.0, q))
        interval_states.append(arrival)
        if not failed and model.is_critical(arrival):
            failed = True
        cur = arrival
        z = arrival  # the skeleton opens after the normalization, as in simulate()
    for _ in range(_MAX_FORCED_JUMPS):
        remaining = dt - t
        t_star = model.boundary_hit_time(cur)
        if t_star == 0.0:
            raise ModelValidationError(f"boundary state {cur} inside a preponderant extension")
        if t_star > remaining:
            if not failed and model.critical_hit_time(cur) <= remaining:
                failed = True
            fac *= math.exp(-model.cumulative_rate(cur, remaining))
            final = model.flow(cur, remaining)
            skel = TrajectorySkeleton(z, dt, tuple(jumps), final, failed)
            rec = SurvivalRecord(tuple(breakpoints), tuple(interval_states), fac, dt, True)
            return skel, fac, rec
        if not failed and model.critical_hit_time(cur) <= t_star:
            failed = True
        z_minus = model.flow(cur, t_star)
        table = model.boundary_kernel(z_minus)
        if table.control is None:
            raise ModelValidationError(f"boundary table at {z_minus} has no control branch")
        arrival, q = table.entries[table.control]
        if q <= 0.0:
            raise ModelValidationError(f"control branch at {z_minus} has zero mass")
        pre = fac * math.exp(-model.cumulative_rate(cur, t_star))
        fac = pre * q
        breakpoints.append((t + t_star, pre, fac))
        interval_states.append(arrival)
        jumps.append(JumpRecord(t + t_star, z_minus, arrival, True))
        if not failed and model.is_critical(arrival):
            failed = True
        cur = arrival
        t += t_star
    raise ModelValidationError("preponderant extension exceeded the forced-jump budget")


# ---------------------------------------------------------------------------
# skeleton utilities


def state_at(model: PdmpModel, traj: TrajectorySkeleton, t: float) -> State:
    """State of the trajectory at time t in [0, horizon].

    At a jump time the post-jump state is returned.
    """
    if t < 0.0 or t > traj.horizon:
        raise ValueError(f"time {t} outside [0, {traj.horizon}]")
    z = traj.initial
    t0 = 0.0
    for j in traj.jumps:
        if j.time > t:
            break
        z = j.arrival
        t0 = j.time
    return model.flow(z, t - t0)


def failed_by(model: PdmpModel, traj: TrajectorySkeleton, t: float) -> bool:
    """Whether the trajectory entered the critical region at or before t."""
    z = traj.initial
    t0 = 0.0
    for j in traj.jumps:
        seg = min(j.time, t) - t0
        if seg < 0.0:
            break
        if model.critical_hit_time(z) <= seg:
            return True
        if j.time > t:
            return False
        z = j.arrival
        t0 = j.time
        if model.is_critical(z):
            return True
    return model.critical_hit_time(z) <= t - t0


def skeletons_equal(a: TrajectorySkeleton, b: TrajectorySkeleton, xtol: float = 1e-12) -> bool:
    """Structural equality: same jump structure within tolerance."""
    if len(a.jumps) != len(b.jumps):
        return False
    if not states_close(a.initial, b.initial, xtol):
        return False
    for ja, jb in zip(a.jumps, b.jumps):
        if ja.forced != jb.forced:
            return False
        if abs(ja.time - jb.time) > xtol:
            return False
        if not states_close(ja.arrival, jb.arrival, xtol):
            return False
    return True


# ---------------------------------------------------------------------------
# model validation


def validate_model(model: PdmpModel, states, stream: Stream) -> list:
    """Structural property sweep over the given states; returns problems."""
    problems = []
    for z in states:
        t_star = model.boundary_hit_time(z)
        if t_star < 0.0:
            problems.append(f"negative boundary hit time at {z}")
            continue
        if t_star == 0.0:
            table = model.boundary_kernel(z)
            problems.extend(table.validate(z))
            if table.control is None:
                problems.append(f"no control branch at boundary state {z}")
            elif table.entries[table.control][1] <= 0.0:
                problems.append(f"control branch has zero mass at {z}")
            continue
        for m, r in model.transition_rates(z):
            if r < 0.0:
                problems.append(f"negative rate {r} toward {m} at {z}")
        lam = model.total_rate(z)
        if lam > 0.0:
            problems.extend(model.interior_kernel(z).validate(z))
        # flow identity and semigroup
        if model.flow(z, 0.0) != z:
            problems.append(f"flow(z, 0) != z at {z}")
        if math.isfinite(t_star):
            s = 0.5 * t_star
            u = 0.25 * t_star
        else:
            s, u = 0.7, 0.3
        one = model.flow(z, s + u)
        two = model.flow(model.flow(z, s), u)
        if not states_close(one, two, 1e-9):
            problems.append(f"flow semigroup violated at {z}")
    return problems
