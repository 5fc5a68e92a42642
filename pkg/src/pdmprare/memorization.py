"""Differentiation sampling against a recorded deterministic segment.

Given a preponderant segment a over [0, dt] with survival record F
(terminal value p = F(dt) in (0, 1)), a conditioned-to-differ extension
is drawn in one shot, with no rejection:

1. draw U ~ Uniform(p, 1); the differentiation time tau is where F
   crosses U. F is piecewise: continuous exp(-Lambda) decay inside
   inter-jump intervals, discontinuous drops at forced jumps. A crossing
   inside a drop means the extension leaves a exactly at that jump, by
   taking a different branch of the boundary kernel; a crossing inside
   an interval means a spontaneous jump fires at tau where a had none.
2. before tau the extension copies a. At tau, a boundary-jump
   differentiation draws from the boundary table conditioned to exclude
   a's arrival (renormalized); a spontaneous differentiation draws from
   the full interior kernel, unconditioned.
3. after tau the extension is simulated unconditionally to dt.

Intervals where the jump rate vanishes carry no tau mass and are walked
over; drops of zero height (control branches of mass 1) likewise. The
continuous crossings solve Lambda(s) = log(F(s_k) / U) by the model's
closed-form inverse when it has one, else bisection (tolerance 1e-10,
at most 200 iterations).

Mixing the preponderant segment (weight p) with these avoiding draws
(weight 1 - p) reproduces the unconditioned law of the segment exactly;
that identity is what the cluster method trades on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    BISECTION_MAX_ITER,
    BISECTION_TOL,
    DegenerateRecordError,
    JumpRecord,
    PdmpModel,
    State,
    SurvivalRecord,
    TrajectorySkeleton,
    TransitionTable,
    _run,
    states_close,
)
from .streams import Stream


@dataclass(frozen=True, slots=True)
class DifferentiationDraw:
    """Where the conditioned extension leaves the recorded segment.

    tau: the differentiation time in (0, dt] (0 only for records whose
    segment opened with an immediate boundary jump).
    at_boundary_jump: True when the split happens at one of the
    segment's forced jumps (different kernel branch), False for a
    spontaneous jump inside an interval.
    segment_index: index of the forced jump (at_boundary_jump) or of the
    inter-jump interval containing tau.
    u_tilde: the uniform variate, kept for diagnostics; the invariant
    F(tau-) >= u_tilde >= F(tau) holds up to the inversion tolerance.
    """

    tau: float
    at_boundary_jump: bool
    segment_index: int
    u_tilde: float


def _check_record(record: SurvivalRecord):
    if not record.preponderant:
        raise ValueError("record was truncated by a spontaneous jump; "
                         "differentiation needs a preponderant record")
    if record.terminal >= 1.0:
        raise DegenerateRecordError("segment has probability 1; nothing can differ")
    if record.terminal <= 0.0:
        raise ValueError(f"terminal survival {record.terminal} outside (0, 1)")


def _solve_interval(model, z, length, target):
    """s in [0, length] with cumulative_rate(z, s) == target."""
    s = model.inverse_cumulative_rate(z, target, length)
    if s is not None:
        return min(s, length)
    lo, hi = 0.0, length
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        if model.cumulative_rate(z, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def sample_differentiation_time(model: PdmpModel, record: SurvivalRecord,
                                stream: Stream) -> DifferentiationDraw:
    """Draw tau ~ law of the first point where a conditioned copy leaves
    the recorded segment."""
    _check_record(record)
    u = record.terminal + (1.0 - record.terminal) * stream.uniform()
    prev_post = 1.0  # F at the start of the current interval
    prev_time = 0.0
    for k, (s_k, pre, post) in enumerate(record.breakpoints):
        if u > pre:
            # crossing inside interval k: spontaneous differentiation
            target = math.log(prev_post / u)
            z = record.interval_states[k]
            s = _solve_interval(model, z, s_k - prev_time, target)
            return DifferentiationDraw(prev_time + s, False, k, u)
        if u > post:
            # crossing inside the drop: branch differently at this jump
            return DifferentiationDraw(s_k, True, k, u)
        prev_post, prev_time = post, s_k
    # crossing in the final interval (u > terminal is guaranteed)
    last = len(record.breakpoints)
    target = math.log(prev_post / u)
    z = record.interval_states[last]
    s = _solve_interval(model, z, record.horizon - prev_time, target)
    return DifferentiationDraw(prev_time + s, False, last, u)


def _conditioned_boundary_table(model, departure, excluded_arrival) -> TransitionTable:
    """Boundary table at departure with the recorded arrival removed."""
    table = model.boundary_kernel(departure)
    kept = []
    removed = 0.0
    for z, q in table.entries:
        if states_close(z, excluded_arrival):
            removed += q
        else:
            kept.append((z, q))
    if not kept or removed >= 1.0:
        raise DegenerateRecordError(f"boundary table at {departure} has no mass off "
                                    f"the recorded branch")
    norm = math.fsum(q for _, q in kept)
    entries = tuple((z, q / norm) for z, q in kept)
    return TransitionTable(entries)


def sample_avoiding_extension(model: PdmpModel, z: State, dt: float,
                              segment: TrajectorySkeleton, record: SurvivalRecord,
                              stream: Stream) -> TrajectorySkeleton:
    """One-shot draw of an extension of z over [0, dt] conditioned to
    differ from the recorded preponderant segment.

    The returned skeleton copies the segment strictly before tau, jumps
    differently at tau, then continues unconditioned to dt.
    """
    _check_record(record)
    if segment.horizon != dt or record.horizon != dt:
        raise ValueError("segment, record and dt must cover the same interval")
    # a record opening with a (0, 1, q) breakpoint belongs to a segment whose
    # start state sat on a boundary; that jump has no JumpRecord, shifting
    # record-jump indices against skeleton-jump indices by one
    offset = 1 if (record.breakpoints and record.breakpoints[0][0] == 0.0) else 0
    draw = sample_differentiation_time(model, record, stream)
    tau = draw.tau
    initial = segment.initial
    if draw.at_boundary_jump:
        j = draw.segment_index - offset
        if j < 0:
            # differ at the opening normalization: restart from z, no jump record
            table = _conditioned_boundary_table(model, z, segment.initial)
            i = stream.pick([q for _, q in table.entries])
            arrival, _q = table.entries[i]
            prefix, new_jumps, initial = (), [], arrival
        else:
            jump = segment.jumps[j]
            table = _conditioned_boundary_table(model, jump.departure, jump.arrival)
            i = stream.pick([q for _, q in table.entries])
            arrival, _q = table.entries[i]
            prefix = segment.jumps[:j]
            new_jumps = [JumpRecord(tau, jump.departure, arrival, True)]
    else:
        k = draw.segment_index
        prefix = segment.jumps[:max(k - offset, 0)]
        start_time = record.breakpoints[k - 1][0] if k > 0 else 0.0
        z_minus = model.flow(record.interval_states[k], tau - start_time)
        table = model.interior_kernel(z_minus)  # full kernel, unconditioned
        i = stream.pick([q for _, q in table.entries])
        arrival, _q = table.entries[i]
        new_jumps = [JumpRecord(tau, z_minus, arrival, False)]
    jumps = list(prefix) + new_jumps
    final = arrival
    if tau < dt:
        out = _run(model, arrival, dt - tau, stream, True, False)
        for j in out.jumps:
            jumps.append(JumpRecord(j.time + tau, j.departure, j.arrival, j.forced))
        final = out.final
    # failure flag over the assembled path
    failed = model.is_critical(initial)
    t0, cur = 0.0, initial
    for j in jumps:
        if not failed and model.critical_hit_time(cur) <= j.time - t0:
            failed = True
        cur, t0 = j.arrival, j.time
        if not failed and model.is_critical(cur):
            failed = True
    if not failed and model.critical_hit_time(cur) <= dt - t0:
        failed = True
    return TrajectorySkeleton(initial, dt, tuple(jumps), final, failed)
