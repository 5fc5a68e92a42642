"""Independent cross-checks for the estimators.

Nothing here is used by the estimators themselves. The module collects
slow-but-simple reference routes:

* an exact failure probability for the two-unit cold standby system,
* rejection sampling as a stand-in for the conditioned avoiding draw,
* a structural first-difference time between two skeletons,
* a nested simulation estimate of the variance-optimal potential ratio
  G*_k, whose only job in the test suite is to equal 1 for h = 1 and to
  match closed forms on the standby system.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (PdmpModel, State, TrajectorySkeleton, propagate, simulate,
                   skeletons_equal, states_close)
from .samplers import ParticleSummary
from .streams import Stream


class OracleExhaustionError(RuntimeError):
    """Rejection sampling hit its try budget."""


def cold_standby_exact_p(fail_rate: float, tf: float) -> float:
    """P(both units dead by tf) when the standby starts on first failure.

    Absorption time is the sum of two independent exponentials, so this
    is the Erlang(2) distribution function.
    """
    lt = fail_rate * tf
    return 1.0 - math.exp(-lt) * (1.0 + lt)


def rejection_extend(model: PdmpModel, z: State, dt: float,
                     segment: TrajectorySkeleton, stream: Stream,
                     max_tries: int = 10**7):
    """Unconditioned redraws until one differs from segment.

    Returns (skeleton, tries). The accepted draw has exactly the law of
    the conditioned avoiding extension; tries is geometric with success
    probability 1 - V.
    """
    for tries in range(1, max_tries + 1):
        sk, _ = simulate(model, z, dt, stream.child("try", tries))
        if not skeletons_equal(sk, segment):
            return sk, tries
    raise OracleExhaustionError(f"no differing draw in {max_tries} tries")


def differentiation_time_between(a: TrajectorySkeleton, b: TrajectorySkeleton,
                                 tol: float = 1e-9) -> float:
    """First time the two skeletons part ways; inf if they never do.

    Jumps are compared pairwise in order. A pair disagrees when the
    times differ by more than tol or the arrival states differ; the
    difference is then dated at the earlier of the two jump times. If
    one path simply has extra jumps, the first extra jump dates it.
    """
    if not states_close(a.initial, b.initial):
        return 0.0
    for ja, jb in zip(a.jumps, b.jumps):
        if abs(ja.time - jb.time) > tol:
            return min(ja.time, jb.time)
        if ja.forced != jb.forced or not states_close(ja.arrival, jb.arrival):
            return min(ja.time, jb.time)
    if len(a.jumps) > len(b.jumps):
        return a.jumps[len(b.jumps)].time
    if len(b.jumps) > len(a.jumps):
        return b.jumps[len(a.jumps)].time
    return math.inf


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def _second_moment(model, h, grid, j, entry, stream, outer_n, inner_n):
    """mean over outer draws of (inner estimate of h)^2.

    entry = (state, failed) at grid time j. The outer draw advances one
    grid interval; the inner draws run from there to the horizon. When
    the interval already ends at the horizon the inner estimate is h
    itself.
    """
    state, failed = entry
    tf = grid[-1]
    step = grid[j + 1] - grid[j]
    rest = tf - grid[j + 1]
    acc = 0.0
    for o in range(outer_n):
        z1, f1, nj1 = propagate(model, state, step, stream.child("outer", o))
        f1 = failed or f1
        if rest <= 0.0:
            inner = h(ParticleSummary(z1, f1, 0.0, math.nan, nj1))
        else:
            s = 0.0
            for i in range(inner_n):
                z2, f2, nj2 = propagate(model, z1, rest,
                                        stream.child("inner", o, i))
                s += h(ParticleSummary(z2, f1 or f2, 0.0, math.nan, nj1 + nj2))
            inner = s / inner_n
        acc += inner * inner
    return acc / outer_n


def nested_g_star(model: PdmpModel, h, grid, prefix, stream: Stream,
                  outer_n: int = 1000, inner_n: int = 100) -> float:
    """Nested simulation estimate of the optimal potential G*_k.

    prefix holds (state, failed) pairs at grid times 0..k with k >= 1;
    the last entry is the point where the potential is evaluated.
    Returns sqrt(numerator / denominator) with

        numerator   = E[(E[h | Z at tau_{k+1}])^2 | prefix[k]]
        denominator = E[(E[h | Z at tau_k])^2 | prefix[k-1]]

    estimated by the same nested scheme on both sides, and 0.0 when the
    denominator estimate vanishes. For h = 1 both sides are exactly 1.
    """
    k = len(prefix) - 1
    if k < 1:
        raise ValueError("prefix must reach at least grid time 1")
    if k + 1 >= len(grid):
        raise ValueError("prefix extends past the last grid interval")
    num = _second_moment(model, h, grid, k, prefix[k],
                         stream.child("num"), outer_n, inner_n)
    den = _second_moment(model, h, grid, k - 1, prefix[k - 1],
                         stream.child("den"), outer_n, inner_n)
    if den <= 0.0:
        return 0.0
    return math.sqrt(num / den)
