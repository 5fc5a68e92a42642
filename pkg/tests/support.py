"""Shared test fixtures: a minimal reference process and statistics helpers.

LineModel is the workhorse for exact-value tests: unit-speed drift on a
line, a reflecting-style boundary at B that resets the position to 0,
and constant mode-dependent jump rates. Every quantity the library
computes about it (hit times, rate integrals, jump laws, records) has a
one-line closed form, so tests can pin numbers rather than trust the
code under test.
"""

from __future__ import annotations

import math

import numpy as np

from pdmprare.core import PdmpModel, State, TransitionTable

RUN = ("run",)
ALT = ("alt",)

# collected by acceptance tests, printed by the terminal summary hook
ACCEPTANCE_RESULTS = []


def record_acceptance(criterion: int, ok: bool, detail: str):
    ACCEPTANCE_RESULTS.append((criterion, bool(ok), detail))


class LineModel(PdmpModel):
    """dx/dt = 1, boundary at B resets x to 0, constant rate per mode.

    The boundary kernel keeps the mode with probability q (the control
    branch) and swaps it otherwise; interior jumps swap the mode.
    """

    def __init__(self, c_run=0.3, c_alt=0.5, boundary=1.0, q=0.7,
                 x0=0.2, tf=3.0, use_inverse=True):
        self.c = {RUN: c_run, ALT: c_alt}
        self.boundary = boundary
        self.q = q
        self.x0 = x0
        self.tf = tf
        self.use_inverse = use_inverse

    def flow(self, z, dt):
        return State((z.x[0] + dt,), z.m) if dt != 0.0 else z

    def boundary_hit_time(self, z):
        if math.isinf(self.boundary):
            return math.inf
        t = self.boundary - z.x[0]
        return 0.0 if t < 1e-9 else t

    def transition_rates(self, z):
        rate = self.c[z.m]
        if rate <= 0.0:
            return []
        return [(ALT if z.m == RUN else RUN, rate)]

    def total_rate(self, z):
        return self.c[z.m]

    def cumulative_rate(self, z, t):
        return self.c[z.m] * t

    def inverse_cumulative_rate(self, z, target, hi):
        if not self.use_inverse:
            return None
        rate = self.c[z.m]
        return target / rate if rate > 0.0 else math.inf

    def boundary_kernel(self, z):
        other = ALT if z.m == RUN else RUN
        return TransitionTable(
            entries=((State((0.0,), z.m), self.q),
                     (State((0.0,), other), 1.0 - self.q)),
            control=0)

    def is_critical(self, z):
        return False

    def initial_state(self):
        return State((self.x0,), RUN)

    def horizon(self):
        return self.tf

    def probe_states(self, stream, count):
        xs = [0.0, 0.25, 0.55, 0.9]
        out = []
        for i in range(count):
            out.append(State((xs[i % len(xs)],), RUN if i % 2 else ALT))
        return out


def rk4(deriv, x0: float, t: float, steps: int = 2000) -> float:
    """Fixed-step integration of dx/dt = deriv(x)."""
    h = t / steps
    x = x0
    for _ in range(steps):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * h * k1)
        k3 = deriv(x + 0.5 * h * k2)
        k4 = deriv(x + h * k3)
        x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return x


def binom_sigmas(successes: int, n: int, p: float) -> float:
    """|observed - p| in binomial standard errors."""
    se = math.sqrt(p * (1.0 - p) / n)
    return abs(successes / n - p) / se


def ks_to_cdf(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance to a given cdf."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(xs)
    vals = np.array([cdf(x) for x in xs])
    upper = np.max(np.arange(1, n + 1) / n - vals)
    lower = np.max(vals - np.arange(0, n) / n)
    return float(max(upper, lower))


def bootstrap_var_ratio(a, b, n_boot: int = 2000, seed: int = 0):
    """Var(a)/Var(b): point estimate and bootstrap 95th percentile."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    point = float(np.var(a, ddof=1) / np.var(b, ddof=1))
    ratios = np.empty(n_boot)
    for i in range(n_boot):
        ra = rng.choice(a, size=len(a), replace=True)
        rb = rng.choice(b, size=len(b), replace=True)
        vb = np.var(rb, ddof=1)
        va = np.var(ra, ddof=1)
        ratios[i] = va / vb if vb > 0 else math.inf
    return point, float(np.quantile(ratios, 0.95))


def pooled_null_variance_p(a, b, n_boot: int = 20000, seed: int = 1) -> float:
    """One-sided bootstrap test of Var(a) < Var(b).

    Resamples both sides from the pooled centered values (the equal
    spread null), so a heavy tail faces both samples alike; the naive
    percentile interval instead collapses whenever the denominator
    resample drops its largest value.
    """
    rng = np.random.default_rng(seed)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ratio = np.var(a, ddof=1) / np.var(b, ddof=1)
    pool = np.concatenate([a - a.mean(), b - b.mean()])
    count = 0
    for _ in range(n_boot):
        ra = rng.choice(pool, size=len(a), replace=True)
        rb = rng.choice(pool, size=len(b), replace=True)
        vb = np.var(rb, ddof=1)
        if vb > 0 and np.var(ra, ddof=1) / vb <= ratio:
            count += 1
    return (count + 1) / (n_boot + 1)
