"""Failure probability estimators.

Four methods over a common grid 0 = tau_0 < ... < tau_n = tf:

* monte_carlo_estimate: N independent trajectories, mean of h.
* ips_run: interacting particle system. At every grid time the particles
  are multinomially reselected with probabilities proportional to their
  potentials, then propagated. The estimate is
  eta_n(f_h) * prod_k eta_k(G_k) with f_h = h / (product of G along the
  ancestral path).
* smc_run: same estimate, but selection fires only when the effective
  sample size drops to e * N; weights carry between steps otherwise.
  e = 0 never resamples (the estimate collapses to the plain mean),
  e = 1 reselects every step (distributionally identical to ips_run).
* ipsm_run: reselection every step, with cluster propagation: all
  replicates of one parent share the parent's deterministic
  "preponderant" extension, computed once per cluster. The cluster's
  mass splits exactly between one replicate pinned to that extension
  (weight V * Nj / N, V the extension's probability) and Nj replicates
  drawn conditioned to differ from it (weight (1 - V) / N each), so the
  propagated mixture is unbiased and the duplicate-path noise of plain
  multinomial selection is removed.

Estimates avoid the exp(sum of logs) round trip. Each particle carries
contrib = W * (prod of selection normalizers so far) / (prod of G along
its ancestral path); the final estimate is sum contrib * h. A step
without selection leaves contrib untouched (the new factors cancel
algebraically, so no arithmetic is done), which makes the e = 0
adaptive run return the plain Monte Carlo mean without rounding noise.
A selection step rebuilds the child's contrib from its ancestor:
contrib' = W' * contrib_a * eta_k / (W_a * g_a).

Particles carry summaries, not full paths: the state at the current grid
time, the failure flag, the ancestral log-potential sum (kept for
audits), the previous U value (for ratio potentials) and a jump count.
Full skeletons are only materialized inside cluster propagation.

Randomness: each (replication, step, particle) triple gets its own
counter-based stream, so results are independent of scheduling; the
replication loop parallelizes across processes with bitwise-identical
output for any worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import PdmpModel, preponderant_extension, propagate
from .memorization import sample_avoiding_extension
from .potentials import PotentialSpec, dam_exponential_value, u_alpha_value
from .streams import Stream

METHODS = ("mc", "ips", "smc", "ipsm")


@dataclass(frozen=True)
class MethodConfig:
    method: str = "mc"
    particles: int = 1000          # N
    steps: int = 1                 # n, grid intervals
    ess_threshold: float = 0.5     # e, smc only
    seed: int = 20260816
    replications: int = 1          # R

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.particles < 2:
            raise ValueError("particles must be at least 2")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not (0.0 <= self.ess_threshold <= 1.0):
            raise ValueError("ess_threshold must lie in [0, 1]")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")


@dataclass(frozen=True, slots=True)
class ParticleSummary:
    state: State
    failed: bool
    log_g: float      # sum of log G along the ancestral path
    u_prev: float     # U at the previous grid time (ratio potentials)
    jumps: int


@dataclass
class ParticleSystem:
    """Snapshot of one selection step, handed to the audit callback.

    weights are the raw post-selection weights, before the few-ulp
    renormalization, so accounting errors stay visible.
    """

    step: int
    particles: list
    weights: np.ndarray
    ancestors: Optional[np.ndarray] = None
    cluster_counts: Optional[np.ndarray] = None


@dataclass
class EstimateReport:
    p_hat: float
    step_potential_means: list = field(default_factory=list)
    ess_trace: list = field(default_factory=list)
    resampled_flags: list = field(default_factory=list)
    stopped: bool = False
    seed: int = 0
    wall_time: float = 0.0
    method: str = ""
    degenerate_clusters: int = 0


def failure_indicator(summary: ParticleSummary) -> float:
    """h = 1 on trajectories that entered the critical region."""
    return 1.0 if summary.failed else 0.0


def constant_one(summary: ParticleSummary) -> float:
    """h = 1 everywhere; estimates of it must average to 1."""
    return 1.0


STATISTICS = {"failure": failure_indicator, "one": constant_one}


def effective_sample_size(weights, potential_values) -> float:
    """(sum w g)^2 / sum (w g)^2; 0.0 signals the all-zero stop condition."""
    prod = np.asarray(weights) * np.asarray(potential_values)
    denom = float(np.sum(prod * prod))
    if denom <= 0.0:
        return 0.0
    num = float(np.sum(prod))
    return num * num / denom


def multinomial_resample(candidate_weights, n: int, stream: Stream) -> np.ndarray:
    """Counts of n independent categorical draws over the candidates."""
    w = np.asarray(candidate_weights, dtype=np.float64)
    cum = np.cumsum(w)
    cum[-1] = max(cum[-1], 1.0)  # rounding can leave the last edge below 1
    u = stream.uniform_block(n)
    idx = np.searchsorted(cum, u, side="left")
    return np.bincount(idx, minlength=len(w))


class _Potential:
    """Per-run evaluator binding model, spec and grid."""

    def __init__(self, model, spec: PotentialSpec, grid):
        spec.validate()
        self.model = model
        self.spec = spec
        self.grid = grid
        self.ratio = spec.kind == "u_alpha"

    def u_value(self, p: ParticleSummary, k: int) -> float:
        return u_alpha_value(p.state, p.failed, self.grid[k], self.spec)

    def g_value(self, p: ParticleSummary, k: int) -> float:
        spec = self.spec
        if spec.kind == "u_alpha":
            u = u_alpha_value(p.state, p.failed, self.grid[k], spec)
            return u if k == 0 else u / p.u_prev
        if spec.kind == "dam_exponential":
            return dam_exponential_value(p.state, self.model.p.xlim, spec)
        if spec.kind == "constant":
            return 1.0
        return spec.custom(p.state, p.failed, self.grid[k])


def _initial_particles(model, n):
    z0 = model.initial_state()
    p = ParticleSummary(z0, model.is_critical(z0), 0.0, math.nan, 0)
    return [p] * n


def _final_estimate(parts, contrib, h):
    acc = 0.0
    for c, p in zip(contrib, parts):
        if c != 0.0:
            acc += c * h(p)
    return acc


def monte_carlo_estimate(model: PdmpModel, h: Callable, config: MethodConfig,
                         stream: Stream) -> EstimateReport:
    """Plain Monte Carlo: mean of h over config.particles trajectories."""
    t0 = time.perf_counter()
    tf = model.horizon()
    z0 = model.initial_state()
    failed0 = model.is_critical(z0)
    total = 0.0
    for i in range(config.particles):
        st = stream.child("prop", 0, i)
        z, failed, nj = propagate(model, z0, tf, st)
        total += h(ParticleSummary(z, failed0 or failed, 0.0, math.nan, nj))
    return EstimateReport(p_hat=total / config.particles, seed=config.seed,
                          wall_time=time.perf_counter() - t0, method="mc")


def _filter_run(model, potential, h, config, stream, adaptive, audit):
    """Shared IPS / SMC loop (ips == selection forced at every step)."""
    t0 = time.perf_counter()
    n = config.steps
    N = config.particles
    tf = model.horizon()
    grid = [tf * k / n for k in range(n + 1)]
    pot = _Potential(model, potential, grid)
    parts = _initial_particles(model, N)
    weights = np.full(N, 1.0 / N)
    contrib = np.full(N, 1.0 / N)
    report = EstimateReport(p_hat=0.0, seed=config.seed,
                            method="smc" if adaptive else "ips")
    for k in range(n):
        g = np.fromiter((pot.g_value(p, k) for p in parts),
                        dtype=np.float64, count=len(parts))
        prod = weights * g
        eta = float(np.sum(prod))
        report.step_potential_means.append(eta)
        ess = effective_sample_size(weights, g)
        report.ess_trace.append(ess)
        if eta <= 0.0 or ess <= 0.0:
            report.stopped = True
            report.resampled_flags.append(False)
            report.wall_time = time.perf_counter() - t0
            return report
        candidates = prod / eta
        resample = (not adaptive) or ess <= config.ess_threshold * N
        report.resampled_flags.append(bool(resample))
        if resample:
            counts = multinomial_resample(candidates, N, stream.child("sel", k))
            ancestors = np.repeat(np.arange(len(parts)), counts)
            contrib = np.array([contrib[a] * eta / (N * weights[a] * g[a])
                                for a in ancestors])
            weights = np.full(N, 1.0 / N)
        else:
            ancestors = np.arange(len(parts))
            # the would-be new factors cancel in contrib; just retire
            # particles whose weight hit zero
            contrib = np.where(candidates > 0.0, contrib, 0.0)
            weights = candidates
        if audit is not None:
            audit(ParticleSystem(k, parts, weights, ancestors=ancestors,
                                 cluster_counts=counts if resample else None))
        dt = grid[k + 1] - grid[k]
        u_vals = None
        if pot.ratio:
            u_vals = [pot.u_value(p, k) for p in parts]
        new_parts = []
        for i, a in enumerate(ancestors):
            par = parts[a]
            st = stream.child("prop", k, i)
            z, failed, nj = propagate(model, par.state, dt, st)
            # a retired particle (zero weight, zero contrib) can carry g = 0
            lg = par.log_g + math.log(g[a]) if g[a] > 0.0 else -math.inf
            new_parts.append(ParticleSummary(
                z, par.failed or failed, lg,
                u_vals[a] if u_vals is not None else math.nan,
                par.jumps + nj))
        parts = new_parts
    report.p_hat = _final_estimate(parts, contrib, h)
    report.wall_time = time.perf_counter() - t0
    return report


def ips_run(model: PdmpModel, potential: PotentialSpec, h: Callable,
            config: MethodConfig, stream: Stream, audit=None) -> EstimateReport:
    """Interacting particle system: multinomial selection at every step."""
    return _filter_run(model, potential, h, config, stream, False, audit)


def smc_run(model: PdmpModel, potential: PotentialSpec, h: Callable,
            config: MethodConfig, stream: Stream, audit=None) -> EstimateReport:
    """Adaptive variant: selection only when ESS <= ess_threshold * N."""
    return _filter_run(model, potential, h, config, stream, True, audit)


def ipsm_run(model: PdmpModel, potential: PotentialSpec, h: Callable,
             config: MethodConfig, stream: Stream, audit=None) -> EstimateReport:
    """Selection every step with memorized cluster propagation.

    Every nonempty cluster j (the Nj selected copies of parent j) is
    propagated as one deterministic replicate pinned to the parent's
    preponderant extension, weight V * Nj / N, plus Nj replicates drawn
    conditioned to differ, weight (1 - V) / N each. The cluster mass is
    exactly Nj / N either way, so the weights keep summing to 1. When
    the parent's record is degenerate (the extension exhausts the law,
    V = 1) only the pinned replicate is kept, carrying the full Nj / N.
    """
    t0 = time.perf_counter()
    n = config.steps
    N = config.particles
    tf = model.horizon()
    grid = [tf * k / n for k in range(n + 1)]
    pot = _Potential(model, potential, grid)
    parts = _initial_particles(model, N)
    weights = np.full(N, 1.0 / N)
    contrib = np.full(N, 1.0 / N)
    report = EstimateReport(p_hat=0.0, seed=config.seed, method="ipsm")
    for k in range(n):
        g = np.fromiter((pot.g_value(p, k) for p in parts),
                        dtype=np.float64, count=len(parts))
        prod = weights * g
        eta = float(np.sum(prod))
        report.step_potential_means.append(eta)
        ess = effective_sample_size(weights, g)
        report.ess_trace.append(ess)
        if eta <= 0.0 or ess <= 0.0:
            report.stopped = True
            report.resampled_flags.append(False)
            report.wall_time = time.perf_counter() - t0
            return report
        report.resampled_flags.append(True)
        counts = multinomial_resample(prod / eta, N, stream.child("sel", k))
        dt = grid[k + 1] - grid[k]
        u_vals = None
        if pot.ratio:
            u_vals = [pot.u_value(p, k) for p in parts]
        new_parts = []
        new_weights = []
        new_contrib = []
        ancestors = []
        slot = 0
        pond_cache = {}
        for j in range(len(parts)):
            nj = int(counts[j])
            if nj == 0:
                continue
            par = parts[j]
            log_g_child = par.log_g + math.log(g[j])
            u_child = u_vals[j] if u_vals is not None else math.nan
            base = contrib[j] * eta / (weights[j] * g[j])
            cached = pond_cache.get(par.state)
            if cached is None:
                cached = preponderant_extension(model, par.state, dt)
                pond_cache[par.state] = cached
            seg, v, rec = cached
            degenerate = rec.terminal >= 1.0
            if degenerate:
                report.degenerate_clusters += 1
                det_w = nj / N  # the whole cluster mass rides the one path
            else:
                det_w = v * nj / N
                avoid_w = (1.0 - v) / N
                for _ in range(nj):
                    st = stream.child("avoid", k, slot)
                    slot += 1
                    sk = sample_avoiding_extension(model, par.state, dt,
                                                   seg, rec, st)
                    new_parts.append(ParticleSummary(
                        sk.final, par.failed or sk.failed, log_g_child,
                        u_child, par.jumps + len(sk.jumps)))
                    new_weights.append(avoid_w)
                    new_contrib.append(avoid_w * base)
                    ancestors.append(j)
            new_parts.append(ParticleSummary(
                seg.final, par.failed or seg.failed, log_g_child, u_child,
                par.jumps + len(seg.jumps)))
            new_weights.append(det_w)
            new_contrib.append(det_w * base)
            ancestors.append(j)
        raw = np.asarray(new_weights)
        parts = new_parts
        if audit is not None:
            audit(ParticleSystem(k, parts, raw,
                                 ancestors=np.asarray(ancestors),
                                 cluster_counts=np.asarray(counts)))
        total = float(np.sum(raw))
        # the sum is 1 by construction; scrub the few-ulp drift so it
        # cannot compound across steps
        weights = raw / total
        contrib = np.asarray(new_contrib) / total
    report.p_hat = _final_estimate(parts, contrib, h)
    report.wall_time = time.perf_counter() - t0
    return report


_RUNNERS = {
    "mc": lambda model, potential, h, config, stream, audit=None:
        monte_carlo_estimate(model, h, config, stream),
    "ips": ips_run,
    "smc": smc_run,
    "ipsm": ipsm_run,
}


def run_once(model, potential, h, config, replication: int,
             audit=None) -> EstimateReport:
    """One seeded replication of the configured method."""
    stream = Stream(config.seed).child("rep", replication)
    report = _RUNNERS[config.method](model, potential, h, config, stream, audit)
    report.seed = config.seed
    return report


def _replication_task(args):
    model, potential, h_name, config, r = args
    return run_once(model, potential, STATISTICS[h_name], config, r)


def replicated_experiment(model: PdmpModel, potential: PotentialSpec, h: Callable,
                          config: MethodConfig, workers: int = 1):
    """R independent replications; returns (mean, unbiased variance, reports).

    Replication r always runs on the stream (seed, "rep", r), so the
    numbers cannot depend on the worker count or completion order.
    """
    config.validate()
    R = config.replications
    h_name = next((k for k, v in STATISTICS.items() if v is h), None)
    if workers > 1 and R > 1 and h_name is not None:
        tasks = [(model, potential, h_name, config, r) for r in range(R)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_replication_task, tasks))
    else:
        reports = [run_once(model, potential, h, config, r) for r in range(R)]
    phats = np.array([rep.p_hat for rep in reports])
    mean = float(np.mean(phats))
    var = float(np.var(phats, ddof=1)) if R > 1 else 0.0
    return mean, var, reports
