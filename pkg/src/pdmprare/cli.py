"""Command line interface.

Three subcommands:

* run CONFIG: execute the experiment described by a YAML file and write
  result rows (CSV or JSON) plus a manifest.
* selfcheck: fast deterministic invariant battery; prints one PASS or
  FAIL line per check and exits nonzero on any failure.
* tables: preset experiment batteries over the two benchmark systems.

Progress goes to stderr so stdout stays machine readable. Worker count
comes from --workers, else the PDMPRARE_WORKERS variable, else 1; the
result bytes are identical for any worker count.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .core import (ModelValidationError, State, preponderant_extension,
                   sample_jump_time, simulate, validate_model)
from .memorization import sample_avoiding_extension
from .oracle import differentiation_time_between, ks_distance, rejection_extend
from .potentials import PotentialSpec
from .results import build_manifest, build_row, write_csv, write_json, write_manifest
from .samplers import STATISTICS, MethodConfig, ipsm_run, replicated_experiment
from .streams import Stream
from .systems import OFF, ON, make_system

DAM_REFERENCE_P = 1.12e-4

# a heated room variant with brisk dynamics: cooling hits the demand
# boundary at t = 2.23, afterwards the single running heater fails at
# rate about 0.05, so both differentiation branches carry real mass
_DEMO_ROOM = dict(x0=20.0, m0=(OFF, OFF), fail_a=0.05, gamma=0.1, tf=6.0)


def _check_model_validation():
    stream = Stream(7)
    for name in ("heated_room", "dam", "cold_standby"):
        model = make_system(name)
        issues = validate_model(model, model.probe_states(stream.child(name), 12),
                                stream.child(name, "draws"))
        if issues:
            return False, f"{name}: {issues[0]}"
    return True, "kernels, flows and rates consistent on all three systems"


def _check_jump_time_atom():
    # beta2 = 3.5 pushes the equilibrium above xmax, so the boundary is
    # reached in finite time and the jump law has an atom there
    model = make_system("heated_room", beta2=3.5)
    z = State((20.0,), (ON, OFF))
    t_star = model.boundary_hit_time(z)
    expected = math.exp(-model.cumulative_rate(z, t_star))
    stream = Stream(11)
    n = 20000
    forced = sum(sample_jump_time(model, z, stream.child("d", i))[1]
                 for i in range(n))
    se = math.sqrt(expected * (1.0 - expected) / n)
    dev = abs(forced / n - expected)
    ok = dev <= 4.0 * se
    return ok, f"forced fraction {forced / n:.4f} vs {expected:.4f} (|dev| = {dev:.4f}, 4se = {4 * se:.4f})"


def _check_memorization_mixture():
    model = make_system("heated_room", **_DEMO_ROOM)
    z = model.initial_state()
    dt = 4.0
    seg, v, rec = preponderant_extension(model, z, dt)
    stream = Stream(13)
    n = 800
    taus_mem = []
    for i in range(n):
        sk = sample_avoiding_extension(model, z, dt, seg, rec, stream.child("mem", i))
        if not (0.0 < differentiation_time_between(seg, sk) <= dt):
            return False, f"avoiding draw {i} does not differ inside (0, dt]"
        taus_mem.append(differentiation_time_between(seg, sk))
    taus_rej = []
    for i in range(n):
        sk, _ = rejection_extend(model, z, dt, seg, stream.child("rej", i))
        taus_rej.append(differentiation_time_between(seg, sk))
    d = ks_distance(taus_mem, taus_rej)
    # two-sample KS critical value at the 0.1% level
    crit = 1.949 * math.sqrt(2.0 / n)
    ok = d <= crit
    return ok, f"KS distance {d:.4f} vs bound {crit:.4f} (V = {v:.3f})"


def _check_record_reconstruction():
    model = make_system("heated_room", **_DEMO_ROOM)
    z = model.initial_state()
    stream = Stream(17)
    seen = 0
    for i in range(300):
        _, rec = simulate(model, z, 4.0, stream.child("r", i))
        if not rec.preponderant:
            continue
        seen += 1
        back = rec.reconstruct_terminal(model)
        if abs(back - rec.terminal) > 1e-9 * max(rec.terminal, 1e-300):
            return False, f"draw {i}: terminal {rec.terminal!r} reconstructs to {back!r}"
    if seen == 0:
        return False, "no full-horizon records in 300 draws"
    return True, f"{seen} records round-trip within 1e-9"


def _check_ipsm_accounting():
    model = make_system("heated_room", **_DEMO_ROOM)
    cfg = MethodConfig(method="ipsm", particles=128, steps=3, seed=29)
    worst = [0.0]
    problems = []

    def audit(system):
        total = math.fsum(system.weights)
        worst[0] = max(worst[0], abs(total - 1.0))
        if abs(total - 1.0) > 1e-12:
            problems.append(f"step {system.step}: weights sum to {total!r}")
        counts = system.cluster_counts
        per = {}
        for idx, a in enumerate(system.ancestors):
            per.setdefault(int(a), []).append(float(system.weights[idx]))
        for j, ws in per.items():
            nj = int(counts[j])
            if len(ws) not in (1, nj + 1):
                problems.append(f"step {system.step}: cluster {j} has "
                                f"{len(ws)} children for count {nj}")
            mass = math.fsum(ws)
            if abs(mass - nj / cfg.particles) > 1e-12:
                problems.append(f"step {system.step}: cluster {j} carries "
                                f"{mass!r}, expected {nj}/{cfg.particles}")

    ipsm_run(model, PotentialSpec(kind="constant"), STATISTICS["failure"],
             cfg, Stream(cfg.seed), audit=audit)
    if problems:
        return False, problems[0]
    return True, f"weight sums within {worst[0]:.2e} of 1 at every step"


SELFCHECKS = (
    ("model-validation", _check_model_validation),
    ("jump-time-atom", _check_jump_time_atom),
    ("memorization-mixture", _check_memorization_mixture),
    ("record-reconstruction", _check_record_reconstruction),
    ("ipsm-weight-accounting", _check_ipsm_accounting),
)


def _cmd_selfcheck(args) -> int:
    wanted = args.check
    failed = 0
    for name, fn in SELFCHECKS:
        if wanted and name != wanted:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure with a location
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    return 1 if failed else 0


def _default_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("PDMPRARE_WORKERS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            print(f"ignoring malformed PDMPRARE_WORKERS={env!r}", file=sys.stderr)
    return 1


def _execute(cfg: ExperimentConfig, args) -> int:
    try:
        model = make_system(cfg.system, **cfg.system_params)
    except (ModelValidationError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg.potential.kind == "dam_exponential" and not hasattr(model.p, "xlim"):
        print(f"error: dam_exponential potential needs a level threshold; "
              f"{cfg.system} has none", file=sys.stderr)
        return 2
    workers = _default_workers(args)
    h = STATISTICS[cfg.statistic]
    rows = []
    for i, mc in enumerate(cfg.methods):
        print(f"[{i + 1}/{len(cfg.methods)}] {mc.method} N={mc.particles} "
              f"n={mc.steps} R={mc.replications} ...", file=sys.stderr, flush=True)
        mean, var, reports = replicated_experiment(model, cfg.potential, h, mc,
                                                   workers=workers)
        rows.append(build_row(cfg.system, mc, cfg.potential, mean, var, reports,
                              timings=args.timings))
        print(f"    mean_p_hat={mean!r} var={var!r}", file=sys.stderr, flush=True)
    writer = write_json if args.format == "json" else write_csv
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer(rows, fh)
        manifest_path = out.with_suffix("").as_posix() + ".manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            write_manifest(build_manifest(cfg, model, __version__), fh)
        print(f"wrote {out} and {manifest_path}", file=sys.stderr)
    if args.stdout or not args.out:
        writer(rows, sys.stdout)
    return 0


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    return _execute(cfg, args)


def _scaled(value, scale, floor):
    return max(floor, int(round(value * scale)))


def _cmd_tables(args) -> int:
    seed = args.seed if args.seed is not None else 20260816
    s = args.scale

    def mseed(i):
        return Stream(seed).child("method", i).key

    if args.table == 1:
        potential = PotentialSpec(kind="u_alpha", alpha=1.1)
        rows = [("mc", 1)] + [(m, n) for n in (5, 10) for m in ("ips", "ipsm")]
        methods = tuple(
            MethodConfig(method=m, particles=_scaled(10000, s, 4), steps=n,
                         replications=_scaled(30, s, 2), seed=mseed(i))
            for i, (m, n) in enumerate(rows))
        cfg = ExperimentConfig(system="heated_room", potential=potential,
                               methods=methods, seed=seed)
    else:
        potential = PotentialSpec(kind="dam_exponential", alpha1=-0.9, alpha2=-1.0)
        methods = tuple(
            MethodConfig(method=m, particles=_scaled(10000, s, 4), steps=5,
                         replications=_scaled(20, s, 2), seed=mseed(i))
            for i, m in enumerate(("mc", "ips", "ipsm")))
        cfg = ExperimentConfig(system="dam", potential=potential,
                               methods=methods, seed=seed)
        print(f"reference failure probability for this configuration: "
              f"{DAM_REFERENCE_P}", file=sys.stderr)
    return _execute(cfg, args)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pdmprare",
        description="rare event estimation for piecewise deterministic Markov processes")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def io_args(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--workers", type=int, default=None,
                       help="process count for replications (default $PDMPRARE_WORKERS or 1)")
        p.add_argument("--out", default=None, help="write results to this file")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--stdout", action="store_true",
                       help="also print results to stdout when --out is given")
        p.add_argument("--timings", action="store_true",
                       help="fill wall_time_seconds (makes output machine dependent)")

    p_run = sub.add_parser("run", help="run the experiment in a YAML config")
    p_run.add_argument("config", help="path to the experiment file")
    io_args(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_tab = sub.add_parser("tables", help="run a preset benchmark table")
    p_tab.add_argument("--table", type=int, choices=(1, 2), required=True,
                       help="which preset: 1 = heated room battery, 2 = dam battery")
    p_tab.add_argument("--scale", type=float, default=1.0,
                       help="shrink N and R by this factor for quick runs")
    io_args(p_tab)
    p_tab.set_defaults(fn=_cmd_tables)

    p_check = sub.add_parser("selfcheck", help="run the invariant battery")
    p_check.add_argument("--check", default=None,
                         help="run a single named check")
    p_check.set_defaults(fn=_cmd_selfcheck)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
