"""Result rows and output files.

CSV is the primary format: one row per method, fixed column order,
header always written. JSON mirrors the same fields and adds the
per-replication estimates. Floats are written with repr so a file is
reproducible bit for bit; wall_time_seconds stays empty unless timing
was explicitly requested, since timings are the one thing that cannot
be deterministic.

The manifest records everything needed to rerun: resolved system
parameters (including variant switches), potential, per-method seeds
and the package version. Deliberately no timestamps or worker counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

CSV_COLUMNS = ("system", "method", "N", "n", "alpha_params", "R",
               "mean_p_hat", "empirical_variance", "mean_ess_per_step",
               "wall_time_seconds", "seed")


@dataclass
class ResultRow:
    system: str
    method: str
    N: int
    n: int
    alpha_params: str
    R: int
    mean_p_hat: float
    empirical_variance: float
    mean_ess_per_step: Optional[float]
    wall_time_seconds: Optional[float]
    seed: int
    p_hats: tuple = ()       # per replication; JSON output only

    def csv_values(self):
        out = []
        for col in CSV_COLUMNS:
            v = getattr(self, col)
            out.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
        return out


def build_row(system: str, method_cfg, potential, mean: float, var: float,
              reports, timings: bool = False) -> ResultRow:
    ess = None
    traces = [r.ess_trace for r in reports if r.ess_trace]
    if traces:
        ess = float(np.mean([np.mean(t) for t in traces]))
    wall = sum(r.wall_time for r in reports) if timings else None
    return ResultRow(
        system=system,
        method=method_cfg.method,
        N=method_cfg.particles,
        n=method_cfg.steps,
        alpha_params=potential.describe(),
        R=method_cfg.replications,
        mean_p_hat=mean,
        empirical_variance=var,
        mean_ess_per_step=ess,
        wall_time_seconds=wall,
        seed=method_cfg.seed,
        p_hats=tuple(r.p_hat for r in reports),
    )


def write_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())


def write_json(rows, fh):
    payload = []
    for row in rows:
        d = {col: getattr(row, col) for col in CSV_COLUMNS}
        d["p_hats"] = list(row.p_hats)
        payload.append(d)
    json.dump(payload, fh, indent=2, sort_keys=True)
    fh.write("\n")


def build_manifest(cfg, model, version: str) -> dict:
    return {
        "version": version,
        "system": cfg.system,
        "system_params": asdict(model.p),
        "potential": {"kind": cfg.potential.kind,
                      "params": cfg.potential.describe()},
        "statistic": cfg.statistic,
        "seed": cfg.seed,
        "methods": [asdict(m) for m in cfg.methods],
    }


def write_manifest(manifest: dict, fh):
    json.dump(manifest, fh, indent=2, sort_keys=True)
    fh.write("\n")
