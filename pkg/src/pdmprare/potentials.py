"""Selection potentials for the particle methods.

The potentials score a trajectory at a grid time from two ingredients:
whether the critical region was already reached, and how many components
are still working (fewer working components means closer to failure, so
a larger score under negative alpha weighting).

Two families are provided:

* u_alpha: U(t) = 1 once the trajectory has failed, else
  exp(-alpha * (b + 1)^2) * L(t) with b the working-component count and
  L an optional positive time profile (constant 1 by default). Used in
  ratio form: G_0 = U(tau_0) and G_k = U(tau_k) / U(tau_{k-1}), so the
  product of G along a path telescopes to the last U.
* dam_exponential: G_k = exp(alpha1 * (xlim - x) + alpha2 * (b + 1)^2)
  evaluated directly at each grid time (not a ratio).

Plus "constant" (G identically 1, for validation runs) and "custom"
(user callable on the summary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .core import PdmpModel, State, TrajectorySkeleton, failed_by, state_at
from .systems import FAILED_STATUSES

KINDS = ("u_alpha", "dam_exponential", "constant", "custom")


@dataclass(frozen=True)
class PotentialSpec:
    """Which potential family to use, with its parameters."""

    kind: str = "u_alpha"
    alpha: float = 1.1
    alpha1: float = -0.9
    alpha2: float = -1.0
    l_profile: Optional[Callable[[float], float]] = None  # u_alpha time profile
    custom: Optional[Callable] = None  # custom(state, failed, t) -> positive G

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "custom" and self.custom is None:
            raise ValueError("custom potential needs a callable")

    def describe(self) -> str:
        if self.kind == "u_alpha":
            return f"alpha={self.alpha:g}"
        if self.kind == "dam_exponential":
            return f"alpha1={self.alpha1:g};alpha2={self.alpha2:g}"
        return ""


def working_components(z: State) -> int:
    """Number of component statuses that are not failed."""
    return sum(1 for s in z.m if s not in FAILED_STATUSES)


def u_alpha_value(state: State, failed: bool, t: float, spec: PotentialSpec) -> float:
    """U(t): 1 after failure, else the working-component exponential."""
    if failed:
        return 1.0
    b = working_components(state)
    u = math.exp(-spec.alpha * (b + 1.0) ** 2)
    if spec.l_profile is not None:
        u *= spec.l_profile(t)
    return u


def dam_exponential_value(state: State, xlim: float, spec: PotentialSpec) -> float:
    b = working_components(state)
    return math.exp(spec.alpha1 * (xlim - state.x[0]) + spec.alpha2 * (b + 1.0) ** 2)


def u_alpha(model: PdmpModel, traj: TrajectorySkeleton, t: float, spec: PotentialSpec) -> float:
    """U at time t of the trajectory (t up to the horizon)."""
    z = state_at(model, traj, t)
    return u_alpha_value(z, failed_by(model, traj, t), t, spec)


def potential_at_step(model: PdmpModel, traj: TrajectorySkeleton, k: int, grid,
                      spec: PotentialSpec) -> float:
    """G_k of a trajectory covering the grid up to tau_k.

    Ratio form for u_alpha (plain U at k = 0); direct evaluation for the
    other kinds.
    """
    if k < 0 or k >= len(grid):
        raise ValueError(f"step {k} outside the grid")
    t_k = grid[k]
    if spec.kind == "u_alpha":
        u_k = u_alpha(model, traj, t_k, spec)
        if k == 0:
            return u_k
        return u_k / u_alpha(model, traj, grid[k - 1], spec)
    if spec.kind == "dam_exponential":
        z = state_at(model, traj, t_k)
        return dam_exponential_value(z, model.p.xlim, spec)
    if spec.kind == "constant":
        return 1.0
    z = state_at(model, traj, t_k)
    return spec.custom(z, failed_by(model, traj, t_k), t_k)
