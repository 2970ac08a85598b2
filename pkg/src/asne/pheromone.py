"""Pheromone deposit schemes, evaporation and forward-path biasing.

Deposits and evaporation are pure functions of scalars; callers clamp the
result with :func:`asne.colony.clamp_pheromone`. :func:`apply_forward_bias`
mutates a colony in place.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .colony import Colony, JumpMode
from .exceptions import ConfigurationError

ETA_FLOOR = 1e-9


class Reward(str, Enum):
    CONSTANT = "const"
    FITNESS = "fitness"
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class PheromoneScheme:
    """Deposit rule plus its parameters.

    ``constant`` is the fixed deposit C used by :attr:`Reward.CONSTANT`;
    ``gamma`` is the regularization strength of the L1/L2 schemes.
    """

    reward: Reward = Reward.FITNESS
    alpha: float = 0.05
    gamma: float = 0.0
    constant: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "reward", Reward(self.reward))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if self.constant <= 0.0:
            raise ConfigurationError(f"constant deposit must be > 0, got {self.constant}")

    @property
    def label(self) -> str:
        if self.reward in (Reward.L1, Reward.L2):
            return f"{self.reward.value.upper()}_{self.gamma:g}"
        return self.reward.value


def regularizer(scheme: PheromoneScheme, weights) -> float:
    """Weight penalty added to the fitness inside the deposit reciprocal."""
    if scheme.reward not in (Reward.L1, Reward.L2) or scheme.gamma == 0.0:
        return 0.0
    w = np.asarray(weights, dtype=np.float64)
    n = max(w.size, 1)
    if scheme.reward is Reward.L1:
        return scheme.gamma / n * float(np.sum(np.abs(w)))
    return scheme.gamma / (2.0 * n) * float(np.dot(w, w))


def deposit_target(scheme: PheromoneScheme, fitness: float, weights=()) -> float:
    """``1 / (fitness + penalty)``, the level a fitness-driven deposit pulls towards."""
    return 1.0 / max(fitness + regularizer(scheme, weights), ETA_FLOOR)


def deposit(scheme: PheromoneScheme, tau_old: float, fitness: float, weights=()) -> float:
    """Reward a pheromone level for a genome with MAE ``fitness`` (unclamped)."""
    if scheme.reward is Reward.CONSTANT:
        return tau_old + scheme.constant
    a = scheme.alpha
    return (1.0 - a) * tau_old + a * deposit_target(scheme, fitness, weights)


def penalize_constant(tau_old: float, constant: float) -> float:
    return tau_old - constant


def evaporate(tau_current, tau_original, beta: float):
    """Relax pheromone towards its baseline: ``(1 - beta) * tau + beta * tau0``.

    Written as a step towards ``tau_original`` so the baseline is an exact
    fixed point. Works on scalars and arrays.
    """
    return tau_current + beta * (tau_original - tau_current)


def evaporate_colony(colony: Colony, beta: float) -> None:
    tau0 = colony.config.tau_init
    colony.pheromone[:] = evaporate(colony.pheromone, tau0, beta)
    colony.cell_pheromone[:] = evaporate(colony.cell_pheromone, tau0, beta)
    colony.clamp_all()


def backward_edges(colony: Colony, idx: int) -> np.ndarray:
    """Recurrent edges leaving ``idx`` towards the same or an earlier layer."""
    cached = colony._candidates.get(("bwd", idx))
    if cached is None:
        out = np.flatnonzero(
            (colony.edge_src == idx)
            & (colony.edge_skip > 0)
            & (colony.layer[colony.edge_dst] <= colony.layer[idx])
        )
        out.setflags(write=False)
        colony._candidates[("bwd", idx)] = cached = out
    return cached


def forward_edges(colony: Colony, idx: int, jump: JumpMode) -> np.ndarray:
    cached = colony._candidates.get(("fwd", idx, jump))
    if cached is None:
        mask = (colony.edge_src == idx) & (colony.edge_skip == 0)
        if jump is JumpMode.NO_JUMP:
            mask &= colony.layer[colony.edge_dst] == colony.layer[idx] + 1
        out = np.flatnonzero(mask)
        out.setflags(write=False)
        colony._candidates[("fwd", idx, jump)] = cached = out
    return cached


def needs_forward_bias(fwd_total: float, bwd_total: float, n_fwd: int, n_bwd: int) -> bool:
    return fwd_total < 0.75 * bwd_total or n_bwd > n_fwd


def apply_forward_bias(colony: Colony, jump: JumpMode = JumpMode.LAYER_JUMP) -> list[int]:
    """Rescale forward pheromones of crowded nodes so their total matches
    the node's backward-recurrent total. Returns the adjusted node indices."""
    adjusted = []
    tau = colony.pheromone
    for idx in range(colony.n_nodes):
        fwd = forward_edges(colony, idx, JumpMode(jump))
        if fwd.size == 0:
            continue
        bwd = backward_edges(colony, idx)
        fwd_total = float(tau[fwd].sum())
        bwd_total = float(tau[bwd].sum())
        if needs_forward_bias(fwd_total, bwd_total, fwd.size, bwd.size):
            tau[fwd] = tau[fwd] / fwd_total * bwd_total
            adjusted.append(idx)
    np.clip(tau, colony.config.tau_min, colony.config.tau_max, out=tau)
    return adjusted
