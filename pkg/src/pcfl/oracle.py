"""Brute-force checks that do not rely on the equilibrium searches.

* :func:`best_response_dynamics` iterates best responses until nothing moves.
* :func:`verify_ne` scans each participant's strategy interval on a grid.
* :func:`exhaustive_ne` enumerates whole grid profiles for tiny games.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .cafl import cafl_best_response
from .cofl import cofl_best_response
from .model import GameInstance, InvalidParameterError, StrategyProfile, model_value, utilities

MAX_EXHAUSTIVE_K = 4
MAX_EXHAUSTIVE_GRID = 200


@dataclass(frozen=True)
class DynamicsResult:
    profile: StrategyProfile
    converged: bool
    rounds: int


def best_response_dynamics(
    inst: GameInstance,
    start: StrategyProfile,
    max_rounds: int = 1000,
    *,
    tol: float = 1e-8,
    shuffle: np.random.Generator | None = None,
) -> DynamicsResult:
    """Sequential best responses, one sweep per round in ascending id order.

    Pass ``shuffle`` to visit participants in a fresh random order each round.
    Failing to converge is reported through ``converged``; in the
    contribution-aware game that is the usual sign that no equilibrium exists.
    """
    start.check(inst)
    respond = cafl_best_response if inst.contribution_aware else cofl_best_response
    b = start.batchsizes.copy()
    total = b.sum()
    order = np.argsort(inst.ids, kind="stable")
    for rnd in range(1, max_rounds + 1):
        if shuffle is not None:
            order = shuffle.permutation(inst.k)
        moved = 0.0
        for k in order:
            others = max(total - b[k], 0.0)
            new = respond(int(k), others, inst)
            moved = max(moved, abs(new - b[k]))
            b[k] = new
            total = others + new
        # refresh the running sum so rounding does not accumulate
        total = b.sum()
        if moved <= tol:
            return DynamicsResult(StrategyProfile(b), True, rnd)
    return DynamicsResult(StrategyProfile(b), False, max_rounds)


@dataclass(frozen=True)
class NEReport:
    gains: np.ndarray  # best grid deviation gain per participant
    margins: np.ndarray
    ids: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(self.gains <= self.margins))

    @property
    def max_gain(self) -> float:
        return float(self.gains.max()) if self.gains.size else 0.0

    def worst(self) -> int | None:
        if not self.gains.size:
            return None
        return int(self.ids[int(np.argmax(self.gains - self.margins))])


def verify_ne(
    inst: GameInstance,
    profile: StrategyProfile,
    grid_points: int = 10_000,
    rel_margin: float = 1e-6,
    *,
    exclude: Iterable[int] = (),
) -> NEReport:
    """Largest unilateral gain over ``{0}`` plus a grid on ``[lower, b_max]``.

    ``lower`` is 0 without a threshold and ``b_th`` with one. A participant's
    allowed gain is ``rel_margin * max(1, |U_k|)``. Participants listed in
    ``exclude`` are treated as removed from the game.
    """
    gone = set(exclude)
    if gone:
        keep = np.array([int(i) not in gone for i in inst.ids])
        inst = inst.without(gone)
        profile = StrategyProfile(profile.batchsizes[keep])
    profile.check(inst)
    b = profile.batchsizes
    current = utilities(profile, inst)
    lower = inst.b_th if inst.contribution_aware else 0.0
    gains = np.empty(inst.k)
    unit = np.linspace(0.0, 1.0, grid_points)
    for k in range(inst.k):
        others = b.sum() - b[k]
        grid = lower + unit * (inst.b_max[k] - lower)
        dev = model_value(inst.theta[k], others + grid) - inst.unit_cost[k] * grid
        at_zero = 0.0 if inst.contribution_aware else model_value(inst.theta[k], others)
        gains[k] = max(dev.max(), at_zero) - current[k]
    margins = rel_margin * np.maximum(1.0, np.abs(current))
    return NEReport(gains, margins, np.array(inst.ids))


def _own_grids(inst: GameInstance, n: int) -> list[np.ndarray]:
    grids = []
    for k in range(inst.k):
        if inst.contribution_aware:
            grids.append(np.concatenate(([0.0], np.linspace(inst.b_th, inst.b_max[k], n - 1))))
        else:
            grids.append(np.linspace(0.0, inst.b_max[k], n))
    return grids


def _neighbours(grid: np.ndarray, piece_start: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid neighbours within the same continuous piece (``nan`` where none)."""
    up = np.append(grid[1:], np.nan)
    down = np.insert(grid[:-1], 0, np.nan)
    if piece_start:
        up[:piece_start] = np.nan
        down[: piece_start + 1] = np.nan
    return up, down


def _payoff(inst: GameInstance, k: int, own, others) -> np.ndarray:
    u = model_value(inst.theta[k], others + own) - inst.unit_cost[k] * own
    if inst.contribution_aware:
        u = np.where(own == 0.0, 0.0, u)
    return u


def _slack(inst: GameInstance, k: int, u, others, nbrs) -> np.ndarray:
    slack = np.zeros(np.broadcast(u, others).shape)
    for nb in nbrs:
        valid = ~np.isnan(nb)
        step = _payoff(inst, k, np.where(valid, nb, 0.0), others)
        slack = np.maximum(slack, np.where(valid, np.abs(step - u), 0.0))
    return slack


def exhaustive_ne(inst: GameInstance, grid_points: int = 100) -> list[np.ndarray]:
    """All grid profiles that are equilibria up to one grid cell.

    Each participant's strategies form a grid (``{0}`` plus ``grid_points - 1``
    points on ``[b_th, b_max]`` with a threshold). A profile is kept when no
    participant gains more than ``L * h`` by a unilateral grid deviation, where
    ``L * h`` is estimated as the largest utility change of a one-cell move of
    the participant's own strategy within the same continuous piece:

        slack_k = max(|U_k(s + h) - U_k(s)|, |U_k(s - h) - U_k(s)|)

    The isolated strategy 0 of the threshold game has no neighbours, so its
    slack is 0. The profile space is swept one slice of the first
    participant's grid at a time. Returns profiles aligned with
    ``inst.participants``.
    """
    if inst.k > MAX_EXHAUSTIVE_K or grid_points > MAX_EXHAUSTIVE_GRID:
        raise InvalidParameterError(
            f"exhaustive search limited to K <= {MAX_EXHAUSTIVE_K} and "
            f"grid <= {MAX_EXHAUSTIVE_GRID}"
        )
    if inst.k == 0:
        raise InvalidParameterError("empty population")
    if grid_points < 3:
        raise InvalidParameterError("grid_points must be >= 3")
    piece = 1 if inst.contribution_aware else 0
    grids = _own_grids(inst, grid_points)
    inner = inst.k - 1
    axes = []
    for k in range(1, inst.k):
        shape = [1] * inner
        shape[k - 1] = grids[k].size
        axes.append(grids[k].reshape(shape))
    inner_total = sum(axes, np.zeros([1] * inner))
    inner_nbrs = []
    for k in range(1, inst.k):
        up, down = _neighbours(grids[k], piece)
        inner_nbrs.append((up.reshape(axes[k - 1].shape), down.reshape(axes[k - 1].shape)))

    g0 = grids[0]
    best0 = _payoff(inst, 0, g0[0], inner_total)
    for s in g0[1:]:
        best0 = np.maximum(best0, _payoff(inst, 0, s, inner_total))
    up0, down0 = _neighbours(g0, piece)
    tol = 1e-12
    found = []
    for a, s0 in enumerate(g0):
        total = s0 + inner_total
        u0 = _payoff(inst, 0, s0, inner_total)
        slack0 = _slack(inst, 0, u0, inner_total, (up0[a], down0[a]))
        ok = best0 - u0 <= slack0 + tol * np.maximum(1.0, np.abs(u0))
        for k in range(1, inst.k):
            own = axes[k - 1]
            others = total - own
            u = _payoff(inst, k, own, others)
            gain = u.max(axis=k - 1, keepdims=True) - u
            ok = ok & (gain <= _slack(inst, k, u, others, inner_nbrs[k - 1]) + tol * np.maximum(1.0, np.abs(u)))
        for row in np.argwhere(np.broadcast_to(ok, np.broadcast(ok, total).shape)):
            found.append(np.array([s0] + [grids[k + 1][row[k]] for k in range(inner)]))
    return found
