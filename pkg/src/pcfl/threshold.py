"""Total utility at equilibrium and the exhaustive search for the best threshold."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cafl import DEFAULT_EPSILON, CaflSolution, _solve_core, solve_cafl
from .model import EquilibriumResult, GameInstance, InvalidParameterError, contributor_total_utility

TIE_RTOL = 1e-12


def total_utility(result: EquilibriumResult, inst: GameInstance) -> float:
    """Sum of utilities over contributors; free riders and removed players are left out."""
    return contributor_total_utility(result.profile.batchsizes, inst.theta, inst.unit_cost)


@dataclass(frozen=True)
class SweepEntry:
    b_th: int
    total_utility: float
    global_batchsize: float
    contributors: int
    removed: int


@dataclass(frozen=True)
class ThresholdSweep:
    entries: tuple[SweepEntry, ...]
    best_b_th: int

    @property
    def best(self) -> SweepEntry:
        return self.entries[self.best_b_th - 1]


def _sweep_entry(args) -> SweepEntry:
    theta, unit_cost, beta, bmax, b_th, eps = args
    core = _solve_core(theta, unit_cost, beta, bmax, float(b_th), eps)
    b = core.batchsizes
    return SweepEntry(
        b_th=int(b_th),
        total_utility=contributor_total_utility(b, theta, unit_cost),
        global_batchsize=float(b.sum()),
        contributors=int(np.count_nonzero(b > 0)),
        removed=len(core.removed),
    )


def optimize_threshold(
    inst: GameInstance, epsilon: float = DEFAULT_EPSILON, *, jobs: int = 1
) -> ThresholdSweep:
    """Solve the threshold game for every integer ``b_th`` in ``1..floor(min b_max)``.

    With ``jobs > 1`` the thresholds are spread over worker processes; entries
    always come back in threshold order.
    """
    if inst.k == 0:
        raise InvalidParameterError("empty population")
    top = math.floor(inst.b_th_max)
    if top < 1:
        raise InvalidParameterError("min b_max must be >= 1")
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be > 0")
    arrays = (np.asarray(inst.theta), np.asarray(inst.unit_cost), np.asarray(inst.beta), np.asarray(inst.b_max))
    work = [(*arrays, b, epsilon) for b in range(1, top + 1)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = tuple(pool.map(_sweep_entry, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        entries = tuple(map(_sweep_entry, work))
    top_tu = max(e.total_utility for e in entries)
    # equal equilibria can differ in the last bits of their utility
    floor = top_tu - TIE_RTOL * max(1.0, abs(top_tu))
    best = next(e for e in entries if e.total_utility >= floor)
    return ThresholdSweep(entries, best.b_th)


def solve_with_best_threshold(
    inst: GameInstance, epsilon: float = DEFAULT_EPSILON, *, jobs: int = 1
) -> tuple[ThresholdSweep, CaflSolution]:
    sweep = optimize_threshold(inst, epsilon, jobs=jobs)
    return sweep, solve_cafl(inst.with_threshold(float(sweep.best_b_th)), epsilon)
