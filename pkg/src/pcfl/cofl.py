"""Contribution-oblivious game: best response and the equilibrium search.

Everyone receives the model whatever they contribute, so the best response
is ``clamp(beta_k - B_others, 0, b_max_k)``. The unique equilibrium has a
prefix of full contributors, at most one interior contributor (the critical
participant) and free riders below it.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .model import (
    EquilibriumResult,
    GameInstance,
    InvalidParameterError,
    Role,
    StrategyProfile,
    contributor_total_utility,
)


@dataclass(frozen=True)
class CoflSolution:
    result: EquilibriumResult
    f_o_at_critical: float
    # (rank, F_o(rank, b_max), beta, predicate) for each probe of the binary search
    trace: tuple[tuple[int, float, float, bool], ...] = field(default=(), repr=False)

    @property
    def global_batchsize(self) -> float:
        return self.result.global_batchsize


def cofl_best_response(k: int, b_others: float, inst: GameInstance) -> float:
    """Best batchsize for the participant at position ``k``."""
    if b_others < 0:
        raise InvalidParameterError("b_others must be >= 0")
    return float(min(max(inst.beta[k] - b_others, 0.0), inst.b_max[k]))


def f_o(c: int, b_con: float, inst: GameInstance) -> float:
    """Global batchsize when ranks ``1..c-1`` give ``b_max``, rank ``c`` gives ``b_con``
    and everyone below gives nothing. ``c`` is 1-based in descending-beta order.
    """
    if not 1 <= c <= inst.k:
        raise InvalidParameterError(f"critical rank {c} outside 1..{inst.k}")
    if not 0 <= b_con <= inst.b_max[c - 1]:
        raise InvalidParameterError("b_con must lie in [0, b_max(c)]")
    return float(inst.b_max[: c - 1].sum() + b_con)


def solve_cofl(inst: GameInstance, *, trace: bool = False) -> CoflSolution:
    if inst.k == 0:
        raise InvalidParameterError("empty population")
    beta, bmax = inst.beta, inst.b_max
    k = inst.k
    prefix = np.concatenate(([0.0], np.cumsum(bmax)))
    path: list[tuple[int, float, float, bool]] = []

    def full_exceeds(pos: int) -> bool:
        # F_o(pos + 1, b_max) > beta
        hit = bool(prefix[pos + 1] > beta[pos])
        if trace:
            path.append((pos + 1, float(prefix[pos + 1]), float(beta[pos]), hit))
        return hit

    i = bisect_left(range(k), True, key=full_exceeds)
    if __debug__ and k <= 64:
        flags = prefix[1:] > beta
        assert np.all(np.diff(flags.astype(int)) >= 0), "search predicate not monotone"

    if i == k:
        c = k - 1  # nobody overshoots: everyone contributes up to b_max
    elif prefix[i] <= beta[i]:
        c = i
    else:
        c = i - 1

    b = np.zeros(k)
    b[:c] = bmax[:c]
    desired = beta[c] - prefix[c]
    b[c] = min(max(desired, 0.0), bmax[c])

    labels = [Role.TYPE1] * c + [Role.TYPE1 if desired > bmax[c] else Role.TYPE2]
    labels += [Role.TYPE3] * (k - c - 1)
    profile = StrategyProfile(b)
    result = EquilibriumResult(
        profile=profile,
        critical_index=int(inst.ids[c]),
        type_labels=tuple(labels),
        removed=frozenset(),
        iterations=0,
        total_utility=contributor_total_utility(b, inst.theta, inst.unit_cost),
    )
    return CoflSolution(result, f_o_at_critical=float(prefix[c] + b[c]), trace=tuple(path))


def equilibrium_property(sol: CoflSolution, inst: GameInstance, tol: float = 1e-6) -> int | None:
    """Which structural property the solution satisfies: 2 (interior critical),
    1 (critical at b_max) or ``None``."""
    c = inst.position[sol.result.critical_index]
    b = sol.result.profile.batchsizes
    total = sol.result.global_batchsize
    beta_c = inst.beta[c]
    beta_next = inst.beta[c + 1] if c + 1 < inst.k else 0.0
    if abs(total - beta_c) <= tol * max(1.0, beta_c):
        return 2
    if b[c] == inst.b_max[c] and beta_next < total < beta_c:
        return 1
    return None
