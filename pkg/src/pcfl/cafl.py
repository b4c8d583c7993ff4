"""Contribution-aware game with a minimum contribution threshold.

A participant contributing less than ``b_th`` is cut off from the model and
gets zero utility, so every strategy is ``0`` or a value in ``[b_th, b_max]``.
An equilibrium need not exist; :func:`solve_cafl` removes the participants
whose join/quit decision flips across the critical participant's batchsize
until the remaining game has one.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .model import (
    EquilibriumResult,
    GameInstance,
    InvalidParameterError,
    Role,
    StrategyProfile,
    contributor_total_utility,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
TIE_TOL = 1e-9


def phi_threshold(b_th: float, theta: float, unit_cost: float) -> float:
    """Participation barrier: how much the others must contribute before
    contributing exactly ``b_th`` pays off. ``inf`` when ``theta`` is 0."""
    if not b_th > 0:
        raise InvalidParameterError("b_th must be > 0")
    if theta <= 0:
        return math.inf
    x = float(unit_cost) * b_th / float(theta)  # plain floats overflow to inf quietly
    try:
        e = math.expm1(x)
    except OverflowError:
        return math.inf
    return e * e - b_th


def phi_thresholds(b_th: float, theta: np.ndarray, unit_cost: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    safe = np.where(theta > 0, theta, 1.0)
    with np.errstate(over="ignore"):
        e = np.expm1(np.where(theta > 0, unit_cost * b_th / safe, np.inf))
        return e * e - b_th


def cafl_best_response(k: int, b_others: float, inst: GameInstance) -> float:
    """Best strategy in ``{0} | [b_th, b_max]`` for the participant at position ``k``."""
    if inst.b_th is None:
        raise InvalidParameterError("instance has no threshold")
    if b_others < 0:
        raise InvalidParameterError("b_others must be >= 0")
    b_th = inst.b_th
    wanted = inst.beta[k] - b_others
    if wanted > inst.b_max[k]:
        return float(inst.b_max[k])
    if wanted >= b_th:
        return float(wanted)
    if b_others >= phi_threshold(b_th, inst.theta[k], inst.unit_cost[k]):
        return float(b_th)
    return 0.0


@dataclass(frozen=True)
class PartialGame:
    """Two-action game among the participants below the critical one.

    ``h`` is the batchsize supplied from outside (full contributors plus the
    critical participant); members choose between 0 and ``b_th``.
    """

    h: float
    members: tuple[int, ...]
    b_th: float

    def __post_init__(self) -> None:
        if self.h < 0:
            raise InvalidParameterError("external contribution h must be >= 0")


def solve_partial(g: PartialGame, inst: GameInstance) -> StrategyProfile:
    """Largest-batchsize equilibrium of the partial game, aligned with ``g.members``.

    Everyone starts at ``b_th``; walking from the highest barrier down,
    members are switched off while the others' batchsize stays short of their
    barrier, and the walk stops at the first member that is satisfied.
    """
    pos = inst.position
    barriers = [
        phi_threshold(g.b_th, inst.theta[pos[j]], inst.unit_cost[pos[j]]) for j in g.members
    ]
    order = sorted(range(len(g.members)), key=lambda m: (barriers[m], g.members[m]))
    b = np.full(len(g.members), g.b_th)
    active = len(order)
    for m in reversed(order):
        others = (active - 1) * g.b_th
        if others < barriers[m] - g.h:
            b[m] = 0.0
            active -= 1
        else:
            break
    return StrategyProfile(b)


def f_c(c: int, b_con: float, inst: GameInstance) -> float:
    """Global batchsize with ranks ``1..c-1`` at ``b_max``, rank ``c`` at ``b_con``
    and the lower ranks playing the largest equilibrium of the partial game."""
    if inst.b_th is None:
        raise InvalidParameterError("instance has no threshold")
    if not 1 <= c <= inst.k:
        raise InvalidParameterError(f"critical rank {c} outside 1..{inst.k}")
    if not inst.b_th <= b_con <= inst.b_max[c - 1]:
        raise InvalidParameterError("b_con must lie in [b_th, b_max(c)]")
    h = float(inst.b_max[: c - 1].sum() + b_con)
    members = tuple(int(i) for i in inst.ids[c:])
    return h + solve_partial(PartialGame(h, members, inst.b_th), inst).global_batchsize


class _Outcome(NamedTuple):
    critical: int  # position in the working arrays; -1 when nobody is critical
    b_con: float
    prop: str
    search_index: int  # 0-based lowest position whose full contribution overshoots
    remove: int | None
    diag: dict[str, Any]


class _Round:
    """One pass of the critical-participant search over the remaining players."""

    def __init__(self, beta: np.ndarray, bmax: np.ndarray, phi: np.ndarray, b_th: float):
        self.beta, self.bmax, self.b_th = beta, bmax, b_th
        self.n = beta.size
        self.prefix = np.concatenate(([0.0], np.cumsum(bmax)))
        # member j (0-based) keeps b_th with m-1 others at b_th iff
        # h + (j - start) * b_th >= phi[j]
        self.key = phi - b_th * np.arange(self.n)

    def members(self, start: int, h: float) -> int:
        """Contributors in the largest partial-game equilibrium among positions ``start..``."""
        if start >= self.n:
            return 0
        hits = np.flatnonzero(self.key[start:] <= h - self.b_th * start)
        return int(hits[-1]) + 1 if hits.size else 0

    def total(self, c: int, x: float) -> tuple[float, int]:
        h = self.prefix[c] + x
        m = self.members(c + 1, h)
        return h + m * self.b_th, m

    def run(self, eps: float) -> _Outcome:
        beta, bmax, b_th, n = self.beta, self.bmax, self.b_th, self.n
        i = bisect_left(range(n), True, key=lambda p: self.total(p, bmax[p])[0] > beta[p])
        diag: dict[str, Any] = {"search_index": i + 1}
        if i == n:
            diag["case"] = "all-full"
            return _Outcome(n - 1, float(bmax[n - 1]), "P3", i, None, diag)

        # can i-1 be critical at b_max?  (i == 0: nobody above, H = 0)
        if i == 0:
            m = self.members(0, 0.0)
            total, beta_prev = m * b_th, math.inf
            next_in = m > 0
        else:
            total, m = self.total(i - 1, bmax[i - 1])
            beta_prev = beta[i - 1]
            next_in = m > 0
        diag["prev_total"] = float(total)
        if i > 0 and abs(total - beta_prev) <= TIE_TOL * max(1.0, beta_prev):
            return _Outcome(i - 1, float(bmax[i - 1]), "P5", i, None, diag)
        if not next_in and total > beta[i] - b_th:
            return _Outcome(i - 1, float(bmax[i - 1]) if i else 0.0, "P3", i, None, diag)
        if next_in and total >= beta[i]:
            return _Outcome(i - 1, float(bmax[i - 1]) if i else 0.0, "P4", i, None, diag)

        # i critical: find b_con in [b_th, b_max(i)] with F_c(i, b_con) = beta_i
        lo, hi = b_th, float(bmax[i])
        f_lo, m_lo = self.total(i, lo)
        if f_lo > beta[i]:
            # jump already at b_th: the members joining alongside i are special
            diag["case"] = "jump-at-threshold"
            diag["bracket"] = (lo, lo)
            if m_lo == 0:
                logger.warning("empty special set at threshold jump; removing participant %d", i)
                return _Outcome(i, lo, "", i, i, diag)
            return _Outcome(i, lo, "", i, i + m_lo, diag)
        while hi - lo > eps:
            mid = 0.5 * (lo + hi)
            f_mid, m_mid = self.total(i, mid)
            if f_mid <= beta[i]:
                lo, f_lo, m_lo = mid, f_mid, m_mid
            else:
                hi = mid
        f_hi, m_hi = self.total(i, hi)
        diag["bracket"] = (lo, hi)
        if f_lo == beta[i] or m_lo == m_hi:
            # continuous at the root: land exactly on it when the member set allows
            x = min(max(lo + (beta[i] - f_lo), lo), hi)
            if self.total(i, x)[1] != m_lo:
                x = lo
            diag["case"] = "interior"
            return _Outcome(i, float(x), "P5", i, None, diag)
        diag["case"] = "discontinuous"
        # U_right - U_left = members i+1+m_lo .. i+m_hi; drop the lowest beta
        return _Outcome(i, lo, "", i, i + m_hi, diag)


@dataclass(frozen=True)
class CaflSolution:
    result: EquilibriumResult
    removed_order: tuple[int, ...]
    search_epsilon: float
    first_search_index: int  # 1-based rank found by the first search pass
    equilibrium_property: str
    b_th: float
    trace: tuple[dict[str, Any], ...] = field(default=(), repr=False)

    @property
    def global_batchsize(self) -> float:
        return self.result.global_batchsize


class _Core(NamedTuple):
    batchsizes: np.ndarray
    critical: int  # position in the full instance, -1 if none
    labels: list[Role]
    removed: list[int]  # positions, removal order
    first_index: int
    prop: str
    trace: list[dict[str, Any]]


def _solve_core(
    theta: np.ndarray,
    unit_cost: np.ndarray,
    beta: np.ndarray,
    bmax: np.ndarray,
    b_th: float,
    eps: float,
) -> _Core:
    phi_all = phi_thresholds(b_th, theta, unit_cost)
    active = np.arange(beta.size)
    removed: list[int] = []
    trace: list[dict[str, Any]] = []
    first_index = None
    while True:
        rnd = _Round(beta[active], bmax[active], phi_all[active], b_th)
        out = rnd.run(eps)
        if first_index is None:
            first_index = out.search_index + 1
        entry = dict(out.diag, round=len(trace) + 1)
        if out.remove is None:
            trace.append(entry)
            break
        gone = int(active[out.remove])
        entry["removed_position"] = gone
        trace.append(entry)
        removed.append(gone)
        active = np.delete(active, out.remove)

    b = np.zeros(beta.size)
    labels = [Role.REMOVED] * beta.size
    c = out.critical
    for p in active[:max(c, 0)]:
        b[p] = bmax[p]
        labels[p] = Role.TYPE1
    h = 0.0
    if c >= 0:
        pc = int(active[c])
        b[pc] = out.b_con
        h = float(rnd.prefix[c] + out.b_con)
        labels[pc] = Role.TYPE2
    # members: literal reverse walk over the remaining lower ranks
    members = active[c + 1:]
    m_phi = phi_all[members]
    kept = len(members)
    for j in range(len(members) - 1, -1, -1):
        if (kept - 1) * b_th < m_phi[j] - h:
            kept -= 1
        else:
            break
    for j, p in enumerate(members):
        if j < kept:
            b[p] = b_th
            labels[p] = Role.TYPE3
        else:
            labels[p] = Role.TYPE4
    if c >= 0:
        total = h + kept * b_th
        wanted = beta[pc] - (total - out.b_con)
        if out.b_con == bmax[pc] and wanted > bmax[pc] * (1 + TIE_TOL):
            labels[pc] = Role.TYPE1
    return _Core(b, int(active[c]) if c >= 0 else -1, labels, removed, first_index, out.prop, trace)


def solve_cafl(
    inst: GameInstance, epsilon: float = DEFAULT_EPSILON, *, trace: bool = False
) -> CaflSolution:
    if inst.b_th is None:
        raise InvalidParameterError("instance has no threshold")
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be > 0")
    if inst.k == 0:
        raise InvalidParameterError("empty population")
    core = _solve_core(inst.theta, inst.unit_cost, inst.beta, inst.b_max, inst.b_th, epsilon)
    ids = inst.ids
    removed_ids = tuple(int(ids[p]) for p in core.removed)
    result = EquilibriumResult(
        profile=StrategyProfile(core.batchsizes),
        critical_index=int(ids[core.critical]) if core.critical >= 0 else None,
        type_labels=tuple(core.labels),
        removed=frozenset(removed_ids),
        iterations=len(core.removed),
        total_utility=contributor_total_utility(core.batchsizes, inst.theta, inst.unit_cost),
    )
    return CaflSolution(
        result=result,
        removed_order=removed_ids,
        search_epsilon=epsilon,
        first_search_index=core.first_index,
        equilibrium_property=core.prop,
        b_th=inst.b_th,
        trace=tuple(core.trace) if trace else (),
    )
