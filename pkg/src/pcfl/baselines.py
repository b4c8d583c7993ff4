"""Comparison schemes: uniform contribution, the social optimum and solo training.

None of these is an equilibrium. They bound or contrast the threshold game:

* ``uniform_contribution`` - everyone gives the same batchsize, chosen to
  maximise the summed utility of all participants.
* ``optimal_total_utility`` - the planner's optimum, ignoring individual
  rationality.
* ``independent_training`` - each participant trains alone on its own data.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model import GameInstance, InvalidParameterError, StrategyProfile, model_value

GOLDEN_RTOL = 1e-9
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], a: float, b: float, rtol: float = GOLDEN_RTOL) -> float:
    """Maximiser of a unimodal ``f`` on ``[a, b]``.

    Stops once the bracket is narrower than ``rtol * max(1, |x|)``. The end
    points are compared with the interior answer, so a monotone ``f`` returns
    the right end exactly.
    """
    if b < a:
        raise InvalidParameterError("empty interval")
    lo, hi = a, b
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > rtol * max(1.0, abs(lo), abs(hi)):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = f(x1)
    mid = 0.5 * (lo + hi)
    return max((a, b, mid), key=f)


def _check(inst: GameInstance) -> None:
    if inst.k == 0:
        raise InvalidParameterError("empty population")


def uniform_objective(inst: GameInstance, b: float) -> float:
    theta_sum = float(inst.theta.sum())
    return float(model_value(theta_sum, inst.k * b) - inst.unit_cost.sum() * b)


def uniform_contribution(inst: GameInstance) -> StrategyProfile:
    """Common batchsize for all K participants; nobody is left out."""
    _check(inst)
    top = float(inst.b_max.min())
    b = golden_section_max(lambda x: uniform_objective(inst, x), 0.0, top)
    return StrategyProfile(np.full(inst.k, b))


def _fill_order(inst: GameInstance) -> np.ndarray:
    # cheapest first, lower id on ties
    return np.lexsort((inst.ids, inst.unit_cost))


def _water_fill(inst: GameInstance, total: float, order: np.ndarray) -> np.ndarray:
    b = np.zeros(inst.k)
    left = total
    for k in order:
        take = min(left, float(inst.b_max[k]))
        b[k] = take
        left -= take
        if left <= 0:
            break
    return b


def optimal_total_utility(inst: GameInstance) -> StrategyProfile:
    """Profile maximising the summed utility of every participant.

    For a fixed total the cost is smallest when the cheapest participants
    fill up first, so the cost is piecewise linear in the total. The value
    is concave, hence each linear piece has one maximum; the best of those is
    the optimum.
    """
    _check(inst)
    order = _fill_order(inst)
    theta_sum = float(inst.theta.sum())
    caps = inst.b_max[order]
    costs = inst.unit_cost[order]
    starts = np.concatenate(([0.0], np.cumsum(caps)))
    spent = np.concatenate(([0.0], np.cumsum(caps * costs)))
    best_total, best_value = 0.0, 0.0
    for j in range(inst.k):
        lo, hi = float(starts[j]), float(starts[j + 1])

        def value(x: float, j=j, lo=lo) -> float:
            return float(model_value(theta_sum, x) - spent[j] - costs[j] * (x - lo))

        x = golden_section_max(value, lo, hi)
        v = value(x)
        if v > best_value:
            best_total, best_value = x, v
    return StrategyProfile(_water_fill(inst, best_total, order))


def independent_training(inst: GameInstance) -> StrategyProfile:
    """Each participant's solo optimum, ``clamp(beta_k, 0, b_max_k)``."""
    return StrategyProfile(np.clip(inst.beta, 0.0, inst.b_max))


def shared_total_utility(profile: StrategyProfile, inst: GameInstance) -> float:
    """Summed utility when everyone receives the model trained on the total."""
    b = profile.batchsizes
    return float(np.sum(model_value(inst.theta, b.sum()) - inst.unit_cost * b))


def independent_total_utility(profile: StrategyProfile, inst: GameInstance) -> float:
    """Summed utility when each participant only has its own data."""
    b = profile.batchsizes
    return float(np.sum(model_value(inst.theta, b) - inst.unit_cost * b))


SCHEMES = {
    "uniform": (uniform_contribution, shared_total_utility),
    "optimal": (optimal_total_utility, shared_total_utility),
    "independent": (independent_training, independent_total_utility),
}


def run_baseline(name: str, inst: GameInstance) -> tuple[StrategyProfile, float]:
    """Profile and total utility for the scheme called ``name``."""
    try:
        solve, score = SCHEMES[name]
    except KeyError:
        raise InvalidParameterError(f"unknown scheme {name!r}") from None
    profile = solve(inst)
    return profile, score(profile, inst)
