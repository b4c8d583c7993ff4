"""Shared strategies and independent oracles for the test-suite."""

from __future__ import annotations

import itertools
import math

import numpy as np
from hypothesis import strategies as st

from pcfl.model import GameInstance, Role, StrategyProfile, instance_from_costs
from pcfl.popgen import PopulationSpec, generate

TWO_PLAYER = dict(thetas=[103.41, 9.39], unit_costs=[1.0, 1.0], b_maxes=[100.0, 100.0])


def two_player(b_th=None) -> GameInstance:
    return instance_from_costs(**TWO_PLAYER, b_th=b_th)


@st.composite
def cost_instances(draw, min_k=1, max_k=8, threshold=False):
    """Instances built straight from (theta, A, b_max) triples."""
    k = draw(st.integers(min_k, max_k))
    theta = draw(st.lists(st.floats(0.0, 150.0), min_size=k, max_size=k))
    cost = draw(st.lists(st.floats(0.05, 5.0), min_size=k, max_size=k))
    bmax = draw(st.lists(st.floats(1.0, 150.0), min_size=k, max_size=k))
    b_th = None
    if threshold:
        b_th = draw(st.floats(1.0, min(bmax)))
    return instance_from_costs(theta, cost, bmax, b_th=b_th)


@st.composite
def removal_prone(draw, max_k=6):
    """One strong participant and a handful of weak ones: the threshold game
    often has no equilibrium here, so the removal step runs."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, max_k + 1))
    theta = np.concatenate(([rng.uniform(60, 150)], rng.uniform(1, 15, k - 1)))
    cost = rng.uniform(0.5, 1.5, k)
    bmax = rng.uniform(20, 120, k)
    b_th = float(rng.uniform(5, min(20.0, bmax.min())))
    return instance_from_costs(theta, cost, bmax, b_th=b_th)


@st.composite
def populations(draw, min_k=2, max_k=50, threshold=False):
    k = draw(st.integers(min_k, max_k))
    hq = draw(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]))
    seed = draw(st.integers(0, 10_000))
    inst = generate(PopulationSpec(k, hq, seed=seed))
    if threshold:
        u = draw(st.floats(0.0, 1.0))
        inst = inst.with_threshold(1.0 + u * (inst.b_th_max - 1.0))
    return inst


def seeded_population(i: int, k_range=(2, 50), threshold=False) -> GameInstance:
    """Deterministic instance ``i`` of a seeded family."""
    rng = np.random.default_rng([2024, i])
    k = int(rng.integers(k_range[0], k_range[1] + 1))
    hq = float(rng.choice([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]))
    inst = generate(PopulationSpec(k, hq, seed=i))
    if threshold:
        inst = inst.with_threshold(float(rng.uniform(1.0, inst.b_th_max)))
    return inst


RANK = {Role.TYPE1: 0, Role.TYPE2: 1, Role.TYPE3: 2, Role.TYPE4: 3}


def ordered_types(labels, removed_mask=None) -> bool:
    """Type labels, read in descending-beta order, never go back to a lower type."""
    ranks = [RANK[lab] for i, lab in enumerate(labels) if lab is not Role.REMOVED]
    return all(a <= b for a, b in zip(ranks, ranks[1:])) and ranks.count(1) <= 1


def refined(inst: GameInstance, result) -> tuple[GameInstance, StrategyProfile]:
    keep = np.array([int(i) not in result.removed for i in inst.ids])
    return inst.without(result.removed), StrategyProfile(result.profile.batchsizes[keep])


def partial_oracle(h, b_th, phi):
    """Largest-batchsize pure equilibrium of the two-action game, by enumeration."""
    best = None
    for chosen in itertools.product((0, 1), repeat=len(phi)):
        ok = True
        total = sum(chosen) * b_th
        for p, c in zip(phi, chosen):
            others = total - c * b_th
            stay = others >= p - h
            if c == 1 and not stay:
                ok = False
            if c == 0 and stay:
                ok = False
            if not ok:
                break
        if ok and (best is None or sum(chosen) > sum(best)):
            best = chosen
    return best


def cafl_property(inst: GameInstance, profile: StrategyProfile, critical_pos: int, tol: float):
    """Which of the three structural properties the threshold-game equilibrium meets.

    P5: critical contributes and the total equals its beta.
    P3: critical at b_max, next player out, beta_next - b_th < B < beta_c.
    P4: critical at b_max, next player at b_th, beta_next < B < beta_c.
    """
    b = profile.batchsizes
    total = b.sum()
    beta_c = inst.beta[critical_pos]
    scale = tol * max(1.0, beta_c)
    if b[critical_pos] > 0 and abs(total - beta_c) <= scale:
        return "P5"
    if not math.isclose(b[critical_pos], inst.b_max[critical_pos], rel_tol=1e-12):
        return None
    nxt = critical_pos + 1
    beta_next = inst.beta[nxt] if nxt < inst.k else 0.0
    b_next = b[nxt] if nxt < inst.k else 0.0
    if b_next == 0 and beta_next - inst.b_th - scale < total < beta_c + scale:
        return "P3"
    if b_next > 0 and beta_next - scale < total < beta_c + scale:
        return "P4"
    return None
