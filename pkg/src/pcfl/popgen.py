"""Seeded populations of high-quality (Hq) and low-quality (Lq) participants.

Every population comes from its own PCG64 stream, seeded with
``SeedSequence(seed, spawn_key=key)``. The key identifies the draw (for
experiments: ``(cell_index, trial_index)``), so trial ``i`` is the same no
matter how many trials are run or in which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_ALPHA, GameInstance, InvalidParameterError, Participant

GENERATOR = "numpy.random.PCG64 via SeedSequence(seed, spawn_key)"

F_MIN = 0.3e9
F_MAX = 1.5e9
CYCLES = (1.22e6, 2.44e6)
HQ_RANGES = {"theta": (50.0, 100.0), "phi": (1.0, 10.0), "gamma": (10.0, 100.0)}
LQ_RANGES = {"theta": (0.0, 10.0), "phi": (1.0, 20.0), "gamma": (10.0, 200.0)}


@dataclass(frozen=True)
class PopulationSpec:
    k: int
    hq_fraction: float
    b_max_range: tuple[float, float] = (30.0, 150.0)
    seed: int = 0
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if not 0.0 <= self.hq_fraction <= 1.0:
            raise InvalidParameterError("hq_fraction must lie in [0, 1]")
        low, high = self.b_max_range
        if not 0 < low <= high:
            raise InvalidParameterError("b_max_range must satisfy 0 < low <= high")

    @property
    def n_hq(self) -> int:
        # round first so 0.1 * 30 does not ceil to 4
        return math.ceil(round(self.k * self.hq_fraction, 9))


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def generate(spec: PopulationSpec, *, key: tuple[int, ...] = ()) -> GameInstance:
    if spec.k <= 0:
        raise InvalidParameterError("population size must be positive")
    rng = stream(spec.seed, *key)
    n_hq = spec.n_hq
    people = []
    for idx in range(spec.k):
        ranges = HQ_RANGES if idx < n_hq else LQ_RANGES
        people.append(
            Participant(
                id=idx + 1,
                theta=rng.uniform(*ranges["theta"]),
                phi=rng.uniform(*ranges["phi"]),
                gamma=rng.uniform(*ranges["gamma"]),
                cycles_per_sample=rng.uniform(*CYCLES),
                f_min=F_MIN,
                f_max=F_MAX,
                b_max=rng.uniform(*spec.b_max_range),
            )
        )
    inst = GameInstance(tuple(people), alpha=spec.alpha)
    _check_ranges(inst, spec)
    return inst


def _check_ranges(inst: GameInstance, spec: PopulationSpec) -> None:
    low, high = spec.b_max_range
    for p in inst.participants:
        ranges = HQ_RANGES if p.id <= spec.n_hq else LQ_RANGES
        for name, (a, b) in ranges.items():
            assert a <= getattr(p, name) <= b, (p.id, name)
        assert CYCLES[0] <= p.cycles_per_sample <= CYCLES[1]
        assert low <= p.b_max <= high
