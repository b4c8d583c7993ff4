"""Participants, game instances and the shared cost/utility model.

A participant trains on ``B_k`` samples per global iteration at CPU frequency
``f_k``. Energy is ``0.5 * alpha * C_k * B_k * f_k**2`` and latency is
``C_k * B_k / f_k``; both are weighted and subtracted from the model value
``theta_k * ln(1 + sqrt(B))`` where ``B`` is the global batchsize.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

# effective switched capacitance; fitted so seeded populations give the
# reference free-rider counts (see README)
DEFAULT_ALPHA = 2e-26
XI = 1.0  # loss-improvement scale; fixed
SCHEMA_VERSION = 1

_PARTICIPANT_FIELDS = (
    "id",
    "theta",
    "phi",
    "gamma",
    "cycles_per_sample",
    "f_min",
    "f_max",
    "b_max",
)


class InvalidParameterError(ValueError):
    """Raised when a participant, instance or argument violates its contract."""


class InstanceFormatError(InvalidParameterError):
    """Malformed instance document. ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Role(str, Enum):
    TYPE1 = "Type1"
    TYPE2 = "Type2"
    TYPE3 = "Type3"
    TYPE4 = "Type4"
    REMOVED = "Removed"


@dataclass(frozen=True)
class Participant:
    id: int
    theta: float
    phi: float
    gamma: float
    cycles_per_sample: float
    f_min: float
    f_max: float
    b_max: float

    def __post_init__(self) -> None:
        if not self.theta >= 0:
            raise InvalidParameterError(f"participant {self.id}: theta must be >= 0")
        for name in ("phi", "gamma", "cycles_per_sample", "f_min", "b_max"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"participant {self.id}: {name} must be > 0")
        if not self.f_min <= self.f_max:
            raise InvalidParameterError(f"participant {self.id}: f_min must be <= f_max")
        for name in _PARTICIPANT_FIELDS[1:]:
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"participant {self.id}: {name} must be finite")


@dataclass(frozen=True)
class DerivedParams:
    f_star: float
    unit_cost: float
    beta: float


def optimal_frequency(p: Participant, alpha: float) -> float:
    """Cost-minimising CPU frequency, ``cbrt(gamma / (phi * alpha))`` clamped to the bounds."""
    if not alpha > 0:
        raise InvalidParameterError("alpha must be > 0")
    if not p.phi > 0:
        raise InvalidParameterError("phi must be > 0")
    f = (p.gamma / (p.phi * alpha)) ** (1.0 / 3.0)
    return min(max(f, p.f_min), p.f_max)


def unit_cost(p: Participant, f_star: float, alpha: float) -> float:
    """Training cost per sample at frequency ``f_star``."""
    c = p.cycles_per_sample
    return 0.5 * p.phi * alpha * c * f_star**2 + p.gamma * c / f_star


def beta(theta: float, unit_cost: float) -> float:
    """Standalone optimal batchsize ``(sqrt(1/4 + theta/(2A)) - 1/2)**2``.

    Evaluated as ``(x / (sqrt(1/4 + x) + 1/2))**2`` with ``x = theta/(2A)`` to
    avoid cancellation for small ratios.
    """
    if not unit_cost > 0:
        raise InvalidParameterError("unit_cost must be > 0")
    if theta < 0:
        raise InvalidParameterError("theta must be >= 0")
    x = theta / (2.0 * unit_cost)
    return (x / (math.sqrt(0.25 + x) + 0.5)) ** 2


def beta_array(theta: np.ndarray, unit_cost: np.ndarray) -> np.ndarray:
    x = np.asarray(theta, dtype=float) / (2.0 * np.asarray(unit_cost, dtype=float))
    return (x / (np.sqrt(0.25 + x) + 0.5)) ** 2


def derive(p: Participant, alpha: float) -> DerivedParams:
    f = optimal_frequency(p, alpha)
    a = unit_cost(p, f, alpha)
    return DerivedParams(f_star=f, unit_cost=a, beta=beta(p.theta, a))


def model_value(theta, total):
    """``theta * ln(1 + xi * sqrt(total))``; works on scalars and arrays."""
    return theta * np.log1p(XI * np.sqrt(total))


def _readonly(values: Iterable[float]) -> np.ndarray:
    arr = np.array(list(values), dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GameInstance:
    """A population sorted by descending ``beta`` (ties: ascending id).

    ``b_th`` is the minimum contribution threshold; ``None`` means the
    contribution-oblivious game.
    """

    participants: tuple[Participant, ...]
    alpha: float = DEFAULT_ALPHA
    b_th: float | None = None
    derived: tuple[DerivedParams, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise InvalidParameterError("alpha must be > 0")
        ids = [p.id for p in self.participants]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("participant ids must be unique")
        pairs = [(p, derive(p, self.alpha)) for p in self.participants]
        pairs.sort(key=lambda pd: (-pd[1].beta, pd[0].id))
        object.__setattr__(self, "participants", tuple(p for p, _ in pairs))
        object.__setattr__(self, "derived", tuple(d for _, d in pairs))
        if self.b_th is not None:
            if not self.participants:
                raise InvalidParameterError("threshold given for an empty population")
            b_th_max = min(p.b_max for p in self.participants)
            if not 0 < self.b_th <= b_th_max:
                raise InvalidParameterError(
                    f"b_th must satisfy 0 < b_th <= min b_max = {b_th_max}"
                )

    @property
    def k(self) -> int:
        return len(self.participants)

    @property
    def contribution_aware(self) -> bool:
        return self.b_th is not None

    @cached_property
    def ids(self) -> np.ndarray:
        arr = np.array([p.id for p in self.participants], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def theta(self) -> np.ndarray:
        return _readonly(p.theta for p in self.participants)

    @cached_property
    def unit_cost(self) -> np.ndarray:
        return _readonly(d.unit_cost for d in self.derived)

    @cached_property
    def beta(self) -> np.ndarray:
        return _readonly(d.beta for d in self.derived)

    @cached_property
    def b_max(self) -> np.ndarray:
        return _readonly(p.b_max for p in self.participants)

    @cached_property
    def position(self) -> dict[int, int]:
        """Map participant id to its position in the sorted population."""
        return {p.id: i for i, p in enumerate(self.participants)}

    @property
    def b_th_max(self) -> float:
        return float(self.b_max.min())

    def with_threshold(self, b_th: float | None) -> GameInstance:
        return GameInstance(self.participants, alpha=self.alpha, b_th=b_th)

    def without(self, removed_ids: Iterable[int]) -> GameInstance:
        """The refined game with the given participants dropped."""
        gone = set(removed_ids)
        kept = tuple(p for p in self.participants if p.id not in gone)
        return GameInstance(kept, alpha=self.alpha, b_th=self.b_th)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "alpha": self.alpha}
        if self.b_th is not None:
            doc["b_th"] = self.b_th
        doc["participants"] = [
            {name: getattr(p, name) for name in _PARTICIPANT_FIELDS} for p in self.participants
        ]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> GameInstance:
        if not isinstance(doc, Mapping):
            raise InstanceFormatError("<root>", "expected a JSON object")
        alpha = _number(doc, "alpha", "alpha", default=DEFAULT_ALPHA)
        b_th = _number(doc, "b_th", "b_th", default=None)
        raw = doc.get("participants")
        if not isinstance(raw, list):
            raise InstanceFormatError("participants", "expected a list")
        people = []
        for i, entry in enumerate(raw):
            where = f"participants[{i}]"
            if not isinstance(entry, Mapping):
                raise InstanceFormatError(where, "expected an object")
            values = {}
            for name in _PARTICIPANT_FIELDS:
                values[name] = _number(entry, name, f"{where}.{name}")
            if values["id"] != int(values["id"]):
                raise InstanceFormatError(f"{where}.id", "must be an integer")
            values["id"] = int(values["id"])
            try:
                people.append(Participant(**values))
            except InvalidParameterError as exc:
                raise InstanceFormatError(where, str(exc)) from None
        try:
            return cls(tuple(people), alpha=alpha, b_th=b_th)
        except InstanceFormatError:
            raise
        except InvalidParameterError as exc:
            field_name = "b_th" if "b_th" in str(exc) else "participants"
            raise InstanceFormatError(field_name, str(exc)) from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> GameInstance:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InstanceFormatError("<root>", f"invalid JSON ({exc})") from None
        return cls.from_dict(doc)


def _number(doc: Mapping[str, Any], key: str, where: str, default: Any = ...) -> Any:
    if key not in doc or doc[key] is None:
        if default is ...:
            raise InstanceFormatError(where, "missing")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(where, f"expected a number, got {value!r}")
    return value


def instance_from_costs(
    thetas: Sequence[float],
    unit_costs: Sequence[float],
    b_maxes: Sequence[float],
    b_th: float | None = None,
    ids: Sequence[int] | None = None,
) -> GameInstance:
    """Build an instance whose participants have the given per-sample costs.

    Uses ``alpha = 1``, one cycle per sample and a pinned frequency of 1, with
    ``phi = A`` and ``gamma = A / 2`` so that the unit cost is exactly ``A``.
    """
    if ids is None:
        ids = range(1, len(thetas) + 1)
    people = tuple(
        Participant(
            id=i,
            theta=float(t),
            phi=float(a),
            gamma=0.5 * float(a),
            cycles_per_sample=1.0,
            f_min=1.0,
            f_max=1.0,
            b_max=float(b),
        )
        for i, t, a, b in zip(ids, thetas, unit_costs, b_maxes)
    )
    return GameInstance(people, alpha=1.0, b_th=b_th)


@dataclass(frozen=True)
class StrategyProfile:
    """Batchsizes aligned with ``GameInstance.participants``."""

    batchsizes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.batchsizes, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "batchsizes", arr)

    @property
    def global_batchsize(self) -> float:
        return float(self.batchsizes.sum())

    def __len__(self) -> int:
        return len(self.batchsizes)

    def others(self, k: int) -> float:
        return self.global_batchsize - float(self.batchsizes[k])

    def check(self, inst: GameInstance, tol: float = 1e-9) -> None:
        """Raise if the profile is not a legal strategy profile of ``inst``."""
        b = self.batchsizes
        if b.shape != (inst.k,):
            raise InvalidParameterError("profile length does not match instance")
        if np.any(b < -tol) or np.any(b > inst.b_max + tol * np.maximum(1.0, inst.b_max)):
            raise InvalidParameterError("batchsize outside [0, b_max]")
        if inst.b_th is not None:
            inside = (b > tol) & (b < inst.b_th * (1 - tol) - tol)
            if np.any(inside):
                raise InvalidParameterError("batchsize strictly between 0 and b_th")

    def to_dict(self, inst: GameInstance) -> dict[str, float]:
        return {str(int(i)): float(v) for i, v in zip(inst.ids, self.batchsizes)}

    @classmethod
    def from_mapping(cls, inst: GameInstance, values: Mapping[str, float]) -> StrategyProfile:
        arr = np.zeros(inst.k)
        pos = inst.position
        for key, v in values.items():
            try:
                arr[pos[int(key)]] = float(v)
            except (KeyError, ValueError):
                raise InstanceFormatError(f"batchsizes.{key}", "unknown participant id") from None
        return cls(arr)


def utility(k: int, profile: StrategyProfile, inst: GameInstance) -> float:
    """Utility of the participant at position ``k`` when everyone runs at ``f*``.

    In the contribution-aware game a participant that contributes nothing is
    excluded from the model and gets exactly 0.
    """
    b_k = float(profile.batchsizes[k])
    if inst.contribution_aware and b_k == 0.0:
        return 0.0
    total = profile.global_batchsize
    return float(model_value(inst.theta[k], total) - inst.unit_cost[k] * b_k)


def utilities(profile: StrategyProfile, inst: GameInstance) -> np.ndarray:
    b = profile.batchsizes
    u = model_value(inst.theta, b.sum()) - inst.unit_cost * b
    if inst.contribution_aware:
        u = np.where(b == 0.0, 0.0, u)
    return u


def contributor_total_utility(batchsizes: np.ndarray, theta: np.ndarray, unit_cost: np.ndarray) -> float:
    """Sum of utilities over participants with a nonzero batchsize."""
    b = np.asarray(batchsizes, dtype=float)
    mask = b > 0
    if not mask.any():
        return 0.0
    total = b.sum()
    return float(np.sum(model_value(theta[mask], total) - unit_cost[mask] * b[mask]))


@dataclass(frozen=True)
class EquilibriumResult:
    profile: StrategyProfile
    critical_index: int | None
    type_labels: tuple[Role, ...]
    removed: frozenset[int]
    iterations: int
    total_utility: float

    @property
    def global_batchsize(self) -> float:
        return self.profile.global_batchsize

    @property
    def contributors(self) -> int:
        return int(np.count_nonzero(self.profile.batchsizes > 0))

    def to_dict(self, inst: GameInstance) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "profile": {
                "batchsizes": self.profile.to_dict(inst),
                "global_batchsize": self.global_batchsize,
            },
            "critical_index": self.critical_index,
            "type_labels": {
                str(int(i)): lab.value for i, lab in zip(inst.ids, self.type_labels)
            },
            "removed": sorted(self.removed),
            "iterations": self.iterations,
            "total_utility": self.total_utility,
            "contributors": self.contributors,
        }
