"""Seeded batch experiments over (population size, Hq fraction) cells.

Trial ``t`` of cell ``c`` draws its population from the stream keyed
``(c, t)``, so results do not depend on the trial count, the job count or the
order in which trials finish.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .baselines import run_baseline
from .cafl import DEFAULT_EPSILON
from .cofl import solve_cofl
from .model import DEFAULT_ALPHA, SCHEMA_VERSION, InstanceFormatError, InvalidParameterError
from .popgen import GENERATOR, PopulationSpec, generate
from .threshold import optimize_threshold

ALL_SCHEMES = ("cofl", "cafl", "uniform", "optimal", "independent")
TRIAL_COLUMNS = (
    "cell", "k", "hq_fraction", "trial", "scheme",
    "global_batchsize", "total_utility", "contributors", "b_th", "removed",
)
SUMMARY_COLUMNS = (
    "cell", "k", "hq_fraction", "scheme", "trials",
    "global_batchsize", "total_utility", "contributors", "b_th",
    "batchsize_growth", "utility_growth",
)


@dataclass(frozen=True)
class Cell:
    k: int
    hq_fraction: float
    b_max_range: tuple[float, float] = (30.0, 150.0)


@dataclass(frozen=True)
class ExperimentConfig:
    cells: tuple[Cell, ...]
    trials: int = 100
    seed: int = 0
    schemes: tuple[str, ...] = ("cofl", "cafl")
    epsilon: float = DEFAULT_EPSILON
    out_dir: str = "results"
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if not self.cells:
            raise InvalidParameterError("config needs at least one cell")
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise InvalidParameterError(f"unknown schemes: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> ExperimentConfig:
        if not isinstance(doc, Mapping):
            raise InstanceFormatError("config", "expected a JSON object")
        try:
            raw_cells = doc["cells"]
        except KeyError:
            raise InstanceFormatError("cells", "missing") from None
        cells = []
        for i, c in enumerate(raw_cells):
            try:
                rng = tuple(float(v) for v in c.get("b_max_range", (30.0, 150.0)))
                cells.append(Cell(int(c["k"]), float(c["hq_fraction"]), rng))
            except (KeyError, TypeError, ValueError) as exc:
                raise InstanceFormatError(f"cells[{i}]", f"bad cell: {exc}") from None
        kwargs: dict[str, Any] = {}
        for key, conv in (("trials", int), ("seed", int), ("epsilon", float), ("out_dir", str), ("alpha", float)):
            if key in doc:
                try:
                    kwargs[key] = conv(doc[key])
                except (TypeError, ValueError):
                    raise InstanceFormatError(key, f"bad value {doc[key]!r}") from None
        if "schemes" in doc:
            kwargs["schemes"] = tuple(doc["schemes"])
        return cls(tuple(cells), **kwargs)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InstanceFormatError("config", f"{path}: {exc}") from None
        return cls.from_dict(doc)


@dataclass
class ExperimentResult:
    trials: list[dict[str, Any]]
    summary: list[dict[str, Any]]
    metadata: dict[str, Any] = field(default_factory=dict)

    def mean(self, k: int, hq_fraction: float, scheme: str, column: str) -> float:
        for row in self.summary:
            if row["k"] == k and row["hq_fraction"] == hq_fraction and row["scheme"] == scheme:
                return row[column]
        raise KeyError((k, hq_fraction, scheme))


def _run_trial(job) -> list[dict[str, Any]]:
    cell_index, cell, trial, cfg = job
    spec = PopulationSpec(cell.k, cell.hq_fraction, cell.b_max_range, seed=cfg.seed, alpha=cfg.alpha)
    inst = generate(spec, key=(cell_index, trial))
    base = {"cell": cell_index, "k": cell.k, "hq_fraction": cell.hq_fraction, "trial": trial}
    rows = []
    for scheme in cfg.schemes:
        b_th, removed = "", ""
        if scheme == "cofl":
            res = solve_cofl(inst).result
            gb, tu, n = res.global_batchsize, res.total_utility, res.contributors
        elif scheme == "cafl":
            best = optimize_threshold(inst, cfg.epsilon).best
            gb, tu, n = best.global_batchsize, best.total_utility, best.contributors
            b_th, removed = best.b_th, best.removed
        else:
            profile, tu = run_baseline(scheme, inst)
            gb = profile.global_batchsize
            n = int(np.count_nonzero(profile.batchsizes > 0))
        rows.append({**base, "scheme": scheme, "global_batchsize": gb, "total_utility": tu,
                     "contributors": n, "b_th": b_th, "removed": removed})
    return rows


def _summarise(cfg: ExperimentConfig, trials: list[dict[str, Any]]) -> list[dict[str, Any]]:
    out = []
    for ci, cell in enumerate(cfg.cells):
        means = {}
        for scheme in cfg.schemes:
            rows = [r for r in trials if r["cell"] == ci and r["scheme"] == scheme]
            m = {col: float(np.mean([r[col] for r in rows]))
                 for col in ("global_batchsize", "total_utility", "contributors")}
            m["b_th"] = float(np.mean([r["b_th"] for r in rows])) if scheme == "cafl" else ""
            means[scheme] = m
        for scheme in cfg.schemes:
            row = {"cell": ci, "k": cell.k, "hq_fraction": cell.hq_fraction, "scheme": scheme,
                   "trials": cfg.trials, **means[scheme], "batchsize_growth": "", "utility_growth": ""}
            if scheme == "cafl" and "cofl" in means:
                row["batchsize_growth"] = _growth(means["cafl"]["global_batchsize"], means["cofl"]["global_batchsize"])
                row["utility_growth"] = _growth(means["cafl"]["total_utility"], means["cofl"]["total_utility"])
            out.append(row)
    return out


def _growth(new: float, old: float) -> float:
    return (new - old) / old if old else float("inf")


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None, *, write: bool = True) -> ExperimentResult:
    """Run every trial of every cell; write CSVs and metadata unless ``write`` is off."""
    jobs = jobs or os.cpu_count() or 1
    work = [(ci, cell, t, cfg) for ci, cell in enumerate(cfg.cells) for t in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        chunks = [_run_trial(job) for job in work]
    trials = [row for chunk in chunks for row in chunk]
    result = ExperimentResult(trials, _summarise(cfg, trials), {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "seed": cfg.seed,
        "generator": GENERATOR,
        "alpha": cfg.alpha,
        "epsilon": cfg.epsilon,
        "trials": cfg.trials,
        "schemes": list(cfg.schemes),
        "cells": [{"k": c.k, "hq_fraction": c.hq_fraction, "b_max_range": list(c.b_max_range)} for c in cfg.cells],
    })
    if write:
        write_outputs(result, Path(cfg.out_dir))
    return result


def _write_csv(path: Path, columns: Sequence[str], rows: list[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({c: repr(v) if isinstance(v, float) else v for c, v in row.items()})


def write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "trials.csv", TRIAL_COLUMNS, result.trials)
        _write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, result.summary)
        (out_dir / "metadata.json").write_text(json.dumps(result.metadata, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
