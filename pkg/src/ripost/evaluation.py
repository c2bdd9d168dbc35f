"""Query workloads and error metrics for comparing views."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError
from .tensor import CountTensor, Domain
from .view import PrivateView, RangeQuery, answer, answer_exact


@dataclass
class Workload:
    queries: list[RangeQuery]
    seed: int | None = None
    count: int | None = None
    generator: str = "uniform-length"

    def __len__(self):
        return len(self.queries)

    def to_json(self) -> dict:
        return {
            "generator": {"name": self.generator, "seed": self.seed, "count": self.count},
            "queries": [q.to_json() for q in self.queries],
        }


def generate_workload(domain: Domain, count: int, seed: int) -> Workload:
    """Random range queries.

    Each query constrains a random non-empty subset of dimensions; a
    constrained dimension gets a range whose length is uniform on
    ``[1, size]`` and whose position is uniform among the fitting offsets.
    """
    if count < 1:
        raise ConfigError("workload needs at least one query")
    gen = np.random.default_rng(seed)
    queries = []
    for _ in range(count):
        mask = gen.random(domain.ndim) < 0.5
        if not mask.any():
            mask[gen.integers(domain.ndim)] = True
        ranges: list[tuple[int, int] | None] = []
        for on, d in zip(mask, domain.dims):
            if not on:
                ranges.append(None)
                continue
            length = int(gen.integers(1, d.size + 1))
            lo = d.start + int(gen.integers(0, d.size - length + 1))
            ranges.append((lo, lo + length - 1))
        queries.append(RangeQuery(tuple(ranges)))
    return Workload(queries, seed, count)


def save_workload(w: Workload, path) -> None:
    Path(path).write_text(json.dumps(w.to_json()), encoding="utf-8")


def load_workload(path) -> Workload:
    """Read a workload file: either ``{"queries": [...]}`` or a bare list of queries."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read workload {path}: {exc}") from exc
    gen = {}
    if isinstance(doc, dict):
        gen = doc.get("generator") or {}
        doc = doc.get("queries")
    if not isinstance(doc, list):
        raise FormatError(f"{path}: expected a list of queries")
    return Workload(
        [RangeQuery.from_json(q) for q in doc],
        gen.get("seed"),
        gen.get("count"),
        gen.get("name", "file"),
    )


def compute_rmse(view: PrivateView, tensor: CountTensor, workload: Workload | Sequence[RangeQuery]) -> float:
    queries = workload.queries if isinstance(workload, Workload) else list(workload)
    if not queries:
        raise ConfigError("RMSE over an empty workload")
    errs = np.array([answer_exact(tensor, q) - answer(view, q) for q in queries], dtype=float)
    return float(np.sqrt(np.mean(errs**2)))


def compute_r_rmse(rmse_other: float, rmse_ripost: float) -> float:
    """Ratio of another method's RMSE to ours; above 1 favors ours."""
    if rmse_ripost == 0:
        if rmse_other == 0:
            return 1.0
        warnings.warn("reference RMSE is zero; relative RMSE is infinite", RuntimeWarning)
        return math.inf
    return rmse_other / rmse_ripost


@dataclass
class EvalReport:
    rmse: dict[str, float] = field(default_factory=dict)
    r_rmse: dict[str, float] = field(default_factory=dict)
    histogram: list[tuple[int, int, int]] = field(default_factory=list)
    mixed_fraction: float | None = None
    leaf_count: int = 0
    budget_slack: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rmse": self.rmse,
            "r_rmse": self.r_rmse,
            "convergence": [
                {"depth": d, "ae_zero": z, "ae_positive": p} for d, z, p in self.histogram
            ],
            "mixed_fraction": self.mixed_fraction,
            "leaf_count": self.leaf_count,
            "budget_slack": self.budget_slack,
        }
