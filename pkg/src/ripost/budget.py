"""Privacy budget split, depth-unbounded per-iteration weights and the spend ledger.

Each convergence or splitting component receives a fixed allocation. The
allocation is spread over an unbounded number of tree levels with weights
``k / ((d + os)(d + os + 1))`` for depth ``d >= 1``; the weights sum to
``k / (os + 1) <= 1`` whenever ``os >= k``.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable

from .errors import BudgetViolation, ConfigError, DomainError

COMPONENTS = ("cc1", "ss1", "cc2", "ss2", "perturb")

# relative slack tolerated when comparing float accumulations to an allocation
_REL_TOL = 1e-9


@dataclass(frozen=True)
class SeriesParams:
    k: float = 4.0
    os: int = 4

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError(f"series multiplier k must be positive, got {self.k}")
        if int(self.os) != self.os or self.os < 0:
            raise ConfigError(f"series offset must be a non-negative integer, got {self.os}")
        if self.os < math.ceil(self.k):
            raise ConfigError(
                f"series offset {self.os} < ceil(k) = {math.ceil(self.k)}; weights would sum past 1"
            )
        object.__setattr__(self, "os", int(self.os))

    @classmethod
    def for_k(cls, k: float) -> "SeriesParams":
        return cls(k, math.ceil(k))

    @property
    def total_mass(self) -> float:
        return self.k / (self.os + 1)


@dataclass(frozen=True)
class BudgetSplit:
    eps_total: float
    eps_p: float
    eps_d: float
    eps_1: float
    eps_2: float
    eps_cc_1: float
    eps_ss_1: float
    eps_cc_2: float
    eps_ss_2: float

    def allocation(self, component: str) -> float:
        return {
            "cc1": self.eps_cc_1,
            "ss1": self.eps_ss_1,
            "cc2": self.eps_cc_2,
            "ss2": self.eps_ss_2,
            "perturb": self.eps_p,
        }[component]


def _check_unit(name: str, value: float) -> None:
    if not 0 < value < 1:
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")


def split_budget(eps: float, alpha: float, gamma: float, beta: float) -> BudgetSplit:
    """Four-way split: perturbation vs decomposition (alpha), phase 1 vs 2
    (gamma), convergence vs splitting within each phase (beta)."""
    if not (eps > 0 and math.isfinite(eps)):
        raise ConfigError(f"epsilon must be a positive finite number, got {eps}")
    _check_unit("alpha", alpha)
    _check_unit("gamma", gamma)
    _check_unit("beta", beta)
    eps_d = eps * alpha
    eps_p = eps - eps_d
    eps_1 = eps_d * gamma
    eps_2 = eps_d - eps_1
    eps_cc_1 = eps_1 * beta
    eps_cc_2 = eps_2 * beta
    return BudgetSplit(
        eps_total=eps,
        eps_p=eps_p,
        eps_d=eps_d,
        eps_1=eps_1,
        eps_2=eps_2,
        eps_cc_1=eps_cc_1,
        eps_ss_1=eps_1 - eps_cc_1,
        eps_cc_2=eps_cc_2,
        eps_ss_2=eps_2 - eps_cc_2,
    )


def get_weight(depth: int, series: SeriesParams) -> float:
    if depth < 1:
        raise DomainError(f"depth starts at 1, got {depth}")
    j = depth + series.os
    return series.k / (j * (j + 1))


def iteration_budget(component_eps: float, depth: int, series: SeriesParams) -> float:
    if not component_eps > 0:
        raise DomainError(f"component budget must be positive, got {component_eps}")
    return component_eps * get_weight(depth, series)


def weight_partial_sums(series: SeriesParams, terms: int) -> Iterable[float]:
    """Running sums of the first ``terms`` weights (compensated summation)."""
    acc = 0.0
    comp = 0.0
    for depth in range(1, terms + 1):
        y = get_weight(depth, series) - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
        yield acc


def series_slack(series: SeriesParams) -> float:
    """Fraction of a component allocation the series never spends, even at infinite depth."""
    return 1.0 - series.total_mass


class BudgetLedger:
    """Per-path record of privacy spend.

    Charges are keyed by the cut path of the block that spent them. A leaf's
    spend is the sum of charges at every prefix of its path (sequential
    composition along the branch); distinct branches never share charges
    (parallel composition). A charge that would push any ancestor-to-node
    total past its allocation raises :class:`BudgetViolation`.
    """

    def __init__(self, split: BudgetSplit):
        self.split = split
        self._charges: dict[tuple, dict[str, float]] = defaultdict(lambda: dict.fromkeys(COMPONENTS, 0.0))
        self._leaves: set[tuple] = set()
        self._lock = threading.Lock()

    def _spent_along(self, path: tuple) -> dict[str, float]:
        spent = dict.fromkeys(COMPONENTS, 0.0)
        for i in range(len(path) + 1):
            node = self._charges.get(path[:i])
            if node:
                for c, v in node.items():
                    spent[c] += v
        return spent

    def charge(self, path: tuple[Hashable, ...], component: str, amount: float) -> None:
        if component not in COMPONENTS:
            raise ValueError(f"unknown budget component {component!r}")
        if amount < 0:
            raise BudgetViolation(f"negative charge {amount} on {component}")
        path = tuple(path)
        with self._lock:
            spent = self._spent_along(path)
            cap = self.split.allocation(component)
            if spent[component] + amount > cap * (1 + _REL_TOL):
                raise BudgetViolation(
                    f"{component} on path {path}: {spent[component]} + {amount} exceeds {cap}"
                )
            if sum(spent.values()) + amount > self.split.eps_total * (1 + _REL_TOL):
                raise BudgetViolation(f"path {path} exceeds total epsilon {self.split.eps_total}")
            self._charges[path][component] += amount

    def mark_leaf(self, path: tuple) -> None:
        with self._lock:
            self._leaves.add(tuple(path))

    @property
    def leaves(self) -> list[tuple]:
        return sorted(self._leaves)

    def path_spend(self, path: tuple) -> dict[str, float]:
        with self._lock:
            return self._spent_along(tuple(path))

    def path_total(self, path: tuple) -> float:
        return math.fsum(self.path_spend(path).values())

    def assert_path(self, path: tuple) -> None:
        spent = self.path_spend(path)
        for c, v in spent.items():
            cap = self.split.allocation(c)
            if v > cap * (1 + _REL_TOL):
                raise BudgetViolation(f"{c} on path {path}: spent {v} > {cap}")
        total = math.fsum(spent.values())
        if total > self.split.eps_total * (1 + _REL_TOL):
            raise BudgetViolation(f"path {path}: spent {total} > {self.split.eps_total}")

    def assert_all(self) -> None:
        for leaf in self.leaves:
            self.assert_path(leaf)

    def max_leaf_total(self) -> float:
        return max((self.path_total(p) for p in self.leaves), default=0.0)

    def slack_summary(self) -> dict[str, float]:
        """Worst-case (smallest) unspent budget per component over leaf paths."""
        out = {}
        for c in COMPONENTS:
            cap = self.split.allocation(c)
            spends = [self.path_spend(p)[c] for p in self.leaves] or [0.0]
            out[c] = cap - max(spends)
        out["total"] = self.split.eps_total - self.max_leaf_total()
        return out
