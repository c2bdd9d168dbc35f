"""Two-phase private decomposition of a count tensor into near-uniform blocks.

Phase 1 separates empty from non-empty regions: a block converges once its
noisy cell sum is at most ``theta1``; otherwise it is split at a cut chosen by
the exponential mechanism under the Min score. Phase 2 revisits every phase-1
block with its depth reset to 1 and splits on aggregation error until the noisy
AE is at most ``theta2``. Leaf means are finally released with Laplace noise.

Every random draw uses a stream keyed by the block's cut path, so the output
depends only on the seed and never on traversal order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, NamedTuple

import numpy as np

from .budget import BudgetLedger, BudgetSplit, SeriesParams, get_weight, split_budget
from .errors import ConfigError, DomainError
from .mechanisms import NoiseMode, RngStream, exp_mech_select, laplace
from .metrics import CutPoint, Metric, block_ae, block_metric, score_all_cuts, score_sensitivity
from .tensor import CountTensor, Rect

log = logging.getLogger(__name__)

CutPath = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Block:
    rect: Rect
    phase: int = 1
    depth: int = 1
    cut_path: CutPath = ()

    def __post_init__(self):
        if self.depth < 1:
            raise DomainError(f"block depth starts at 1, got {self.depth}")
        if self.phase not in (1, 2):
            raise DomainError(f"phase must be 1 or 2, got {self.phase}")

    @property
    def tree_depth(self) -> int:
        return len(self.cut_path) + 1

    def children(self, cut: CutPoint) -> tuple["Block", "Block"]:
        left, right = self.rect.split(cut.dim, cut.at)
        # each child records the edge it owns next to the cut, so siblings differ
        return (
            Block(left, self.phase, self.depth + 1, self.cut_path + ((cut.dim, cut.at),)),
            Block(right, self.phase, self.depth + 1, self.cut_path + ((cut.dim, cut.at + 1),)),
        )

    def enter_phase2(self) -> "Block":
        return Block(self.rect, 2, 1, self.cut_path)


@dataclass(frozen=True)
class DecompositionConfig:
    epsilon: float = 0.1
    alpha: float = 0.3
    beta: float = 0.4
    gamma: float = 0.9
    theta1: float = 0.0
    theta2: float = 0.0
    series_k: float = 4.0
    series_offset: int | None = None
    skip_k: int = 0
    seed: int = 0
    noise_mode: NoiseMode = NoiseMode.STANDARD
    # test harness: skip phase 1 and decompose the root on AE only
    single_phase: bool = False
    # score Min splits by -(m_L + m_R) instead of -min(m_L, m_R)
    min_score_sum: bool = False
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.noise_mode, str):
            try:
                object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
            except ValueError:
                raise ConfigError(f"unknown noise_mode {self.noise_mode!r}") from None
        if int(self.skip_k) != self.skip_k or self.skip_k < 0:
            raise ConfigError(f"skip_k must be a non-negative integer, got {self.skip_k}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for name in ("theta1", "theta2"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        # validates eps/alpha/beta/gamma and the series offset up front
        self.budget
        self.series

    @property
    def series(self) -> SeriesParams:
        if self.series_offset is None:
            return SeriesParams.for_k(self.series_k)
        return SeriesParams(self.series_k, self.series_offset)

    @property
    def budget(self) -> BudgetSplit:
        return split_budget(self.epsilon, self.alpha, self.gamma, self.beta)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["noise_mode"] = self.noise_mode.value
        d["series_offset"] = self.series.os
        return d

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "DecompositionConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class LeafBlock:
    rect: Rect
    noisy_mean: float
    true_depth_phase1: int = 0
    true_depth_phase2: int = 0


@dataclass(frozen=True)
class LeafTrace:
    """Server-side facts about a leaf; never part of a released view."""

    rect: Rect
    tree_depth: int
    depth_phase1: int
    depth_phase2: int
    true_mean: float
    true_ae: float


@dataclass
class ConvergenceReport:
    leaves: list[LeafTrace] = field(default_factory=list)

    def histogram(self) -> list[tuple[int, int, int]]:
        """Rows of (tree depth, leaves with AE = 0, leaves with AE > 0)."""
        counts: dict[int, list[int]] = {}
        for leaf in self.leaves:
            row = counts.setdefault(leaf.tree_depth, [0, 0])
            row[leaf.true_ae > 0] += 1
        return [(d, z, p) for d, (z, p) in sorted(counts.items())]

    @property
    def mixed_fraction(self) -> float:
        if not self.leaves:
            return 0.0
        return sum(leaf.true_ae > 0 for leaf in self.leaves) / len(self.leaves)

    def to_json(self) -> list[dict]:
        return [
            {
                "rect": [list(b) for b in t.rect.bounds],
                "tree_depth": t.tree_depth,
                "depth_phase1": t.depth_phase1,
                "depth_phase2": t.depth_phase2,
                "true_mean": t.true_mean,
                "true_ae": t.true_ae,
            }
            for t in self.leaves
        ]

    @classmethod
    def from_json(cls, rows) -> "ConvergenceReport":
        return cls(
            [
                LeafTrace(
                    Rect(tuple(tuple(b) for b in r["rect"])),
                    int(r["tree_depth"]),
                    int(r["depth_phase1"]),
                    int(r["depth_phase2"]),
                    float(r["true_mean"]),
                    float(r["true_ae"]),
                )
                for r in rows
            ]
        )


class Decomposition(NamedTuple):
    leaves: list[LeafBlock]
    report: ConvergenceReport
    ledger: BudgetLedger


def skip_cc_schedule(depth: int, skip_k: int) -> bool:
    """Whether the convergence test runs at ``depth``: at 1, then every ``skip_k + 1`` levels."""
    if skip_k < 0:
        raise ConfigError("skip_k must be non-negative")
    return (depth - 1) % (skip_k + 1) == 0


def secure_cc(
    block: Block,
    tensor: CountTensor,
    metric: Metric,
    theta: float,
    component_eps: float,
    rng: RngStream,
    ledger: BudgetLedger | None = None,
    series: SeriesParams = SeriesParams(),
) -> bool:
    """Noisy convergence test ``metric(block) + Lap(sens / eps_i) <= theta``."""
    eps_i = component_eps * get_weight(block.depth, series)
    if ledger is not None:
        ledger.charge(block.cut_path, f"cc{block.phase}", eps_i)
    value = block_metric(tensor.block(block.rect), metric)
    stream = rng.child(("cc", block.phase, block.cut_path))
    return value + laplace(metric.sensitivity / eps_i, stream) <= theta


def secure_ss(
    block: Block,
    tensor: CountTensor,
    metric: Metric,
    component_eps: float,
    rng: RngStream,
    ledger: BudgetLedger | None = None,
    series: SeriesParams = SeriesParams(),
    min_score_sum: bool = False,
) -> tuple[Block, Block]:
    """Pick a cut over every interior position of every dimension with the
    exponential mechanism and return the two children."""
    if block.rect.n_cells < 2:
        raise DomainError("a single-cell block has no cut")
    eps_i = component_eps * get_weight(block.depth, series)
    if ledger is not None:
        ledger.charge(block.cut_path, f"ss{block.phase}", eps_i)
    cuts, scores = score_all_cuts(tensor.block(block.rect), block.rect, metric, min_score_sum)
    stream = rng.child(("ss", block.phase, block.cut_path))
    choice = exp_mech_select(scores, eps_i, score_sensitivity(metric), stream)
    return block.children(cuts[choice])


def perturb_leaves(
    blocks: list[Block],
    tensor: CountTensor,
    eps_p: float,
    rng: RngStream,
    ledger: BudgetLedger | None = None,
) -> list[LeafBlock]:
    """Release each block's mean with Laplace noise of scale ``1 / (n * eps_p)``.

    Blocks are disjoint, so every leaf gets the full ``eps_p``.
    """
    if not eps_p > 0:
        raise DomainError("perturbation budget must be positive")
    out = []
    for b in blocks:
        cells = tensor.block(b.rect)
        n = cells.size
        mean = float(cells.sum()) / n
        if ledger is not None:
            ledger.charge(b.cut_path, "perturb", eps_p)
            ledger.mark_leaf(b.cut_path)
        noise = laplace(1.0 / (n * eps_p), rng.child(("perturb", b.cut_path)))
        out.append(LeafBlock(b.rect, mean + noise, *_phase_depths(b)))
    return out


def _phase_depths(b: "Block | _Converged") -> tuple[int, int]:
    return (getattr(b, "depth_phase1", 0), getattr(b, "depth_phase2", 0))


@dataclass(frozen=True)
class _Converged(Block):
    depth_phase1: int = 0
    depth_phase2: int = 0


class _Run:
    def __init__(self, tensor: CountTensor, config: DecompositionConfig):
        self.tensor = tensor
        self.config = config
        self.series = config.series
        self.split = config.budget
        self.ledger = BudgetLedger(self.split)
        self.rng = RngStream(config.seed, ("ripost",), config.noise_mode)

    def run_phase(self, start: list[Block], phase: int) -> list[Block]:
        cfg = self.config
        if phase == 1:
            cc_metric, ss_metric, theta = Metric.SUM, Metric.MIN, cfg.theta1
            eps_cc, eps_ss = self.split.eps_cc_1, self.split.eps_ss_1
        else:
            cc_metric, ss_metric, theta = Metric.AE, Metric.AE, cfg.theta2
            eps_cc, eps_ss = self.split.eps_cc_2, self.split.eps_ss_2
        converged: list[Block] = []
        stack = list(start)
        while stack:
            block = stack.pop()
            if skip_cc_schedule(block.depth, cfg.skip_k):
                done = secure_cc(
                    block, self.tensor, cc_metric, theta, eps_cc, self.rng, self.ledger, self.series
                )
            else:
                done = False
            if done or block.rect.n_cells == 1:
                converged.append(block)
                continue
            left, right = secure_ss(
                block, self.tensor, ss_metric, eps_ss, self.rng, self.ledger,
                self.series, cfg.min_score_sum,
            )
            stack.append(left)
            stack.append(right)
        return converged

    def phase2_subtree(self, p1: Block) -> list[_Converged]:
        depth1 = p1.depth
        out = self.run_phase([p1.enter_phase2()], 2)
        return [_Converged(b.rect, 2, b.depth, b.cut_path, depth1, b.depth) for b in out]

    def run(self) -> Decomposition:
        root = Block(self.tensor.domain.full_rect())
        if self.config.single_phase:
            finals = [
                _Converged(b.rect, 2, b.depth, b.cut_path, 0, b.depth)
                for b in self.run_phase([root.enter_phase2()], 2)
            ]
        else:
            survivors = self.run_phase([root], 1)
            if self.config.workers > 1 and len(survivors) > 1:
                with ThreadPoolExecutor(self.config.workers) as pool:
                    parts = list(pool.map(self.phase2_subtree, survivors))
            else:
                parts = [self.phase2_subtree(b) for b in survivors]
            finals = [b for part in parts for b in part]
        finals.sort(key=lambda b: b.rect)
        leaves = perturb_leaves(finals, self.tensor, self.split.eps_p, self.rng, self.ledger)
        self.ledger.assert_all()
        report = ConvergenceReport(
            [
                LeafTrace(
                    b.rect,
                    b.tree_depth,
                    b.depth_phase1,
                    b.depth_phase2,
                    float(self.tensor.block(b.rect).sum()) / b.rect.n_cells,
                    block_ae(self.tensor.block(b.rect)),
                )
                for b in finals
            ]
        )
        log.debug("decomposition produced %d leaves", len(leaves))
        return Decomposition(leaves, report, self.ledger)


def decompose(tensor: CountTensor, config: DecompositionConfig | None = None) -> Decomposition:
    """Privately partition ``tensor`` and release noisy leaf means.

    Returns the leaves (sorted by rect), a server-side convergence report with
    true per-leaf AE, and the ledger holding every per-path charge.
    """
    return _Run(tensor, config or DecompositionConfig()).run()
