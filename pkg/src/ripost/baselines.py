"""Reference decompositions and oracles used to check and compare the private one."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .budget import BudgetLedger, BudgetSplit
from .decomposer import (
    Block,
    ConvergenceReport,
    Decomposition,
    DecompositionConfig,
    LeafBlock,
    LeafTrace,
    perturb_leaves,
    secure_cc,
)
from .errors import DomainError
from .mechanisms import NoiseMode, RngStream, laplace
from .metrics import Metric, block_ae, block_metric, score_all_cuts
from .tensor import CountTensor, Rect
from .view import PrivateView, RangeQuery, answer, answer_exact, make_view


@dataclass
class OracleResult:
    leaves: list[LeafBlock] = field(default_factory=list)
    report: ConvergenceReport | None = None
    answers: list[float] = field(default_factory=list)
    # answer with true leaf means minus the exact answer
    ae_component: list[float] = field(default_factory=list)
    # released answer minus the answer with true leaf means
    pe_component: list[float] = field(default_factory=list)


def trace_leaves(tensor: CountTensor, blocks, depth_of=None) -> ConvergenceReport:
    depth_of = depth_of or (lambda b: b.tree_depth)
    rows = []
    for b in blocks:
        cells = tensor.block(b.rect)
        rows.append(
            LeafTrace(
                b.rect,
                depth_of(b),
                getattr(b, "depth_phase1", 0),
                getattr(b, "depth_phase2", 0),
                float(cells.sum()) / cells.size,
                block_ae(cells),
            )
        )
    return ConvergenceReport(rows)


def identity_release(tensor: CountTensor, eps: float, rng: RngStream) -> PrivateView:
    """Publish every cell with Laplace(1/eps) noise."""
    if not eps > 0:
        raise DomainError("epsilon must be positive")
    noise = laplace(1.0 / eps, rng.child(("identity",)), size=tensor.domain.n_cells)
    leaves = [
        LeafBlock(Rect(tuple((c, c) for c in tensor.domain.from_index(i))), float(v) + float(z))
        for i, (v, z) in enumerate(zip(tensor.flat(), noise))
    ]
    return make_view(tensor, leaves, eps, rng.mode.value, mechanism="identity")


def greedy_oracle_decompose(
    tensor: CountTensor, theta: float, metric: Metric = Metric.AE
) -> OracleResult:
    """Non-private decomposition: stop when ``metric <= theta``, otherwise take
    the best-scoring cut, ties to the lowest (dimension, position).

    Splits score on AE for the AE metric and on Min otherwise.
    """
    if theta < 0:
        raise DomainError("theta must be non-negative")
    ss_metric = Metric.AE if metric is Metric.AE else Metric.MIN
    stack = [Block(tensor.domain.full_rect())]
    done: list[Block] = []
    while stack:
        b = stack.pop()
        cells = tensor.block(b.rect)
        if block_metric(cells, metric) <= theta or b.rect.n_cells == 1:
            done.append(b)
            continue
        cuts, scores = score_all_cuts(cells, b.rect, ss_metric)
        stack.extend(b.children(cuts[int(np.argmax(scores))]))
    done.sort(key=lambda b: b.rect)
    report = trace_leaves(tensor, done)
    leaves = [LeafBlock(t.rect, t.true_mean, 0, t.tree_depth) for t in report.leaves]
    return OracleResult(leaves=leaves, report=report)


def _midpoint_children(b: Block) -> list[Block]:
    parts = [b]
    for dim, (lo, hi) in enumerate(b.rect.bounds):
        if hi == lo:
            continue
        at = lo + (hi - lo) // 2
        nxt = []
        for p in parts:
            left, right = p.rect.split(dim, at)
            nxt.append(Block(left, 1, b.depth + 1, p.cut_path + ((dim, at),)))
            nxt.append(Block(right, 1, b.depth + 1, p.cut_path + ((dim, at + 1),)))
        parts = nxt
    return parts


def midpoint_decomposition(tensor: CountTensor, config: DecompositionConfig) -> Decomposition:
    """Data-independent comparator: halve every dimension of a non-converged block.

    Convergence uses the same noisy Sum test and the same ``eps_cc_1``
    allocation as the private decomposition's first phase; leaves get ``eps_p``.
    Nothing is spent on choosing cuts.
    """
    split: BudgetSplit = config.budget
    ledger = BudgetLedger(split)
    rng = RngStream(config.seed, ("midpoint",), config.noise_mode)
    stack = [Block(tensor.domain.full_rect())]
    done: list[Block] = []
    while stack:
        b = stack.pop()
        converged = secure_cc(
            b, tensor, Metric.SUM, config.theta1, split.eps_cc_1, rng, ledger, config.series
        )
        if converged or b.rect.n_cells == 1:
            done.append(b)
        else:
            stack.extend(_midpoint_children(b))
    done.sort(key=lambda b: b.rect)
    leaves = perturb_leaves(done, tensor, split.eps_p, rng, ledger)
    ledger.assert_all()
    # several cuts per level, so the tree depth is the block depth
    return Decomposition(leaves, trace_leaves(tensor, done, lambda b: b.depth), ledger)


def midpoint_baseline_decompose(
    tensor: CountTensor, eps: float, config: DecompositionConfig | None = None
) -> PrivateView:
    base = config or DecompositionConfig()
    cfg = DecompositionConfig(**{**base.to_dict(), "epsilon": eps, "noise_mode": base.noise_mode})
    result = midpoint_decomposition(tensor, cfg)
    return make_view(tensor, result.leaves, eps, cfg.noise_mode.value, cfg.digest(), "midpoint")


def error_decomposition(
    view: PrivateView, tensor: CountTensor, queries: list[RangeQuery], true_means=None
) -> OracleResult:
    """Split each query error into aggregation and perturbation parts.

    ``true_means`` maps leaf rects to exact block means; computed from
    ``tensor`` when omitted.
    """
    exact_view = PrivateView(
        view.domain,
        [
            LeafBlock(
                leaf.rect,
                (true_means or {}).get(leaf.rect, float(tensor.block(leaf.rect).mean())),
            )
            for leaf in view.leaves
        ],
    )
    res = OracleResult(leaves=list(view.leaves))
    for q in queries:
        released = answer(view, q)
        smoothed = answer(exact_view, q)
        res.answers.append(released)
        res.ae_component.append(smoothed - answer_exact(tensor, q))
        res.pe_component.append(released - smoothed)
    return res


def _exact_metrics(cells) -> dict[str, Fraction]:
    n = len(cells)
    mean = Fraction(sum(cells), n)
    nonempty = sum(1 for c in cells if c)
    return {
        "sum": Fraction(sum(cells)),
        "min": Fraction(min(nonempty, n - nonempty)),
        "ae": sum((abs(c - mean) for c in cells), Fraction(0)),
    }


def sensitivity_oracle(
    n: int, trials: int = 200, seed: int = 0, max_value: int = 5
) -> dict[str, float]:
    """Largest metric changes over every single-cell +1 change of random 1-D tensors.

    Tensors hold ``n`` cells drawn uniformly from ``{0, ..., max_value}``.
    Metrics are evaluated in exact rational arithmetic, independently of
    :mod:`ripost.metrics`.
    """
    if n < 1:
        raise DomainError("need at least one cell")
    gen = np.random.default_rng(seed)
    worst = {"sum": Fraction(0), "min": Fraction(0), "ae": Fraction(0)}
    for _ in range(trials):
        base = [int(v) for v in gen.integers(0, max_value + 1, size=n)]
        m0 = _exact_metrics(base)
        for i in range(n):
            bumped = list(base)
            bumped[i] += 1
            m1 = _exact_metrics(bumped)
            for k in worst:
                worst[k] = max(worst[k], abs(m1[k] - m0[k]))
    out = {k: float(v) for k, v in worst.items()}
    out["ae_bound"] = 2.0 * (n - 1) / n
    return out


def noise_off_stream(seed: int = 0) -> RngStream:
    return RngStream(seed, (), NoiseMode.NOISE_OFF)
