"""Block metrics used for convergence tests and split scoring."""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .tensor import CountTensor, Rect


class Metric(enum.Enum):
    SUM = "Sum"
    MIN = "Min"
    AE = "AE"

    @property
    def sensitivity(self) -> float:
        # change of the metric under a single-cell +-1 perturbation
        return _SENSITIVITY[self]


_SENSITIVITY = {Metric.SUM: 1.0, Metric.MIN: 1.0, Metric.AE: 2.0}


class CutPoint(NamedTuple):
    """Cut along ``dim`` between domain values ``at`` and ``at + 1``."""

    dim: int
    at: int


def block_ae(block: np.ndarray) -> float:
    """Sum of absolute deviations from the block mean."""
    if block.size == 0:
        raise DomainError("aggregation error of an empty block")
    mean = float(block.sum()) / block.size
    return float(np.abs(block - mean).sum())


def aggregation_error(t: CountTensor, r: Rect) -> float:
    return block_ae(t.block(r))


def block_metric(block: np.ndarray, metric: Metric) -> float:
    """Value of a convergence metric on a dense block."""
    if metric is Metric.SUM:
        return float(block.sum())
    if metric is Metric.AE:
        return block_ae(block)
    nonempty = int(np.count_nonzero(block))
    return float(min(nonempty, block.size - nonempty))


def score_sensitivity(metric: Metric) -> float:
    """The score reads the metric on both halves, so its sensitivity doubles."""
    return 2.0 * metric.sensitivity


def _min_half(block: np.ndarray) -> int:
    nonempty = int(np.count_nonzero(block))
    return min(nonempty, block.size - nonempty)


def _score_halves(left: np.ndarray, right: np.ndarray, metric: Metric, min_as_sum: bool) -> float:
    if metric is Metric.AE:
        return -(block_ae(left) + block_ae(right))
    if metric is Metric.MIN:
        a, b = _min_half(left), _min_half(right)
        return -float(a + b if min_as_sum else min(a, b))
    raise DomainError(f"no split score is defined for the {metric.value} metric")


def split_score(
    t: CountTensor, r: Rect, metric: Metric, cut: CutPoint, min_as_sum: bool = False
) -> float:
    """Score of cutting ``r`` at ``cut``; higher is better.

    ``Min`` scores ``-min(m_L, m_R)`` where ``m_X`` is the smaller of the empty
    and non-empty cell counts of half X (``-(m_L + m_R)`` when ``min_as_sum``).
    ``AE`` scores ``-(AE_L + AE_R)``.
    """
    t.domain.check_rect(r)
    left, right = r.split(cut.dim, cut.at)
    return _score_halves(t.block(left), t.block(right), metric, min_as_sum)


def candidate_cuts(r: Rect) -> list[CutPoint]:
    """All interior cuts of ``r`` ordered by (dimension, position)."""
    return [CutPoint(d, at) for d, (lo, hi) in enumerate(r.bounds) for at in range(lo, hi)]


def score_all_cuts(
    block: np.ndarray, r: Rect, metric: Metric, min_as_sum: bool = False
) -> tuple[list[CutPoint], np.ndarray]:
    """Scores of every interior cut of a block, in ``candidate_cuts`` order.

    ``block`` holds the cells of ``r``. Min scores come from prefix counts of
    non-empty slabs; AE scores are computed per cut on array views.
    """
    if metric not in (Metric.MIN, Metric.AE):
        raise DomainError(f"no split score is defined for the {metric.value} metric")
    cuts: list[CutPoint] = []
    scores: list[float] = []
    for dim, (lo, hi) in enumerate(r.bounds):
        n = hi - lo + 1
        if n < 2:
            continue
        slabs = np.moveaxis(block, dim, 0).reshape(n, -1)
        if metric is Metric.MIN:
            slab_size = slabs.shape[1]
            nonempty = np.cumsum(np.count_nonzero(slabs, axis=1))
            total_nonempty = int(nonempty[-1])
            for k in range(1, n):
                nl = int(nonempty[k - 1])
                nr = total_nonempty - nl
                ml = min(nl, k * slab_size - nl)
                mr = min(nr, (n - k) * slab_size - nr)
                scores.append(-float(ml + mr if min_as_sum else min(ml, mr)))
        else:
            for k in range(1, n):
                scores.append(-(block_ae(slabs[:k]) + block_ae(slabs[k:])))
        cuts.extend(CutPoint(dim, lo + k - 1) for k in range(1, n))
    return cuts, np.asarray(scores, dtype=float)
