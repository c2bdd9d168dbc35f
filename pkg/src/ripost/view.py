"""Published private views: leaf blocks with noisy means, range queries over them."""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .decomposer import LeafBlock
from .errors import DomainError, FormatError, QueryError
from .tensor import CountTensor, Domain, Rect

VIEW_FORMAT_VERSION = 1
NOT_PRIVATE = "NOT PRIVATE"


@dataclass(frozen=True)
class RangeQuery:
    """Inclusive per-dimension ranges; ``None`` spans the whole dimension."""

    ranges: tuple[tuple[int, int] | None, ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "ranges",
            tuple(None if r is None else (int(r[0]), int(r[1])) for r in self.ranges),
        )

    def to_rect(self, domain: Domain) -> Rect:
        if len(self.ranges) != domain.ndim:
            raise QueryError(f"query has {len(self.ranges)} ranges, domain has {domain.ndim} dims")
        bounds = []
        for d, r in zip(domain.dims, self.ranges):
            if r is None:
                bounds.append((d.start, d.end))
                continue
            lo, hi = r
            if not d.start <= lo <= hi <= d.end:
                raise QueryError(f"range [{lo}, {hi}] outside {d.name}=[{d.start}, {d.end}]")
            bounds.append((lo, hi))
        return Rect(tuple(bounds))

    def to_json(self) -> list:
        return [None if r is None else list(r) for r in self.ranges]

    @classmethod
    def from_json(cls, raw) -> "RangeQuery":
        try:
            return cls(tuple(None if r is None else (r[0], r[1]) for r in raw))
        except (TypeError, IndexError, ValueError) as exc:
            raise QueryError(f"malformed query {raw!r}") from exc


def validate_partition(domain: Domain, rects: Sequence[Rect]) -> None:
    """Raise unless ``rects`` tile ``domain`` exactly: inside, disjoint, covering."""
    cover = np.zeros(domain.shape, dtype=np.int32)
    for r in rects:
        try:
            cover[domain.offsets(r)] += 1
        except DomainError as exc:
            raise FormatError(f"leaf {r} outside domain: {exc}") from exc
    if cover.size and cover.max() > 1:
        raise FormatError("leaves overlap")
    if cover.size and cover.min() < 1:
        raise FormatError("leaves do not cover the domain")


@dataclass
class PrivateView:
    domain: Domain
    leaves: list[LeafBlock]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.leaves = sorted(self.leaves, key=lambda leaf: leaf.rect)
        validate_partition(self.domain, [leaf.rect for leaf in self.leaves])
        d = self.domain.ndim
        self._lo = np.array([[b[0] for b in leaf.rect.bounds] for leaf in self.leaves]).reshape(-1, d)
        self._hi = np.array([[b[1] for b in leaf.rect.bounds] for leaf in self.leaves]).reshape(-1, d)
        self._means = np.array([leaf.noisy_mean for leaf in self.leaves], dtype=float)

    @property
    def releasable(self) -> bool:
        return self.metadata.get("noise_mode", "standard") == "standard"


def _contribution(leaf: LeafBlock, q: Rect) -> float:
    return leaf.rect.intersection_cells(q) * leaf.noisy_mean


def answer(view: PrivateView, q: RangeQuery | Rect) -> float:
    """Sum over leaves of ``|leaf ∩ q| * leaf mean`` (linear scan)."""
    rect = q.to_rect(view.domain) if isinstance(q, RangeQuery) else q
    if isinstance(q, Rect):
        try:
            view.domain.check_rect(rect)
        except DomainError as exc:
            raise QueryError(str(exc)) from exc
    qlo = np.array([b[0] for b in rect.bounds])
    qhi = np.array([b[1] for b in rect.bounds])
    overlap = np.minimum(view._hi, qhi) - np.maximum(view._lo, qlo) + 1
    counts = np.where((overlap > 0).all(axis=1), np.clip(overlap, 0, None).prod(axis=1), 0)
    hit = np.flatnonzero(counts)
    return math.fsum((counts[hit] * view._means[hit]).tolist())


def answer_exact(tensor: CountTensor, q: RangeQuery | Rect) -> int:
    rect = q.to_rect(tensor.domain) if isinstance(q, RangeQuery) else q
    try:
        return int(tensor.block(rect).sum())
    except DomainError as exc:
        raise QueryError(str(exc)) from exc


class LeafIndex:
    """Bounding-box tree over view leaves; prunes subtrees disjoint from a query.

    Answers are summed with ``math.fsum`` over the same per-leaf products the
    linear scan uses, so both paths return identical floats.
    """

    BUCKET = 8

    def __init__(self, view: PrivateView):
        self.view = view
        self._root = self._build(list(range(len(view.leaves))))

    def _build(self, ids: list[int]):
        lo = self.view._lo[ids].min(axis=0)
        hi = self.view._hi[ids].max(axis=0)
        if len(ids) <= self.BUCKET:
            return (lo, hi, ids, None, None)
        centers = (self.view._lo[ids] + self.view._hi[ids]) / 2.0
        axis = int(np.argmax(hi - lo))
        order = np.argsort(centers[:, axis], kind="stable")
        half = len(ids) // 2
        left = [ids[i] for i in order[:half]]
        right = [ids[i] for i in order[half:]]
        return (lo, hi, None, self._build(left), self._build(right))

    def _collect(self, node, qlo, qhi, out: list[int]) -> None:
        lo, hi, ids, left, right = node
        if np.any(hi < qlo) or np.any(lo > qhi):
            return
        if ids is not None:
            out.extend(ids)
            return
        self._collect(left, qlo, qhi, out)
        self._collect(right, qlo, qhi, out)

    def candidates(self, rect: Rect) -> list[int]:
        qlo = np.array([b[0] for b in rect.bounds])
        qhi = np.array([b[1] for b in rect.bounds])
        out: list[int] = []
        self._collect(self._root, qlo, qhi, out)
        return sorted(out)

    def answer(self, q: RangeQuery | Rect) -> float:
        rect = q.to_rect(self.view.domain) if isinstance(q, RangeQuery) else q
        terms = []
        for i in self.candidates(rect):
            n = self.view.leaves[i].rect.intersection_cells(rect)
            if n:
                terms.append(float(n * self.view._means[i]))
        return math.fsum(terms)

    def locate(self, coord: Sequence[int]) -> LeafBlock:
        """The unique leaf containing a point."""
        rect = Rect(tuple((c, c) for c in coord))
        hits = [i for i in self.candidates(rect) if self.view.leaves[i].rect.contains_point(coord)]
        if len(hits) != 1:
            raise QueryError(f"point {tuple(coord)} hits {len(hits)} leaves")
        return self.view.leaves[hits[0]]


def build_index(view: PrivateView) -> LeafIndex:
    return LeafIndex(view)


# -- construction and files ----------------------------------------------------


def make_view(
    tensor: CountTensor,
    leaves: list[LeafBlock],
    epsilon: float,
    noise_mode: str = "standard",
    config_digest: str | None = None,
    mechanism: str = "ripost",
) -> PrivateView:
    meta: dict[str, Any] = {
        "mechanism": mechanism,
        "epsilon": epsilon,
        "config_digest": config_digest,
        "noise_mode": noise_mode,
        "domain_inferred": tensor.domain_inferred,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if noise_mode != "standard":
        meta["warning"] = NOT_PRIVATE
    return PrivateView(tensor.domain, leaves, meta)


def view_to_json(view: PrivateView) -> dict:
    return {
        "version": VIEW_FORMAT_VERSION,
        "domain": view.domain.to_json(),
        "leaves": [
            {
                "rect": [list(b) for b in leaf.rect.bounds],
                "mean": leaf.noisy_mean,
                "depth_phase1": leaf.true_depth_phase1,
                "depth_phase2": leaf.true_depth_phase2,
            }
            for leaf in view.leaves
        ],
        "metadata": view.metadata,
    }


def view_from_json(doc, allow_unsafe: bool = False) -> PrivateView:
    if not isinstance(doc, dict) or doc.get("version") != VIEW_FORMAT_VERSION:
        raise FormatError("unsupported or missing view version")
    try:
        domain = Domain.from_json(doc["domain"])
        leaves = [
            LeafBlock(
                Rect(tuple((int(lo), int(hi)) for lo, hi in raw["rect"])),
                float(raw["mean"]),
                int(raw.get("depth_phase1", 0)),
                int(raw.get("depth_phase2", 0)),
            )
            for raw in doc["leaves"]
        ]
        metadata = dict(doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise FormatError(f"malformed view: {exc}") from exc
    if metadata.get("noise_mode", "standard") != "standard" and not allow_unsafe:
        raise FormatError("view was built with noise disabled; pass allow_unsafe to load it")
    return PrivateView(domain, leaves, metadata)


def save_view(view: PrivateView, path) -> None:
    # json writes floats with repr(), which round-trips bit-exactly
    Path(path).write_text(json.dumps(view_to_json(view), indent=1), encoding="utf-8")


def load_view(path, allow_unsafe: bool = False) -> PrivateView:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read view {path}: {exc}") from exc
    return view_from_json(doc, allow_unsafe)
