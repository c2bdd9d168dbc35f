"""Dense count tensors over discrete, totally ordered domains.

A tensor is the result of a ``GROUP BY d1, ..., dm`` COUNT over a table. Every
dimension has an inclusive integer range ``[start, end]`` and cells are stored
densely in row-major order, indexed by offsets from each dimension's start.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, FormatError, IngestionError

TENSOR_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Dim:
    name: str
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise DomainError(
                f"dimension {self.name!r}: start {self.start} > end {self.end}"
            )

    @property
    def size(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class Domain:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        if not self.dims:
            raise DomainError("a domain needs at least one dimension")
        object.__setattr__(self, "dims", tuple(self.dims))

    @classmethod
    def from_bounds(cls, bounds: Sequence[tuple[int, int]], names=None) -> "Domain":
        names = names or [f"d{i}" for i in range(len(bounds))]
        return cls(tuple(Dim(n, int(s), int(e)) for n, (s, e) in zip(names, bounds)))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.size for d in self.dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_cells(self) -> int:
        return math.prod(self.shape)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def full_rect(self) -> "Rect":
        return Rect(tuple((d.start, d.end) for d in self.dims))

    def check_rect(self, rect: "Rect") -> None:
        if len(rect.bounds) != self.ndim:
            raise DomainError(
                f"rect has {len(rect.bounds)} dimensions, domain has {self.ndim}"
            )
        for d, (lo, hi) in zip(self.dims, rect.bounds):
            if not d.start <= lo <= hi <= d.end:
                raise DomainError(
                    f"range [{lo}, {hi}] not within {d.name}=[{d.start}, {d.end}]"
                )

    def offsets(self, rect: "Rect") -> tuple[slice, ...]:
        """Array slices selecting ``rect`` inside a dense array over this domain."""
        self.check_rect(rect)
        return tuple(
            slice(lo - d.start, hi - d.start + 1)
            for d, (lo, hi) in zip(self.dims, rect.bounds)
        )

    def to_index(self, coord: Sequence[int]) -> int:
        """Row-major linear index of an absolute coordinate."""
        off = [c - d.start for c, d in zip(coord, self.dims)]
        return int(np.ravel_multi_index(off, self.shape))

    def from_index(self, index: int) -> tuple[int, ...]:
        off = np.unravel_index(int(index), self.shape)
        return tuple(int(o) + d.start for o, d in zip(off, self.dims))

    def to_json(self) -> list[dict]:
        return [{"name": d.name, "start": d.start, "end": d.end} for d in self.dims]

    @classmethod
    def from_json(cls, data) -> "Domain":
        try:
            return cls(tuple(Dim(str(d["name"]), int(d["start"]), int(d["end"])) for d in data))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed domain: {exc}") from exc


@dataclass(frozen=True, order=True)
class Rect:
    """Axis-aligned box of inclusive per-dimension ranges in domain values."""

    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        bounds = tuple((int(lo), int(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if lo > hi:
                raise DomainError(f"empty range [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in self.bounds)

    @property
    def n_cells(self) -> int:
        return math.prod(self.shape)

    def intersection_cells(self, other: "Rect") -> int:
        n = 1
        for (a, b), (c, d) in zip(self.bounds, other.bounds):
            overlap = min(b, d) - max(a, c) + 1
            if overlap <= 0:
                return 0
            n *= overlap
        return n

    def intersects(self, other: "Rect") -> bool:
        return all(
            max(a, c) <= min(b, d) for (a, b), (c, d) in zip(self.bounds, other.bounds)
        )

    def contains_point(self, coord: Sequence[int]) -> bool:
        return all(lo <= c <= hi for c, (lo, hi) in zip(coord, self.bounds))

    def split(self, dim: int, at: int) -> tuple["Rect", "Rect"]:
        """Split into ``[lo, at]`` and ``[at + 1, hi]`` along ``dim``."""
        lo, hi = self.bounds[dim]
        if not lo <= at < hi:
            raise DomainError(f"cut {at} is not interior to [{lo}, {hi}] on dim {dim}")
        left = list(self.bounds)
        right = list(self.bounds)
        left[dim] = (lo, at)
        right[dim] = (at + 1, hi)
        return Rect(tuple(left)), Rect(tuple(right))

    def __str__(self):
        return "x".join(f"[{lo},{hi}]" for lo, hi in self.bounds)


@dataclass(frozen=True)
class CountTensor:
    domain: Domain
    cells: np.ndarray
    domain_inferred: bool = field(default=False, compare=False)

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim == 1 and self.domain.ndim > 1:
            if cells.size != self.domain.n_cells:
                raise DomainError(
                    f"{cells.size} cells given for a domain of {self.domain.n_cells}"
                )
            cells = cells.reshape(self.domain.shape)
        if cells.shape != self.domain.shape:
            raise DomainError(f"cells shape {cells.shape} != domain shape {self.domain.shape}")
        if cells.size and (cells.min() < 0):
            raise DomainError("count tensors cannot hold negative cells")
        if not np.issubdtype(cells.dtype, np.integer):
            if not np.all(np.equal(np.mod(cells, 1), 0)):
                raise DomainError("count tensors hold integer counts")
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_cells(cls, cells, bounds=None, names=None) -> "CountTensor":
        cells = np.asarray(cells)
        if bounds is None:
            bounds = [(0, n - 1) for n in cells.shape]
        return cls(Domain.from_bounds(bounds, names), cells)

    @property
    def total(self) -> int:
        return int(self.cells.sum())

    def block(self, rect: Rect) -> np.ndarray:
        return self.cells[self.domain.offsets(rect)]

    def flat(self) -> np.ndarray:
        """Cells in row-major order."""
        return self.cells.reshape(-1)


def sum_cells(t: CountTensor, r: Rect) -> int:
    return int(t.block(r).sum())


def count_empty_nonempty(t: CountTensor, r: Rect) -> tuple[int, int]:
    b = t.block(r)
    nonempty = int(np.count_nonzero(b))
    return b.size - nonempty, nonempty


# -- ingestion ---------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    """How one group-by column maps onto a tensor dimension.

    Either an explicit integer range (``start``/``end``) or an equi-width
    binning into ``bins`` buckets over ``[lo, hi]``. Missing bounds are
    inferred from the data.
    """

    start: int | None = None
    end: int | None = None
    bins: int | None = None
    lo: float | None = None
    hi: float | None = None

    @classmethod
    def from_json(cls, col: str, raw) -> "ColumnSpec":
        if not isinstance(raw, Mapping):
            raise ConfigError(f"domain entry for {col!r} must be an object")
        unknown = set(raw) - {"start", "end", "bins", "min", "max"}
        if unknown:
            raise ConfigError(f"unknown keys for {col!r}: {sorted(unknown)}")
        if "bins" in raw:
            bins = raw["bins"]
            if not isinstance(bins, int) or bins < 1:
                raise ConfigError(f"bins for {col!r} must be a positive integer")
            return cls(bins=bins, lo=raw.get("min"), hi=raw.get("max"))
        if "start" in raw and "end" in raw:
            return cls(start=int(raw["start"]), end=int(raw["end"]))
        raise ConfigError(f"domain entry for {col!r} needs start/end or bins")


def load_domain_file(path) -> dict[str, ColumnSpec]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read domain file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("domain file must map column names to specs")
    return {col: ColumnSpec.from_json(col, spec) for col, spec in raw.items()}


def _bin_index(x: float, lo: float, hi: float, bins: int) -> int:
    if hi == lo:
        return 0
    i = int((x - lo) / (hi - lo) * bins)
    return min(max(i, 0), bins - 1)


def ingest_csv(
    path,
    group_by: Sequence[str],
    binning: Mapping[str, int | None] | None = None,
    domain: Mapping[str, ColumnSpec] | None = None,
) -> CountTensor:
    """Materialize ``SELECT group_by, COUNT(*) ... GROUP BY group_by`` as a dense tensor.

    ``binning`` maps a column to a bin count (equi-width over the observed or
    declared min/max); ``domain`` carries explicit per-column declarations and
    takes precedence. Unbinned columns must hold integers.
    """
    group_by = list(group_by)
    if not group_by:
        raise ConfigError("group_by must name at least one column")
    specs: dict[str, ColumnSpec] = dict(domain or {})
    for col, bins in (binning or {}).items():
        if bins is not None and col not in specs:
            specs[col] = ColumnSpec(bins=int(bins))

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: missing header row") from None
        missing = [c for c in group_by if c not in header]
        if missing:
            raise ConfigError(f"columns not found in {path}: {missing}")
        idx = [header.index(c) for c in group_by]

        raw_rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            values = []
            for col, i in zip(group_by, idx):
                text = row[i].strip() if i < len(row) else ""
                spec = specs.get(col)
                try:
                    if spec is not None and spec.bins is not None:
                        v = float(text)
                        if not math.isfinite(v):
                            raise ValueError(text)
                    else:
                        v = int(text)
                except ValueError:
                    kind = "numeric" if spec is not None and spec.bins else "integer"
                    raise IngestionError(
                        f"row {lineno}, column {col!r}: {text!r} is not {kind}"
                    ) from None
                values.append(v)
            raw_rows.append(values)

    data = np.array(raw_rows, dtype=float).reshape(len(raw_rows), len(group_by))
    inferred = False
    dims = []
    coords = np.empty(data.shape, dtype=np.int64)
    for j, col in enumerate(group_by):
        spec = specs.get(col, ColumnSpec())
        column = data[:, j]
        if spec.bins is not None:
            lo, hi = spec.lo, spec.hi
            if lo is None or hi is None:
                if column.size == 0:
                    raise ConfigError(f"cannot infer bin range for {col!r} from an empty file")
                inferred = True
                lo = float(column.min()) if lo is None else lo
                hi = float(column.max()) if hi is None else hi
            if hi < lo:
                raise ConfigError(f"bin range for {col!r} is empty")
            for r, x in enumerate(column):
                if not lo <= x <= hi:
                    raise IngestionError(
                        f"row {r + 2}, column {col!r}: {x} outside bin range [{lo}, {hi}]"
                    )
            coords[:, j] = [_bin_index(x, lo, hi, spec.bins) for x in column]
            dims.append(Dim(col, 0, spec.bins - 1))
        else:
            start, end = spec.start, spec.end
            if start is None or end is None:
                if column.size == 0:
                    raise ConfigError(f"cannot infer domain of {col!r} from an empty file")
                inferred = True
                start = int(column.min()) if start is None else start
                end = int(column.max()) if end is None else end
            dim = Dim(col, int(start), int(end))
            bad = np.flatnonzero((column < dim.start) | (column > dim.end))
            if bad.size:
                r = int(bad[0])
                raise IngestionError(
                    f"row {r + 2}, column {col!r}: {int(column[r])} outside [{dim.start}, {dim.end}]"
                )
            coords[:, j] = column.astype(np.int64) - dim.start
            dims.append(dim)

    dom = Domain(tuple(dims))
    cells = np.zeros(dom.shape, dtype=np.int64)
    if len(coords):
        np.add.at(cells, tuple(coords.T), 1)
    return CountTensor(dom, cells, domain_inferred=inferred)


# -- tensor files --------------------------------------------------------------


def save_tensor(t: CountTensor, path) -> None:
    doc = {
        "version": TENSOR_FORMAT_VERSION,
        "domain": t.domain.to_json(),
        "domain_inferred": t.domain_inferred,
        "cells": t.flat().tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_tensor(path) -> CountTensor:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read tensor {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != TENSOR_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported tensor file version")
    dom = Domain.from_json(doc["domain"])
    cells = np.asarray(doc["cells"], dtype=np.int64)
    if cells.size != dom.n_cells:
        raise FormatError(f"{path}: {cells.size} cells for domain of {dom.n_cells}")
    return CountTensor(dom, cells.reshape(dom.shape), bool(doc.get("domain_inferred", False)))


def iter_coords(rect: Rect) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(lo, hi + 1) for lo, hi in rect.bounds))
