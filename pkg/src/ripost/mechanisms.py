"""Laplace and exponential mechanisms over path-keyed deterministic random streams."""

from __future__ import annotations

import enum
import hashlib
import math
from typing import Hashable, Sequence

import numpy as np

from .errors import DomainError


class NoiseMode(enum.Enum):
    STANDARD = "standard"
    # deterministic: zero Laplace noise, argmax selection; output is NOT private
    NOISE_OFF = "noise_off"


def _substream_key(substream: Hashable) -> tuple[int, ...]:
    digest = hashlib.blake2b(repr(substream).encode("utf-8"), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Random stream fully determined by a root seed and a substream id.

    The substream id is any hashable value with a stable ``repr`` (the
    decomposer uses the block's cut path plus a purpose tag), so streams do not
    depend on the order in which blocks are visited.
    """

    def __init__(self, seed: int, substream: Hashable = (), mode: NoiseMode = NoiseMode.STANDARD):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.substream = substream
        self.mode = NoiseMode(mode)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_substream_key(substream))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, substream: Hashable) -> "RngStream":
        return RngStream(self.seed, substream, self.mode)

    @property
    def noise_off(self) -> bool:
        return self.mode is NoiseMode.NOISE_OFF

    def uniform_open(self, size=None):
        """Uniform draws on the open interval (0, 1)."""
        u = self.generator.random(size)
        if size is None:
            while u == 0.0:
                u = self.generator.random()
            return u
        zero = u == 0.0
        while zero.any():
            u[zero] = self.generator.random(int(zero.sum()))
            zero = u == 0.0
        return u


def laplace(scale: float, rng: RngStream, size=None):
    """Draw from Laplace(0, scale) by inverting the CDF of one uniform per sample."""
    if not scale > 0 or not math.isfinite(scale):
        raise DomainError(f"Laplace scale must be positive and finite, got {scale}")
    if rng.noise_off:
        return 0.0 if size is None else np.zeros(size)
    u = rng.uniform_open(size) - 0.5
    x = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return float(x) if size is None else x


def exp_mech_select(
    scores: Sequence[float], eps_i: float, delta_u: float, rng: RngStream
) -> int:
    """Sample index ``i`` with probability proportional to ``exp(eps_i * s_i / (2 * delta_u))``."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise DomainError("exponential mechanism needs at least one candidate")
    if not np.all(np.isfinite(s)):
        raise RuntimeError("non-finite score passed to the exponential mechanism")
    if not eps_i > 0 or not delta_u > 0:
        raise DomainError(f"eps_i and delta_u must be positive, got {eps_i}, {delta_u}")
    if rng.noise_off:
        return int(np.argmax(s))
    logits = eps_i * (s - s.max()) / (2.0 * delta_u)
    weights = np.exp(logits)
    cdf = np.cumsum(weights)
    u = rng.generator.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), s.size - 1))


def selection_probabilities(scores: Sequence[float], eps_i: float, delta_u: float) -> np.ndarray:
    """Closed-form selection distribution of :func:`exp_mech_select`."""
    s = np.asarray(scores, dtype=float)
    w = np.exp(eps_i * (s - s.max()) / (2.0 * delta_u))
    return w / w.sum()
