"""Mixing schemes: per-round distributions over past indices.

At round ``t`` a scheme gives ``weights(t)[j]`` for ``j in 0..t-1``; index
``j`` refers to the posterior formed after round ``j`` (``j = 0`` is the
initial distribution).  The most recent index ``t - 1`` gets ``1 - alpha``
and the older ones share ``alpha`` according to the scheme's kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError

KINDS = ("yesterday", "fixedshare", "uniformpast", "decayingpast", "decayingpast-approx")


class Block(NamedTuple):
    """Past indices ``start <= j < stop`` sharing ``weight`` uniformly."""

    start: int
    stop: int
    weight: float

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class MixingScheme:
    kind: str
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown mixing scheme {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in [0, 1]")
        if self.gamma < 0:
            raise InvalidInputError("gamma must be >= 0")

    @classmethod
    def yesterday(cls):
        return cls("yesterday")

    @classmethod
    def fixed_share(cls, alpha):
        return cls("fixedshare", alpha)

    @classmethod
    def uniform_past(cls, alpha):
        return cls("uniformpast", alpha)

    @classmethod
    def decaying_past(cls, alpha, gamma):
        return cls("decayingpast", alpha, gamma)

    @classmethod
    def decaying_past_approx(cls, alpha, gamma):
        return cls("decayingpast-approx", alpha, gamma)

    @property
    def token(self) -> str:
        if self.kind == "yesterday":
            return "yesterday"
        if self.kind in ("fixedshare", "uniformpast"):
            return f"{self.kind}:{self.alpha!r}"
        return f"{self.kind}:{self.alpha!r}:{self.gamma!r}"

    def __str__(self):
        return self.token

    def weights(self, t: int) -> np.ndarray:
        return weights(self, t)


def parse_scheme(token: str) -> MixingScheme:
    """Parse ``yesterday``, ``fixedshare:A``, ``uniformpast:A``, ``decayingpast[-approx]:A:G``."""
    parts = token.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    arity = {"yesterday": 0, "fixedshare": 1, "uniformpast": 1, "decayingpast": 2, "decayingpast-approx": 2}
    if kind not in arity:
        raise InvalidInputError(f"unknown mixing scheme {token!r}")
    if len(args) != arity[kind]:
        raise InvalidInputError(f"scheme {kind!r} takes {arity[kind]} parameter(s), got {token!r}")
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise InvalidInputError(f"bad number in scheme {token!r}") from None
    return MixingScheme(kind, *nums)


@lru_cache(maxsize=64)
def _power_prefix(gamma: float, n: int) -> np.ndarray:
    # prefix[d] = sum_{k=1..d} k^-gamma, prefix[0] = 0
    d = np.arange(1, n + 1, dtype=np.float64)
    return np.concatenate([[0.0], np.cumsum(d**-gamma)])


def _prefix(gamma: float, d: int) -> np.ndarray:
    size = 1024
    while size < d:
        size *= 2
    return _power_prefix(gamma, size)


def weights(scheme: MixingScheme, t: int) -> np.ndarray:
    """Distribution over ``0..t-1`` used at round ``t`` (array indexed by past index)."""
    if t < 1:
        raise InvalidInputError("rounds start at t = 1")
    w = np.zeros(t)
    if t == 1:
        w[0] = 1.0
        return w
    a = scheme.alpha
    kind = scheme.kind
    if kind == "yesterday":
        w[t - 1] = 1.0
    elif kind == "fixedshare":
        w[t - 1] = 1 - a
        w[0] += a
    elif kind == "uniformpast":
        w[: t - 1] = a / (t - 1)
        w[t - 1] = 1 - a
    elif kind == "decayingpast":
        dist = (t - 1) - np.arange(t - 1, dtype=np.float64)
        raw = dist**-scheme.gamma
        w[: t - 1] = a * raw / raw.sum()
        w[t - 1] = 1 - a
    else:
        for blk in block_weights(scheme, t):
            w[blk.start: blk.stop] = blk.weight / blk.size
        w[t - 1] = 1 - a
    return w


def block_layout(n_past: int) -> list[tuple[int, int]]:
    """Split past indices ``0..n_past-1`` into power-of-two blocks, oldest largest.

    The sizes are the binary digits of ``n_past``, so appending one index and
    merging equal-sized neighbours reproduces the layout of ``n_past + 1``.
    """
    out = []
    start = 0
    for bit in range(max(n_past.bit_length() - 1, 0), -1, -1):
        size = 1 << bit
        if n_past & size:
            out.append((start, start + size))
            start += size
    return out


def block_weights(scheme: MixingScheme, t: int) -> list[Block]:
    """Blocks of older indices with the exact decaying-past mass on each block.

    Index ``t - 1`` is excluded; it carries ``1 - alpha`` separately.
    """
    if scheme.kind not in ("decayingpast", "decayingpast-approx"):
        raise InvalidInputError("block weights are defined for decaying-past schemes")
    if t < 2:
        raise InvalidInputError("block weights need t >= 2")
    n_past = t - 1
    prefix = _prefix(scheme.gamma, n_past)
    z = prefix[n_past]
    blocks = []
    for start, stop in block_layout(n_past):
        # distances from the latest index run from t-1-start down to t-stop
        mass = prefix[t - 1 - start] - prefix[t - 1 - stop]
        blocks.append(Block(start, stop, scheme.alpha * mass / z))
    return blocks


def partition_prior(scheme: MixingScheme, partition) -> float:
    """Prior mass the scheme puts on a partition: product of weights at each predecessor."""
    return math.exp(log_partition_prior(scheme, partition))


def log_partition_prior(scheme: MixingScheme, partition) -> float:
    prev = partition.prev if hasattr(partition, "prev") else tuple(partition)
    total = 0.0
    for t, j in enumerate(prev, start=1):
        w = _single_weight(scheme, t, j)
        if w <= 0:
            return -math.inf
        total += math.log(w)
    return total


def _single_weight(scheme: MixingScheme, t: int, j: int) -> float:
    if not 0 <= j < t:
        raise InvalidInputError(f"predecessor {j} invalid at round {t}")
    if t == 1:
        return 1.0
    a = scheme.alpha
    if j == t - 1:
        return 1.0 if scheme.kind == "yesterday" else 1 - a
    kind = scheme.kind
    if kind == "yesterday":
        return 0.0
    if kind == "fixedshare":
        return a if j == 0 else 0.0
    if kind == "uniformpast":
        return a / (t - 1)
    if kind == "decayingpast":
        prefix = _prefix(scheme.gamma, t - 1)
        return a * (t - 1 - j) ** -scheme.gamma / prefix[t - 1]
    for blk in block_weights(scheme, t):
        if blk.start <= j < blk.stop:
            return blk.weight / blk.size
    raise AssertionError("unreachable")
