"""Small value types: finite distributions, sparse state vectors, prediction tables."""

from __future__ import annotations

from collections.abc import Hashable, Iterable, Mapping, Sequence
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError

NORM_TOL = 1e-9


class Distribution(Mapping):
    """A finite probability distribution over hashable items.

    Insertion order of the support is preserved.  Pass ``subnormalized=True``
    for defective weightings whose total mass is at most one.
    """

    __slots__ = ("_items", "_probs", "_index")

    def __init__(self, support, *, subnormalized: bool = False, tol: float = NORM_TOL):
        if isinstance(support, Mapping):
            pairs = list(support.items())
        else:
            pairs = list(support)
        items = tuple(item for item, _ in pairs)
        probs = np.array([float(p) for _, p in pairs], dtype=np.float64)
        index = {item: i for i, item in enumerate(items)}
        if len(index) != len(items):
            raise InvalidInputError("duplicate items in distribution support")
        if not items:
            raise InvalidInputError("distribution has empty support")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidInputError("probabilities must be finite and nonnegative")
        total = probs.sum()
        if subnormalized:
            if total > 1 + tol:
                raise InvalidInputError(f"sub-normalized mass {total} exceeds 1")
        elif abs(total - 1.0) > tol:
            raise InvalidInputError(f"probabilities sum to {total}, not 1")
        self._items = items
        self._probs = probs
        self._index = index

    @classmethod
    def uniform(cls, items: Iterable[Hashable]) -> Distribution:
        items = list(items)
        return cls([(item, 1.0 / len(items)) for item in items])

    @classmethod
    def point(cls, item: Hashable) -> Distribution:
        return cls([(item, 1.0)])

    @property
    def support(self) -> tuple:
        return self._items

    @property
    def probs(self) -> np.ndarray:
        return self._probs.copy()

    def __getitem__(self, item):
        return float(self._probs[self._index[item]])

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def total(self) -> float:
        return float(self._probs.sum())

    def __repr__(self):
        body = ", ".join(f"{item!r}: {p:.6g}" for item, p in zip(self._items, self._probs))
        return f"Distribution({{{body}}})"


class StateVector(NamedTuple):
    """Sparse nonnegative vector over state indices (sorted ``idx``)."""

    idx: np.ndarray
    val: np.ndarray

    @classmethod
    def from_dense(cls, vec: np.ndarray) -> StateVector:
        idx = np.flatnonzero(vec)
        return cls(idx.astype(np.int64), np.asarray(vec, dtype=np.float64)[idx])

    def dense(self, n_states: int) -> np.ndarray:
        out = np.zeros(n_states)
        out[self.idx] = self.val
        return out

    def total(self) -> float:
        return float(self.val.sum())

    def scaled(self, c: float) -> StateVector:
        return StateVector(self.idx, self.val * c)


class PredictionTable:
    """Per-round, per-expert distributions over a finite outcome alphabet.

    ``probs[t - 1, e, x]`` is expert ``experts[e]``'s probability of outcome
    ``outcomes[x]`` at round ``t``.  Outcome tokens are strings.
    """

    def __init__(self, experts: Sequence[str], outcomes: Sequence, probs, *, tol: float = NORM_TOL):
        self.experts = tuple(str(e) for e in experts)
        self.outcomes = tuple(str(x) for x in outcomes)
        probs = np.array(probs, dtype=np.float64)
        if probs.ndim != 3 or probs.shape[1:] != (len(self.experts), len(self.outcomes)):
            raise InvalidInputError(
                f"prediction array shape {probs.shape} does not match "
                f"(T, {len(self.experts)}, {len(self.outcomes)})"
            )
        if probs.shape[0] < 1:
            raise InvalidInputError("prediction table needs horizon T >= 1")
        if len(set(self.experts)) != len(self.experts) or len(set(self.outcomes)) != len(self.outcomes):
            raise InvalidInputError("duplicate expert or outcome names")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidInputError("predictions must be finite and nonnegative")
        sums = probs.sum(axis=2)
        bad = np.abs(sums - 1.0) > tol
        if np.any(bad):
            t, e = np.argwhere(bad)[0]
            raise InvalidInputError(
                f"prediction of expert {self.experts[e]!r} at round {t + 1} sums to {sums[t, e]}"
            )
        probs.setflags(write=False)
        self.probs = probs
        self._outcome_index = {x: i for i, x in enumerate(self.outcomes)}

    @classmethod
    def constant(cls, per_expert: Mapping[str, Mapping], horizon: int, outcomes=None) -> PredictionTable:
        """Every expert issues the same distribution in every round."""
        experts = list(per_expert)
        if outcomes is None:
            outcomes = sorted({str(x) for d in per_expert.values() for x in d})
        outcomes = [str(x) for x in outcomes]
        row = np.zeros((len(experts), len(outcomes)))
        for e, name in enumerate(experts):
            for x, p in per_expert[name].items():
                row[e, outcomes.index(str(x))] = p
        return cls(experts, outcomes, np.broadcast_to(row, (horizon, *row.shape)))

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    def entry(self, t: int, expert: str, x) -> float:
        return float(self.probs[t - 1, self.experts.index(expert), self._outcome_index[str(x)]])

    def encode(self, data: Iterable) -> np.ndarray:
        """Map outcome tokens to column indices."""
        try:
            return np.array([self._outcome_index[str(x)] for x in data], dtype=np.int64)
        except KeyError as exc:
            raise InvalidInputError(f"outcome {exc.args[0]!r} not in alphabet {self.outcomes}") from None

    def decode(self, codes: Iterable[int]) -> list[str]:
        return [self.outcomes[int(c)] for c in codes]

    def aligned(self, experts: Sequence[str]) -> np.ndarray:
        """Prediction array with the expert axis reordered to ``experts``."""
        try:
            order = [self.experts.index(e) for e in experts]
        except ValueError:
            missing = sorted(set(experts) - set(self.experts))
            raise InvalidInputError(f"prediction table lacks experts {missing}") from None
        return self.probs[:, order, :]

    def with_floor(self, eps: float) -> PredictionTable:
        """Mix every prediction with the uniform distribution so each entry is >= eps."""
        k = len(self.outcomes)
        if not 0 < eps <= 1.0 / k:
            raise InvalidInputError(f"eps floor must lie in (0, 1/{k}]")
        return PredictionTable(self.experts, self.outcomes, (1 - k * eps) * self.probs + eps)

    def truncated(self, horizon: int) -> PredictionTable:
        return PredictionTable(self.experts, self.outcomes, self.probs[:horizon])

    def __repr__(self):
        return f"PredictionTable(T={self.horizon}, experts={self.experts}, outcomes={self.outcomes})"
