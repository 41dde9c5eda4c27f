"""Evolving past posteriors (EPP), freezing and sleeping variants.

Each round the configuration is the scheme-weighted mixture of the stored
past posteriors; prediction then proceeds exactly as in the forward
algorithm.  After the outcome, the configuration is conditioned and evolved
into the next past posterior.  The sleeping variant additionally evolves every
stored posterior by one transition, so that all of them describe the current
round's hidden state.

How past posteriors are stored depends on the scheme:

* ``yesterday`` / ``fixedshare`` need only the first and the latest posterior;
* ``uniformpast`` keeps a running sum of the older posteriors;
* ``decayingpast-approx`` keeps one running sum per power-of-two block;
* ``decayingpast`` (exact) keeps every posterior.

``fast=False`` forces the last, naive store for any scheme.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import _kernels
from .distributions import PredictionTable, StateVector
from .ehmm import Ehmm
from .errors import InvalidInputError
from .forward import (
    Prediction,
    RunTrace,
    check_outcome,
    condition_and_evolve,
    evolve,
    expert_weights,
    initial_vector,
    predict,
    run_learner,
)
from .schemes import MixingScheme, block_layout, block_weights, weights

__all__ = ["EppState", "Variant", "epp_init", "epp_predict", "epp_run", "epp_update"]


class Variant(str, Enum):
    FREEZE = "freeze"
    SLEEP = "sleep"

    @classmethod
    def parse(cls, value) -> Variant:
        if isinstance(value, Variant):
            return value
        v = str(value).lower()
        aliases = {"fr": "freeze", "freezing": "freeze", "sl": "sleep", "sleeping": "sleep"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise InvalidInputError(f"unknown EPP variant {value!r}") from None


def _mix(parts: list[tuple[float, StateVector]]) -> StateVector:
    parts = [(w, v) for w, v in parts if w > 0 and v.idx.size]
    if len(parts) == 1 and parts[0][0] == 1.0:
        return parts[0][1]
    keys = np.concatenate([v.idx for _, v in parts])
    vals = np.concatenate([w * v.val for w, v in parts])
    return StateVector(*_kernels.coalesce(keys, vals))


def _add(a: StateVector, b: StateVector) -> StateVector:
    return StateVector(*_kernels.coalesce(np.concatenate([a.idx, b.idx]), np.concatenate([a.val, b.val])))


class _PointStore:
    """First and latest posterior only (yesterday, fixed share)."""

    def __init__(self, v1: StateVector, keep_first: bool):
        self.keep_first = keep_first
        self.first = v1 if keep_first else None
        self.latest = v1

    def configuration(self, scheme, t):
        if t == 1:
            return self.latest
        w = weights(scheme, t)
        parts = [(w[t - 1], self.latest)]
        if self.keep_first:
            parts.insert(0, (w[0], self.first))
        return _mix(parts)

    def evolve(self, ehmm):
        if self.keep_first:
            self.first = evolve(ehmm, self.first)
        self.latest = evolve(ehmm, self.latest)

    def append(self, v):
        self.latest = v


class _UniformStore:
    """Latest posterior plus the running sum of all older ones."""

    def __init__(self, v1: StateVector):
        self.latest = v1
        self.older = StateVector(np.empty(0, np.int64), np.empty(0))
        self.count = 0

    def configuration(self, scheme, t):
        if t == 1:
            return self.latest
        a = scheme.alpha
        return _mix([(1 - a, self.latest), (a / self.count, self.older)])

    def evolve(self, ehmm):
        self.latest = evolve(ehmm, self.latest)
        if self.count:
            self.older = evolve(ehmm, self.older)

    def append(self, v):
        self.older = _add(self.older, self.latest) if self.count else self.latest
        self.count += 1
        self.latest = v

    @property
    def fast_sum(self) -> StateVector:
        """Sum of every stored posterior, the latest included."""
        return _add(self.older, self.latest) if self.count else self.latest


class _BlockStore:
    """Latest posterior plus one running sum per power-of-two block of older ones."""

    def __init__(self, v1: StateVector):
        self.latest = v1
        self.blocks: list[list] = []  # [size, sum]

    def configuration(self, scheme, t):
        if t == 1:
            return self.latest
        layout = block_weights(scheme, t)
        assert [b.size for b in layout] == [size for size, _ in self.blocks]
        parts = [(1 - scheme.alpha, self.latest)]
        parts += [(blk.weight / blk.size, total) for blk, (_, total) in zip(layout, self.blocks)]
        return _mix(parts)

    def evolve(self, ehmm):
        self.latest = evolve(ehmm, self.latest)
        for blk in self.blocks:
            blk[1] = evolve(ehmm, blk[1])

    def append(self, v):
        self.blocks.append([1, self.latest])
        while len(self.blocks) > 1 and self.blocks[-1][0] == self.blocks[-2][0]:
            size, total = self.blocks.pop()
            self.blocks[-1] = [2 * size, _add(self.blocks[-1][1], total)]
        self.latest = v


class _NaiveStore:
    """Every past posterior, held as one table of ``(row, state)`` keys."""

    def __init__(self, v1: StateVector, n_states: int):
        self.n = n_states
        self.keys = v1.idx.copy()
        self.vals = v1.val.copy()
        self.rows = 1

    def configuration(self, scheme, t):
        w = weights(scheme, t)
        row = self.keys // self.n
        sel = w[row] > 0
        state = self.keys[sel] - row[sel] * self.n
        if np.all(w[row[sel]] == 1.0):
            return StateVector(state, self.vals[sel])
        return StateVector(*_kernels.coalesce(state, self.vals[sel] * w[row[sel]]))

    def evolve(self, ehmm):
        self.keys, self.vals = _kernels.push_forward(
            self.keys, self.vals, ehmm.n_states, ehmm.indptr, ehmm.indices, ehmm.probs
        )

    def append(self, v):
        self.keys = np.concatenate([self.keys, v.idx + self.rows * self.n])
        self.vals = np.concatenate([self.vals, v.val])
        self.rows += 1

    def posterior(self, j: int) -> StateVector:
        """Stored posterior ``v_j`` (1-based), as currently evolved."""
        lo, hi = np.searchsorted(self.keys, [(j - 1) * self.n, j * self.n])
        return StateVector(self.keys[lo:hi] - (j - 1) * self.n, self.vals[lo:hi])


class EppState:
    """Mutable state of one EPP run; single-threaded."""

    def __init__(self, ehmm: Ehmm, scheme: MixingScheme, variant=Variant.FREEZE, fast: bool = True):
        self.ehmm = ehmm
        self.scheme = scheme
        self.variant = Variant.parse(variant)
        self.t = 1
        self.cumulative_log_loss = 0.0
        self.max_drift = 0.0
        v1 = initial_vector(ehmm)
        kind = scheme.kind
        if not fast or kind == "decayingpast":
            self._store = _NaiveStore(v1, ehmm.n_states)
        elif kind in ("yesterday", "fixedshare"):
            self._store = _PointStore(v1, keep_first=kind == "fixedshare")
        elif kind == "uniformpast":
            self._store = _UniformStore(v1)
        else:
            self._store = _BlockStore(v1)

    @property
    def store_kind(self) -> str:
        return type(self._store).__name__.strip("_").replace("Store", "").lower()

    def configuration(self) -> StateVector:
        return self._store.configuration(self.scheme, self.t)

    def predict(self, preds_t: np.ndarray) -> Prediction:
        return predict(self.ehmm, self.configuration(), preds_t)

    def expert_weights(self) -> np.ndarray:
        return expert_weights(self.ehmm, self.configuration())

    def update(self, preds_t: np.ndarray, x: int) -> EppState:
        config = self.configuration()
        pred = predict(self.ehmm, config, preds_t)
        loss = check_outcome(pred.predictive, x, self.t)
        nxt, drift = condition_and_evolve(self.ehmm, config, preds_t, x, self.t)
        if self.variant is Variant.SLEEP:
            self._store.evolve(self.ehmm)
        self._store.append(nxt)
        self.max_drift = max(self.max_drift, drift)
        self.cumulative_log_loss += loss
        self.t += 1
        return self

    @property
    def past_posteriors(self) -> list[StateVector]:
        """``v_1 .. v_t`` when every posterior is stored (naive store only)."""
        if not isinstance(self._store, _NaiveStore):
            raise AttributeError(f"{self.store_kind} store does not retain individual posteriors")
        return [self._store.posterior(j) for j in range(1, self._store.rows + 1)]

    @property
    def fast_sum(self) -> StateVector:
        if not isinstance(self._store, _UniformStore):
            raise AttributeError("running sum exists only for the uniform-past store")
        return self._store.fast_sum

    @property
    def block_sizes(self) -> list[int]:
        if not isinstance(self._store, _BlockStore):
            raise AttributeError("blocks exist only for the decaying-past approximation")
        return [size for size, _ in self._store.blocks]


def epp_init(ehmm: Ehmm, scheme: MixingScheme, variant=Variant.FREEZE, fast: bool = True) -> EppState:
    return EppState(ehmm, scheme, variant, fast)


def epp_predict(state: EppState, preds_t: np.ndarray) -> Prediction:
    """Predictive outcome distribution, expert weights and configuration; does not mutate."""
    return state.predict(preds_t)


def epp_update(state: EppState, preds_t: np.ndarray, x: int) -> EppState:
    """Loss update and state evolution for outcome code ``x``; the state is unchanged on error."""
    return state.update(preds_t, x)


def epp_run(
    ehmm: Ehmm,
    scheme: MixingScheme,
    variant,
    preds: PredictionTable,
    outcomes,
    fast: bool = True,
    keep_configurations: bool = False,
) -> RunTrace:
    state = EppState(ehmm, scheme, variant, fast)
    trace = run_learner(state, preds, outcomes, ehmm.experts, keep_configurations)
    trace.diagnostics["store"] = state.store_kind
    return trace
