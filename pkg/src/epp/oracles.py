"""Brute-force reference computations used to certify the algorithms.

Everything here runs on dense state vectors and ``scipy.sparse`` transition
matrices, independently of the sparse kernels used by the forward algorithm
and the EPP engine.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .distributions import Distribution, PredictionTable, StateVector
from .ehmm import Ehmm
from .engine import Variant
from .errors import CapacityError, InconsistentPartitionError, InvalidInputError, ZeroProbabilityError
from .forward import Prediction, RunTrace, run_learner
from .schemes import MixingScheme, log_partition_prior, weights

MAX_ENUM_T = 10
MAX_META_PATHS = 10**5


# --------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Partition:
    """Partition of ``1..T`` encoded by its predecessor vector.

    ``prev[t - 1]`` is the largest earlier element of ``t``'s cell, or 0 when
    ``t`` opens a new cell.  Positive predecessors are pairwise distinct.
    """

    prev: tuple[int, ...]

    def __post_init__(self):
        prev = tuple(int(p) for p in self.prev)
        object.__setattr__(self, "prev", prev)
        if not prev:
            raise InvalidInputError("partition of an empty range")
        seen = set()
        for t, p in enumerate(prev, start=1):
            if not 0 <= p < t:
                raise InconsistentPartitionError(f"prev({t}) = {p} is not in 0..{t - 1}")
            if p:
                if p in seen:
                    raise InconsistentPartitionError(f"element {p} is the predecessor of two elements")
                seen.add(p)

    @classmethod
    def from_cells(cls, cells: Iterable[Iterable[int]]) -> Partition:
        cells = [sorted(c) for c in cells]
        T = sum(len(c) for c in cells)
        prev = [None] * T
        for c in cells:
            for k, i in enumerate(c):
                if not 1 <= i <= T or prev[i - 1] is not None:
                    raise InvalidInputError("cells must be disjoint and cover 1..T")
                prev[i - 1] = c[k - 1] if k else 0
        return cls(tuple(prev))

    @property
    def T(self) -> int:
        return len(self.prev)

    @property
    def cells(self) -> tuple[tuple[int, ...], ...]:
        succ = {p: t for t, p in enumerate(self.prev, start=1) if p}
        out = []
        for t, p in enumerate(self.prev, start=1):
            if p == 0:
                cell = [t]
                while cell[-1] in succ:
                    cell.append(succ[cell[-1]])
                out.append(tuple(cell))
        return tuple(out)

    def __len__(self):
        return sum(1 for p in self.prev if p == 0)

    def __str__(self):
        return " ".join(str(p) for p in self.prev)


def partition_from_prev(prev: Sequence[int]) -> Partition:
    return Partition(tuple(prev))


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def iter_partitions(T: int) -> Iterator[Partition]:
    """All partitions of ``1..T``; an element may only continue a cell whose end is still open."""
    if T < 1:
        raise InvalidInputError("T must be >= 1")

    def rec(t, prev, open_ends):
        if t > T:
            yield Partition(tuple(prev))
            return
        for p in [0, *sorted(open_ends)]:
            ends = set(open_ends)
            ends.discard(p)
            ends.add(t)
            prev.append(p)
            yield from rec(t + 1, prev, ends)
            prev.pop()

    yield from rec(1, [], set())


def enumerate_partitions(T: int) -> list[Partition]:
    if T > MAX_ENUM_T:
        raise CapacityError(f"T = {T} exceeds the enumeration guard of {MAX_ENUM_T} (Bell({MAX_ENUM_T}) partitions)")
    return list(iter_partitions(T))


# --------------------------------------------------------------------------
# freezing and sleeping compositions


def _transposed(ehmm: Ehmm):
    cached = ehmm.__dict__.get("_oracle_trans_t")
    if cached is None:
        cached = ehmm.transition_matrix().T.tocsr()
        ehmm.__dict__["_oracle_trans_t"] = cached
    return cached


def seeded_cell_pass(
    ehmm: Ehmm,
    start: np.ndarray,
    start_time: int,
    cell: Iterable[int],
    variant,
    table: np.ndarray,
    data: np.ndarray,
    record: bool = False,
):
    """Log-probability of ``x_cell`` under the EHMM seeded with ``start`` at ``start_time``.

    Sleeping runs the hidden state through every round from ``start_time`` to
    the last cell element, emitting only at cell rounds.  Freezing takes one
    transition per cell element; base predictions keep their original rounds.
    ``table`` is the expert-aligned ``(T, E, X)`` array, ``data`` outcome codes.
    Returns ``(log_prob, predictives)``; the list is filled when ``record``.
    """
    variant = Variant.parse(variant)
    cell = sorted(cell)
    if not cell or cell[0] < start_time:
        raise InvalidInputError(f"cell {cell} must be a nonempty subset of {start_time}..T")
    trans_t = _transposed(ehmm)
    vec = np.asarray(start, dtype=np.float64)
    mass = vec.sum()
    if not mass > 0:
        return -math.inf, []
    vec = vec / mass
    logp = math.log(mass)
    members = set(cell)
    rounds = range(start_time, cell[-1] + 1) if variant is Variant.SLEEP else cell
    predictives = []
    for k, s in enumerate(rounds):
        if k:
            vec = trans_t @ vec
        if s not in members:
            continue
        preds_s = table[s - 1]
        if record:
            predictives.append((vec @ ehmm.prod) @ preds_s)
        joint = vec * (ehmm.prod @ preds_s[:, data[s - 1]])
        m = joint.sum()
        if not m > 0:
            return -math.inf, predictives
        logp += math.log(m)
        vec = joint / m
    return logp, predictives


class OracleContext:
    """Aligned predictions, encoded data and memoized cell log-likelihoods."""

    def __init__(self, ehmm: Ehmm, preds: PredictionTable, outcomes):
        self.ehmm = ehmm
        self.data = preds.encode(outcomes)
        self.T = len(self.data)
        self.table = preds.aligned(ehmm.experts)[: self.T]
        self._cache: dict = {}

    def cell_log_likelihood(self, cell, variant) -> float:
        variant = Variant.parse(variant)
        key = (tuple(sorted(cell)), variant)
        if key not in self._cache:
            self._cache[key] = seeded_cell_pass(self.ehmm, self.ehmm.init, 1, key[0], variant, self.table, self.data)[0]
        return self._cache[key]

    def partition_log_likelihood(self, partition: Partition, variant) -> float:
        return sum(self.cell_log_likelihood(c, variant) for c in partition.cells)


def cell_log_likelihood(ehmm, cell, variant, preds, outcomes) -> float:
    return OracleContext(ehmm, preds, outcomes).cell_log_likelihood(cell, variant)


def cell_likelihood(ehmm: Ehmm, cell, variant, preds: PredictionTable, outcomes) -> float:
    """Probability of the cell's outcomes under the frozen or sleeping composition (0 if impossible)."""
    return math.exp(cell_log_likelihood(ehmm, cell, variant, preds, outcomes))


def cell_predictions(ehmm: Ehmm, cell, variant, preds: PredictionTable, outcomes) -> list[np.ndarray]:
    """Predictive outcome distribution at every cell element under the composition."""
    ctx = OracleContext(ehmm, preds, outcomes)
    return seeded_cell_pass(ehmm, ehmm.init, 1, cell, variant, ctx.table, ctx.data, record=True)[1]


def partition_log_likelihood(ehmm, partition, variant, preds, outcomes) -> float:
    return OracleContext(ehmm, preds, outcomes).partition_log_likelihood(partition, variant)


def partition_likelihood(ehmm: Ehmm, partition: Partition, variant, preds: PredictionTable, outcomes) -> float:
    return math.exp(partition_log_likelihood(ehmm, partition, variant, preds, outcomes))


def log_bayes_over_partitions(ehmm, scheme, variant, preds, outcomes) -> float:
    ctx = OracleContext(ehmm, preds, outcomes)
    if ctx.T > MAX_ENUM_T:
        raise CapacityError(f"T = {ctx.T} exceeds the enumeration guard of {MAX_ENUM_T}")
    terms = [log_partition_prior(scheme, p) + ctx.partition_log_likelihood(p, variant) for p in iter_partitions(ctx.T)]
    return float(logsumexp(terms))


def bayes_over_partitions(ehmm: Ehmm, scheme: MixingScheme, variant, preds: PredictionTable, outcomes) -> float:
    """Mixture over all partitions of the per-partition compositions, weighted by the scheme's prior."""
    return math.exp(log_bayes_over_partitions(ehmm, scheme, variant, preds, outcomes))


def partition_terms(ehmm, scheme, variant, preds, outcomes) -> list[tuple[Partition, float, float]]:
    """``(partition, log prior, log likelihood)`` for every partition."""
    ctx = OracleContext(ehmm, preds, outcomes)
    if ctx.T > MAX_ENUM_T:
        raise CapacityError(f"T = {ctx.T} exceeds the enumeration guard of {MAX_ENUM_T}")
    return [
        (p, log_partition_prior(scheme, p), ctx.partition_log_likelihood(p, variant)) for p in iter_partitions(ctx.T)
    ]


# --------------------------------------------------------------------------
# mixing past posteriors over plain experts


def _prior_vector(prior, experts=None) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(prior, (Distribution, Mapping)):
        dist = prior if isinstance(prior, Distribution) else Distribution(prior)
        return tuple(str(e) for e in dist), dist.probs
    if experts is None:
        raise InvalidInputError("array priors need expert names")
    vec = np.asarray(prior, dtype=np.float64)
    Distribution(zip(experts, vec))
    return tuple(experts), vec


class MppState:
    """Table of past posteriors over experts, mixed each round by the scheme."""

    def __init__(self, prior: np.ndarray, scheme: MixingScheme):
        self.scheme = scheme
        self.table = [np.array(prior, dtype=np.float64)]
        self.t = 1
        self.cumulative_log_loss = 0.0

    def expert_weights(self) -> np.ndarray:
        w = weights(self.scheme, self.t)
        out = np.zeros_like(self.table[0])
        for j in np.flatnonzero(w):
            out += w[j] * self.table[j]
        return out

    def predict(self, preds_t: np.ndarray) -> Prediction:
        lam = self.expert_weights()
        return Prediction(lam @ preds_t, lam, StateVector.from_dense(lam))

    def update(self, preds_t: np.ndarray, x: int) -> MppState:
        lam = self.expert_weights()
        joint = lam * preds_t[:, x]
        mass = joint.sum()
        if not mass > 0:
            raise ZeroProbabilityError(self.t)
        self.cumulative_log_loss -= math.log(lam @ preds_t[:, x])
        self.table.append(joint / mass)
        self.t += 1
        return self


def mpp_reference(prior, preds: PredictionTable, outcomes, scheme: MixingScheme) -> RunTrace:
    """Mixing past posteriors on the table's experts, implemented without any EHMM machinery."""
    experts, vec = _prior_vector(prior, preds.experts)
    return run_learner(MppState(vec, scheme), preds, outcomes, experts)


class InContextBayes:
    """Memoized per-cell Bayes mixtures of the experts' in-context predictions."""

    def __init__(self, prior, preds: PredictionTable, outcomes):
        self.experts, w = _prior_vector(prior, preds.experts)
        data = preds.encode(outcomes)
        table = preds.aligned(self.experts)
        with np.errstate(divide="ignore"):
            # log_realized[t, e] = ln p^e_t(x_t)
            self.log_realized = np.log(table[np.arange(len(data)), :, data])
            self.log_w = np.log(w)
        self._cache: dict = {}

    def cell(self, cell) -> float:
        key = tuple(cell)
        if key not in self._cache:
            idx = np.array(key) - 1
            self._cache[key] = float(logsumexp(self.log_w + self.log_realized[idx].sum(axis=0)))
        return self._cache[key]

    def partition(self, partition: Partition) -> float:
        return sum(self.cell(c) for c in partition.cells)


def log_bayes_in_context(prior, partition: Partition, preds: PredictionTable, outcomes) -> float:
    return InContextBayes(prior, preds, outcomes).partition(partition)


def bayes_in_context(prior, partition: Partition, preds: PredictionTable, outcomes) -> float:
    """Per cell, the prior-weighted mixture of experts' in-context predictions; cells multiply."""
    return math.exp(log_bayes_in_context(prior, partition, preds, outcomes))


@dataclass(frozen=True)
class FreundLoss:
    loss: float
    penalty: float | None


def freund_loss(
    partition: Partition,
    assignment,
    preds: PredictionTable,
    outcomes,
    scheme: MixingScheme | None = None,
) -> FreundLoss:
    """Loss of the selected expert on each cell, plus the uniform-prior encoding penalty.

    ``assignment`` maps cell position (or the cell tuple) to an expert, or is a
    sequence aligned with ``partition.cells``.  Zero probabilities give ``inf``.
    """
    data = preds.encode(outcomes)
    cells = partition.cells
    if isinstance(assignment, Mapping):
        chosen = [assignment[c] if c in assignment else assignment[k] for k, c in enumerate(cells)]
    else:
        chosen = list(assignment)
    if len(chosen) != len(cells):
        raise InvalidInputError("assignment must name one expert per cell")
    loss = 0.0
    for cell, expert in zip(cells, chosen):
        e = preds.experts.index(str(expert))
        for i in cell:
            p = preds.probs[i - 1, e, data[i - 1]]
            loss += math.inf if p <= 0 else -math.log(p)
    penalty = None
    if scheme is not None:
        penalty = -log_partition_prior(scheme, partition) + len(cells) * math.log(len(preds.experts))
    return FreundLoss(loss, penalty)


# --------------------------------------------------------------------------
# reductions and adversarial constructions


def path_meta_experts(ehmm: Ehmm, preds: PredictionTable):
    """Meta-experts indexed by hidden-state paths of length ``preds.horizon``.

    Returns ``(names, prior, table)``: the prior is the EHMM's path measure and
    path ``q_1..q_T`` predicts round ``t`` with the ``prod(q_t)``-mixture of the
    base experts.  Only paths with positive prior are kept.
    """
    T = preds.horizon
    n = ehmm.n_states
    if n**T > MAX_META_PATHS:
        raise CapacityError(f"{n}^{T} paths exceed the guard of {MAX_META_PATHS}")
    dense = ehmm.transition_matrix().toarray()
    base = preds.aligned(ehmm.experts)
    names, prior, rows = [], [], []
    for path in itertools.product(range(n), repeat=T):
        p = ehmm.init[path[0]]
        for a, b in itertools.pairwise(path):
            p *= dense[a, b]
        if p <= 0:
            continue
        names.append(">".join(str(ehmm.states[q]) for q in path))
        prior.append(p)
        rows.append([ehmm.prod[q] @ base[t] for t, q in enumerate(path)])
    table = PredictionTable(names, preds.outcomes, np.transpose(np.array(rows), (1, 0, 2)))
    prior = np.array(prior)
    return names, prior / prior.sum(), table


def adversarial_instance(T: int, eps_floor: float, n_outcomes: int = 2):
    """``T`` experts where expert ``t`` is nearly certain at round ``t`` and wrong elsewhere.

    Returns ``(prior, table, outcomes)`` with a uniform prior.  At round ``t``
    expert ``t`` gives the realized outcome ``1 - (|X| - 1) eps`` and every
    other expert gives it ``eps``.
    """
    if T < 2:
        raise InvalidInputError("adversarial instance needs T >= 2")
    if not 0 < eps_floor <= 1.0 / n_outcomes:
        raise InvalidInputError(f"eps floor must lie in (0, 1/{n_outcomes}]")
    outcomes = [str(x) for x in range(n_outcomes)]
    data = [outcomes[t % n_outcomes] for t in range(T)]
    experts = [f"x{t + 1}" for t in range(T)]
    probs = np.empty((T, T, n_outcomes))
    for t in range(T):
        x = t % n_outcomes
        for e in range(T):
            if e == t:
                row = np.full(n_outcomes, eps_floor)
                row[x] = 1 - (n_outcomes - 1) * eps_floor
            else:
                row = np.full(n_outcomes, (1 - eps_floor) / (n_outcomes - 1))
                row[x] = eps_floor
            probs[t, e] = row
    return Distribution.uniform(experts), PredictionTable(experts, outcomes, probs), data
