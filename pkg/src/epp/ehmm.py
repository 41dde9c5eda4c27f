"""Expert hidden Markov models and their standard constructions."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .distributions import NORM_TOL, Distribution, PredictionTable
from .errors import CapacityError, InvalidInputError

__all__ = [
    "Ehmm",
    "LayerInfo",
    "bayes_ehmm",
    "bayes_mixture",
    "chain_ehmm",
    "equivalent",
    "from_hmm",
    "laplace_ehmm",
    "layers",
    "slot_machine",
]


class Ehmm:
    """An expert hidden Markov model over a finite (possibly horizon-truncated) state set.

    Transitions are stored in CSR form: the successors of state ``q`` are
    ``indices[indptr[q]:indptr[q+1]]`` with probabilities ``probs[...]``.
    ``prod[q, e]`` is the probability that state ``q`` hands the prediction to
    expert ``experts[e]``.  Instances are immutable and safe to share.
    """

    def __init__(self, experts, states, init, transitions, prod, *, name: str = "ehmm", validate: bool = True):
        self.experts = tuple(str(e) for e in experts)
        self.states = states if isinstance(states, _LaplaceStates) else tuple(states)
        self.name = name
        n = len(self.states)
        self.init = np.array(init, dtype=np.float64)
        if sp.issparse(transitions):
            mat = sp.csr_matrix(transitions, dtype=np.float64)
        else:
            mat = sp.csr_matrix(np.asarray(transitions, dtype=np.float64))
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        self.indptr = mat.indptr.astype(np.int64)
        self.indices = mat.indices.astype(np.int64)
        self.probs = mat.data.astype(np.float64)
        self.prod = np.array(prod, dtype=np.float64)
        for arr in (self.init, self.indptr, self.indices, self.probs, self.prod):
            arr.setflags(write=False)
        self._index = None
        if validate:
            self._validate(n)

    def _validate(self, n: int):
        if len(set(self.experts)) != len(self.experts):
            raise InvalidInputError("duplicate expert names")
        if self.init.shape != (n,):
            raise InvalidInputError(f"init has shape {self.init.shape}, expected ({n},)")
        if self.indptr.shape != (n + 1,):
            raise InvalidInputError("transition matrix must be square over the state set")
        if self.prod.shape != (n, len(self.experts)):
            raise InvalidInputError(f"production matrix has shape {self.prod.shape}, expected ({n}, {len(self.experts)})")
        if np.any(self.init < 0) or abs(self.init.sum() - 1) > NORM_TOL:
            raise InvalidInputError("initial distribution is not a distribution")
        if np.any(self.probs < 0):
            raise InvalidInputError("negative transition probability")
        row_sums = np.add.reduceat(self.probs, self.indptr[:-1]) if self.probs.size else np.zeros(0)
        counts = np.diff(self.indptr)
        if np.any(counts == 0):
            q = int(np.flatnonzero(counts == 0)[0])
            raise InvalidInputError(f"state {self.states[q]!r} has no outgoing transitions")
        if np.any(np.abs(row_sums - 1) > NORM_TOL):
            q = int(np.flatnonzero(np.abs(row_sums - 1) > NORM_TOL)[0])
            raise InvalidInputError(f"transitions from {self.states[q]!r} sum to {row_sums[q]}")
        if np.any(self.prod < 0) or np.any(np.abs(self.prod.sum(axis=1) - 1) > NORM_TOL):
            raise InvalidInputError("production function rows must be distributions over experts")

    @classmethod
    def from_dicts(cls, experts, init: Mapping, trans: Mapping, prod: Mapping, states=None, name="ehmm") -> Ehmm:
        """Build from nested mappings ``trans[q][q'] = p`` and ``prod[q][e] = p``."""
        experts = [str(e) for e in experts]
        if states is None:
            states = list(dict.fromkeys([*init, *trans, *prod]))
        index = {q: i for i, q in enumerate(states)}
        n = len(states)

        def lookup(q):
            try:
                return index[q]
            except KeyError:
                raise InvalidInputError(f"unknown state {q!r}") from None

        init_vec = np.zeros(n)
        for q, p in Distribution(init).items():
            init_vec[lookup(q)] = p
        rows, cols, vals = [], [], []
        for q in states:
            if q not in trans:
                raise InvalidInputError(f"missing transitions for state {q!r}")
            for q2, p in Distribution(trans[q]).items():
                rows.append(index[q])
                cols.append(lookup(q2))
                vals.append(p)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        prod_mat = np.zeros((n, len(experts)))
        for q in states:
            if q not in prod:
                raise InvalidInputError(f"missing production for state {q!r}")
            for e, p in Distribution(prod[q]).items():
                if str(e) not in experts:
                    if p > 0:
                        raise InvalidInputError(f"state {q!r} produces unknown expert {e!r}")
                    continue
                prod_mat[index[q], experts.index(str(e))] = p
        return cls(experts, states, init_vec, mat, prod_mat, name=name)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    def state_index(self, q) -> int:
        if isinstance(self.states, _LaplaceStates):
            return self.states.index(q)
        if self._index is None:
            self._index = {s: i for i, s in enumerate(self.states)}
        return self._index[q]

    def init_distribution(self) -> Distribution:
        nz = np.flatnonzero(self.init)
        return Distribution([(self.states[i], self.init[i]) for i in nz])

    def trans(self, q) -> Distribution:
        i = self.state_index(q)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return Distribution([(self.states[j], p) for j, p in zip(self.indices[lo:hi], self.probs[lo:hi])])

    def production(self, q) -> Distribution:
        row = self.prod[self.state_index(q)]
        return Distribution([(e, row[k]) for k, e in enumerate(self.experts) if row[k] > 0])

    def transition_matrix(self) -> sp.csr_matrix:
        n = self.n_states
        return sp.csr_matrix((self.probs, self.indices, self.indptr), shape=(n, n))

    def with_init(self, init) -> Ehmm:
        """Same transition and production functions, different initial distribution."""
        out = object.__new__(Ehmm)
        out.__dict__.update(self.__dict__)
        out.init = np.array(init, dtype=np.float64)
        out.init.setflags(write=False)
        return out

    def reorder_experts(self, experts: Sequence[str]) -> Ehmm:
        if sorted(experts) != sorted(self.experts):
            raise InvalidInputError("expert sets differ")
        order = [self.experts.index(e) for e in experts]
        out = object.__new__(Ehmm)
        out.__dict__.update(self.__dict__)
        out.experts = tuple(experts)
        out.prod = self.prod[:, order]
        out.prod.setflags(write=False)
        return out

    def __repr__(self):
        return f"Ehmm({self.name!r}, states={self.n_states}, experts={self.experts})"


def bayes_ehmm(prior) -> Ehmm:
    """Bayesian mixture of base experts: one self-looping state per expert."""
    prior = prior if isinstance(prior, Distribution) else Distribution(prior)
    experts = [str(e) for e in prior]
    k = len(experts)
    return Ehmm(experts, experts, prior.probs, sp.identity(k, format="csr"), np.eye(k), name="bayes")


def chain_ehmm(experts=("a", "b")) -> Ehmm:
    """The two-step chain: start in ``a``, move to ``b`` and stay there."""
    a, b = experts
    return Ehmm.from_dicts(
        [a, b],
        init={a: 1.0},
        trans={a: {b: 1.0}, b: {b: 1.0}},
        prod={a: {a: 1.0}, b: {b: 1.0}},
        name="chain",
    )


def from_hmm(states, init: Mapping, trans: Mapping, emissions: Mapping, outcomes=None):
    """Turn an ordinary HMM into an EHMM with one expert per state.

    Returns ``(ehmm, make_table)`` where ``make_table(T)`` builds the
    prediction table in which expert ``q`` always predicts ``emissions[q]``.
    """
    states = list(states)
    names = [str(q) for q in states]
    ehmm = Ehmm.from_dicts(
        names,
        init={str(q): p for q, p in init.items()},
        trans={str(q): {str(r): p for r, p in trans[q].items()} for q in states},
        prod={str(q): {str(q): 1.0} for q in states},
        states=names,
        name="hmm",
    )
    for q in states:
        Distribution(emissions[q])
    if outcomes is None:
        outcomes = sorted({str(x) for q in states for x in emissions[q]})

    def make_table(horizon: int) -> PredictionTable:
        return PredictionTable.constant({str(q): emissions[q] for q in states}, horizon, outcomes)

    return ehmm, make_table


def slot_machine():
    """The gambler's three-state slot machine (Cold, Hot, Jackpot); payouts in nickels."""
    states = ["Cold", "Hot", "Jackpot"]
    trans = {
        "Cold": {"Cold": 0.99, "Hot": 0.01},
        "Hot": {"Hot": 0.9, "Jackpot": 0.1},
        "Jackpot": {"Cold": 1.0},
    }
    emissions = {
        "Cold": {0: 1.0},
        "Hot": {k: 0.2 for k in range(1, 6)},
        "Jackpot": {10: 1.0},
    }
    ehmm, make_table = from_hmm(states, {"Cold": 1.0}, trans, emissions, outcomes=["0", "1", "2", "3", "4", "5", "10"])
    ehmm.name = "slotmachine"
    return ehmm, make_table


def bayes_mixture(ehmms: Sequence[Ehmm], prior) -> Ehmm:
    """Bayesian mixture of EHMMs over the same experts; states are tagged ``(i, q)``."""
    if not ehmms:
        raise InvalidInputError("need at least one EHMM")
    prior = prior if isinstance(prior, Distribution) else Distribution(prior)
    weights = [prior[i] if i in prior else 0.0 for i in range(len(ehmms))]
    if set(prior) - set(range(len(ehmms))):
        raise InvalidInputError("prior must be indexed by component position")
    experts = ehmms[0].experts
    for e in ehmms[1:]:
        if sorted(e.experts) != sorted(experts):
            raise InvalidInputError("mixture components must share the same experts")
    parts = [e.reorder_experts(experts) for e in ehmms]
    states = [(i, q) for i, e in enumerate(parts) for q in e.states]
    init = np.concatenate([w * e.init for w, e in zip(weights, parts)])
    trans = sp.block_diag([e.transition_matrix() for e in parts], format="csr")
    prod = np.vstack([e.prod for e in parts])
    return Ehmm(experts, states, init, trans, prod, name="mixture")


class _LaplaceStates(Sequence):
    """Lazy labels ``(n0, n1, b)`` for the layered Bernoulli-mixture EHMM."""

    def __init__(self, n_layers: int):
        self.n_layers = n_layers

    def __len__(self):
        return self.n_layers * (self.n_layers + 1)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        # layer t occupies [(t-1)t, t(t+1))
        t = int((1 + np.sqrt(1 + 4 * i)) // 2)
        while (t - 1) * t > i:
            t -= 1
        while t * (t + 1) <= i:
            t += 1
        r = i - (t - 1) * t
        n1, b = divmod(r, 2)
        return (t - 1 - n1, n1, b)

    def index(self, label, *args):
        n0, n1, b = label
        t = n0 + n1 + 1
        if n0 < 0 or n1 < 0 or b not in (0, 1) or t > self.n_layers:
            raise ValueError(f"{label!r} is not a state")
        return (t - 1) * t + 2 * n1 + b

    def __contains__(self, label):
        try:
            self.index(label)
        except (ValueError, TypeError):
            return False
        return True


def laplace_ehmm(horizon: int):
    """Layered EHMM whose outcome marginal is the uniform-prior Bernoulli mixture.

    States ``(n0, n1, b)`` hold the counts of zeros and ones seen so far and the
    symbol ``b`` about to be produced; expert ``e<b>`` predicts ``b`` with
    certainty.  Layer ``t`` (states with ``n0 + n1 = t - 1``) has ``2t``
    states.  Layers ``1..horizon+1`` are materialized; the last one is
    absorbing, so runs of length at most ``horizon`` are exact.

    Returns ``(ehmm, table)`` with the base-expert prediction table.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    n_layers = horizon + 1
    n = n_layers * (n_layers + 1)
    rows, cols, vals = [], [], []
    for t in range(1, n_layers):
        n1 = np.repeat(np.arange(t), 2)
        b = np.tile([0, 1], t)
        src = (t - 1) * t + 2 * n1 + b
        n1_next = n1 + b
        n0_next = (t - 1 - n1) + (1 - b)
        dst_base = t * (t + 1) + 2 * n1_next
        rows += [src, src]
        cols += [dst_base, dst_base + 1]
        vals += [(n0_next + 1) / (t + 2), (n1_next + 1) / (t + 2)]
    last = np.arange(horizon * n_layers, n)
    rows.append(last)
    cols.append(last)
    vals.append(np.ones(last.size))
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    init = np.zeros(n)
    init[[0, 1]] = 0.5
    prod = np.zeros((n, 2))
    prod[np.arange(n), np.arange(n) % 2] = 1.0
    ehmm = Ehmm(["e0", "e1"], _LaplaceStates(n_layers), init, mat, prod, name="laplace")
    table = PredictionTable.constant({"e0": {"0": 1.0}, "e1": {"1": 1.0}}, horizon, ["0", "1"])
    return ehmm, table


@dataclass(frozen=True, eq=False)
class LayerInfo:
    """Reachable-state layers: ``q_t`` in exactly ``t`` steps, ``q_le_t`` in at most ``t``."""

    t: int
    q_t: np.ndarray
    q_le_t: np.ndarray
    ehmm: Ehmm

    def n_transitions(self, states: np.ndarray | None = None) -> int:
        """Number of outgoing transitions from ``states`` (default ``q_t``)."""
        s = self.q_t if states is None else np.asarray(states, dtype=np.int64)
        return int(np.sum(self.ehmm.indptr[s + 1] - self.ehmm.indptr[s]))

    @property
    def states_t(self) -> set:
        return {self.ehmm.states[i] for i in self.q_t}

    @property
    def states_le_t(self) -> set:
        return {self.ehmm.states[i] for i in self.q_le_t}


def _successors(ehmm: Ehmm, states: np.ndarray) -> np.ndarray:
    if states.size == 0:
        return states
    chunks = [ehmm.indices[ehmm.indptr[q]: ehmm.indptr[q + 1]] for q in states]
    return np.unique(np.concatenate(chunks))


def layers(ehmm: Ehmm, t: int) -> LayerInfo:
    if t < 1:
        raise InvalidInputError("t must be >= 1")
    q = np.flatnonzero(ehmm.init > 0).astype(np.int64)
    seen = q
    for _ in range(t - 1):
        q = _successors(ehmm, q)
        seen = np.union1d(seen, q)
    return LayerInfo(t, q, seen, ehmm)


MAX_EXPERT_SEQUENCES = 10**6


def expert_sequence_marginals(ehmm: Ehmm, horizon: int) -> np.ndarray:
    """Probability of each expert sequence of length ``horizon`` (lexicographic order)."""
    m_total = ehmm.n_experts**horizon
    if m_total > MAX_EXPERT_SEQUENCES:
        raise CapacityError(f"{m_total} expert sequences exceed the guard of {MAX_EXPERT_SEQUENCES}")
    if m_total * ehmm.n_states > 5 * 10**7:
        raise CapacityError("expert-sequence enumeration would need too much memory")
    trans_t = ehmm.transition_matrix().T.tocsr()
    alpha = ehmm.init[None, :]
    for k in range(horizon):
        m = alpha.shape[0]
        alpha = (alpha[:, None, :] * ehmm.prod.T[None, :, :]).reshape(m * ehmm.n_experts, ehmm.n_states)
        if k < horizon - 1:
            alpha = np.asarray((trans_t @ alpha.T).T)
    return alpha.sum(axis=1)


def equivalent(e1: Ehmm, e2: Ehmm, horizon: int, tol: float = 1e-12) -> bool:
    """True iff both EHMMs give every expert sequence of length ``horizon`` the same probability."""
    if sorted(e1.experts) != sorted(e2.experts):
        raise InvalidInputError("equivalence needs the same expert set")
    e2 = e2.reorder_experts(e1.experts)
    a = expert_sequence_marginals(e1, horizon)
    b = expert_sequence_marginals(e2, horizon)
    return bool(np.max(np.abs(a - b)) <= tol)


def split_state(ehmm: Ehmm, q: int, fraction: float) -> Ehmm:
    """Equivalent EHMM in which state index ``q`` is split into two copies.

    Incoming mass (initial and transition) goes to the copies in proportion
    ``fraction : 1 - fraction``; both copies keep the outgoing transitions and
    production of the original.
    """
    if not 0 < fraction < 1:
        raise InvalidInputError("fraction must lie strictly between 0 and 1")
    n = ehmm.n_states
    dense = ehmm.transition_matrix().toarray()
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = dense
    big[n, :n] = dense[q]
    big[:, n] = big[:, q] * (1 - fraction)
    big[:, q] *= fraction
    init = np.append(ehmm.init, ehmm.init[q] * (1 - fraction))
    init[q] *= fraction
    prod = np.vstack([ehmm.prod, ehmm.prod[q]])
    states = [*ehmm.states, (ehmm.states[q], "copy")]
    return Ehmm(ehmm.experts, states, init, big, prod, name=f"{ehmm.name}-split")


def random_ehmm(rng: np.random.Generator, n_states: int, experts: Sequence[str], sparsity: float = 0.3) -> Ehmm:
    """Random EHMM with Dirichlet rows, some entries zeroed to vary supports."""

    def row(k):
        v = rng.dirichlet(np.ones(k))
        if k > 1:
            mask = rng.random(k) < sparsity
            mask[rng.integers(k)] = False
            v[mask] = 0.0
            v /= v.sum()
        return v

    init = row(n_states)
    trans = np.vstack([row(n_states) for _ in range(n_states)])
    prod = np.vstack([row(len(experts)) for _ in range(n_states)])
    return Ehmm(experts, [f"q{i}" for i in range(n_states)], init, trans, prod, name="random")



def sample_outcomes(ehmm: Ehmm, preds: PredictionTable, horizon: int, rng: np.random.Generator) -> list[str]:
    """Draw hidden states, producing experts and outcomes from the EHMM's generative process."""
    if horizon > preds.horizon:
        raise InvalidInputError(f"prediction table covers only {preds.horizon} rounds")
    table = preds.aligned(ehmm.experts)
    q = int(rng.choice(ehmm.n_states, p=ehmm.init))
    out = []
    for t in range(horizon):
        e = int(rng.choice(ehmm.n_experts, p=ehmm.prod[q]))
        out.append(preds.outcomes[int(rng.choice(len(preds.outcomes), p=table[t, e]))])
        lo, hi = ehmm.indptr[q], ehmm.indptr[q + 1]
        q = int(ehmm.indices[lo + rng.choice(hi - lo, p=ehmm.probs[lo:hi])])
    return out
