"""Numerical certification of the loss bounds, reductions and invariances.

Every check draws reproducible random instances, compares an algorithm against
a brute-force oracle, and returns a :class:`CheckReport` with one row per
instance.  For bound checks the row value is the relative slack (a pass needs
``value >= -tol``); for agreement checks it is the maximum absolute deviation
(a pass needs ``value <= tol``).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distributions import Distribution, PredictionTable
from .ehmm import Ehmm, bayes_ehmm, random_ehmm, split_state
from .engine import EppState, Variant, epp_run
from .errors import InvalidInputError
from .forward import ForwardState
from .losses import MixableLoss, SquareLoss, derived_run, get_loss
from .oracles import (
    MppState,
    InContextBayes,
    OracleContext,
    Partition,
    adversarial_instance,
    enumerate_partitions,
    log_bayes_in_context,
    mpp_reference,
    path_meta_experts,
    seeded_cell_pass,
)
from .schemes import KINDS, MixingScheme, log_partition_prior, weights

BOUND_TOL = 1e-9
MATCH_TOL = 1e-12


@dataclass
class CheckRow:
    instance: int
    label: str
    value: float
    ok: bool


@dataclass
class CheckReport:
    name: str
    metric: str  # "slack" or "deviation"
    tol: float
    rows: list[CheckRow] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, instance: int, label: str, value: float):
        value = float(value)
        ok = value >= -self.tol if self.metric == "slack" else value <= self.tol
        self.rows.append(CheckRow(instance, label, value, bool(ok)))

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.ok for r in self.rows)

    @property
    def worst(self) -> float:
        vals = [r.value for r in self.rows]
        return min(vals) if self.metric == "slack" else max(vals)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} ({len(self.rows)} rows, worst {self.metric} {self.worst:.3e}, tol {self.tol:g})"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "label", self.metric, "ok"])
        for r in self.rows:
            w.writerow([r.instance, r.label, repr(float(r.value)), int(r.ok)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# random instances


def random_scheme(rng: np.random.Generator, kind: str | None = None) -> MixingScheme:
    kind = kind or KINDS[rng.integers(len(KINDS))]
    alpha = float(rng.uniform(0.05, 0.95))
    gamma = float(rng.uniform(0.0, 2.0))
    if kind == "yesterday":
        return MixingScheme.yesterday()
    if kind in ("fixedshare", "uniformpast"):
        return MixingScheme(kind, alpha)
    return MixingScheme(kind, alpha, gamma)


def random_table(rng: np.random.Generator, experts, T: int, n_outcomes: int = 2, concentration: float = 1.0):
    probs = rng.dirichlet(np.full(n_outcomes, concentration), size=(T, len(experts)))
    return PredictionTable(experts, [str(x) for x in range(n_outcomes)], probs)


def random_outcomes(rng: np.random.Generator, table: PredictionTable) -> list[str]:
    return [table.outcomes[k] for k in rng.integers(len(table.outcomes), size=table.horizon)]


@dataclass
class Instance:
    ehmm: Ehmm
    preds: PredictionTable
    outcomes: list
    scheme: MixingScheme

    @property
    def label(self) -> str:
        return f"|Q|={self.ehmm.n_states} |E|={self.ehmm.n_experts} {self.scheme}"


def random_instance(
    rng: np.random.Generator,
    T: int,
    max_states: int = 3,
    max_experts: int = 2,
    n_outcomes: int = 2,
    scheme: MixingScheme | None = None,
) -> Instance:
    n_states = int(rng.integers(1, max_states + 1))
    n_experts = int(rng.integers(1, max_experts + 1))
    experts = [f"e{k}" for k in range(n_experts)]
    ehmm = random_ehmm(rng, n_states, experts)
    preds = random_table(rng, experts, T, n_outcomes)
    return Instance(ehmm, preds, random_outcomes(rng, preds), scheme or random_scheme(rng))


def random_prior(rng: np.random.Generator, experts) -> Distribution:
    return Distribution(zip(experts, rng.dirichlet(np.ones(len(experts)))))


def _variants(variant) -> list[Variant]:
    if str(variant).lower() == "both":
        return [Variant.FREEZE, Variant.SLEEP]
    return [Variant.parse(variant)]


def _rel(lhs_log: float, rhs_log: float) -> float:
    """Relative slack ``lhs / rhs - 1`` from log values."""
    if rhs_log == -math.inf:
        return math.inf
    return math.expm1(lhs_log - rhs_log)


# --------------------------------------------------------------------------
# EHMM bounds


def check_mixture_bound(instances=20, T=6, scheme=None, variant="both", seed=0, max_states=3, max_experts=2) -> CheckReport:
    """EPP probability dominates the prior-weighted mixture over all partitions of the compositions."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("mixture-bound", "slack", BOUND_TOL)
    parts = enumerate_partitions(T)
    for i in range(instances):
        inst = random_instance(rng, T, max_states, max_experts, scheme=scheme or random_scheme(rng, KINDS[i % len(KINDS)]))
        ctx = OracleContext(inst.ehmm, inst.preds, inst.outcomes)
        priors = [log_partition_prior(inst.scheme, p) for p in parts]
        for v in _variants(variant):
            lp = -epp_run(inst.ehmm, inst.scheme, v, inst.preds, inst.outcomes).cumloss
            terms = [pr + ctx.partition_log_likelihood(p, v) for pr, p in zip(priors, parts) if pr > -math.inf]
            rep.add(i, f"{v.value} {inst.label}", _rel(lp, float(logsumexp(terms))))
    return rep


def check_partition_bound(instances=20, T=6, scheme=None, variant="both", seed=0, max_states=3, max_experts=2) -> CheckReport:
    """EPP probability dominates each partition's prior times its composition likelihood."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("partition-bound", "slack", BOUND_TOL)
    parts = enumerate_partitions(T)
    rep.notes["partitions"] = len(parts)
    for i in range(instances):
        inst = random_instance(rng, T, max_states, max_experts, scheme=scheme or random_scheme(rng, KINDS[i % len(KINDS)]))
        ctx = OracleContext(inst.ehmm, inst.preds, inst.outcomes)
        for v in _variants(variant):
            lp = -epp_run(inst.ehmm, inst.scheme, v, inst.preds, inst.outcomes).cumloss
            worst = math.inf
            for p in parts:
                rhs = log_partition_prior(inst.scheme, p) + ctx.partition_log_likelihood(p, v)
                worst = min(worst, _rel(lp, rhs))
            rep.add(i, f"{v.value} {inst.label}", worst)
    return rep


def partition_report(ehmm, scheme, variant, preds, outcomes, T=None, tol=BOUND_TOL) -> str:
    """CSV ``partition,prior,likelihood,bound_ok`` for the per-partition bound."""
    v = Variant.parse(variant)
    ctx = OracleContext(ehmm, preds, outcomes)
    lp = -epp_run(ehmm, scheme, v, preds, outcomes).cumloss
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["partition", "prior", "likelihood", "bound_ok"])
    for p in enumerate_partitions(T or ctx.T):
        lprior = log_partition_prior(scheme, p)
        llik = ctx.partition_log_likelihood(p, v)
        w.writerow([str(p), repr(math.exp(lprior)), repr(math.exp(llik)), int(_rel(lp, lprior + llik) >= -tol)])
    return buf.getvalue()


def check_equivalence_invariance(instances=20, T=50, variant="both", seed=0, max_states=3, n_experts=2) -> CheckReport:
    """Equivalent EHMMs (one state split in two) give identical EPP predictions."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("equivalence", "deviation", MATCH_TOL)
    for i in range(instances):
        experts = [f"e{k}" for k in range(n_experts)]
        ehmm = random_ehmm(rng, int(rng.integers(1, max_states + 1)), experts)
        twin = split_state(ehmm, int(rng.integers(ehmm.n_states)), float(rng.uniform(0.1, 0.9)))
        preds = random_table(rng, experts, T)
        data = random_outcomes(rng, preds)
        scheme = random_scheme(rng, KINDS[i % len(KINDS)])
        for v in _variants(variant):
            a = epp_run(ehmm, scheme, v, preds, data)
            b = epp_run(twin, scheme, v, preds, data)
            rep.add(i, f"{v.value} {scheme}", np.max(np.abs(a.predictive - b.predictive)))
    return rep


def check_backport_identity(instances=5, T=6, variant="both", seed=0, max_states=3, max_experts=2) -> CheckReport:
    """Backport identity: the round-t configuration's composition on any cell after t
    equals the scheme-weighted mixture of earlier configurations conditioned on their own outcome."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("backport", "deviation", BOUND_TOL)
    for i in range(instances):
        inst = random_instance(rng, T, max_states, max_experts)
        ehmm, n = inst.ehmm, inst.ehmm.n_states
        ctx = OracleContext(ehmm, inst.preds, inst.outcomes)
        for v in _variants(variant):
            trace = epp_run(ehmm, inst.scheme, v, inst.preds, inst.outcomes, keep_configurations=True)
            lam = [None] + [c.dense(n) for c in trace.configurations]

            def seeded(vec, start, cell):
                return seeded_cell_pass(ehmm, vec, start, cell, v, ctx.table, ctx.data)[0]

            worst = 0.0
            for t in range(1, T + 1):
                beta = weights(inst.scheme, t)
                later = range(t, T + 1)
                for r in range(1, len(later) + 1):
                    for cell in itertools.combinations(later, r):
                        lhs = math.exp(seeded(lam[t], t, cell))
                        rhs = beta[0] * math.exp(seeded(ehmm.init, 1, cell))
                        for j in range(1, t):
                            if beta[j] > 0:
                                joint = seeded(lam[j], j, (j, *cell))
                                rhs += beta[j] * math.exp(joint - seeded(lam[j], j, (j,)))
                        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
            rep.add(i, f"{v.value} {inst.label}", worst)
    return rep


# --------------------------------------------------------------------------
# reductions to mixing past posteriors


def check_bayes_reduction(instances=20, T=100, n_experts=5, seed=0, n_outcomes=2) -> CheckReport:
    """On the Bayesian EHMM, both EPP variants coincide with mixing past posteriors."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("bayes-reduction", "deviation", MATCH_TOL)
    experts = [f"x{k}" for k in range(n_experts)]
    for i in range(instances):
        prior = random_prior(rng, experts)
        preds = random_table(rng, experts, T, n_outcomes)
        data = random_outcomes(rng, preds)
        scheme = random_scheme(rng, KINDS[i % len(KINDS)])
        ehmm = bayes_ehmm(prior)
        ref = mpp_reference(prior, preds, data, scheme)
        dev = 0.0
        for v in (Variant.FREEZE, Variant.SLEEP):
            tr = epp_run(ehmm, scheme, v, preds, data)
            dev = max(dev, np.max(np.abs(tr.predictive - ref.predictive)), np.max(np.abs(tr.weights - ref.weights)))
        rep.add(i, str(scheme), dev)
    return rep


def check_sleep_reduction(instances=10, T=4, n_states=2, n_experts=2, seed=0) -> CheckReport:
    """Mixing past posteriors over hidden-state paths reproduces EPP with sleeping."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("sleep-reduction", "deviation", BOUND_TOL)
    experts = [f"e{k}" for k in range(n_experts)]
    for i in range(instances):
        ehmm = random_ehmm(rng, n_states, experts)
        preds = random_table(rng, experts, T)
        data = random_outcomes(rng, preds)
        scheme = random_scheme(rng, KINDS[i % len(KINDS)])
        names, prior, meta = path_meta_experts(ehmm, preds)
        ref = mpp_reference(prior, meta, data, scheme)
        tr = epp_run(ehmm, scheme, Variant.SLEEP, preds, data)
        rep.add(i, f"{len(names)} paths {scheme}", np.max(np.abs(tr.predictive - ref.predictive)))
    return rep


def freezing_counterexample(alphas=(0.1, 0.5)):
    """Round-1 and round-2 predictive P(1) of EPP with freezing on the a->b chain, per alpha."""
    from .ehmm import chain_ehmm

    ehmm = chain_ehmm()
    preds = PredictionTable.constant({"a": {"0": 0.2, "1": 0.8}, "b": {"0": 0.7, "1": 0.3}}, 2)
    out = {}
    for a in alphas:
        tr = epp_run(ehmm, MixingScheme.fixed_share(a), Variant.FREEZE, preds, ["1", "1"])
        out[a] = (float(tr.predictive[0, 1]), float(tr.predictive[1, 1]))
    return out


# --------------------------------------------------------------------------
# bounds for mixing past posteriors on plain experts


def _mpp_instance(rng, T, n_experts, uniform=False, scheme=None):
    experts = [f"x{k}" for k in range(n_experts)]
    prior = Distribution.uniform(experts) if uniform else random_prior(rng, experts)
    preds = random_table(rng, experts, T)
    data = random_outcomes(rng, preds)
    return prior, preds, data, scheme or random_scheme(rng)


def check_mpp_partition_bound(instances=20, T=6, seed=0, n_experts=3, scheme=None) -> CheckReport:
    """MPP probability dominates prior times in-context Bayes for every partition."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("mpp-partition-bound", "slack", BOUND_TOL)
    parts = enumerate_partitions(T)
    for i in range(instances):
        prior, preds, data, sch = _mpp_instance(rng, T, n_experts, scheme=scheme)
        lp = -mpp_reference(prior, preds, data, sch).cumloss
        bic = InContextBayes(prior, preds, data)
        worst = min(_rel(lp, log_partition_prior(sch, p) + bic.partition(p)) for p in parts)
        rep.add(i, str(sch), worst)
    return rep


def _best_cell_losses(preds: PredictionTable, data, partition: Partition) -> float:
    codes = preds.encode(data)
    with np.errstate(divide="ignore"):
        ll = -np.log(preds.probs[np.arange(len(codes)), :, codes])
    return float(sum(ll[np.array(c) - 1].sum(axis=0).min() for c in partition.cells))


def check_mpp_encoding_bound(instances=20, T=6, seed=0, n_experts=3, scheme=None) -> CheckReport:
    """MPP loss is at most the best per-cell expert loss plus the partition encoding penalty."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("mpp-encoding-bound", "slack", BOUND_TOL)
    parts = enumerate_partitions(T)
    for i in range(instances):
        prior, preds, data, sch = _mpp_instance(rng, T, n_experts, uniform=True, scheme=scheme)
        loss = mpp_reference(prior, preds, data, sch).cumloss
        worst = math.inf
        for p in parts:
            penalty = -log_partition_prior(sch, p) + len(p) * math.log(n_experts)
            bound = _best_cell_losses(preds, data, p) + penalty
            worst = min(worst, (bound - loss) / max(abs(loss), 1e-300))
        rep.add(i, str(sch), worst)
    return rep


def check_mpp_mixture_bound(instances=20, T=6, seed=0, n_experts=3, scheme=None) -> CheckReport:
    """MPP probability dominates the prior-weighted sum of in-context Bayes over partitions,
    and that sum dominates every single-partition term."""
    rng = np.random.default_rng(seed)
    rep = CheckReport("mpp-mixture-bound", "slack", BOUND_TOL)
    parts = enumerate_partitions(T)
    for i in range(instances):
        prior, preds, data, sch = _mpp_instance(rng, T, n_experts, scheme=scheme)
        lp = -mpp_reference(prior, preds, data, sch).cumloss
        bic = InContextBayes(prior, preds, data)
        terms = np.array([log_partition_prior(sch, p) + bic.partition(p) for p in parts])
        total = float(logsumexp(terms))
        dominance = min(_rel(total, t) for t in terms)
        rep.add(i, str(sch), min(_rel(lp, total), dominance))
    return rep


def check_adversarial(T=5, eps=1e-6, scheme=None, gap_tol=1e-4) -> CheckReport:
    """Relative gap between the partition-sum bound and the finest partition's single term."""
    scheme = scheme or MixingScheme.fixed_share(0.5)
    prior, preds, data = adversarial_instance(T, eps)
    finest = Partition((0,) * T)
    terms = [
        log_partition_prior(scheme, p) + log_bayes_in_context(prior, p, preds, data) for p in enumerate_partitions(T)
    ]
    total = float(logsumexp(terms))
    single = log_partition_prior(scheme, finest) + log_bayes_in_context(prior, finest, preds, data)
    rep = CheckReport("adversarial", "deviation", gap_tol)
    rep.add(0, f"T={T} eps={eps:g} {scheme}", -math.expm1(single - total))
    rep.notes.update(sum_log=total, finest_log=single)
    return rep


# --------------------------------------------------------------------------
# mixable losses


def check_mixability(loss: MixableLoss | str, n=1000, seed=0, tol=None, max_experts=5) -> CheckReport:
    """Substituted action meets the mixability bound on every outcome for random mixtures."""
    loss = get_loss(loss) if isinstance(loss, str) else loss
    tol = tol if tol is not None else (1e-6 if loss.name == "hellinger" else BOUND_TOL)
    rng = np.random.default_rng(seed)
    rep = CheckReport(f"mixability-{loss.name}", "slack", tol)
    for i in range(n):
        k = int(rng.integers(1, max_experts + 1))
        p = rng.dirichlet(np.ones(k))
        if loss.name == "log":
            actions = rng.dirichlet(np.ones(3), size=k)
            outcomes = range(3)
        else:
            actions = rng.random(k)
            outcomes = (0, 1)
        a = loss.substitute(p, actions)
        slack = min(loss.mix_bound(p, actions, x) - loss.loss(a, x) for x in outcomes)
        rep.add(i, f"k={k}", slack)
    return rep


def make_base(kind: str, experts, scheme: MixingScheme | None = None, prior=None):
    """Fresh log-loss learner over plain experts: ``forward``, ``mpp``, ``epp-freeze`` or ``epp-sleep``."""
    prior = prior if prior is not None else Distribution.uniform(experts)
    if kind == "forward":
        return ForwardState(bayes_ehmm(prior))
    if kind == "mpp":
        return MppState(prior.probs, scheme)
    if kind in ("epp-freeze", "epp-sleep"):
        return EppState(bayes_ehmm(prior), scheme, kind.split("-")[1])
    raise InvalidInputError(f"unknown base algorithm {kind!r}")


def check_lift(loss: MixableLoss | str, base="epp-freeze", instances=10, T=30, n_experts=3, seed=0) -> CheckReport:
    """Per round, the derived action's loss is at most the base's fake log loss divided by eta."""
    loss = get_loss(loss) if isinstance(loss, str) else loss
    rng = np.random.default_rng(seed)
    rep = CheckReport(f"lift-{loss.name}-{base}", "slack", BOUND_TOL)
    experts = [f"x{k}" for k in range(n_experts)]
    for i in range(instances):
        scheme = random_scheme(rng, KINDS[i % len(KINDS)])
        data = rng.integers(2, size=T)
        if loss.name == "log":
            actions = rng.dirichlet(np.ones(2), size=(T, n_experts))
        else:
            actions = rng.random((T, n_experts))
        tr = derived_run(make_base(base, experts, scheme), loss, actions, data, 2)
        rep.add(i, str(scheme), np.min(tr.lifted_bound - tr.losses))
    return rep


def check_lifted_encoding_bound(instances=10, T=6, n_experts=2, seed=0, scheme=None) -> CheckReport:
    """Square loss through EPP with freezing on the Bayesian EHMM obeys the lifted encoding bound."""
    loss = SquareLoss()
    rng = np.random.default_rng(seed)
    rep = CheckReport("lifted-encoding-bound-square", "slack", BOUND_TOL)
    experts = [f"x{k}" for k in range(n_experts)]
    parts = enumerate_partitions(T)
    for i in range(instances):
        sch = scheme or random_scheme(rng, KINDS[1 + i % (len(KINDS) - 1)])
        data = rng.integers(2, size=T)
        actions = rng.random((T, n_experts))
        tr = derived_run(make_base("epp-freeze", experts, sch), loss, actions, data, 2)
        sq = (actions - data[:, None]) ** 2
        lhs = loss.eta * tr.cumloss
        worst = math.inf
        for p in parts:
            lprior = log_partition_prior(sch, p)
            if lprior == -math.inf:
                continue
            best = sum(sq[np.array(c) - 1].sum(axis=0).min() for c in p.cells)
            bound = -lprior + len(p) * math.log(n_experts) + loss.eta * best
            worst = min(worst, (bound - lhs) / max(lhs, 1e-300))
        rep.add(i, str(sch), worst)
    return rep


# keyed by the command-line check names
CHECKS = {
    "thm1": check_mpp_partition_bound,
    "thm2": check_equivalence_invariance,
    "thm3": check_bayes_reduction,
    "thm4": check_mixture_bound,
    "cor1": check_mpp_encoding_bound,
    "cor3": check_partition_bound,
    "cor4": check_mpp_mixture_bound,
    "lemma6": check_backport_identity,
    "sleep-reduction": check_sleep_reduction,
    "adversarial": check_adversarial,
}
