"""Forward algorithm, per-round step primitives and run traces.

The step primitives (:func:`expert_weights`, :func:`condition_and_evolve`) are
shared with the EPP engine, which predicts exactly like the forward algorithm
once its configuration has been formed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .distributions import PredictionTable, StateVector
from .ehmm import Ehmm
from .errors import InvalidInputError, ZeroProbabilityError

RENORM_TOL = 1e-12


class Prediction(NamedTuple):
    predictive: np.ndarray
    expert_weights: np.ndarray
    configuration: StateVector


def initial_vector(ehmm: Ehmm) -> StateVector:
    return StateVector.from_dense(ehmm.init)


def evolve(ehmm: Ehmm, vec: StateVector) -> StateVector:
    """One application of the transition function."""
    return StateVector(*_kernels.push_forward(vec.idx, vec.val, ehmm.n_states, ehmm.indptr, ehmm.indices, ehmm.probs))


def expert_weights(ehmm: Ehmm, config: StateVector) -> np.ndarray:
    return config.val @ ehmm.prod[config.idx]


def predict(ehmm: Ehmm, config: StateVector, preds_t: np.ndarray) -> Prediction:
    w = expert_weights(ehmm, config)
    return Prediction(w @ preds_t, w, config)


def condition_and_evolve(ehmm: Ehmm, config: StateVector, preds_t: np.ndarray, x: int, round: int):
    """Condition a configuration on outcome ``x`` and push it one step forward.

    Returns ``(next_vector, drift)`` where ``drift`` is the deviation of the
    evolved mass from one before renormalization.
    """
    emission = ehmm.prod[config.idx] @ preds_t[:, x]
    joint = config.val * emission
    mass = joint.sum()
    if not mass > 0:
        raise ZeroProbabilityError(round)
    keep = joint > 0
    nxt = evolve(ehmm, StateVector(config.idx[keep], joint[keep] / mass))
    total = nxt.val.sum()
    drift = abs(total - 1.0)
    if drift > RENORM_TOL:
        nxt = nxt.scaled(1.0 / total)
    return nxt, drift


def check_outcome(predictive: np.ndarray, x: int, round: int) -> float:
    p = float(predictive[x])
    if not p > 0:
        raise ZeroProbabilityError(round)
    return -math.log(p)


@dataclass
class RunTrace:
    """Per-round record of a log-loss prediction run."""

    experts: tuple
    outcomes: tuple
    data: np.ndarray
    predictive: np.ndarray
    weights: np.ndarray
    losses: np.ndarray
    configurations: list | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.losses)

    @property
    def cumloss(self) -> float:
        return float(np.sum(self.losses))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.losses)

    def probability(self) -> float:
        return math.exp(-self.cumloss)

    def to_csv(self, fh=None) -> str | None:
        """Write ``t,outcome,loss,cumloss,pred:<x>...,w:<e>...`` with sorted columns."""
        out_order = sorted(range(len(self.outcomes)), key=lambda i: self.outcomes[i])
        exp_order = sorted(range(len(self.experts)), key=lambda i: self.experts[i])
        buf = fh if fh is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t", "outcome", "loss", "cumloss"]
            + [f"pred:{self.outcomes[i]}" for i in out_order]
            + [f"w:{self.experts[i]}" for i in exp_order]
        )
        cum = self.cumulative
        for t in range(self.horizon):
            writer.writerow(
                [t + 1, self.outcomes[self.data[t]], _fmt(self.losses[t]), _fmt(cum[t])]
                + [_fmt(self.predictive[t, i]) for i in out_order]
                + [_fmt(self.weights[t, i]) for i in exp_order]
            )
        return None if fh is not None else buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


class ForwardState:
    """Running posterior of the forward algorithm over the hidden state."""

    def __init__(self, ehmm: Ehmm):
        self.ehmm = ehmm
        self.posterior = initial_vector(ehmm)
        self.t = 1
        self.cumulative_log_loss = 0.0
        self.max_drift = 0.0

    def predict(self, preds_t: np.ndarray) -> Prediction:
        return predict(self.ehmm, self.posterior, preds_t)

    def expert_weights(self) -> np.ndarray:
        return expert_weights(self.ehmm, self.posterior)

    def update(self, preds_t: np.ndarray, x: int) -> ForwardState:
        pred = self.predict(preds_t)
        loss = check_outcome(pred.predictive, x, self.t)
        self.posterior, drift = condition_and_evolve(self.ehmm, self.posterior, preds_t, x, self.t)
        self.max_drift = max(self.max_drift, drift)
        self.cumulative_log_loss += loss
        self.t += 1
        return self

    def copy(self) -> ForwardState:
        out = ForwardState.__new__(ForwardState)
        out.__dict__.update(self.__dict__)
        return out


def run_learner(learner, preds: PredictionTable, outcomes, experts, keep_configurations=False) -> RunTrace:
    """Drive any object with ``predict(preds_t)`` / ``update(preds_t, x)`` over a table."""
    data = preds.encode(outcomes)
    T = len(data)
    if T > preds.horizon:
        raise InvalidInputError(f"{T} outcomes but prediction table has horizon {preds.horizon}")
    table = preds.aligned(experts)
    predictive = np.empty((T, len(preds.outcomes)))
    weights = np.empty((T, len(experts)))
    losses = np.empty(T)
    configs = [] if keep_configurations else None
    for t in range(T):
        pred = learner.predict(table[t])
        predictive[t] = pred.predictive
        weights[t] = pred.expert_weights
        losses[t] = check_outcome(pred.predictive, data[t], t + 1)
        if configs is not None:
            configs.append(pred.configuration)
        learner.update(table[t], data[t])
    return RunTrace(
        experts=tuple(experts),
        outcomes=preds.outcomes,
        data=data,
        predictive=predictive,
        weights=weights,
        losses=losses,
        configurations=configs,
        diagnostics={"max_drift": getattr(learner, "max_drift", 0.0)},
    )


def forward_run(ehmm: Ehmm, preds: PredictionTable, outcomes, keep_configurations: bool = False) -> RunTrace:
    """Sequential predictions of the EHMM's own marginal; cumloss is ``-ln A(x)``."""
    return run_learner(ForwardState(ehmm), preds, outcomes, ehmm.experts, keep_configurations)
