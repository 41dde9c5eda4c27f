"""Mixable losses and the lift of log-loss algorithms to them.

A loss is eta-mixable when for every expert mixture ``p`` and per-expert
actions there is one action whose loss on every outcome is at most
``-(1/eta) ln sum_e p(e) exp(-eta loss(a_e, x))``.  The lift feeds a log-loss
algorithm fake predictions ``exp(-eta loss)`` and plays the substituted action
under its current expert weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, MixabilityError

SUBSTITUTION_TOL = 1e-9


class MixableLoss:
    name = ""
    eta = 1.0

    def loss(self, a, x: int) -> float:
        raise NotImplementedError

    def losses(self, actions, x: int) -> np.ndarray:
        return np.array([self.loss(a, x) for a in actions], dtype=np.float64)

    def mix_bound(self, p, actions, x: int) -> float:
        """``-(1/eta) ln sum_e p(e) exp(-eta loss(a_e, x))``."""
        p = np.asarray(p, dtype=np.float64)
        keep = p > 0
        ls = self.losses([a for a, k in zip(actions, keep) if k], x)
        # weights go in as logs: scipy's b= scaling overflows on subnormal weights
        return float(-logsumexp(np.log(p[keep]) - self.eta * ls) / self.eta)

    def substitute(self, p, actions):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(eta={self.eta:g})"


class LogLoss(MixableLoss):
    """Actions are distributions over outcomes; ``loss(a, x) = -ln a[x]``."""

    name = "log"
    eta = 1.0

    def loss(self, a, x):
        px = float(np.asarray(a)[x])
        return math.inf if px <= 0 else -math.log(px)

    def substitute(self, p, actions):
        return np.asarray(p, dtype=np.float64) @ np.asarray(actions, dtype=np.float64)


def _binary_bounds(loss: MixableLoss, p, actions) -> tuple[float, float]:
    return loss.mix_bound(p, actions, 0), loss.mix_bound(p, actions, 1)


class SquareLoss(MixableLoss):
    """``(a - y)^2`` for actions in ``[0, 1]`` and binary outcomes; 2-mixable."""

    name = "square"
    eta = 2.0

    def loss(self, a, x):
        return (float(a) - x) ** 2

    def substitute(self, p, actions):
        g0, g1 = _binary_bounds(self, p, actions)
        return min(1.0, max(0.0, (1.0 + g0 - g1) / 2))


class HellingerLoss(MixableLoss):
    """Squared Hellinger distance between ``Bernoulli(a)`` and the outcome; sqrt(2)-mixable.

    ``loss(a, 0) = 1 - sqrt(1 - a)`` and ``loss(a, 1) = 1 - sqrt(a)``.
    """

    name = "hellinger"
    eta = math.sqrt(2.0)

    def loss(self, a, x):
        a = float(a)
        return 1.0 - math.sqrt(1.0 - a) if x == 0 else 1.0 - math.sqrt(a)

    def feasible_interval(self, p, actions) -> tuple[float, float]:
        """Actions meeting the mixability bound on both outcomes form ``[lo, hi]``."""
        g0, g1 = _binary_bounds(self, p, actions)
        hi = 1.0 - (1.0 - g0) ** 2 if g0 < 1 else 1.0
        lo = (1.0 - g1) ** 2 if g1 < 1 else 0.0
        return lo, hi

    def substitute(self, p, actions):
        lo, hi = self.feasible_interval(p, actions)
        if lo > hi + SUBSTITUTION_TOL:
            raise MixabilityError(f"empty feasibility interval [{lo}, {hi}]")
        return min(1.0, max(0.0, (lo + hi) / 2))


LOSSES = {"log": LogLoss, "square": SquareLoss, "hellinger": HellingerLoss}


def get_loss(name: str) -> MixableLoss:
    try:
        return LOSSES[name.strip().lower()]()
    except KeyError:
        raise InvalidInputError(f"unknown loss {name!r}; choose from {', '.join(LOSSES)}") from None


def mix_bound(loss: MixableLoss, p, actions, x: int) -> float:
    return loss.mix_bound(p, actions, x)


def substitute(loss: MixableLoss, p, actions):
    return loss.substitute(p, actions)


def fake_predictions(loss: MixableLoss, actions, x: int, n_outcomes: int) -> np.ndarray:
    """Per-expert outcome distributions putting ``exp(-eta loss)`` on the realized outcome.

    The residual mass is spread uniformly over the other outcomes.
    """
    at_x = np.exp(-loss.eta * loss.losses(actions, x))
    residual = 1.0 - at_x
    if n_outcomes == 1:
        if np.any(residual > 0):
            raise InvalidInputError("a single outcome cannot absorb residual mass")
        return at_x[:, None]
    out = np.repeat((residual / (n_outcomes - 1))[:, None], n_outcomes, axis=1)
    out[:, x] = at_x
    return out


@dataclass
class DerivedTrace:
    """Per-round record of a lifted run."""

    loss_name: str
    eta: float
    actions: list
    losses: np.ndarray
    weights: np.ndarray
    fake_log_losses: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def cumloss(self) -> float:
        return float(np.sum(self.losses))

    @property
    def lifted_bound(self) -> np.ndarray:
        """Per-round ``-(1/eta) ln`` of the base algorithm's fake predictive at the outcome."""
        return self.fake_log_losses / self.eta


def derived_run(base, loss: MixableLoss, actions, data, n_outcomes: int) -> DerivedTrace:
    """Play ``loss.substitute`` under ``base``'s pre-outcome expert weights each round.

    ``base`` is a log-loss learner exposing ``expert_weights()`` and
    ``update(preds_t, x)``.  ``actions[t]`` holds one action per expert in
    ``base``'s expert order; ``data`` are outcome codes.
    """
    T = len(data)
    played, losses, fake_ll = [], np.empty(T), np.empty(T)
    weights = []
    for t in range(T):
        w = np.asarray(base.expert_weights(), dtype=np.float64)
        acts = actions[t]
        a = loss.substitute(w, acts)
        x = int(data[t])
        played.append(a)
        losses[t] = loss.loss(a, x)
        fake = fake_predictions(loss, acts, x, n_outcomes)
        fake_ll[t] = -math.log(w @ fake[:, x])
        weights.append(w)
        base.update(fake, x)
    return DerivedTrace(loss.name, loss.eta, played, losses, np.array(weights), fake_ll)
