import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from epp import Distribution, ForwardState, InvalidInputError, bayes_ehmm, forward_run
from epp.certify import random_table
from epp.losses import (
    HellingerLoss,
    LogLoss,
    SquareLoss,
    derived_run,
    fake_predictions,
    get_loss,
    mix_bound,
    substitute,
)

BINARY = (SquareLoss(), HellingerLoss())

weights_st = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda w: sum(w) > 1e-3)


class TestLossValues:
    def test_mixability_constants(self):
        assert LogLoss.eta == 1.0
        assert SquareLoss.eta == 2.0
        assert HellingerLoss.eta == pytest.approx(math.sqrt(2))

    def test_hellinger_endpoints(self):
        h = HellingerLoss()
        assert h.loss(0.0, 0) == 0.0 and h.loss(1.0, 1) == 0.0
        assert h.loss(1.0, 0) == 1.0 and h.loss(0.0, 1) == 1.0
        assert h.loss(0.25, 1) == pytest.approx(0.5)

    def test_log_loss_infinite_at_zero(self):
        assert LogLoss().loss([1.0, 0.0], 1) == math.inf

    def test_get_loss(self):
        assert isinstance(get_loss(" Square "), SquareLoss)
        with pytest.raises(InvalidInputError):
            get_loss("absolute")


class TestSubstitution:
    def test_square_symmetric(self):
        p, acts = [0.5, 0.5], [0.0, 1.0]
        # -(1/2) ln((1 + e^-2) / 2)
        assert mix_bound(SquareLoss(), p, acts, 1) == pytest.approx(-0.5 * math.log((1 + math.exp(-2)) / 2), rel=1e-14)
        assert substitute(SquareLoss(), p, acts) == pytest.approx(0.5)

    @pytest.mark.parametrize("loss", BINARY, ids=lambda l: l.name)
    @pytest.mark.parametrize("a", [0.0, 0.4, 0.77, 1.0])
    def test_point_mass_plays_its_action(self, loss, a):
        assert substitute(loss, [0.0, 1.0], [0.9, a]) == pytest.approx(a, abs=1e-12)

    def test_hellinger_interval(self):
        lo, hi = HellingerLoss().feasible_interval([1.0], [0.4])
        assert lo == pytest.approx(0.4) and hi == pytest.approx(0.4)
        lo, hi = HellingerLoss().feasible_interval([0.5, 0.5], [0.0, 1.0])
        assert lo < 0.5 < hi

    def test_log_substitution_is_mixture(self):
        acts = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert_allclose(substitute(LogLoss(), [0.25, 0.75], acts), [0.375, 0.625])

    def test_deterministic(self):
        p, acts = [0.2, 0.3, 0.5], [0.1, 0.6, 0.9]
        for loss in BINARY:
            assert substitute(loss, p, acts) == substitute(loss, p, acts)

    @settings(max_examples=300, deadline=None)
    @given(weights_st, st.data())
    def test_mixability_inequality(self, w, data):
        p = np.array(w) / sum(w)
        acts = data.draw(st.lists(st.floats(0.0, 1.0), min_size=len(w), max_size=len(w)))
        for loss in BINARY:
            a = substitute(loss, p, acts)
            assert 0.0 <= a <= 1.0
            for x in (0, 1):
                assert loss.loss(a, x) <= mix_bound(loss, p, acts, x) + 1e-9


class TestFakePredictions:
    def test_square_value(self):
        fake = fake_predictions(SquareLoss(), [0.0, 1.0], 1, 2)
        assert fake[0, 1] == pytest.approx(math.exp(-2))
        assert fake[1, 1] == 1.0
        assert_allclose(fake.sum(axis=1), 1.0)

    def test_residual_spread(self):
        fake = fake_predictions(SquareLoss(), [0.5], 0, 3)
        assert_allclose(fake[0], [math.exp(-0.5), (1 - math.exp(-0.5)) / 2, (1 - math.exp(-0.5)) / 2])


class TestDerivedRun:
    def test_log_lift_reproduces_base(self, rng):
        table = random_table(rng, ["a", "b", "c"], 15, 2)
        data = [table.outcomes[k] for k in rng.integers(2, size=15)]
        e = bayes_ehmm(Distribution.uniform("abc"))
        tr = derived_run(ForwardState(e), LogLoss(), list(table.aligned(e.experts)), table.encode(data), 2)
        ref = forward_run(e, table, data)
        assert_allclose(np.array(tr.actions), ref.predictive, atol=1e-14)
        assert_allclose(tr.losses, ref.losses, atol=1e-12)
        assert_allclose(tr.lifted_bound, ref.losses, atol=1e-12)

    @pytest.mark.parametrize("loss", BINARY, ids=lambda l: l.name)
    def test_loss_below_lifted_bound(self, rng, loss):
        acts = rng.random((40, 3))
        data = rng.integers(2, size=40)
        e = bayes_ehmm(Distribution.uniform("abc"))
        tr = derived_run(ForwardState(e), loss, acts, data, 2)
        assert np.all(tr.losses <= tr.lifted_bound + 1e-9)
        # Bayes: total bound is within ln(3)/eta of the best expert
        best = min(sum(loss.loss(acts[t, k], data[t]) for t in range(40)) for k in range(3))
        assert tr.cumloss <= best + math.log(3) / loss.eta + 1e-9

    def test_single_expert(self):
        acts = np.array([[0.3], [0.6], [0.9]])
        e = bayes_ehmm({"a": 1.0})
        tr = derived_run(ForwardState(e), SquareLoss(), acts, [1, 0, 1], 2)
        assert_allclose(tr.actions, [0.3, 0.6, 0.9], atol=1e-12)
