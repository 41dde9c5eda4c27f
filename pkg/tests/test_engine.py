import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from epp import (
    Distribution,
    EppState,
    MixingScheme,
    Variant,
    ZeroProbabilityError,
    bayes_ehmm,
    chain_ehmm,
    epp_init,
    epp_predict,
    epp_run,
    epp_update,
    forward_run,
    laplace_ehmm,
    layers,
    parse_scheme,
    slot_machine,
)
from epp.certify import random_scheme, random_table
from epp.distributions import PredictionTable
from epp.ehmm import random_ehmm

VARIANTS = (Variant.FREEZE, Variant.SLEEP)


@pytest.fixture
def chain_preds():
    return PredictionTable.constant({"a": {"0": 0.2, "1": 0.8}, "b": {"0": 0.7, "1": 0.3}}, 3)


class TestVariant:
    def test_parse(self):
        assert Variant.parse("Freeze") is Variant.FREEZE
        assert Variant.parse(Variant.SLEEP) is Variant.SLEEP
        with pytest.raises(ValueError):
            Variant.parse("hibernate")


class TestYesterday:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_equals_forward(self, variant):
        e, t = laplace_ehmm(30)
        data = list("110100111000101011110000111101")
        a = epp_run(e, MixingScheme.yesterday(), variant, t, data)
        b = forward_run(e, t, data)
        assert_array_equal(a.predictive, b.predictive)
        assert_array_equal(a.losses, b.losses)


class TestMixingSteps:
    def test_uniform_past_round_two(self, chain_preds):
        # freezing: lambda_2 = (1 - alpha) v_2 + alpha v_1 with v_1 = a, v_2 = b
        e = chain_ehmm()
        s = epp_init(e, MixingScheme.uniform_past(0.3), Variant.FREEZE)
        epp_update(s, chain_preds.aligned(e.experts)[0], 1)
        assert_allclose(s.configuration().dense(2), [0.3, 0.7])
        assert_allclose(s.expert_weights(), [0.3, 0.7])

    def test_sleep_evolves_stored_posteriors(self, chain_preds):
        e = chain_ehmm()
        s = epp_init(e, MixingScheme.uniform_past(0.3), Variant.SLEEP)
        epp_update(s, chain_preds.aligned(e.experts)[0], 1)
        assert_allclose(s.configuration().dense(2), [0.0, 1.0])

    def test_predict_does_not_mutate(self, chain_preds):
        e = chain_ehmm()
        s = epp_init(e, MixingScheme.fixed_share(0.2))
        p1 = epp_predict(s, chain_preds.aligned(e.experts)[0])
        p2 = epp_predict(s, chain_preds.aligned(e.experts)[0])
        assert_array_equal(p1.predictive, p2.predictive)
        assert s.t == 1

    def test_bayes_freeze_equals_sleep(self, rng):
        # identity transitions: evolving changes nothing
        e = bayes_ehmm(Distribution({"a": 0.2, "b": 0.3, "c": 0.5}))
        table = random_table(rng, list("abc"), 40, 3)
        data = [table.outcomes[k] for k in rng.integers(3, size=40)]
        for kind in ("fixedshare:0.1", "uniformpast:0.2", "decayingpast:0.1:1.5", "decayingpast-approx:0.1:1.5"):
            sch = parse_scheme(kind)
            a = epp_run(e, sch, "freeze", table, data)
            b = epp_run(e, sch, "sleep", table, data)
            assert_allclose(a.predictive, b.predictive, atol=1e-14)


class TestStores:
    def test_store_selection(self):
        e = chain_ehmm()
        expect = {
            "yesterday": "point",
            "fixedshare:0.1": "point",
            "uniformpast:0.1": "uniform",
            "decayingpast:0.1:2": "naive",
            "decayingpast-approx:0.1:2": "block",
        }
        for token, kind in expect.items():
            assert EppState(e, parse_scheme(token)).store_kind == kind
            assert EppState(e, parse_scheme(token), fast=False).store_kind == "naive"

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("token", ["fixedshare:0.05", "uniformpast:0.05", "yesterday"])
    def test_fast_matches_naive(self, variant, token):
        e, t = laplace_ehmm(150)
        data = ["1" if (k // 30) % 2 == 0 else "0" for k in range(150)]
        sch = parse_scheme(token)
        a = epp_run(e, sch, variant, t, data)
        b = epp_run(e, sch, variant, t, data, fast=False)
        assert_allclose(a.predictive, b.predictive, atol=1e-12)

    @pytest.mark.slow
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_fast_matches_naive_long(self, rng, variant):
        e = random_ehmm(rng, 6, ["a", "b"], sparsity=0.5)
        table = random_table(rng, ["a", "b"], 2000)
        data = [table.outcomes[k] for k in rng.integers(2, size=2000)]
        for token in ("fixedshare:0.01", "uniformpast:0.01"):
            sch = parse_scheme(token)
            a = epp_run(e, sch, variant, table, data)
            b = epp_run(e, sch, variant, table, data, fast=False)
            assert_allclose(a.predictive, b.predictive, atol=1e-12)

    def test_uniform_running_sum(self, rng):
        e = random_ehmm(rng, 4, ["a", "b"])
        table = random_table(rng, ["a", "b"], 12)
        codes = rng.integers(2, size=12)
        aligned = table.aligned(e.experts)
        for variant in VARIANTS:
            fast = EppState(e, MixingScheme.uniform_past(0.2), variant)
            slow = EppState(e, MixingScheme.uniform_past(0.2), variant, fast=False)
            for k in range(12):
                fast.update(aligned[k], codes[k])
                slow.update(aligned[k], codes[k])
                total = sum(v.dense(e.n_states) for v in slow.past_posteriors)
                assert_allclose(fast.fast_sum.dense(e.n_states), total, atol=1e-12)

    def test_block_sizes_are_logarithmic(self):
        e = chain_ehmm()
        s = EppState(e, parse_scheme("decayingpast-approx:0.1:2"))
        preds = PredictionTable.constant({"a": {"0": 0.5, "1": 0.5}, "b": {"0": 0.5, "1": 0.5}}, 1)
        row = preds.aligned(e.experts)[0]
        for t in range(2, 300):
            s.update(row, 0)
            sizes = s.block_sizes
            assert sum(sizes) == t - 1
            assert len(sizes) <= int(np.ceil(np.log2(t))) + 1

    def test_store_accessors_guarded(self):
        s = EppState(chain_ehmm(), MixingScheme.fixed_share(0.1))
        for name in ("past_posteriors", "fast_sum", "block_sizes"):
            with pytest.raises(AttributeError):
                getattr(s, name)


class TestInvariants:
    def test_state_unchanged_on_error(self):
        e, make = slot_machine()
        table = make(3).aligned(e.experts)
        s = EppState(e, MixingScheme.fixed_share(0.1))
        s.update(table[0], 0)
        before = (s.t, s.cumulative_log_loss, s.configuration().dense(e.n_states).copy())
        with pytest.raises(ZeroProbabilityError) as exc:
            s.update(table[1], make(3).outcomes.index("10"))
        assert exc.value.round == 2
        assert (s.t, s.cumulative_log_loss) == before[:2]
        assert_array_equal(s.configuration().dense(e.n_states), before[2])

    def test_sleep_support_in_current_layer(self):
        e, make = slot_machine()
        data = ["0"] * 30
        tr = epp_run(e, MixingScheme.uniform_past(0.1), "sleep", make(30), data, keep_configurations=True)
        for t, cfg in enumerate(tr.configurations, start=1):
            allowed = set(layers(e, t).q_t)
            assert set(cfg.idx[cfg.val > 0].tolist()) <= allowed

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 25), st.sampled_from(VARIANTS))
    def test_normalized(self, seed, n, T, variant):
        rng = np.random.default_rng(seed)
        e = random_ehmm(rng, n, ["a", "b", "c"])
        table = random_table(rng, ["a", "b", "c"], T)
        data = [table.outcomes[k] for k in rng.integers(2, size=T)]
        tr = epp_run(e, random_scheme(rng), variant, table, data, keep_configurations=True)
        assert np.all(np.abs(tr.predictive.sum(axis=1) - 1) <= 1e-9)
        assert np.all(np.abs(tr.weights.sum(axis=1) - 1) <= 1e-9)
        for cfg in tr.configurations:
            assert abs(cfg.total() - 1) <= 1e-9
