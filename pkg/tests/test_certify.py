import math

import numpy as np
import pytest

from epp import MixingScheme, parse_scheme
from epp import certify
from epp.certify import CheckReport


class TestReport:
    def test_slack_semantics(self):
        rep = CheckReport("demo", "slack", 1e-9)
        rep.add(0, "x", 0.5)
        rep.add(1, "y", -1e-12)
        assert rep.passed and rep.worst == -1e-12
        rep.add(2, "z", -1e-3)
        assert not rep.passed
        assert rep.summary().startswith("demo: FAIL")

    def test_deviation_semantics(self):
        rep = CheckReport("demo", "deviation", 1e-12)
        assert not rep.passed  # no rows is not a pass
        rep.add(0, "x", 1e-13)
        assert rep.passed
        assert rep.to_csv() == "instance,label,deviation,ok\n0,x,1e-13,1\n"


class TestChecks:
    @pytest.mark.parametrize(
        "fn,kwargs",
        [
            (certify.check_mixture_bound, dict(instances=4, T=5)),
            (certify.check_partition_bound, dict(instances=3, T=5)),
            (certify.check_equivalence_invariance, dict(instances=4, T=30)),
            (certify.check_backport_identity, dict(instances=2, T=5)),
            (certify.check_bayes_reduction, dict(instances=4, T=40)),
            (certify.check_sleep_reduction, dict(instances=3, T=4)),
            (certify.check_mpp_partition_bound, dict(instances=3, T=5)),
            (certify.check_mpp_encoding_bound, dict(instances=3, T=5)),
            (certify.check_mpp_mixture_bound, dict(instances=3, T=5)),
            (certify.check_adversarial, dict(T=4, eps=1e-6)),
            (certify.check_lifted_encoding_bound, dict(instances=3, T=5)),
        ],
        ids=lambda v: getattr(v, "__name__", ""),
    )
    def test_passes(self, fn, kwargs):
        rep = fn(**kwargs)
        assert rep.passed, rep.summary()

    @pytest.mark.parametrize("loss", ["square", "hellinger", "log"])
    def test_loss_checks(self, loss):
        assert certify.check_mixability(loss, n=200).passed
        assert certify.check_lift(loss, instances=3, T=15).passed

    def test_mixture_bound_is_tight_for_fixed_share(self):
        rep = certify.check_mixture_bound(instances=3, T=5, scheme=MixingScheme.fixed_share(0.3))
        assert max(abs(r.value) for r in rep.rows) <= 1e-12

    def test_reproducible(self):
        a = certify.check_mixture_bound(instances=3, T=4, seed=5).to_csv()
        b = certify.check_mixture_bound(instances=3, T=4, seed=5).to_csv()
        assert a == b

    def test_adversarial_gap_depends_on_scheme(self):
        # a scheme that favours long cells leaves much more mass off the finest partition
        rep = certify.check_adversarial(T=4, eps=1e-6, scheme=parse_scheme("fixedshare:0.01"))
        assert not rep.passed

    def test_counterexample_values(self):
        out = certify.freezing_counterexample()
        assert out[0.1] == pytest.approx((0.8, 0.35))
        assert out[0.5] == pytest.approx((0.8, 0.55))

    def test_random_instances(self, rng):
        for _ in range(20):
            inst = certify.random_instance(rng, 6)
            assert inst.preds.horizon >= 6
            assert len(inst.outcomes) == 6
        kinds = {certify.random_scheme(np.random.default_rng(s)).kind for s in range(40)}
        assert kinds >= {"fixedshare", "uniformpast"}

    def test_cli_names_cover_every_check(self):
        assert set(certify.CHECKS) == {
            "thm1", "thm2", "thm3", "thm4", "cor1", "cor3", "cor4", "lemma6", "sleep-reduction", "adversarial"
        }
