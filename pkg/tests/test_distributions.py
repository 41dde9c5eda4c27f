import numpy as np
import pytest
from numpy.testing import assert_allclose

from epp import Distribution, InvalidInputError, PredictionTable, StateVector


class TestDistribution:
    def test_uniform_and_point(self):
        d = Distribution.uniform(["a", "b", "c", "d"])
        assert_allclose(d.probs, 0.25)
        assert Distribution.point("x")["x"] == 1.0

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidInputError):
            Distribution([("a", 0.5), ("a", 0.5)])

    def test_rejects_bad_sum_and_negatives(self):
        with pytest.raises(InvalidInputError):
            Distribution({"a": 0.5, "b": 0.4})
        with pytest.raises(InvalidInputError):
            Distribution({"a": 1.5, "b": -0.5})

    def test_sum_tolerance_is_1e_9(self):
        Distribution({"a": 0.5, "b": 0.5 + 5e-10})
        with pytest.raises(InvalidInputError):
            Distribution({"a": 0.5, "b": 0.5 + 5e-9})

    def test_subnormalized_allowed_when_marked(self):
        d = Distribution({"a": 0.2, "b": 0.3}, subnormalized=True)
        assert d.total() == pytest.approx(0.5)

    def test_empty_support_rejected(self):
        with pytest.raises(InvalidInputError):
            Distribution({})


class TestStateVector:
    def test_dense_roundtrip(self):
        v = np.array([0.0, 0.25, 0.0, 0.75])
        sv = StateVector.from_dense(v)
        assert list(sv.idx) == [1, 3]
        assert_allclose(sv.dense(4), v)
        assert sv.total() == pytest.approx(1.0)


class TestPredictionTable:
    def test_entry_and_encoding(self, two_experts):
        assert two_experts.entry(3, "a", "1") == 0.9
        assert list(two_experts.encode(["1", "0", 1])) == [1, 0, 1]
        assert two_experts.decode([0, 1]) == ["0", "1"]

    def test_unknown_outcome(self, two_experts):
        with pytest.raises(InvalidInputError):
            two_experts.encode(["2"])

    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvalidInputError, match="round 2"):
            PredictionTable(["a"], ["0", "1"], [[[0.5, 0.5]], [[0.5, 0.6]]])

    def test_immutable(self, two_experts):
        with pytest.raises(ValueError):
            two_experts.probs[0, 0, 0] = 0.3

    def test_aligned_reorders(self, two_experts):
        arr = two_experts.aligned(["b", "a"])
        assert_allclose(arr[0, 0], [0.9, 0.1])

    def test_floor_mixes_with_uniform(self):
        t = PredictionTable(["a"], ["0", "1", "2"], [[[1.0, 0.0, 0.0]]])
        f = t.with_floor(0.01)
        # (1 - 3 eps) p + eps
        assert_allclose(f.probs[0, 0], [0.98, 0.01, 0.01])
        with pytest.raises(InvalidInputError):
            t.with_floor(0.5)
