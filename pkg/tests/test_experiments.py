import math

import pytest
from numpy.testing import assert_allclose

from epp import experiments
from epp.oracles import Partition


class TestBlocks:
    def test_blocks(self):
        assert experiments.blocks([3, 2], [1, 0]) == list("11100")
        assert experiments.blocks([], []) == []
        with pytest.raises(ValueError):
            experiments.blocks([1], [1, 0])

    def test_symbol_partition(self):
        p = experiments.symbol_partition(list("1101"))
        assert p == Partition.from_cells([(1, 2, 4), (3,)])


class TestFigure:
    def test_curves(self):
        data, cols, info = experiments.figure1(lengths=(5, 5, 5))
        assert len(data) == 15 and set(cols) == {"in_context", "frozen", "epp_freeze"}
        # first one after the zeros: 5 ones, 5 zeros seen in context; 5 ones in the ones cell
        assert cols["in_context"][10] == pytest.approx(6 / 12)
        assert cols["frozen"][10] == pytest.approx(6 / 7)
        assert cols["frozen"][5] == pytest.approx(0.5)
        assert info["epp_cumloss"] <= info["bound"]

    def test_frozen_cells_follow_succession_rule(self):
        data, cols, _ = experiments.figure1(lengths=(4, 3, 2))
        seen = {"0": 0, "1": 0}
        for t, x in enumerate(data):
            n1 = seen[x] if x == "1" else 0
            assert cols["frozen"][t] == pytest.approx((n1 + 1) / (seen[x] + 2))
            seen[x] += 1

    def test_counterexample(self):
        _, cols, _ = experiments.counterexample()
        assert_allclose(cols["fixedshare:0.1"], [0.8, 0.35])
        assert_allclose(cols["fixedshare:0.5"], [0.8, 0.55])

    def test_relearn_monotone(self):
        _, cols, _ = experiments.relearn_demo(lengths=(10, 10, 10))
        for c in cols.values():
            assert all(b >= a for a, b in zip(c, c[1:]))


class TestOutput:
    def test_csv(self):
        text = experiments.to_csv(["1", "0"], {"p": [0.5, 0.25]})
        assert text == "t,outcome,p\n1,1,0.5\n2,0,0.25\n"

    def test_svg(self):
        svg = experiments.to_svg({"a": [0, 1, 2], "b & c": [2, 2, 2]}, title="x<y")
        assert svg.count("<polyline") == 2
        assert "b &amp; c" in svg and "x&lt;y" in svg
        assert experiments.to_svg({"flat": [1.0, 1.0]}).count("<polyline") == 1
