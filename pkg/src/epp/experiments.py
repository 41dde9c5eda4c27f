"""Illustrative experiments producing per-round CSV data and simple SVG line plots."""

from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

import numpy as np

from .engine import Variant, epp_run
from .ehmm import chain_ehmm, laplace_ehmm
from .distributions import PredictionTable
from .forward import forward_run
from .oracles import OracleContext, Partition, seeded_cell_pass
from .schemes import MixingScheme, parse_scheme, partition_prior


def blocks(lengths, symbols) -> list[str]:
    """Concatenated constant blocks, e.g. ``blocks([3, 2], [1, 0]) == ['1', '1', '1', '0', '0']``."""
    lengths, symbols = list(lengths), [str(s) for s in symbols]
    if len(lengths) != len(symbols) or any(n < 0 for n in lengths):
        raise ValueError("need one symbol per nonnegative block length")
    return [s for n, s in zip(lengths, symbols) for _ in range(n)]


def symbol_partition(data) -> Partition:
    """Partition grouping rounds by outcome symbol."""
    cells: dict = {}
    for t, x in enumerate(data, start=1):
        cells.setdefault(x, []).append(t)
    return Partition.from_cells(cells.values())


def cell_trajectory(ehmm, preds, data, partition: Partition, variant=Variant.FREEZE) -> np.ndarray:
    """Predictive distribution at every round under the composition restricted to that round's cell."""
    ctx = OracleContext(ehmm, preds, data)
    out = np.empty((ctx.T, len(preds.outcomes)))
    for cell in partition.cells:
        _, preds_c = seeded_cell_pass(ehmm, ehmm.init, 1, cell, variant, ctx.table, ctx.data, record=True)
        for t, p in zip(cell, preds_c):
            out[t - 1] = p
    return out


def figure1(scheme: str = "uniformpast:0.05", lengths=(50, 50, 50), symbols=(1, 0, 1)):
    """Laplace predictions of a one on blocks of ones and zeros.

    Columns: in-context (forward on the whole sequence), frozen per symbol
    subsequence, and EPP with freezing.  Also returns the per-partition bound
    on the EPP loss for the symbol partition.
    """
    data = blocks(lengths, symbols)
    T = len(data)
    ehmm, preds = laplace_ehmm(T)
    sch = parse_scheme(scheme)
    one = preds.outcomes.index("1")
    fwd = forward_run(ehmm, preds, data)
    part = symbol_partition(data)
    frozen = cell_trajectory(ehmm, preds, data, part)
    epp = epp_run(ehmm, sch, Variant.FREEZE, preds, data)
    ctx = OracleContext(ehmm, preds, data)
    bound = -math.log(partition_prior(sch, part)) - ctx.partition_log_likelihood(part, Variant.FREEZE)
    columns = {
        "in_context": fwd.predictive[:, one],
        "frozen": frozen[:, one],
        "epp_freeze": epp.predictive[:, one],
    }
    return data, columns, {"epp_cumloss": epp.cumloss, "bound": bound, "partition": part}


def counterexample(alphas=(0.1, 0.5), p_a=0.8, p_b=0.3):
    """EPP with freezing on the a->b chain: round-2 predictions depend on the switching rate."""
    ehmm = chain_ehmm()
    preds = PredictionTable.constant({"a": {"0": 1 - p_a, "1": p_a}, "b": {"0": 1 - p_b, "1": p_b}}, 2)
    columns = {}
    for a in alphas:
        tr = epp_run(ehmm, MixingScheme.fixed_share(a), Variant.FREEZE, preds, ["1", "1"])
        columns[f"fixedshare:{a:g}"] = tr.predictive[:, 1]
    return ["1", "1"], columns, {}


def relearn_demo(alpha: float = 0.05, lengths=(50, 50, 50), symbols=(1, 0, 1)):
    """Cumulative loss of EPP with freezing on the Laplace EHMM when an old regime returns."""
    data = blocks(lengths, symbols)
    ehmm, preds = laplace_ehmm(len(data))
    columns = {"forward": forward_run(ehmm, preds, data).cumulative}
    for sch in (MixingScheme.fixed_share(alpha), MixingScheme.uniform_past(alpha)):
        columns[str(sch)] = epp_run(ehmm, sch, Variant.FREEZE, preds, data).cumulative
    return data, columns, {}


EXPERIMENTS = {"figure1": figure1, "counterexample": counterexample, "relearn-demo": relearn_demo}


def to_csv(data, columns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(["t", "outcome", *names])
    for t, x in enumerate(data):
        w.writerow([t + 1, x, *(repr(float(columns[n][t])) for n in names)])
    return buf.getvalue()


_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def to_svg(columns: dict, title: str = "", width: int = 640, height: int = 360) -> str:
    """Minimal line plot: one polyline per column against the round index."""
    pad = 40
    ys = np.concatenate([np.asarray(v, dtype=float) for v in columns.values()])
    lo, hi = float(np.min(ys)), float(np.max(ys))
    if hi <= lo:
        hi = lo + 1.0
    n = max(len(v) for v in columns.values())

    def sx(i):
        return pad + (width - 2 * pad) * (i / max(n - 1, 1))

    def sy(v):
        return height - pad - (height - 2 * pad) * (v - lo) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="20" font-size="14">{escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="4" y="{sy(hi) + 4:.1f}" font-size="10">{hi:.3g}</text>',
        f'<text x="4" y="{sy(lo) + 4:.1f}" font-size="10">{lo:.3g}</text>',
    ]
    for k, (name, vals) in enumerate(columns.items()):
        colour = _COLOURS[k % len(_COLOURS)]
        pts = " ".join(f"{sx(i):.1f},{sy(float(v)):.1f}" for i, v in enumerate(vals))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad - 150}" y="{pad + 14 * k}" font-size="11" fill="{colour}">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
