"""Text formats: EHMM files, prediction tables, outcome, partition and action files."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

from .distributions import PredictionTable
from .ehmm import Ehmm
from .errors import InvalidInputError
from .oracles import Partition


def _open_text(src):
    if hasattr(src, "read"):
        return src.read()
    return Path(src).read_text(encoding="utf-8")


def _float(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise InvalidInputError(f"{where}: bad number {tok!r}") from None


def parse_ehmm(text: str, name: str = "ehmm") -> Ehmm:
    """Parse the line format ``experts:``, ``states:``, ``init:``, ``trans:``, ``prod:``.

    ``init`` lists ``state prob`` pairs; ``trans`` and ``prod`` give one
    ``src dst prob`` triple per line.  ``#`` starts a comment.
    """
    experts = states = None
    init: dict = {}
    trans: dict = defaultdict(dict)
    prod: dict = defaultdict(dict)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        key, sep, rest = line.partition(":")
        if not sep:
            raise InvalidInputError(f"{where}: expected 'key: values'")
        key, toks = key.strip().lower(), rest.split()
        if key == "experts":
            experts = toks
        elif key == "states":
            states = toks
        elif key == "init":
            if len(toks) % 2:
                raise InvalidInputError(f"{where}: init takes state/probability pairs")
            for q, p in zip(toks[::2], toks[1::2]):
                if q in init:
                    raise InvalidInputError(f"{where}: duplicate init state {q!r}")
                init[q] = _float(p, where)
        elif key in ("trans", "prod"):
            if len(toks) != 3:
                raise InvalidInputError(f"{where}: {key} takes 'src dst prob'")
            table = trans if key == "trans" else prod
            if toks[1] in table[toks[0]]:
                raise InvalidInputError(f"{where}: duplicate {key} entry {toks[0]} {toks[1]}")
            table[toks[0]][toks[1]] = _float(toks[2], where)
        else:
            raise InvalidInputError(f"{where}: unknown key {key!r}")
    if experts is None or states is None:
        raise InvalidInputError("EHMM file needs 'experts:' and 'states:' lines")
    for q in list(trans) + list(prod) + list(init):
        if q not in states:
            raise InvalidInputError(f"unknown state {q!r}")
    return Ehmm.from_dicts(experts, init, dict(trans), dict(prod), states=states, name=name)


def read_ehmm(src) -> Ehmm:
    name = Path(src).stem if isinstance(src, (str, Path)) else "ehmm"
    return parse_ehmm(_open_text(src), name=name)


def format_ehmm(ehmm: Ehmm) -> str:
    labels = [str(q) for q in ehmm.states]
    if len(set(labels)) != len(labels) or any(" " in s for s in labels):
        raise InvalidInputError("state labels must be distinct tokens to be written")
    lines = [f"experts: {' '.join(ehmm.experts)}", f"states: {' '.join(labels)}"]
    lines.append("init: " + " ".join(f"{labels[q]} {float(ehmm.init[q])!r}" for q in np.flatnonzero(ehmm.init)))
    for q in range(ehmm.n_states):
        for k in range(ehmm.indptr[q], ehmm.indptr[q + 1]):
            lines.append(f"trans: {labels[q]} {labels[ehmm.indices[k]]} {float(ehmm.probs[k])!r}")
    for q in range(ehmm.n_states):
        for e in np.flatnonzero(ehmm.prod[q]):
            lines.append(f"prod: {labels[q]} {ehmm.experts[e]} {float(ehmm.prod[q, e])!r}")
    return "\n".join(lines) + "\n"


def write_ehmm(ehmm: Ehmm, path) -> None:
    Path(path).write_text(format_ehmm(ehmm), encoding="utf-8")


def parse_predictions(text: str) -> PredictionTable:
    """CSV ``t,expert,outcome,prob``; missing entries are zero, experts/outcomes in first-seen order."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "expert", "outcome", "prob"]:
        raise InvalidInputError("prediction table header must be t,expert,outcome,prob")
    experts: dict = {}
    outcomes: dict = {}
    entries = []
    for n, row in enumerate(reader, start=2):
        where = f"row {n}"
        try:
            t = int(row["t"])
        except (TypeError, ValueError):
            raise InvalidInputError(f"{where}: bad round {row['t']!r}") from None
        if t < 1:
            raise InvalidInputError(f"{where}: rounds start at 1")
        e, x = row["expert"].strip(), row["outcome"].strip()
        experts.setdefault(e, len(experts))
        outcomes.setdefault(x, len(outcomes))
        entries.append((t, experts[e], outcomes[x], _float(row["prob"], where)))
    if not entries:
        raise InvalidInputError("prediction table is empty")
    T = max(t for t, *_ in entries)
    probs = np.zeros((T, len(experts), len(outcomes)))
    seen = set()
    for t, e, x, p in entries:
        if (t, e, x) in seen:
            raise InvalidInputError(f"duplicate entry for round {t}")
        seen.add((t, e, x))
        probs[t - 1, e, x] = p
    return PredictionTable(list(experts), list(outcomes), probs)


def read_predictions(src) -> PredictionTable:
    return parse_predictions(_open_text(src))


def format_predictions(table: PredictionTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "expert", "outcome", "prob"])
    for t in range(table.horizon):
        for e, name in enumerate(table.experts):
            for x, out in enumerate(table.outcomes):
                w.writerow([t + 1, name, out, repr(float(table.probs[t, e, x]))])
    return buf.getvalue()


def write_predictions(table: PredictionTable, path) -> None:
    Path(path).write_text(format_predictions(table), encoding="utf-8")


def parse_outcomes(text: str) -> list[str]:
    """Whitespace-separated outcome tokens (one per line, or a single line)."""
    return text.split()


def read_outcomes(src) -> list[str]:
    return parse_outcomes(_open_text(src))


def format_outcomes(outcomes) -> str:
    return "".join(f"{x}\n" for x in outcomes)


def write_outcomes(outcomes, path) -> None:
    Path(path).write_text(format_outcomes(outcomes), encoding="utf-8")


def parse_partition(text: str) -> Partition:
    toks = text.split()
    try:
        prev = tuple(int(t) for t in toks)
    except ValueError:
        raise InvalidInputError(f"partition must be integers, got {text.strip()!r}") from None
    return Partition(prev)


def read_partition(src) -> Partition:
    return parse_partition(_open_text(src))


def parse_actions(text: str, experts, horizon: int | None = None) -> np.ndarray:
    """CSV ``t,expert,action`` into a ``(T, E)`` array aligned with ``experts``."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "expert", "action"]:
        raise InvalidInputError("actions header must be t,expert,action")
    pos = {str(e): k for k, e in enumerate(experts)}
    rows = []
    for n, row in enumerate(reader, start=2):
        where = f"row {n}"
        try:
            t = int(row["t"])
        except (TypeError, ValueError):
            raise InvalidInputError(f"{where}: bad round {row['t']!r}") from None
        e = row["expert"].strip()
        if e not in pos:
            raise InvalidInputError(f"{where}: unknown expert {e!r}")
        a = _float(row["action"], where)
        if not 0.0 <= a <= 1.0 or t < 1:
            raise InvalidInputError(f"{where}: action must lie in [0, 1] and t >= 1")
        rows.append((t, pos[e], a))
    T = horizon if horizon is not None else max((t for t, *_ in rows), default=0)
    out = np.full((T, len(pos)), np.nan)
    for t, e, a in rows:
        if t <= T:
            out[t - 1, e] = a
    if np.isnan(out).any():
        missing = np.argwhere(np.isnan(out))[0]
        raise InvalidInputError(f"no action for expert {experts[missing[1]]} at round {missing[0] + 1}")
    return out


def read_actions(src, experts, horizon: int | None = None) -> np.ndarray:
    return parse_actions(_open_text(src), experts, horizon)


def format_actions(actions: np.ndarray, experts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "expert", "action"])
    for t in range(actions.shape[0]):
        for e, name in enumerate(experts):
            w.writerow([t + 1, name, repr(float(actions[t, e]))])
    return buf.getvalue()
