"""Command-line front end: ``epp run | gen | oracle | experiment``.

Exit codes: 0 success, 1 oracle check failed, 2 bad input, 3 zero-probability
outcome, 4 capacity guard exceeded.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import certify, experiments
from . import io as fio
from .distributions import Distribution, PredictionTable
from .ehmm import bayes_ehmm, laplace_ehmm, sample_outcomes, slot_machine
from .engine import Variant, epp_run
from .errors import CapacityError, InvalidInputError, MixabilityError, ZeroProbabilityError
from .forward import ForwardState, forward_run
from .losses import derived_run, get_loss
from .oracles import MppState, OracleContext, mpp_reference
from .schemes import log_partition_prior, parse_scheme

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_ZERO, EXIT_CAPACITY = 0, 1, 2, 3, 4
ALGORITHMS = ("forward", "mpp", "epp-freeze", "epp-sleep")
BASES = ("forward", "mpp", "epp-freeze", "epp-sleep")


def default_seed() -> int:
    raw = os.environ.get("EPP_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise InvalidInputError(f"EPP_SEED must be an integer, got {raw!r}") from None


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# run


def resolve_model(token: str | None, preds_path, horizon: int):
    """``(ehmm, preds)`` from a builtin name (``bayes[:k]``, ``laplace``, ``slotmachine``) or files."""
    preds = fio.read_predictions(preds_path) if preds_path else None
    name = (token or "").strip()
    low = name.lower()
    if low == "laplace":
        return laplace_ehmm(max(horizon, 1))
    if low == "slotmachine":
        ehmm, make_table = slot_machine()
        return ehmm, make_table(max(horizon, 1))
    if low == "bayes" or low.startswith("bayes:") or not name:
        if preds is None:
            raise InvalidInputError("the bayes model needs --preds")
        k = len(preds.experts)
        if ":" in low:
            try:
                k = int(low.split(":", 1)[1])
            except ValueError:
                raise InvalidInputError(f"bad expert count in {name!r}") from None
            if not 1 <= k <= len(preds.experts):
                raise InvalidInputError(f"bayes:{k} but the table has {len(preds.experts)} experts")
        return bayes_ehmm(Distribution.uniform(preds.experts[:k])), preds
    ehmm = fio.read_ehmm(name)
    if preds is None:
        raise InvalidInputError("an EHMM file needs --preds")
    return ehmm, preds


def _run_log_loss(args, ehmm, preds, data):
    algo = args.algorithm
    if algo == "forward":
        return forward_run(ehmm, preds, data)
    scheme = parse_scheme(args.scheme)
    if algo == "mpp":
        experts = ehmm.experts
        prior = ehmm.init @ ehmm.prod
        return mpp_reference(Distribution(zip(experts, prior)), preds, data, scheme)
    return epp_run(ehmm, scheme, algo.split("-")[1], preds, data)


def _make_base(kind: str, ehmm, scheme):
    if kind == "forward":
        return ForwardState(ehmm)
    if kind == "mpp":
        return MppState(ehmm.init @ ehmm.prod, scheme)
    from .engine import EppState

    return EppState(ehmm, scheme, kind.split("-")[1])


def _run_derived(args, loss_name: str, data_tokens):
    loss = get_loss(loss_name)
    scheme = parse_scheme(args.scheme)
    T = len(data_tokens)
    if loss.name == "log":
        ehmm, preds = resolve_model(args.ehmm, args.preds, T)
        if args.eps_floor:
            preds = preds.with_floor(args.eps_floor)
        codes = preds.encode(data_tokens)
        actions = preds.aligned(ehmm.experts)[:T]
        outcomes = preds.outcomes
    else:
        if not args.actions:
            raise InvalidInputError(f"derived:{loss.name} needs --actions")
        text = Path(args.actions).read_text(encoding="utf-8")
        experts = list(dict.fromkeys(row["expert"].strip() for row in csv.DictReader(io.StringIO(text))))
        if args.ehmm and args.ehmm.lower() not in ("bayes",) and not args.ehmm.lower().startswith("bayes:"):
            ehmm = fio.read_ehmm(args.ehmm)
            experts = list(ehmm.experts)
        else:
            ehmm = bayes_ehmm(Distribution.uniform(experts))
        actions = fio.parse_actions(text, experts, T)
        outcomes = ("0", "1")
        if any(x not in outcomes for x in data_tokens):
            raise InvalidInputError(f"derived:{loss.name} needs binary outcomes 0/1")
        codes = np.array([int(x) for x in data_tokens])
    tr = derived_run(_make_base(args.base, ehmm, scheme), loss, actions, codes, len(outcomes))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "outcome", "action", "loss", "cumloss", "bound"])
    cum = np.cumsum(tr.losses)
    for t in range(T):
        a = tr.actions[t]
        shown = " ".join(repr(float(v)) for v in np.atleast_1d(a))
        w.writerow([t + 1, data_tokens[t], shown, repr(float(tr.losses[t])), repr(float(cum[t])), repr(float(tr.lifted_bound[t]))])
    return tr, buf.getvalue()


def cmd_run(args) -> int:
    data = fio.read_outcomes(args.data)
    if not data:
        raise InvalidInputError("data file has no outcomes")
    if args.algorithm.startswith("derived:"):
        tr, text = _run_derived(args, args.algorithm.split(":", 1)[1], data)
        _emit(text, args.output)
        print(f"cumloss={tr.cumloss!r}")
        return EXIT_OK
    if args.algorithm not in ALGORITHMS:
        raise InvalidInputError(f"unknown algorithm {args.algorithm!r}")
    ehmm, preds = resolve_model(args.ehmm, args.preds, len(data))
    if args.eps_floor:
        preds = preds.with_floor(args.eps_floor)
    trace = _run_log_loss(args, ehmm, preds, data)
    _emit(trace.to_csv(), args.output)
    print(f"cumloss={trace.cumloss!r}")
    status = EXIT_OK
    if args.partition:
        status = _report_partition_bound(args, ehmm, preds, data, trace.cumloss)
    if args.partition_report:
        if not args.algorithm.startswith("epp-"):
            raise InvalidInputError("--partition-report needs an EPP algorithm")
        _emit(
            certify.partition_report(ehmm, parse_scheme(args.scheme), args.algorithm.split("-")[1], preds, data),
            args.partition_report,
        )
    return status


def _report_partition_bound(args, ehmm, preds, data, cumloss) -> int:
    """Print the per-partition loss bound for the given partition and whether it holds."""
    part = fio.read_partition(args.partition)
    if part.T != len(data):
        raise InvalidInputError(f"partition covers {part.T} rounds, data has {len(data)}")
    scheme = parse_scheme(args.scheme)
    lprior = log_partition_prior(scheme, part)
    if args.algorithm.startswith("epp-"):
        llik = OracleContext(ehmm, preds, data).partition_log_likelihood(part, args.algorithm.split("-")[1])
    elif args.algorithm == "mpp":
        from .oracles import InContextBayes

        llik = InContextBayes(Distribution(zip(ehmm.experts, ehmm.init @ ehmm.prod)), preds, data).partition(part)
    else:
        raise InvalidInputError("--partition needs mpp or an EPP algorithm")
    bound = -(lprior + llik)
    ok = cumloss <= bound * (1 + 1e-9) if math.isfinite(bound) else True
    print(f"bound={bound!r} ok={int(ok)}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# gen


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"expected comma-separated integers, got {text!r}") from None


def cmd_gen(args) -> int:
    if args.kind == "blocks":
        lengths = _int_list(args.lengths)
        symbols = [s.strip() for s in args.symbols.split(",")]
        try:
            data = experiments.blocks(lengths, symbols)
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from None
        _emit(fio.format_outcomes(data), args.output)
        return EXIT_OK
    if args.T is None or args.T < 1:
        raise InvalidInputError("gen hmm needs --T >= 1")
    seed = args.seed if args.seed is not None else default_seed()
    rng = np.random.default_rng(seed)
    if args.model.lower() == "slotmachine":
        ehmm, make_table = slot_machine()
        preds = make_table(args.T)
    else:
        ehmm, preds = resolve_model(args.model, args.preds, args.T)
    data = sample_outcomes(ehmm, preds, args.T, rng)
    _emit(fio.format_outcomes(data), args.output)
    if args.preds_output:
        fio.write_predictions(preds.truncated(args.T), args.preds_output)
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    fn = certify.CHECKS[args.check]
    params = inspect.signature(fn).parameters
    given = {
        "instances": args.instances,
        "T": args.T,
        "seed": args.seed if args.seed is not None else default_seed(),
        "variant": args.variant,
        "eps": args.eps,
        "scheme": parse_scheme(args.scheme) if args.scheme else None,
    }
    kwargs = {k: v for k, v in given.items() if k in params and v is not None}
    report = fn(**kwargs)
    _emit(report.to_csv(), args.output)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# experiment


def cmd_experiment(args) -> int:
    fn = experiments.EXPERIMENTS[args.name]
    kwargs = {"scheme": args.scheme} if args.scheme and args.name == "figure1" else {}
    data, columns, info = fn(**kwargs)
    _emit(experiments.to_csv(data, columns), args.output)
    if args.svg:
        Path(args.svg).write_text(experiments.to_svg(columns, title=args.name), encoding="utf-8")
    for key in ("epp_cumloss", "bound"):
        if key in info:
            print(f"{key}={info[key]!r}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an algorithm and write the per-round trace CSV")
    r.add_argument("--algorithm", default="epp-freeze", help="forward | mpp | epp-freeze | epp-sleep | derived:<loss>")
    r.add_argument("--scheme", default="yesterday", help="yesterday | fixedshare:A | uniformpast:A | decayingpast[-approx]:A:G")
    r.add_argument("--ehmm", default=None, help="bayes[:k] | laplace | slotmachine | path to an EHMM file")
    r.add_argument("--preds", default=None, help="prediction table CSV (t,expert,outcome,prob)")
    r.add_argument("--data", required=True, help="outcomes file")
    r.add_argument("--output", default=None, help="trace CSV path (default: stdout)")
    r.add_argument("--eps-floor", type=float, default=None, help="mix every expert prediction with uniform to this floor")
    r.add_argument("--actions", default=None, help="actions CSV (t,expert,action) for derived square/hellinger runs")
    r.add_argument("--base", default="epp-freeze", choices=BASES, help="log-loss algorithm lifted by derived runs")
    r.add_argument("--partition", default=None, help="partition file; prints its loss bound")
    r.add_argument("--partition-report", default=None, help="write partition,prior,likelihood,bound_ok CSV")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen", help="generate outcome data")
    g.add_argument("kind", choices=("blocks", "hmm"))
    g.add_argument("--lengths", default="50,50,50")
    g.add_argument("--symbols", default="1,0,1")
    g.add_argument("--model", default="slotmachine", help="slotmachine, another builtin, or an EHMM file with --preds")
    g.add_argument("--preds", default=None)
    g.add_argument("--T", type=int, default=None)
    g.add_argument("--seed", type=int, default=None, help="default: $EPP_SEED or 0")
    g.add_argument("--output", default=None)
    g.add_argument("--preds-output", default=None, help="also write the prediction table used")
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="certify a bound or identity on random instances")
    o.add_argument("check", choices=sorted(certify.CHECKS))
    o.add_argument("--instances", type=int, default=None)
    o.add_argument("--T", type=int, default=None)
    o.add_argument("--seed", type=int, default=None, help="default: $EPP_SEED or 0")
    o.add_argument("--scheme", default=None)
    o.add_argument("--variant", default=None, choices=("freeze", "sleep", "both"))
    o.add_argument("--eps", type=float, default=None)
    o.add_argument("--output", default=os.devnull, help="per-instance CSV (default: discarded; '-' for stdout)")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("experiment", help="reproduce an illustrative experiment")
    e.add_argument("name", choices=sorted(experiments.EXPERIMENTS))
    e.add_argument("--scheme", default=None)
    e.add_argument("--output", default=None)
    e.add_argument("--svg", default=None)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ZeroProbabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ZERO
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (InvalidInputError, MixabilityError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
