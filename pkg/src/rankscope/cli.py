"""Command line entry point: ``rankscope <subcommand> [options]``.

Every report is a JSON object on stdout carrying a ``meta`` block with the
tool version, the full parsed configuration and the seed. Exit status is 0 on
success, 2 on domain errors, 1 on I/O errors and 64 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .afr import (
    FALSIFY_RESTARTS,
    FALSIFY_TOL,
    AfrStatus,
    AfrVerdict,
    afr_check,
    exact_certify,
    falsify,
    grid_certify,
)
from .canonical import last_slice_normalize, multi_canonicalize, pencil_canonicalize
from .constructions import build_misc, case_dims, load_seq, save_seq, seq_to_stacked, sp_afr_to_seq, sp_afr_verdict
from .cp import FIT_TOL
from .errors import RankscopeError
from .hurwitz_radon import ans_tensor, hr_family, rho, save_family
from .tensor import load_tensor, save_tensor, tensor_to_dict
from .typical_rank import detector, mc_experiment, rank_leq_oracle, rank_nn2

EXIT_OK = 0
EXIT_IO = 1
EXIT_DOMAIN = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- handlers ----------------------------------------------------------------
# Each returns the report body (a dict) or, for CSV output, a string.

def cmd_rho(args):
    return {"n": args.n, "rho": rho(args.n)}


def cmd_hr_family(args):
    fam = hr_family(args.order)
    if args.out:
        save_family(fam, args.out)
        return {"order": fam.order, "size": len(fam.members), "out": args.out}
    return fam.to_dict()


def cmd_ans_build(args):
    t = ans_tensor(args.n, args.p)
    if args.out:
        save_tensor(t, args.out)
        return {"n": args.n, "p": args.p, "out": args.out}
    return {"tensor": tensor_to_dict(t)}


def cmd_construct(args):
    case = args.case.upper()
    t = build_misc(case, args.n)
    _, l = case_dims(case)
    save_tensor(t, args.out)
    return {"case": case, "n": args.n, "l": l, "shape": list(t.shape), "out": args.out}


def cmd_sp_afr_check(args):
    return sp_afr_verdict(load_tensor(args.input), args.l, seed=args.seed).to_dict()


def cmd_seq_stack(args):
    t = seq_to_stacked(load_seq(args.input))
    save_tensor(t, args.out)
    return {"shape": list(t.shape), "kind": t.kind.value, "out": args.out}


def cmd_seq_extract(args):
    seq = sp_afr_to_seq(load_tensor(args.input), args.l, seed=args.seed)
    save_seq(seq, args.out)
    return {"n": seq.n, "l": seq.l, "m": seq.m, "out": args.out}


def cmd_afr_check(args):
    t = load_tensor(args.input)
    if args.mode == "exact":
        ok = exact_certify(t)
        verdict = AfrVerdict(AfrStatus.CERTIFIED_EXACT if ok else AfrStatus.INCONCLUSIVE, 1.0 if ok else None, stage="exact")
    elif args.mode == "falsify":
        w = falsify(t, restarts=args.restarts, tol=args.tol, seed=args.seed)
        verdict = AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="falsify") if w else AfrVerdict(AfrStatus.INCONCLUSIVE, stage="falsify")
    elif args.mode == "certify":
        verdict = grid_certify(t, mesh=args.mesh, tol=args.tol)
    else:
        verdict = afr_check(t, restarts=args.restarts, seed=args.seed, tol=args.tol, mesh=args.mesh)
    return verdict.to_dict()


def cmd_canonicalize(args):
    t = load_tensor(args.input)
    mode = args.mode
    if mode == "auto":
        mode = "pencil" if t.p == 2 else "multi"
    if mode == "pencil":
        result = pencil_canonicalize(t, seed=args.seed)
    elif mode == "multi":
        result = multi_canonicalize(t, seed=args.seed)
    else:
        result = last_slice_normalize(t)
    doc = result.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc) + "\n")
        return {"mode": mode, "residual": result.residual, "condP": result.cond_p, "condQ": result.cond_q, "out": args.out}
    return doc


def cmd_detect(args):
    verdict = detector(load_tensor(args.input), seed=args.seed, restarts=args.restarts)
    return verdict.to_dict(include_stacked=args.stacked)


def cmd_rank_2slice(args):
    r = rank_nn2(load_tensor(args.input))
    return {"rank": r, "status": "Determined" if r is not None else "Indeterminate"}


def cmd_cp_fit(args):
    fit = rank_leq_oracle(load_tensor(args.input), args.rank, restarts=args.restarts, seed=args.seed)
    return fit.to_dict()


def cmd_typical_rank_mc(args):
    summary = mc_experiment(
        args.m, args.n, args.p, args.samples,
        seed=args.seed, crosscheck=args.crosscheck, workers=args.workers,
        restarts=args.restarts,
    )
    keep_runtime = not args.no_timestamp
    if args.format == "csv":
        return summary.to_csv(with_runtime=keep_runtime)
    return summary.to_dict(with_runtime=keep_runtime)


# --- parser ------------------------------------------------------------------

def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp and runtime fields")

    parser = _Parser(prog="rankscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rankscope {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, handler, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("rho", cmd_rho, "Hurwitz-Radon number of n")
    p.add_argument("--n", type=_positive, required=True)

    p = add("hr-family", cmd_hr_family, "maximal Hurwitz-Radon family of an order")
    p.add_argument("--order", type=_positive, required=True)
    p.add_argument("--out")

    p = add("ans-build", cmd_ans_build, "n x n x p absolutely nonsingular tensor")
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--p", type=_positive, required=True)
    p.add_argument("--out")

    p = add("construct", cmd_construct, "special-AFR tensor for one of the size families")
    p.add_argument("--case", required=True, type=str.lower, choices=["m3", "m4", "m6", "m10"])
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--out", required=True)

    p = add("sp-afr-check", cmd_sp_afr_check, "zero-row pattern plus AFR test")
    p.add_argument("--input", required=True)
    p.add_argument("--l", type=int, required=True)

    p = add("seq-stack", cmd_seq_stack, "sequence JSON to its stacked tensor")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = add("seq-extract", cmd_seq_extract, "special-AFR tensor to a sequence JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("afr-check", cmd_afr_check, "certify or falsify absolute full column rank")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["exact", "falsify", "certify", "auto"], default="auto")
    p.add_argument("--mesh", type=float, default=0.01)
    p.add_argument("--restarts", type=_positive, default=FALSIFY_RESTARTS)
    p.add_argument("--tol", type=float, default=FALSIFY_TOL)

    p = add("canonicalize", cmd_canonicalize, "normal form under GL(s) x GL(t)")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--mode", choices=["auto", "pencil", "multi", "last-slice"], default="auto")

    p = add("detect", cmd_detect, "membership in the rank > p open set")
    p.add_argument("--input", required=True)
    p.add_argument("--restarts", type=_positive, default=FALSIFY_RESTARTS)
    p.add_argument("--stacked", action="store_true", help="include the derived AFR test tensor")

    p = add("rank-2slice", cmd_rank_2slice, "real rank of an n x n x 2 tensor")
    p.add_argument("--input", required=True)

    p = add("cp-fit", cmd_cp_fit, f"seeded CP fit (success at relative residual <= {FIT_TOL:g})")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=_positive, required=True)
    p.add_argument("--restarts", type=_positive, default=20)

    p = add("typical-rank-mc", cmd_typical_rank_mc, "Monte Carlo tally of detector outcomes")
    p.add_argument("--m", type=_positive, required=True)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--p", type=_positive, required=True)
    p.add_argument("--samples", type=_positive, default=1000)
    p.add_argument("--crosscheck", action="store_true")
    p.add_argument("--workers", type=_positive, help="process count (capped by RANKSCOPE_THREADS)")
    p.add_argument("--restarts", type=_positive, default=16)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    return parser


def _meta(args) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    meta = {"tool": "rankscope", "version": __version__, "config": config, "seed": args.seed}
    if not args.no_timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return meta


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        body = args.handler(args)
    except RankscopeError as exc:
        print(f"rankscope {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, json.JSONDecodeError) as exc:
        print(f"rankscope {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    meta = _meta(args)
    if isinstance(body, str):
        sys.stdout.write("# " + json.dumps(meta, sort_keys=True) + "\n" + body)
    else:
        sys.stdout.write(json.dumps({**body, "meta": meta}, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
