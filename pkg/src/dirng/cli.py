"""Command-line front end.

Exit codes: 0 success, 1 the protocol aborted (``certify`` only; the
certificate is still written), 2 bad input or configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from pathlib import Path

from . import figures
from .config import ConfigError, ExperimentDocument
from .formats import FormatError, dump_counts, dump_json, dump_transcript, load_data
from .guessing import GPQuery, guessing_probability_region, solve_dual
from .npa import tsirelson_bound
from .protocol import XR_CHOICES, certify, extract, raw_bits
from .quantum import Transcript, sample_counts, sample_transcript
from .scenario import (CHSH_SCENARIO, IP_ALL_COEFFS, IP_COEFFS, BellExpression,
                       InputDistribution, chsh_variant,
                       expression_set, from_coefficient_list, tilted_beta, tilted_chsh)

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("dirng")


class SpecError(ValueError):
    """A command-line expression or value list that does not parse."""


def _fail(source: str, text: str, col: int, msg: str):
    raise SpecError(f"{source}:1:{col + 1}: {msg}\n  {text}\n  {' ' * col}^")


_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf"


def _numbers(text: str, source: str, offset: int = 0, full: str | None = None) -> list[float]:
    full = text if full is None else full
    out = []
    pos = 0
    for part in text.split(","):
        stripped = part.strip()
        if not re.fullmatch(_NUMBER, stripped):
            col = offset + pos + (len(part) - len(part.lstrip()))
            _fail(source, full, col, f"expected a number, found {stripped!r}")
        out.append(float(stripped))
        pos += len(part) + 1
    return out


def parse_expression(text: str, source: str = "<expr>",
                     pi: InputDistribution | None = None) -> list[BellExpression]:
    """One ``--expr`` argument; ``set:NAME`` expands to several expressions.

    Forms: ``chsh``, ``chshYY`` (variant with y1, y2), ``tilted`` or
    ``tilted:BETA``, ``corr:c0,...,c8`` (constant then the eight
    correlator coefficients), ``I_p``, ``I_p_all`` and ``set:e|g|h``.
    """
    pi = pi if pi is not None else InputDistribution.uniform(CHSH_SCENARIO)
    name, sep, arg = text.partition(":")
    key = name.strip().lower()
    if key == "chsh" and not sep:
        return [chsh_variant(0, 0)]
    m = re.fullmatch(r"chsh([01])([01])", key)
    if m and not sep:
        return [chsh_variant(int(m.group(1)), int(m.group(2)))]
    if key == "tilted":
        beta = tilted_beta(math.pi / 8) if not sep else \
            _numbers(arg, source, len(name) + 1, text)[0]
        if sep and "," in arg:
            _fail(source, text, len(name) + 1 + arg.index(","), "tilted takes a single beta")
        return [tilted_chsh(beta, pi)]
    if key == "corr" and sep:
        c = _numbers(arg, source, len(name) + 1, text)
        if len(c) != 9:
            _fail(source, text, len(name) + 1, f"corr needs 9 coefficients, got {len(c)}")
        return [from_coefficient_list(c, pi, "corr")]
    if key in ("i_p", "i_p_all") and not sep:
        coeffs = IP_COEFFS if key == "i_p" else IP_ALL_COEFFS
        return [from_coefficient_list(coeffs, pi, name.strip(), x0=(1, 0))]
    if key == "set" and sep:
        try:
            return expression_set(arg.strip(), pi)
        except ValueError:
            _fail(source, text, len(name) + 1, f"unknown set {arg.strip()!r} (choose e, g, h)")
    _fail(source, text, 0, f"unknown expression {text!r}")


def parse_region(specs: list[str]) -> tuple[list[float], list[float]]:
    lower, upper = [], []
    for k, spec in enumerate(specs):
        src = f"<region {k + 1}>"
        for item in spec.split(","):
            col = spec.index(item)
            if item.count(":") != 1:
                _fail(src, spec, col, "expected lo:hi")
            lo, hi = item.split(":")
            lower += _numbers(lo, src, col, spec)
            upper += _numbers(hi, src, col + len(lo) + 1, spec)
    return lower, upper


def parse_inputs(text: str) -> tuple[tuple[int, ...], ...]:
    if text in XR_CHOICES:
        return XR_CHOICES[text]
    out = []
    for item in text.split(","):
        if not re.fullmatch(r"[01]{2}", item.strip()):
            _fail("<xr>", text, text.find(item), "expected all, 10, 00 or a list like 00,10")
        out.append((int(item.strip()[0]), int(item.strip()[1])))
    return tuple(out)


_GUESS = {"A": (0,), "B": (1,), "AB": None}


def _expressions(args) -> list[BellExpression]:
    exprs = []
    if args.chsh:
        exprs.append(chsh_variant(0, 0))
    for k, spec in enumerate(args.expr or []):
        exprs += parse_expression(spec, f"<expr {k + 1}>")
    if not exprs:
        raise SpecError("give at least one expression (--chsh or --expr)")
    return exprs


def _print_result(res, out) -> None:
    print(f"g = {res.g:.10f}", file=out)
    print(f"h = {res.h:.10f}", file=out)
    print(f"status = {res.status}", file=out)
    if not math.isnan(res.duality_gap):
        print(f"duality_gap = {res.duality_gap:.3e}", file=out)
    if res.witness is None:
        print("witness = none", file=out)
        return
    w = res.witness
    print(f"witness y0 = {w.y0:.10f}", file=out)
    print("witness y = " + json.dumps([round(float(v), 10) for v in w.y]), file=out)
    print(f"witness sos blocks = {len(w.sos)} (full matrices with --json)", file=out)


def cmd_gp(args, out) -> int:
    exprs = _expressions(args)
    if (args.value is None) == (args.region is None):
        raise SpecError("give exactly one of --value or --region")
    if args.value is not None:
        vals = []
        for k, v in enumerate(args.value):
            vals += _numbers(v, f"<value {k + 1}>")
        lower = upper = vals
    else:
        lower, upper = parse_region(args.region)
    if len(lower) != len(exprs):
        raise SpecError(f"{len(exprs)} expression(s) but {len(lower)} value(s)")
    query = GPQuery(exprs, lower, upper, parse_inputs(args.xr), args.level or 2,
                    _GUESS[args.guess])
    res = solve_dual(query) if args.dual else guessing_probability_region(query)
    _print_result(res, out)
    if res.status == "infeasible_primal":
        print("warning: no quantum behavior is compatible with the constraints; "
              "reporting g = 1", file=sys.stderr)
    if args.json:
        Path(args.json).write_text(dump_json({"query": query.to_dict(), "result": res.to_dict()}))
    return EXIT_OK if res.ok else EXIT_SOLVER


def _document(args) -> ExperimentDocument:
    doc = ExperimentDocument.load(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "level", None) is not None:
        overrides["level"] = args.level
    if overrides:
        doc = ExperimentDocument.from_dict({**doc.to_dict(), **overrides})
    return doc


def _out_dir(args, doc: ExperimentDocument | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(doc.output_dir if doc is not None else ".")


def cmd_certify(args, out) -> int:
    doc = _document(args)
    config = doc.protocol_config()
    data = load_data(args.data)
    try:
        cert = certify(config, data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    target = _out_dir(args, doc)
    target.mkdir(parents=True, exist_ok=True)
    path = target / "certificate.json"
    path.write_text(dump_json(cert.to_dict()))
    print(f"{cert.status} n={cert.n} g={cert.g:.10f} score={cert.score:.6f} "
          f"rate={cert.rate:.6f} hmin={cert.hmin_bound} -> {path}", file=out)
    if cert.status == "solver_failure":
        return EXIT_SOLVER
    if cert.status != "pass":
        return EXIT_ABORT
    if args.extract:
        if not isinstance(data, Transcript):
            raise ConfigError("extraction needs a transcript, not a count table")
        bits = extract(raw_bits(data, config.gen_inputs), cert.hmin_bound, config.ext_m,
                       config.eps_ext, config.seed)
        bit_path = target / "random_bits.txt"
        bit_path.write_text("".join(map(str, bits.tolist())) + "\n")
        print(f"extracted {bits.size} bits -> {bit_path}", file=out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    doc = _document(args)
    p = doc.device_behavior()
    pi = doc.input_dist()
    target = _out_dir(args, doc)
    target.mkdir(parents=True, exist_ok=True)
    if args.counts:
        path = target / "counts.txt"
        path.write_text(dump_counts(sample_counts(p, pi, doc.n, doc.seed)))
    else:
        path = target / "transcript.txt"
        path.write_text(dump_transcript(sample_transcript(p, pi, doc.n, doc.seed)))
    print(f"wrote {doc.n} rounds -> {path}", file=out)
    return EXIT_OK


def cmd_figure(args, out) -> int:
    target = Path(args.out or f"figure{args.id}")
    paths = figures.generate(args.id, target, repetitions=args.reps, points=args.points,
                             resolution=args.grid, seed=args.seed or 0,
                             level=args.level or 2, jobs=args.jobs or 1)
    for path in paths:
        print(f"wrote {path}", file=out)
    return EXIT_OK


def cmd_tsirelson(args, out) -> int:
    exprs = _expressions(args)
    for f in exprs:
        v = tsirelson_bound(f, args.level or 2, "min" if args.min else "max")
        print(f"{f.label} {'min' if args.min else 'max'} = {v:.10f}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--level", type=int, choices=(1, 2, 3), default=argparse.SUPPRESS,
                        help="NPA level (default 2)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="worker processes for campaigns")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="dirng", parents=[common],
        description="Device-independent randomness certification from Bell data.",
        epilog="Solver tolerance can be overridden with DIRNG_SOLVER_TOL.")
    sub = parser.add_subparsers(dest="command", required=True)

    def exprs(p):
        p.add_argument("--chsh", action="store_true", help="the CHSH expression")
        p.add_argument("--expr", action="append", metavar="SPEC",
                       help="chsh, chshYY, tilted[:beta], corr:c0,...,c8, I_p, I_p_all, set:e|g|h")

    p = sub.add_parser("gp", parents=[common], help="one guessing-probability query")
    exprs(p)
    p.add_argument("--value", action="append", metavar="V[,V...]", help="point values")
    p.add_argument("--region", action="append", metavar="LO:HI[,...]", help="interval bounds")
    p.add_argument("--xr", default="all", help="generating inputs: all, 10, 00 or e.g. 00,10")
    p.add_argument("--guess", choices=sorted(_GUESS), default="A",
                   help="whose outputs are guessed (default A)")
    p.add_argument("--dual", action="store_true", help="solve the explicit dual program")
    p.add_argument("--json", metavar="PATH", help="also write query and result as JSON")
    p.set_defaults(func=cmd_gp)

    p = sub.add_parser("certify", parents=[common], help="run the protocol on recorded data")
    p.add_argument("config")
    p.add_argument("data")
    p.add_argument("--extract", action="store_true", help="hash the raw outputs after a pass")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", parents=[common], help="sample data from the model device")
    p.add_argument("config")
    p.add_argument("--counts", action="store_true", help="write a count table, not rounds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("figure", parents=[common], help="regenerate figure data")
    p.add_argument("id", type=int, choices=(1, 2, 4, 5, 6))
    p.add_argument("--reps", type=int, default=figures.DESK_REPETITIONS,
                   help=f"repetitions per n (full scale {figures.FULL_REPETITIONS})")
    p.add_argument("--points", type=int, default=figures.DESK_N_POINTS,
                   help="n-grid points between 1e2 and 3e18")
    p.add_argument("--grid", type=int, default=figures.DESK_GRID, help="heat-map resolution")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("tsirelson", parents=[common], help="quantum bound of an expression")
    exprs(p)
    p.add_argument("--min", action="store_true", help="minimize instead of maximize")
    p.set_defaults(func=cmd_tsirelson)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    for name in ("seed", "level", "jobs", "out", "verbose"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (SpecError, ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
