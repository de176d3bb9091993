"""Command-line driver.

Subcommands::

    smwfb verify      lattice versus projection oracle (exit 1 on mismatch)
    smwfb experiment  reproduce experiments 1-5, CSV/JSON output
    smwfb whiten      stream samples from stdin, channel outputs to stdout
    smwfb coeffs      estimate the direct-form bank of a signal as JSON

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .coeffs import CoefficientEstimator
from .experiments import default_config, run_experiment
from .lattice import WhitenerConfig, WhitenerState
from .verification import FAULTS, report_json, verify_lattice

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smwfb", description="Signal-matched whitening filter bank.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check the lattice against the projection oracle")
    v.add_argument("--M", type=int, default=2)
    v.add_argument("--N", type=int, default=4)
    v.add_argument("--blocks", type=int, default=32)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject", choices=FAULTS, help=argparse.SUPPRESS)

    e = sub.add_parser("experiment", help="run one of the experiments 1-5")
    e.add_argument("id", type=int)
    e.add_argument("--config", type=Path, help="flat JSON file; flags override it")
    e.add_argument("--M", type=int)
    e.add_argument("--N", type=int)
    e.add_argument("--rho", type=float)
    e.add_argument("--theta", type=float)
    e.add_argument("--excitation")
    e.add_argument("--seeds", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--samples", type=int)
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--sweep", type=float, nargs="+")
    e.add_argument("--workers", type=int)
    e.add_argument("--out")

    for name, help_ in (("whiten", "whiten samples read from stdin"),
                        ("coeffs", "estimate direct-form coefficients of stdin samples")):
        w = sub.add_parser(name, help=help_)
        w.add_argument("--M", type=int, default=2)
        w.add_argument("--N", type=int, default=4)
        w.add_argument("--lambda", dest="lam", type=float, default=1.0)
        w.add_argument("--input", type=Path, help="read samples from a file instead of stdin")
        if name == "coeffs":
            w.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    return p


def _iter_samples(stream):
    """Floats from a one-column stream; a non-numeric first line is a header."""
    first = True
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            yield float(line.split(",")[0])
        except ValueError:
            if first:
                first = False
                continue
            raise UsageError(f"not a number: {line!r}")
        first = False


def _open_input(args):
    return args.input.open() if args.input else sys.stdin


def cmd_verify(args, out) -> int:
    if args.blocks < 1:
        raise UsageError("--blocks must be >= 1")
    try:
        report = verify_lattice(args.M, args.N, args.blocks, args.trials, args.seed, inject=args.inject)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out.write(report_json(report) + "\n")
    if not report["passed"]:
        sys.stderr.write("verification failed: " + ", ".join(report["failing"]) + "\n")
        return EXIT_FAIL
    return EXIT_OK


def _experiment_config(args):
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a flat JSON object")
        file_cfg.pop("experiment", None)
        if "lambda" in file_cfg:
            file_cfg["lam"] = file_cfg.pop("lambda")
    flags = {k: getattr(args, k) for k in ("M", "N", "rho", "theta", "excitation", "seeds", "seed",
                                            "samples", "lam", "sweep", "workers", "out")}
    merged = {**file_cfg, **{k: v for k, v in flags.items() if v is not None}}
    if "sweep" in merged:
        merged["sweep"] = tuple(merged["sweep"])
    try:
        return default_config(args.id, **merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_experiment(args, out) -> int:
    cfg = _experiment_config(args)
    summary = run_experiment(cfg)
    out.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _config(args) -> WhitenerConfig:
    try:
        return WhitenerConfig(args.M, args.N, args.lam, scalar_section=False)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _blocks(samples, M):
    """``x(0)`` alone, then complete blocks of ``M`` samples."""
    it = iter(samples)
    try:
        yield [next(it)]
    except StopIteration:
        return
    buf = []
    for v in it:
        buf.append(v)
        if len(buf) == M:
            yield buf
            buf = []


def cmd_whiten(args, out) -> int:
    cfg = _config(args)
    st = WhitenerState(cfg)
    with _open_input(args) as src:
        out.write("block," + ",".join(f"e{i}" for i in range(cfg.M)) + "\n")
        for blk in _blocks(_iter_samples(src), cfg.M):
            try:
                res = st.push_origin(blk[0]) if st.block == -1 else st.process_block(blk)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            out.write(f"{res.block}," + ",".join(repr(v) for v in res.values) + "\n")
            out.flush()
    return EXIT_OK


def cmd_coeffs(args, out) -> int:
    cfg = _config(args)
    if cfg.N % cfg.M:
        raise UsageError("--N must be a multiple of --M for the direct form")
    st = WhitenerState(cfg)
    est = CoefficientEstimator(cfg)
    with _open_input(args) as src:
        for blk in _blocks(_iter_samples(src), cfg.M):
            try:
                st.push_origin(blk[0]) if st.block == -1 else st.process_block(blk)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            est.update(st)
    if st.block < 0:
        raise UsageError("no samples on input")
    text = est.direct_form().to_json() + "\n"
    if args.out is not None:
        args.out.write_text(text)
    else:
        out.write(text)
    return EXIT_OK


_COMMANDS = {"verify": cmd_verify, "experiment": cmd_experiment, "whiten": cmd_whiten, "coeffs": cmd_coeffs}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        sys.stderr.write(f"smwfb {args.command}: {exc}\n")
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
