"""Command-line interface: ``oreyci {simulate,ci,coverage,ratio}``.

Exit codes: 0 success, 2 usage or validation error, 3 generation failure,
4 degenerate statistic.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ci import CI_CSV_HEADER, EPS_MODES, bounds_for, ci_csv_row, confidence_interval
from .concentration import DEFAULT_TOL
from .exceptions import (
    DegenerateStatistic,
    EmbeddingFailure,
    InvalidParameter,
    MalformedPath,
    MissingCell,
    NoConvergence,
    NotPositiveDefinite,
)
from .gaussim import KINDS, GridSpec, ProcessModel, generate, make_rng, read_path_csv, write_path_csv
from .montecarlo import (
    DESK_N,
    DESK_REPLICATES,
    PAPER_ALPHA,
    PAPER_INDEX,
    PAPER_N,
    PAPER_REPLICATES,
    CoverageReport,
    ExperimentPlan,
    ProcessTemplate,
    length_ratio_report,
    ratio_csv,
    run_coverage,
)

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_DEGENERATE = 0, 2, 3, 4
OUTPUT_DIR_ENV = "OREYCI_OUTPUT_DIR"

log = logging.getLogger("oreyci")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _add_process_args(p: argparse.ArgumentParser, need_h: bool) -> None:
    p.add_argument("--process", choices=KINDS, required=True)
    if need_h:
        p.add_argument("--h", type=float, help="Hurst parameter H")
    p.add_argument("--k", type=float, help="bifBm parameter K")
    p.add_argument("--mu", type=float, help="fO-U drift")
    p.add_argument("--tau", type=float, help="fO-U volatility")
    p.add_argument("--x0", type=float, help="fO-U initial value")
    p.add_argument("--hstar", type=float, help="fO-U known upper bound on H")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oreyci",
        description="Simulate Gaussian processes and compute exact confidence intervals for their Orey index.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="key=value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("simulate", help="write one sample path as a t,x CSV")
    _add_process_args(p, need_h=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--refine", type=int, default=1, help="fO-U Euler refinement factor")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ci", help="confidence interval from a t,x CSV")
    _add_process_args(p, need_h=False)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=PAPER_ALPHA)
    p.add_argument("--eps-mode", choices=EPS_MODES, default="exact")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("coverage", help="Monte Carlo coverage study")
    p.add_argument("--process", type=lambda s: s.split(","), default=["fbm"],
                   help="comma-separated families")
    p.add_argument("--h", type=_floats, help="comma-separated H values")
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--hstar", type=float, default=0.99)
    p.add_argument("--n", type=_ints)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--eps-mode", choices=EPS_MODES, default="exact")
    p.add_argument("--paper-scale", action="store_true",
                   help="n in {200,400,800,1600}, 1000 replicates, alpha 0.1")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ratio", help="median CI-length ratios against an fBm report")
    p.add_argument("--base", type=Path, required=True)
    p.add_argument("--others", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path)
    return parser


def read_config(path: Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # config values must become defaults before required flags are checked
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if known.config is None or known.command not in parser.subcommands:
        return parser.parse_args(argv)
    config = read_config(known.config)
    sub = parser.subcommands[known.command]
    defaults = {}
    for action in sub._actions:  # noqa: SLF001  (argparse has no public accessor)
        if action.dest in config:
            raw = config[action.dest]
            defaults[action.dest] = action.type(raw) if action.type else raw
            action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _model_from_args(args, H: float) -> ProcessModel:
    kind = args.process
    if kind == "bm":
        return ProcessModel.bm()
    if kind == "bifbm":
        if args.k is None:
            raise UsageError("bifbm needs --k")
        return ProcessModel.bifbm(H, args.k)
    if kind == "fou":
        missing = [f"--{n}" for n in ("mu", "tau", "x0", "hstar") if getattr(args, n) is None]
        if missing:
            raise UsageError(f"fou needs {' '.join(missing)}")
        return ProcessModel.fou(H, args.mu, args.tau, args.x0, args.hstar)
    return ProcessModel(kind, H)


def cmd_simulate(args) -> int:
    H = 0.5 if args.process == "bm" else args.h
    if H is None:
        raise UsageError("--h is required")
    model = _model_from_args(args, H)
    grid = GridSpec(args.t, args.n)
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**63)
    path = generate(model, grid, make_rng(seed), refine=args.refine)
    out = args.out or _output_dir() / f"path_{args.process}_seed{seed}.csv"
    write_path_csv(path, out)
    print(f"seed: {seed}")
    print(f"wrote {path.n + 1} rows to {out}")
    return EXIT_OK


def cmd_ci(args) -> int:
    path = read_path_csv(args.input)
    grid = path.grid
    # H itself is unknown; any admissible placeholder gives the same bounds
    probe = {"bifbm": 0.25, "fou": args.hstar if args.hstar is not None else 0.5}.get(args.process, 0.5)
    model = _model_from_args(args, probe)
    bounds = bounds_for(model, grid, args.eps_mode)
    ci = confidence_interval(path, bounds, args.alpha, tol=args.tol)
    print(CI_CSV_HEADER)
    print(ci_csv_row(ci, grid, args.process, param_k=args.k if args.process == "bifbm" else None,
                     mu=args.mu, tau=args.tau, x0=args.x0, hstar=args.hstar))
    return EXIT_OK


def cmd_coverage(args) -> int:
    if args.paper_scale:
        n_list, replicates, alpha = PAPER_N, PAPER_REPLICATES, PAPER_ALPHA
    else:
        n_list, replicates, alpha = DESK_N, DESK_REPLICATES, PAPER_ALPHA
    n_list = tuple(args.n) if args.n else n_list
    replicates = args.replicates if args.replicates is not None else replicates
    alpha = args.alpha if args.alpha is not None else alpha
    index_list = tuple(args.h) if args.h else PAPER_INDEX

    templates = []
    for kind in args.process:
        if kind not in KINDS:
            raise UsageError(f"unknown process {kind!r}")
        if kind == "bifbm":
            idx = tuple(h for h in index_list if h < 0.5)
            templates.append(ProcessTemplate("bifbm", K=args.k, indices=idx))
        elif kind == "fou":
            templates.append(ProcessTemplate("fou", mu=args.mu, tau=args.tau, x0=args.x0, Hstar=args.hstar,
                                             indices=tuple(h for h in index_list if h <= args.hstar)))
        elif kind == "bm":
            templates.append(ProcessTemplate("bm", indices=(0.5,)))
        else:
            templates.append(ProcessTemplate(kind))
    plan = ExperimentPlan(tuple(templates), n_list, index_list, alpha, replicates, args.t, args.seed, args.eps_mode)
    print(f"# plan: nseq={','.join(map(str, plan.n_list))} Nsp={plan.replicates} "
          f"alpha={plan.alpha} seed={plan.master_seed}")
    report = run_coverage(plan, workers=args.workers)
    out = args.out or _output_dir() / f"coverage_{'_'.join(args.process)}_seed{args.seed}.csv"
    report.to_csv(out)
    print(f"wrote {len(report.rows)} cells to {out}")
    return EXIT_OK


def cmd_ratio(args) -> int:
    base = CoverageReport.from_csv(args.base)
    others = [CoverageReport.from_csv(p) for p in args.others]
    rows = length_ratio_report(base, others)
    out = args.out or _output_dir() / "ratios.csv"
    ratio_csv(rows, out)
    print(f"wrote {len(rows)} ratios to {out}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "ci": cmd_ci, "coverage": cmd_coverage, "ratio": cmd_ratio}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DegenerateStatistic as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (EmbeddingFailure, NotPositiveDefinite, NoConvergence) as exc:
        print(f"error: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except (UsageError, InvalidParameter, MalformedPath, MissingCell, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
