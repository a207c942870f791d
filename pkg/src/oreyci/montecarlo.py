"""
Monte Carlo coverage experiments.

Every replicate draws from its own random stream keyed by
``(master_seed, cell key, replicate index)``. Replicates are grouped into
chunks of fixed size independent of the worker count, so a plan run with
one worker or eight produces byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ci import bounds_for, confidence_interval
from .exceptions import DegenerateStatistic, InvalidParameter, MissingCell
from .gaussim import GridSpec, ProcessModel, generate, make_rng, stable_key

__all__ = [
    "ProcessTemplate",
    "ExperimentPlan",
    "CoverageRow",
    "CoverageReport",
    "RatioRow",
    "run_coverage",
    "length_ratio_report",
    "paper_plan",
    "desk_plan",
    "COVERAGE_HEADER",
    "RATIO_HEADER",
]

log = logging.getLogger(__name__)

PAPER_N = (200, 400, 800, 1600)
PAPER_INDEX = (0.01, 0.25, 0.75, 0.99)
PAPER_REPLICATES = 1000
PAPER_ALPHA = 0.1
DESK_N = (200, 400, 800)
DESK_REPLICATES = 200
CHUNK = 50

COVERAGE_HEADER = (
    "process,param_h,param_k,mu,tau,x0,hstar,n,T,alpha,replicates,"
    "coverage,mean_len,median_len,degenerate_count,seed"
)
RATIO_HEADER = "process,param_h,param_k,n,ratio_median"


@dataclass(frozen=True)
class ProcessTemplate:
    """A process family with everything but the index fixed.

    ``indices`` overrides the plan's index list for this family (bifBm, for
    instance, only admits ``H < 1/2``).
    """

    kind: str
    K: float = 1.0
    mu: float | None = None
    tau: float | None = None
    x0: float | None = None
    Hstar: float | None = None
    indices: tuple[float, ...] | None = None

    def model(self, H: float) -> ProcessModel:
        return ProcessModel(self.kind, H, self.K, self.mu, self.tau, self.x0, self.Hstar)


@dataclass(frozen=True)
class ExperimentPlan:
    processes: tuple[ProcessTemplate, ...]
    n_list: tuple[int, ...] = DESK_N
    index_list: tuple[float, ...] = PAPER_INDEX
    alpha: float = PAPER_ALPHA
    replicates: int = DESK_REPLICATES
    T: float = 1.0
    master_seed: int = 0
    eps_mode: str = "exact"

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise InvalidParameter(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParameter(f"alpha must lie in (0, 1), got {self.alpha}")
        for n in self.n_list:
            if n <= self.T:
                raise InvalidParameter(f"every n must exceed T, got n={n}, T={self.T}")
        # builds every model, surfacing validity errors before any work starts
        self.cells()

    def cells(self) -> list[tuple[ProcessModel, GridSpec]]:
        out = []
        for tmpl in self.processes:
            for H in tmpl.indices or self.index_list:
                model = tmpl.model(H)
                for n in self.n_list:
                    out.append((model, GridSpec(self.T, n)))
        return out


def paper_plan(processes: Sequence[ProcessTemplate], master_seed: int = 0) -> ExperimentPlan:
    """The published set-up: n in {200, 400, 800, 1600}, 1000 paths, alpha 0.1."""
    return ExperimentPlan(
        tuple(processes), PAPER_N, PAPER_INDEX, PAPER_ALPHA, PAPER_REPLICATES, 1.0, master_seed
    )


def desk_plan(processes: Sequence[ProcessTemplate], master_seed: int = 0) -> ExperimentPlan:
    return ExperimentPlan(tuple(processes), DESK_N, PAPER_INDEX, PAPER_ALPHA, DESK_REPLICATES, 1.0, master_seed)


# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class CoverageRow:
    process: str
    param_h: float
    param_k: float | None
    mu: float | None
    tau: float | None
    x0: float | None
    hstar: float | None
    n: int
    T: float
    alpha: float
    replicates: int
    coverage: float
    mean_len: float
    median_len: float
    degenerate_count: int
    seed: int

    @property
    def key(self) -> tuple:
        return (self.n, self.param_h)


@dataclass
class CoverageReport:
    rows: list[CoverageRow] = field(default_factory=list)

    def to_csv(self, dest: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write(COVERAGE_HEADER + "\n")
        for r in self.rows:
            buf.write(
                ",".join(
                    _fmt(v)
                    for v in (
                        r.process, r.param_h, r.param_k, r.mu, r.tau, r.x0, r.hstar, r.n, r.T,
                        r.alpha, r.replicates, r.coverage, r.mean_len, r.median_len,
                        r.degenerate_count, r.seed,
                    )
                )
                + "\n"
            )
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text

    @classmethod
    def from_csv(cls, src: str | Path) -> CoverageReport:
        with open(src, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != COVERAGE_HEADER.split(","):
                raise InvalidParameter(f"{src}: not a coverage report (header {reader.fieldnames})")
            rows = [
                CoverageRow(
                    process=d["process"],
                    param_h=float(d["param_h"]),
                    param_k=_opt(d["param_k"]),
                    mu=_opt(d["mu"]),
                    tau=_opt(d["tau"]),
                    x0=_opt(d["x0"]),
                    hstar=_opt(d["hstar"]),
                    n=int(d["n"]),
                    T=float(d["T"]),
                    alpha=float(d["alpha"]),
                    replicates=int(d["replicates"]),
                    coverage=float(d["coverage"]),
                    mean_len=float(d["mean_len"]),
                    median_len=float(d["median_len"]),
                    degenerate_count=int(d["degenerate_count"]),
                    seed=int(d["seed"]),
                )
                for d in reader
            ]
        return cls(rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt(s: str) -> float | None:
    return float(s) if s != "" else None


# --------------------------------------------------------------------------- #
def _cell_key(model: ProcessModel, grid: GridSpec) -> tuple[int, int]:
    return stable_key(f"{model.describe()} n={grid.n} T={grid.T!r}")


def _run_chunk(task) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate replicates ``start..stop-1`` of one cell.

    Returns per-replicate ``(covered, length, degenerate)`` arrays.
    """
    model, grid, alpha, seed, eps_mode, start, stop = task
    key = _cell_key(model, grid)
    bounds = bounds_for(model, grid, eps_mode)
    gamma = model.orey_index
    size = stop - start
    covered = np.zeros(size, dtype=bool)
    length = np.zeros(size)
    degenerate = np.zeros(size, dtype=bool)
    for i, rep in enumerate(range(start, stop)):
        path = generate(model, grid, make_rng(seed, *key, rep))
        try:
            ci = confidence_interval(path, bounds, alpha)
        except DegenerateStatistic:
            degenerate[i] = True
            continue
        if ci.degenerate:
            degenerate[i] = True
        else:
            covered[i] = ci.contains(gamma)
        length[i] = ci.length
    return covered, length, degenerate


def run_coverage(plan: ExperimentPlan, workers: int = 1) -> CoverageReport:
    """Run every cell of ``plan`` and aggregate coverage and CI lengths.

    Degenerate replicates are counted and scored as non-covering. The report
    does not depend on ``workers``.
    """
    cells = plan.cells()
    tasks = []
    owners = []
    for idx, (model, grid) in enumerate(cells):
        for start in range(0, plan.replicates, CHUNK):
            stop = min(start + CHUNK, plan.replicates)
            tasks.append((model, grid, plan.alpha, plan.master_seed, plan.eps_mode, start, stop))
            owners.append(idx)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, tasks))
    else:
        results = [_run_chunk(t) for t in tasks]

    per_cell: list[list] = [[] for _ in cells]
    for idx, res in zip(owners, results):
        per_cell[idx].append(res)

    report = CoverageReport()
    for (model, grid), parts in zip(cells, per_cell):
        covered = np.concatenate([p[0] for p in parts])
        length = np.concatenate([p[1] for p in parts])
        degenerate = np.concatenate([p[2] for p in parts])
        row = CoverageRow(
            process=model.kind,
            param_h=model.H,
            param_k=model.K if model.kind == "bifbm" else None,
            mu=model.mu,
            tau=model.tau,
            x0=model.x0,
            hstar=model.Hstar,
            n=grid.n,
            T=grid.T,
            alpha=plan.alpha,
            replicates=plan.replicates,
            coverage=float(np.mean(covered)),
            mean_len=float(np.mean(length)),
            median_len=float(np.median(length)),
            degenerate_count=int(np.sum(degenerate)),
            seed=plan.master_seed,
        )
        log.info("%s n=%d coverage=%.3f median_len=%.4f", model.describe(), grid.n, row.coverage, row.median_len)
        report.rows.append(row)
    return report


# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class RatioRow:
    process: str
    param_h: float
    param_k: float | None
    n: int
    ratio_median: float


def length_ratio_report(base: CoverageReport, others: Iterable[CoverageReport]) -> list[RatioRow]:
    """Median CI length of each cell of ``others`` divided by fBm's at the same ``(n, H)``."""
    lookup = {r.key: r for r in base.rows}
    out = []
    for report in others:
        for r in report.rows:
            ref = lookup.get(r.key)
            if ref is None:
                raise MissingCell(f"no base cell for n={r.n}, H={r.param_h}")
            ratio = r.median_len / ref.median_len if ref.median_len > 0 else math.inf
            out.append(RatioRow(r.process, r.param_h, r.param_k, r.n, ratio))
    return out


def ratio_csv(rows: Iterable[RatioRow], dest: str | Path | None = None) -> str:
    lines = [RATIO_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (r.process, r.param_h, r.param_k, r.n, r.ratio_median)))
    text = "\n".join(lines) + "\n"
    if dest is not None:
        Path(dest).write_text(text)
    return text
