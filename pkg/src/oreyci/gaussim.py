"""
Exact simulation of Gaussian processes with an Orey index.

Supported families
------------------
* ``bm``     standard Brownian motion (independent increments)
* ``fbm``    fractional Brownian motion, circulant embedding (FFT)
* ``subfbm`` sub-fractional Brownian motion, Cholesky
* ``bifbm``  bifractional Brownian motion, Cholesky
* ``fou``    fractional Ornstein-Uhlenbeck, Euler scheme driven by fBm

All generators take an explicit :class:`numpy.random.Generator`; use
:func:`make_rng` to obtain a stream keyed by ``(seed, *key)`` so that
results do not depend on how work is scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .exceptions import (
    EmbeddingFailure,
    InvalidHstar,
    InvalidK,
    InvalidParameter,
    MalformedPath,
    NotPositiveDefinite,
    UnsupportedKernel,
)

__all__ = [
    "KINDS",
    "ProcessModel",
    "GridSpec",
    "SamplePath",
    "make_rng",
    "stable_key",
    "covariance",
    "fgn_circulant_eigs",
    "generate_fbm",
    "cholesky_factor",
    "generate_cholesky",
    "generate_fou",
    "generate",
    "write_path_csv",
    "read_path_csv",
]

KINDS = ("bm", "fbm", "subfbm", "bifbm", "fou")

MAX_EMBEDDING = 2**30
DENSE_GUIDANCE = 4096  # dense Cholesky is practical up to roughly this n


# --------------------------------------------------------------------------- #
# Domain types
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class ProcessModel:
    """A process family together with its parameters.

    ``H`` is the Hurst parameter (for ``fou`` the Hurst index of the driving
    fBm). For ``bifbm`` the Orey index is ``H*K``; see :attr:`orey_index`.
    Use the classmethod constructors rather than filling fields by hand.
    """

    kind: str
    H: float = 0.5
    K: float = 1.0
    mu: float | None = None
    tau: float | None = None
    x0: float | None = None
    Hstar: float | None = None

    def __post_init__(self) -> None:
        kind, H = self.kind, self.H
        if kind not in KINDS:
            raise InvalidParameter(f"unknown process kind {kind!r}; expected one of {KINDS}")
        if not math.isfinite(H) or not 0.0 < H < 1.0:
            raise InvalidParameter(f"H must lie in (0, 1), got {H}")
        if kind == "bm" and H != 0.5:
            raise InvalidParameter("Brownian motion has H = 1/2")
        if kind == "bifbm":
            if not 0.0 < self.K < 1.0:
                raise InvalidK(
                    f"bifBm requires 0 < K < 1 (K = 1 is plain fBm), got K={self.K}"
                )
            if not H < 0.5:
                raise InvalidParameter(
                    f"bifBm is supported only for H < 1/2, got H={H}"
                )
        elif self.K != 1.0:
            raise InvalidParameter(f"K is only meaningful for bifbm, got K={self.K}")
        if kind == "fou":
            if self.mu is None or self.tau is None or self.x0 is None or self.Hstar is None:
                raise InvalidParameter("fou requires mu, tau, x0 and Hstar")
            if not self.mu > 0 or not self.tau > 0:
                raise InvalidParameter(f"fou requires mu > 0 and tau > 0, got mu={self.mu}, tau={self.tau}")
            if not math.isfinite(self.x0):
                raise InvalidParameter(f"x0 must be finite, got {self.x0}")
            if not 0.0 < self.Hstar < 1.0:
                raise InvalidHstar(f"Hstar must lie in (0, 1), got {self.Hstar}")
            if H > self.Hstar:
                raise InvalidHstar(f"fou requires H <= Hstar, got H={H} > Hstar={self.Hstar}")
        elif any(v is not None for v in (self.mu, self.tau, self.x0, self.Hstar)):
            raise InvalidParameter("mu, tau, x0, Hstar are only meaningful for fou")

    @classmethod
    def bm(cls) -> ProcessModel:
        return cls("bm")

    @classmethod
    def fbm(cls, H: float) -> ProcessModel:
        return cls("fbm", H)

    @classmethod
    def subfbm(cls, H: float) -> ProcessModel:
        return cls("subfbm", H)

    @classmethod
    def bifbm(cls, H: float, K: float) -> ProcessModel:
        return cls("bifbm", H, K)

    @classmethod
    def fou(
        cls, H: float, mu: float, tau: float, x0: float = 0.0, Hstar: float | None = None
    ) -> ProcessModel:
        return cls("fou", H, mu=mu, tau=tau, x0=x0, Hstar=H if Hstar is None else Hstar)

    @property
    def orey_index(self) -> float:
        """The Orey index: ``H*K`` for bifBm, ``H`` otherwise."""
        return self.H * self.K if self.kind == "bifbm" else self.H

    @property
    def has_kernel(self) -> bool:
        return self.kind != "fou"

    def with_index(self, H: float) -> ProcessModel:
        return replace(self, H=H)

    def describe(self) -> str:
        parts = [self.kind, f"H={self.H!r}"]
        if self.kind == "bifbm":
            parts.append(f"K={self.K!r}")
        if self.kind == "fou":
            parts += [f"mu={self.mu!r}", f"tau={self.tau!r}", f"x0={self.x0!r}", f"Hstar={self.Hstar!r}"]
        return " ".join(parts)


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``t_k = k T / n``, ``k = 0..n``."""

    T: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidParameter(f"horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidParameter(f"grid count n must be an integer >= 3, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def step(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * (self.T / self.n)


@dataclass(frozen=True, eq=False)
class SamplePath:
    T: float
    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != self.n + 1:
            raise InvalidParameter(
                f"path must hold n+1 = {self.n + 1} values, got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.T, self.n)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def scaled(self, c: float) -> SamplePath:
        return SamplePath(self.T, self.n, c * self.values)


# --------------------------------------------------------------------------- #
# Random streams
# --------------------------------------------------------------------------- #
def stable_key(text: str) -> tuple[int, int]:
    """Two 32-bit words derived from ``text``; stable across processes and runs."""
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:4], "little"), int.from_bytes(digest[4:8], "little")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based (Philox) stream for ``(seed, *key)``.

    Distinct keys give statistically independent streams, so replicate ``i``
    draws the same numbers no matter which worker evaluates it.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------- #
# Covariance kernels
# --------------------------------------------------------------------------- #
def covariance(model: ProcessModel, s, t):
    """Exact covariance ``E X(s) X(t)``; broadcasts over array arguments."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise InvalidParameter("covariance is defined for s, t >= 0")
    kind, h2 = model.kind, 2.0 * model.H
    if kind == "bm":
        out = np.minimum(s, t)
    elif kind == "fbm":
        out = 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)
    elif kind == "subfbm":
        out = s**h2 + t**h2 - 0.5 * ((s + t) ** h2 + np.abs(s - t) ** h2)
    elif kind == "bifbm":
        K = model.K
        out = 2.0**-K * ((s**h2 + t**h2) ** K - np.abs(t - s) ** (h2 * K))
    else:
        raise UnsupportedKernel("no closed-form covariance for the fractional O-U process")
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------- #
# fBm: circulant embedding
# --------------------------------------------------------------------------- #
def _embedding_row(H: float, N: int, M: int) -> np.ndarray:
    j = np.concatenate([np.arange(M // 2 + 1), np.arange(M // 2 - 1, 0, -1)]).astype(float)
    h2 = 2.0 * H
    return (np.abs(j - 1) ** h2 - 2.0 * j**h2 + (j + 1) ** h2) / (2.0 * float(N) ** h2)


def fgn_circulant_eigs(H: float, N: int, M: int) -> np.ndarray:
    """Eigenvalues of the circulant embedding of fGn autocovariances.

    The first row holds the lag-0..M/2 autocovariances of fractional Gaussian
    noise with step ``1/N`` followed by the mirrored lags ``M/2-1..1``. The
    eigenvalues are the real part of its DFT. Positivity is the caller's
    concern.
    """
    if M < 2 or M & (M - 1):
        raise InvalidParameter(f"M must be a power of two, got {M}")
    return np.fft.fft(_embedding_row(H, N, M)).real


def _initial_embedding(n: int) -> int:
    return 2 ** math.ceil(1 + math.log2(n - 1))


@lru_cache(maxsize=64)
def _embedding(H: float, n: int) -> tuple[int, np.ndarray]:
    M = _initial_embedding(n)
    W = fgn_circulant_eigs(H, n, M)
    while np.any(W <= 0):
        if M >= MAX_EMBEDDING:
            raise EmbeddingFailure(
                f"circulant embedding has nonpositive eigenvalues at M = {M} (H={H}, n={n})"
            )
        M *= 2
        W = fgn_circulant_eigs(H, n, M)
    root = np.sqrt(W)
    root.flags.writeable = False
    return M, root


def _fgn(H: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n fGn increments with step 1/n (variance n^{-2H})."""
    M, root = _embedding(H, n)
    half = M // 2
    x = rng.normal(0.0, 1.0 / math.sqrt(2.0), size=M)
    y = rng.normal(0.0, 1.0 / math.sqrt(2.0), size=M)
    z = np.empty(M, dtype=complex)
    # The two self-conjugate frequencies need unit variance; sd 1/sqrt(2)
    # there would shrink Var(B(1)) by up to a third for H > 1/2.
    z[0] = math.sqrt(2.0) * x[0]
    z[half] = math.sqrt(2.0) * y[0]
    z[1:half] = x[1:half] + 1j * y[1:half]
    z[M - np.arange(1, half)] = x[1:half] - 1j * y[1:half]
    out = np.fft.ifft(root * z) * M  # unnormalised inverse transform
    return out.real[:n] / math.sqrt(M)


def generate_fbm(H: float, grid: GridSpec, rng: np.random.Generator) -> SamplePath:
    """Sample fBm on ``grid`` by circulant embedding.

    Increments are fGn on ``[0, 1]`` rescaled by ``T**H``. The embedding size
    starts at ``2**ceil(1 + log2(n - 1))`` and doubles while any eigenvalue
    is nonpositive; :class:`EmbeddingFailure` is raised at ``2**30``.
    """
    if not 0.0 < H < 1.0:
        raise InvalidParameter(f"H must lie in (0, 1), got {H}")
    inc = _fgn(float(H), grid.n, rng) * grid.T**H
    return SamplePath(grid.T, grid.n, np.concatenate(([0.0], np.cumsum(inc))))


# --------------------------------------------------------------------------- #
# Cholesky generators
# --------------------------------------------------------------------------- #
def cholesky_factor(G) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == G``.

    Raises :class:`NotPositiveDefinite` when the factorisation meets a
    nonpositive pivot and :class:`InvalidParameter` for a non-symmetric input.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidParameter(f"expected a square matrix, got shape {G.shape}")
    scale = max(float(np.max(np.abs(G))), 1.0)
    if not np.allclose(G, G.T, rtol=0.0, atol=1e-12 * scale):
        raise InvalidParameter("matrix is not symmetric")
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def gram_matrix(model: ProcessModel, grid: GridSpec) -> np.ndarray:
    """``G[i, j] = covariance(model, t_i, t_j)`` for ``i, j = 1..n``."""
    t = grid.times[1:]
    return covariance(model, t[:, None], t[None, :])


@lru_cache(maxsize=8)
def _cached_factor(model: ProcessModel, grid: GridSpec) -> np.ndarray:
    L = cholesky_factor(gram_matrix(model, grid))
    L.flags.writeable = False
    return L


def generate_cholesky(model: ProcessModel, grid: GridSpec, rng: np.random.Generator) -> SamplePath:
    """Sample a kernel process on ``grid`` as ``L @ Z``.

    The gram matrix is built directly on the ``T``-grid, so no self-similarity
    rescaling is involved. Factors are cached per ``(model, grid)``; dense
    factorisation is practical up to ``n`` of a few thousand.
    """
    if model.kind not in ("subfbm", "bifbm", "fbm", "bm"):
        raise UnsupportedKernel(f"Cholesky sampling needs a covariance kernel, got {model.kind}")
    L = _cached_factor(model, grid)
    z = rng.standard_normal(grid.n)
    return SamplePath(grid.T, grid.n, np.concatenate(([0.0], L @ z)))


# --------------------------------------------------------------------------- #
# Fractional Ornstein-Uhlenbeck
# --------------------------------------------------------------------------- #
def generate_fou(
    model: ProcessModel, grid: GridSpec, rng: np.random.Generator, refine: int = 1
) -> SamplePath:
    """Euler scheme for ``dX = -mu X dt + tau dB^H``, ``X_0 = x0``.

    The driving fBm is drawn by :func:`generate_fbm` on a grid ``refine``
    times finer than ``grid``; the Euler chain is then subsampled back.
    """
    if model.kind != "fou":
        raise InvalidParameter(f"generate_fou needs a fou model, got {model.kind}")
    if int(refine) != refine or refine < 1:
        raise InvalidParameter(f"refine must be a positive integer, got {refine}")
    refine = int(refine)
    fine = GridSpec(grid.T, grid.n * refine)
    dB = np.diff(generate_fbm(model.H, fine, rng).values)
    dt = fine.step
    decay = 1.0 - model.mu * dt
    x = np.empty(fine.n + 1)
    x[0] = model.x0
    noise = model.tau * dB
    for k in range(1, fine.n + 1):
        x[k] = decay * x[k - 1] + noise[k - 1]
    return SamplePath(grid.T, grid.n, x[::refine])


def _bm(grid: GridSpec, rng: np.random.Generator) -> SamplePath:
    inc = rng.standard_normal(grid.n) * math.sqrt(grid.step)
    return SamplePath(grid.T, grid.n, np.concatenate(([0.0], np.cumsum(inc))))


def generate(
    model: ProcessModel, grid: GridSpec, rng: np.random.Generator, refine: int = 1
) -> SamplePath:
    """Dispatch to the generator used for each family."""
    if model.kind == "bm":
        return _bm(grid, rng)
    if model.kind == "fbm":
        return generate_fbm(model.H, grid, rng)
    if model.kind == "fou":
        return generate_fou(model, grid, rng, refine=refine)
    return generate_cholesky(model, grid, rng)


# --------------------------------------------------------------------------- #
# CSV
# --------------------------------------------------------------------------- #
def write_path_csv(path: SamplePath, dest: str | Path | TextIO) -> None:
    """Write ``t,x`` rows with 17 significant digits."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_path_csv(path, fh)
        return
    dest.write("t,x\n")
    for t, x in zip(path.times, path.values):
        dest.write(f"{t:.17g},{x:.17g}\n")


def _parse_rows(rows: Iterable[list[str]]) -> tuple[np.ndarray, np.ndarray]:
    rows = iter(rows)
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != ["t", "x"]:
        raise MalformedPath(f"expected header 't,x', got {header}")
    ts, xs = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedPath(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            ts.append(float(row[0]))
            xs.append(float(row[1]))
        except ValueError:
            raise MalformedPath(f"line {lineno}: non-numeric field") from None
    return np.asarray(ts), np.asarray(xs)


def read_path_csv(src: str | Path | TextIO, rtol: float = 1e-9) -> SamplePath:
    """Read a ``t,x`` file written by :func:`write_path_csv`.

    The grid must start at 0 and be uniform to ``rtol``; every value must be
    finite.
    """
    if isinstance(src, (str, Path)):
        with open(src, newline="") as fh:
            return read_path_csv(fh, rtol=rtol)
    t, x = _parse_rows(csv.reader(src))
    if t.size < 4:
        raise MalformedPath(f"need at least 4 grid points, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
        raise MalformedPath("path contains NaN or infinite values")
    n = t.size - 1
    T = float(t[-1])
    if t[0] != 0.0 or T <= 0:
        raise MalformedPath("grid must start at t=0 and increase")
    if np.max(np.abs(t - np.arange(n + 1) * (T / n))) > rtol * T:
        raise MalformedPath("grid is not uniform")
    return SamplePath(T, n, x)


def path_to_csv_text(path: SamplePath) -> str:
    buf = io.StringIO()
    write_path_csv(path, buf)
    return buf.getvalue()
