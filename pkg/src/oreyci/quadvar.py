"""Second-order increments, the statistic ``S_n`` and exact increment grams."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidParameter, PathTooShort, UnsupportedKernel
from .gaussim import GridSpec, ProcessModel, SamplePath, covariance

__all__ = [
    "IncrementVector",
    "IncrementGram",
    "second_order_increments",
    "s_n",
    "rho",
    "normalization",
    "normalized_dkk",
    "increment_gram",
    "empirical_increment_gram",
    "diagonal_bias",
    "max_row_sum",
]

MAX_GRAM_N = 2048


@dataclass(frozen=True, eq=False)
class IncrementVector:
    deltas: np.ndarray
    grid: GridSpec


@dataclass(frozen=True, eq=False)
class IncrementGram:
    """Normalised covariances ``d[j-1, k-1] = E Y_j Y_k`` for ``j, k = 1..n-1``."""

    d: np.ndarray
    model: ProcessModel | None
    grid: GridSpec

    def to_csv(self, dest: str | Path) -> None:
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            m = self.d.shape[0]
            for j in range(m):
                for k in range(m):
                    w.writerow([j + 1, k + 1, f"{self.d[j, k]:.17g}"])


def second_order_increments(path: SamplePath) -> IncrementVector:
    if path.n < 3:
        raise PathTooShort(f"need n >= 3, got n={path.n}")
    v = path.values
    return IncrementVector(v[2:] - 2.0 * v[1:-1] + v[:-2], path.grid)


def s_n(path: SamplePath) -> float:
    """Mean of squared second-order increments."""
    deltas = second_order_increments(path).deltas
    return float(np.mean(deltas * deltas))


def rho(H: float, r):
    """Second-difference autocovariance of fBm at integer lag ``r``, step 1.

    ``E[D2 B(k) D2 B(k+r)] = rho(H, r)``; symmetric in ``r``.
    """
    r = np.abs(np.asarray(r, dtype=float))
    h2 = 2.0 * H
    out = 0.5 * (
        -np.abs(r - 2) ** h2
        + 4.0 * np.abs(r - 1) ** h2
        - 6.0 * r**h2
        + 4.0 * np.abs(r + 1) ** h2
        - np.abs(r + 2) ** h2
    )
    return out if out.ndim else float(out)


def normalization(model: ProcessModel) -> tuple[float, float]:
    """``(kappa, gamma)`` used to normalise second-order increments.

    ``kappa**2`` is the leading constant of the incremental variance,
    ``E(X(t+h) - X(t))^2 ~ kappa^2 h^(2 gamma)``.
    """
    if model.kind == "bifbm":
        return 2.0 ** ((1.0 - model.K) / 2.0), model.H * model.K
    if model.kind == "fou":
        return float(model.tau), model.H
    return 1.0, model.H


def _b_subfbm(k, H: float):
    h2 = 2.0 * H
    k = np.asarray(k, dtype=float)
    return (
        2.0 ** (h2 - 1) * (k + 1) ** h2
        + 3.0 * 2.0**h2 * k**h2
        + 2.0 ** (h2 - 1) * (k - 1) ** h2
        - 2.0 * (2 * k + 1) ** h2
        - 2.0 * (2 * k - 1) ** h2
    )


def _b_bifbm(k, H: float, K: float):
    h2 = 2.0 * H
    g2 = h2 * K
    k = np.asarray(k, dtype=float)
    return (
        2.0 * ((k + 1) ** h2 + k**h2) ** K
        + 2.0 * (k**h2 + (k - 1) ** h2) ** K
        - 2.0 ** (K - 1) * ((k + 1) ** g2 + 4.0 * k**g2 + (k - 1) ** g2)
        - ((k + 1) ** h2 + (k - 1) ** h2) ** K
    )


def normalized_dkk(model: ProcessModel, grid: GridSpec, k) -> float | np.ndarray:
    """Closed-form diagonal ``d_kk`` of the normalised increment gram.

    Exactly 1 for Bm and fBm; ``1 - b(k, H) / (4 - 4^H)`` for subfBm and
    ``1 - b(k, H, K) / (4 - 4^(HK))`` for bifBm. The value does not depend
    on ``T``; ``grid`` only bounds ``k``.
    """
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr > grid.n - 1):
        raise InvalidParameter(f"k must lie in 1..{grid.n - 1}")
    kind = model.kind
    if kind in ("bm", "fbm"):
        out = np.ones(k_arr.shape)
    elif kind == "subfbm":
        out = 1.0 - _b_subfbm(k_arr, model.H) / (4.0 - 4.0**model.H)
    elif kind == "bifbm":
        out = 1.0 - _b_bifbm(k_arr, model.H, model.K) / (4.0 - 4.0 ** (model.H * model.K))
    else:
        raise UnsupportedKernel("no closed form for the fractional O-U gram")
    return out if out.ndim else float(out)


def _second_difference(C: np.ndarray, axis: int) -> np.ndarray:
    C = np.moveaxis(C, axis, 0)
    return np.moveaxis(C[2:] - 2.0 * C[1:-1] + C[:-2], 0, axis)


def increment_gram(model: ProcessModel, grid: GridSpec) -> IncrementGram:
    """Exact normalised gram of second-order increments, from the kernel.

    Each entry is the nine-term stencil of ``covariance`` over neighbouring
    grid points, divided by ``kappa^2 (4 - 2^(2 gamma)) (T/n)^(2 gamma)``.
    """
    if not model.has_kernel:
        raise UnsupportedKernel("no closed-form covariance for the fractional O-U process")
    if grid.n > MAX_GRAM_N:
        raise InvalidParameter(f"dense gram oracle limited to n <= {MAX_GRAM_N}")
    t = grid.times
    C = covariance(model, t[:, None], t[None, :])
    D = _second_difference(_second_difference(C, 0), 1)
    kappa, gamma = normalization(model)
    scale = kappa**2 * (4.0 - 4.0**gamma) * grid.step ** (2.0 * gamma)
    d = D / scale
    d = 0.5 * (d + d.T)
    d.flags.writeable = False
    return IncrementGram(d, model, grid)


def empirical_increment_gram(
    paths: np.ndarray, grid: GridSpec, kappa: float, gamma: float
) -> IncrementGram:
    """Monte Carlo estimate of the normalised gram from centred sample paths.

    ``paths`` has one path per row (``n + 1`` columns). Paths are assumed to
    have mean zero at every grid point; no centring is applied.
    """
    paths = np.asarray(paths, dtype=float)
    D2 = paths[:, 2:] - 2.0 * paths[:, 1:-1] + paths[:, :-2]
    scale = kappa**2 * (4.0 - 4.0**gamma) * grid.step ** (2.0 * gamma)
    d = D2.T @ D2 / (paths.shape[0] * scale)
    return IncrementGram(d, None, grid)


def diagonal_bias(gram: IncrementGram) -> float:
    """``|mean_k d_kk - 1|``."""
    return abs(float(np.mean(np.diag(gram.d))) - 1.0)


def max_row_sum(gram: IncrementGram) -> float:
    """``max_k sum_j |d_jk|``."""
    return float(np.max(np.sum(np.abs(gram.d), axis=1)))


def fbm_gram_entry(H: float, lag: int) -> float:
    """Closed-form fBm normalised gram entry at a given lag."""
    return rho(H, lag) / (4.0 - 4.0**H)
