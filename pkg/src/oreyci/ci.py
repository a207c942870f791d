"""
Exact confidence intervals for the Orey index from one discretised path.

Each process family supplies :class:`ConcentrationBounds` (``kappa``, ``eps``,
``upsilon``); :func:`confidence_interval` turns them, a path and a level
``alpha`` into ``[gamma_inf, gamma_sup]`` with coverage at least ``1 - alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .concentration import (
    DEFAULT_TOL,
    LN3,
    Flag,
    TailParams,
    invert_g,
    invert_phi_l,
    invert_phi_r,
    ln_star,
)
from .exceptions import (
    DegenerateStatistic,
    GridTooCoarse,
    InvalidHstar,
    InvalidK,
    InvalidParameter,
)
from .gaussim import GridSpec, ProcessModel, SamplePath
from .quadvar import s_n

__all__ = [
    "ConcentrationBounds",
    "ConfidenceInterval",
    "EPS_MODES",
    "bounds_bm",
    "bounds_fbm",
    "bounds_subfbm",
    "bounds_bifbm",
    "bounds_fou",
    "bounds_for",
    "quantiles",
    "confidence_interval",
    "CI_CSV_HEADER",
    "ci_csv_row",
]

EPS_MODES = ("exact", "code")
FBM_UPSILON = 8.0 / 3.0
SUBFBM_UPSILON = 4.5
BIFBM_UPSILON = 5.005
BM_UPSILON = 2.0


@dataclass(frozen=True)
class ConcentrationBounds:
    kappa: float
    eps: float
    upsilon: float
    gamma_label: str = "H"
    K: float | None = None  # bifBm only: lets callers map HK back to H

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise InvalidParameter(f"kappa must be positive, got {self.kappa}")
        if not self.eps >= 0:
            raise InvalidParameter(f"eps must be nonnegative, got {self.eps}")
        if not self.upsilon > 0:
            raise InvalidParameter(f"upsilon must be positive, got {self.upsilon}")


@dataclass(frozen=True)
class ConfidenceInterval:
    gamma_inf: float
    gamma_sup: float
    alpha: float
    s_n: float
    flags: frozenset[Flag] = field(default_factory=frozenset)
    gamma_label: str = "H"
    h_inf: float | None = None  # bifBm: derived interval for H given known K
    h_sup: float | None = None

    @property
    def length(self) -> float:
        return self.gamma_sup - self.gamma_inf

    @property
    def degenerate(self) -> bool:
        return Flag.DEGENERATE in self.flags

    def contains(self, gamma: float) -> bool:
        return self.gamma_inf <= gamma <= self.gamma_sup


# --------------------------------------------------------------------------- #
# Per-process bounds
# --------------------------------------------------------------------------- #
def _lemma_prefactor(grid: GridSpec, constant: float) -> float:
    return grid.n / (6.0 * grid.T * (grid.n - 1)) + constant / (9.0 * math.log(4.0))


def bounds_bm(grid: GridSpec) -> ConcentrationBounds:
    return ConcentrationBounds(kappa=1.0, eps=0.0, upsilon=BM_UPSILON)


def bounds_fbm(grid: GridSpec, eps_mode: str = "exact") -> ConcentrationBounds:
    """``kappa = 1``, ``upsilon = 8/3``.

    Stationary increments make every normalised diagonal entry exactly 1, so
    ``eps = 0``. ``eps_mode="code"`` uses ``eps = 1/n`` instead, which only
    widens the interval.
    """
    if eps_mode not in EPS_MODES:
        raise InvalidParameter(f"eps_mode must be one of {EPS_MODES}, got {eps_mode!r}")
    eps = 0.0 if eps_mode == "exact" else 1.0 / grid.n
    return ConcentrationBounds(kappa=1.0, eps=eps, upsilon=FBM_UPSILON)


def bounds_subfbm(grid: GridSpec) -> ConcentrationBounds:
    eps = (grid.T / grid.n) ** (2.0 / 3.0) * _lemma_prefactor(grid, 33.0)
    return ConcentrationBounds(kappa=1.0, eps=eps, upsilon=SUBFBM_UPSILON)


def bounds_bifbm(grid: GridSpec, K: float) -> ConcentrationBounds:
    """Bounds for bifBm with known ``K``; valid for ``H < 1/2``.

    The interval is for the Orey index ``HK``.
    """
    if not 0.0 < K < 1.0:
        raise InvalidK(f"bifBm bounds need 0 < K < 1, got K={K}")
    eps = (grid.T / grid.n) ** 0.5 * _lemma_prefactor(grid, 22.0)
    return ConcentrationBounds(
        kappa=2.0 ** ((1.0 - K) / 2.0), eps=eps, upsilon=BIFBM_UPSILON, gamma_label="HK", K=K
    )


def bounds_fou(
    grid: GridSpec, mu: float, tau: float, x0: float, Hstar: float
) -> ConcentrationBounds:
    """Bounds for the fractional O-U process given ``H <= Hstar``.

    With ``h = T/n``, ``c = 4 - 4^Hstar`` and ``C = mu^2 (3 x0^2 / tau^2 + 6 T^2)``::

        A       = C h^(2 - 2 Hstar) + 1
        inner   = 2 mu h A + sqrt(2 c A)
        upsilon = 4 mu T inner / c + 8/3
        eps     = 4 mu h inner / c
    """
    if not 0.0 < Hstar < 1.0:
        raise InvalidHstar(f"Hstar must lie in (0, 1), got {Hstar}")
    if not (mu > 0 and tau > 0):
        raise InvalidParameter(f"mu and tau must be positive, got mu={mu}, tau={tau}")
    T, h = grid.T, grid.step
    c = 4.0 - 4.0**Hstar
    C = mu**2 * (3.0 * x0**2 / tau**2 + 6.0 * T**2)
    A = C * h ** (2.0 - 2.0 * Hstar) + 1.0
    inner = 2.0 * mu * h * A + math.sqrt(2.0 * c) * math.sqrt(A)
    upsilon = 4.0 * mu * T / c * inner + FBM_UPSILON
    eps = 4.0 * mu / c * h * inner
    return ConcentrationBounds(kappa=float(tau), eps=eps, upsilon=upsilon)


def bounds_for(model: ProcessModel, grid: GridSpec, eps_mode: str = "exact") -> ConcentrationBounds:
    """Bounds for ``model``'s family. Only the parameters assumed known are used."""
    kind = model.kind
    if kind == "bm":
        return bounds_bm(grid)
    if kind == "fbm":
        return bounds_fbm(grid, eps_mode)
    if kind == "subfbm":
        return bounds_subfbm(grid)
    if kind == "bifbm":
        return bounds_bifbm(grid, model.K)
    return bounds_fou(grid, model.mu, model.tau, model.x0, model.Hstar)


# --------------------------------------------------------------------------- #
# Interval
# --------------------------------------------------------------------------- #
@lru_cache(maxsize=256)
def quantiles(
    alpha: float, upsilon: float, eps: float, m: int, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """``(x_l, x_r)`` for level ``alpha``; each tail receives ``alpha / 2``."""
    p = TailParams(upsilon, eps, m)
    q_l = invert_phi_l(alpha / 2.0, p, tol)
    q_r = invert_phi_r(alpha / 2.0, p, tol)
    root = math.sqrt(m)
    return 1.0 - q_l / root, 1.0 + q_r / root


def confidence_interval(
    path: SamplePath,
    b: ConcentrationBounds,
    alpha: float,
    tol: float = DEFAULT_TOL,
) -> ConfidenceInterval:
    """Confidence interval for the Orey index at level ``1 - alpha``.

    Raises :class:`DegenerateStatistic` for a path whose second-order
    increments vanish up to rounding of the stored values. When even the upper end of the statistic's
    acceptance region lies below the range of the index map, ``[0, 0]`` is
    returned with :attr:`Flag.DEGENERATE` set.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha}")
    grid = path.grid
    if grid.n <= grid.T:
        raise GridTooCoarse(f"need n > T, got n={grid.n}, T={grid.T}")
    stat = s_n(path)
    # second differences below rounding error of the stored values carry no signal
    noise = 4.0 * np.finfo(float).eps * float(np.max(np.abs(path.values)))
    if not stat > noise**2:
        raise DegenerateStatistic(f"S_n = {stat:.3g} is at rounding level: the path is affine on the grid")

    x_l, x_r = quantiles(float(alpha), b.upsilon, b.eps, grid.n - 1, tol)
    k2 = b.kappa**2
    arg_l = max(ln_star(max(x_l - b.eps, 0.0) * k2 / stat), -LN3)
    arg_r = math.log((x_r + b.eps) * k2 / stat)

    flags: set[Flag] = set()
    if arg_r <= -LN3:
        flags.add(Flag.DEGENERATE)
        lo = hi = 0.0
    else:
        lo, flag_l = invert_g(arg_l, grid, tol)
        hi, flag_r = invert_g(arg_r, grid, tol)
        flags.update(f for f in (flag_l, flag_r) if f is not None)
        if flag_r is Flag.SATURATED_HIGH:
            hi = 1.0
        lo = max(0.0, lo)
        hi = min(1.0, hi)
        lo = min(lo, hi)

    h_inf = h_sup = None
    if b.K is not None:
        h_inf = min(1.0, lo / b.K)
        h_sup = min(1.0, hi / b.K)
    return ConfidenceInterval(
        gamma_inf=lo,
        gamma_sup=hi,
        alpha=float(alpha),
        s_n=stat,
        flags=frozenset(flags),
        gamma_label=b.gamma_label,
        h_inf=h_inf,
        h_sup=h_sup,
    )


CI_CSV_HEADER = (
    "process,param_h,param_k,mu,tau,x0,hstar,n,T,alpha,"
    "gamma_inf,gamma_sup,h_inf,h_sup,s_n,flags"
)


def _fmt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def ci_csv_row(
    ci: ConfidenceInterval,
    grid: GridSpec,
    process: str,
    *,
    param_h: float | None = None,
    param_k: float | None = None,
    mu: float | None = None,
    tau: float | None = None,
    x0: float | None = None,
    hstar: float | None = None,
) -> str:
    """One CSV line matching :data:`CI_CSV_HEADER`; flags are ``;``-joined."""
    flags = ";".join(sorted(str(f) for f in ci.flags))
    fields = [
        process, param_h, param_k, mu, tau, x0, hstar, grid.n, float(grid.T), ci.alpha,
        ci.gamma_inf, ci.gamma_sup, ci.h_inf, ci.h_sup, ci.s_n, flags,
    ]
    return ",".join(_fmt(v) for v in fields)
