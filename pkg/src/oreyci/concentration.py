"""
Tail functions for centred Gaussian quadratic forms and their inverses.

With ``m`` increments, row-sum bound ``nu`` and diagonal bias ``eps``::

    phi_r(z) = exp(-z sqrt(m) / (2 nu)) * (1 + z / ((eps+1) sqrt(m)))**((eps+1) m / (2 nu))
    phi_l(z) = exp(+z sqrt(m) / (2 nu)) * (1 - z / ((eps+1) sqrt(m)))**((eps+1) m / (2 nu))

``phi_l`` vanishes for ``z >= (eps+1) sqrt(m)``. With ``u = z / ((eps+1) sqrt(m))``
and ``c = (eps+1) m / (2 nu)`` both reduce to ``exp(c * (log(1 +- u) -+ u))``,
which is how they are evaluated here: the exponent never grows with ``m``
except through ``c``, and ``log1p(u) - u`` is computed without cancellation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GridTooCoarse, InvalidParameter, NegativeInput, NoConvergence
from .gaussim import GridSpec

__all__ = [
    "Flag",
    "TailParams",
    "log1pmx",
    "phi_r",
    "phi_l",
    "invert_phi_r",
    "invert_phi_l",
    "g",
    "invert_g",
    "ln_star",
    "LN3",
    "DEFAULT_TOL",
]

LN3 = math.log(3.0)
DEFAULT_TOL = 1e-10
MAX_ITER = 200
MAX_DOUBLINGS = 1024
G_DELTA = 1e-12


class Flag(str, enum.Enum):
    SATURATED_LOW = "Saturated-low"
    SATURATED_HIGH = "Saturated-high"
    DEGENERATE = "Degenerate"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TailParams:
    """``nu`` (row-sum bound), ``eps`` (diagonal bias bound), ``m = n - 1``."""

    nu: float
    eps: float
    m: int

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise InvalidParameter(f"nu must be positive, got {self.nu}")
        if not self.eps >= 0:
            raise InvalidParameter(f"eps must be nonnegative, got {self.eps}")
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameter(f"m must be an integer >= 2, got {self.m}")

    @property
    def support(self) -> float:
        """Right end of the support of ``phi_l``."""
        return (self.eps + 1.0) * math.sqrt(self.m)

    @property
    def exponent(self) -> float:
        return (self.eps + 1.0) * self.m / (2.0 * self.nu)


# --------------------------------------------------------------------------- #
def _log1pmx_series(u: np.ndarray) -> np.ndarray:
    # -u^2/2 + u^3/3 - ... ; |u| <= 0.25 so 40 terms reach machine precision
    out = np.zeros_like(u)
    power = u * u
    for k in range(2, 42):
        out += (-1.0) ** (k + 1) * power / k
        power = power * u
    return out


def log1pmx(u):
    """``log(1 + u) - u`` for ``u > -1``, accurate also for small ``|u|``."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) <= 0.25
    out = np.empty_like(u)
    out[small] = _log1pmx_series(u[small])
    big = ~small
    with np.errstate(divide="ignore"):
        out[big] = np.log1p(u[big]) - u[big]
    return out if out.ndim else float(out)


def phi_r(z, p: TailParams):
    """Right-tail bound; decreasing from 1 at ``z = 0`` towards 0."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidParameter("phi_r is defined for z >= 0")
    u = z / p.support
    out = np.exp(p.exponent * log1pmx(u))
    return out if out.ndim else float(out)


def phi_l(z, p: TailParams):
    """Left-tail bound; zero from ``(eps + 1) sqrt(m)`` on."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidParameter("phi_l is defined for z >= 0")
    u = z / p.support
    inside = u < 1.0
    out = np.zeros_like(z)
    out[inside] = np.exp(p.exponent * log1pmx(-u[inside]))
    return out if out.ndim else float(out)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha}")


def _bisect_decreasing(f, target: float, lo: float, hi: float, tol: float) -> float:
    """Root of the decreasing ``f(z) = target`` inside ``[lo, hi]``."""
    mid = 0.5 * (lo + hi)
    collapsed = False
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # adjacent floats: no closer root is representable
            collapsed = True
            break
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    if not collapsed and abs(f(mid) - target) > tol:
        raise NoConvergence(
            f"bisection stopped with |f - target| = {abs(f(mid) - target):.3g} > {tol:.3g}"
        )
    return mid


def invert_phi_r(alpha: float, p: TailParams, tol: float = DEFAULT_TOL) -> float:
    """``q_r`` with ``phi_r(q_r) = alpha``.

    The upper bracket starts at 1 and doubles until ``phi_r`` drops below
    ``alpha``.
    """
    _check_alpha(alpha)
    f = lambda z: phi_r(z, p)  # noqa: E731
    hi = 1.0
    for _ in range(MAX_DOUBLINGS):
        if f(hi) < alpha:
            break
        hi *= 2.0
    else:
        raise NoConvergence(f"could not bracket phi_r = {alpha} for {p}")
    return _bisect_decreasing(f, alpha, 0.0, hi, tol)


def invert_phi_l(alpha: float, p: TailParams, tol: float = DEFAULT_TOL) -> float:
    """``q_l`` in ``(0, (eps+1) sqrt(m))`` with ``phi_l(q_l) = alpha``."""
    _check_alpha(alpha)
    f = lambda z: phi_l(z, p)  # noqa: E731
    q = _bisect_decreasing(f, alpha, 0.0, p.support, tol)
    if not 0.0 < q < p.support:
        raise NoConvergence(f"phi_l inverse {q} fell on the support boundary")
    return q


# --------------------------------------------------------------------------- #
def _check_grid(grid: GridSpec) -> None:
    if grid.n <= grid.T:
        raise GridTooCoarse(f"need n > T for the index map, got n={grid.n}, T={grid.T}")


def _neg_log_4_minus_4x(x: float) -> float:
    # 4 - 4^x = -4 expm1((x - 1) ln 4), exact near x = 1
    return -math.log(-4.0 * math.expm1((x - 1.0) * math.log(4.0)))


def g(x: float, grid: GridSpec) -> float:
    """``2 x ln(n/T) - ln(4 - 2^(2x))``, increasing from ``-ln 3`` on (0, 1)."""
    _check_grid(grid)
    if not 0.0 < x < 1.0:
        raise InvalidParameter(f"g is defined on (0, 1), got {x}")
    return 2.0 * x * math.log(grid.n / grid.T) + _neg_log_4_minus_4x(x)


def invert_g(y: float, grid: GridSpec, tol: float = DEFAULT_TOL) -> tuple[float, Flag | None]:
    """Solve ``g(x) = y`` on ``(delta, 1 - delta)``.

    Returns ``(x, flag)``. Values at or below ``-ln 3`` give ``(0, SATURATED_LOW)``;
    values at or above ``g(1 - delta)`` give ``(1 - delta, SATURATED_HIGH)``.
    """
    _check_grid(grid)
    if math.isnan(y):
        raise InvalidParameter("cannot invert g at NaN")
    if y <= -LN3:
        return 0.0, Flag.SATURATED_LOW
    lo, hi = G_DELTA, 1.0 - G_DELTA
    if y >= g(hi, grid):
        return hi, Flag.SATURATED_HIGH
    if y <= g(lo, grid):
        return lo, None
    f = lambda x: -g(x, grid)  # noqa: E731
    return _bisect_decreasing(f, -y, lo, hi, tol), None


def ln_star(x: float) -> float:
    """``ln x`` for ``x > 0`` and ``-inf`` at 0."""
    if x < 0:
        raise NegativeInput(f"ln* is defined for x >= 0, got {x}")
    return -math.inf if x == 0 else math.log(x)
