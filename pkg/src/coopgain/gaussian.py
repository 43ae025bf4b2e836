"""Closed forms for the Gaussian MAC with binary fading, Y = S1 X1 + S2 X2 + Z.

Fading states are i.i.d. equiprobable bits known at the decoder; all values in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import Tau
from .gain import SlopeProfile, slope_verdict

LN2 = math.log(2.0)


@dataclass(frozen=True)
class GaussianParams:
    P1: float = 1.0
    P2: float = 1.0
    N: float = 1.0
    v: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        vals = (self.P1, self.P2, self.N, *self.v)
        if not all(math.isfinite(x) and x > 0 for x in vals):
            raise ValueError(f"Gaussian parameters must be finite and > 0, got {vals}")


def rho_from_h(h: float, v=(0.5, 0.5)) -> float:
    """Correlation with (1/2) log2 1/(1 - rho^2) = h (v1 + v2)."""
    if h < 0:
        raise ValueError("h must be >= 0")
    x = h * (v[0] + v[1])
    return math.sqrt(-math.expm1(-2.0 * x * LN2))


def _tau_family(tau) -> str:
    t = Tau.parse(tau)
    if t in (Tau.NONE, Tau.STRICTLY_CAUSAL):
        return "0"
    if t in (Tau.CAUSAL, Tau.NONCAUSAL):
        return "T"
    raise ValueError("Gaussian bounds are available for tau in {0, T-1, T, inf}")


def gaussian_gain_bound(p: GaussianParams, tau, h: float) -> float:
    """Lower bound on the sum-capacity gain at cooperation budget h * v."""
    rho = rho_from_h(h, p.v)
    spent = h * (p.v[0] + p.v[1])
    s = math.sqrt(p.P1 * p.P2)
    if _tau_family(tau) == "0":
        a = 2.0 * rho * s / (p.P1 + p.P2 + p.N)
    else:
        a = 4.0 * rho * s / (2.0 * p.P1 + 2.0 * p.P2 + p.N)
    return math.log1p(a) / LN2 / 8.0 - spent


def gaussian_baseline(p: GaussianParams) -> float:
    """Sum-rate with independent Gaussian inputs and no cooperation."""
    return (
        math.log1p(p.P1 / p.N) + math.log1p(p.P2 / p.N) + math.log1p((p.P1 + p.P2) / p.N)
    ) / LN2 / 8.0


def gaussian_slope_profile(p: GaussianParams, tau, h0: float = 1e-2, K: int = 12, factor: float = 2.0) -> SlopeProfile:
    """gain(h)/h on the ladder h0 * factor^-k, k = 0..K."""
    if K < 4:
        raise ValueError("K must be >= 4")
    if factor <= 1 or h0 <= 0:
        raise ValueError("need h0 > 0 and factor > 1")
    grid = [h0 / factor**k for k in range(K + 1)]
    gains = [gaussian_gain_bound(p, tau, h) for h in grid]
    ratios = [g / h for g, h in zip(gains, grid)]
    verdict = slope_verdict(ratios, gains, window=max(4, K - 2))
    return SlopeProfile(grid, gains, ratios, verdict, {"tau": _tau_family(tau), "baseline": gaussian_baseline(p)})
