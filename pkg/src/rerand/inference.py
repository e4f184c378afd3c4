"""Estimated distributions, confidence intervals, and their probability limits.

An analyzer with full design knowledge estimates the mixture law by plugging
sample moments into the asymptotic distribution; without that knowledge the
x-explained share is underestimated by zero and the estimated law is the
Gaussian an analyzer of a completely randomized experiment would use.  Both
routes are asymptotically conservative because the variance of the residual
individual effects cannot be estimated; the probability limits computed here
quantify exactly how conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import DesignSpec
from .dists import MixtureDist
from .estimators import FitResult
from .fpstats import FinitePopulation, adjusted_moments, summarize

__all__ = [
    "IntervalReport",
    "estimated_distribution",
    "confidence_interval",
    "probability_limit",
]

METHOD_FULL = "FullKnowledge"
METHOD_NONE = "NoKnowledge"


@dataclass(frozen=True)
class IntervalReport:
    """Equal-tailed symmetric interval tau_hat +/- n^{-1/2} q_{1-alpha/2}."""

    alpha: float
    lower: float
    upper: float
    method: str
    dist: MixtureDist
    tau_hat: float
    n: int

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, tau: float) -> bool:
        return self.lower <= tau <= self.upper

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "variance": self.dist.scale2,
            "r2_x": self.dist.r2,
            "k": self.dist.k,
            "a": self.dist.a,
            "alpha": self.alpha,
            "lower": self.lower,
            "upper": self.upper,
            "method": self.method,
        }


def estimated_distribution(fit: FitResult, knows_design: bool,
                           k: int | None = None, a: float | None = None
                           ) -> MixtureDist:
    """Estimated law of sqrt(n)*(tauhat - tau) from one realized experiment.

    With full design knowledge the plug-in mixture uses the fitted variance
    and x-share together with the known (K, a); otherwise the x-share is
    underestimated by zero, which equals the full-knowledge estimate with
    a = inf (as if the design had been completely randomized).
    """
    if knows_design:
        if k is None or a is None:
            raise ValueError("full design knowledge requires k and a")
        return MixtureDist(scale2=fit.v_hat, r2=fit.r2_hat_x, k=k, a=a)
    return MixtureDist(scale2=fit.v_hat, r2=0.0, k=1 if k is None else k,
                       a=math.inf)


def confidence_interval(tau_hat: float, dist: MixtureDist, n: int,
                        alpha: float) -> IntervalReport:
    """Symmetric interval from an estimated law of sqrt(n)*(tauhat - tau)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    half = dist.quantile(1.0 - alpha / 2.0) / math.sqrt(n)
    method = METHOD_NONE if dist.is_gaussian else METHOD_FULL
    return IntervalReport(alpha=alpha, lower=tau_hat - half,
                          upper=tau_hat + half, method=method, dist=dist,
                          tau_hat=tau_hat, n=n)


def probability_limit(pop: FinitePopulation, design: DesignSpec, beta1, beta0,
                      knows_design: bool) -> MixtureDist:
    """Limit of the estimated distribution for fixed adjustment coefficients.

    The plug-in variance converges to V_tautau(beta) + S2_{tau minus w}: the
    true variance inflated by the variance of the residual individual
    effects, the inestimable term that makes intervals conservative.  With
    full knowledge the x-share converges to V(beta) R2(beta) over that
    inflated total; with partial knowledge the limit is the Gaussian with
    the inflated total variance.
    """
    beta1 = np.zeros(pop.j) if beta1 is None else np.asarray(beta1, float).ravel()
    beta0 = np.zeros(pop.j) if beta0 is None else np.asarray(beta0, float).ravel()
    r1 = design.n1 / pop.n
    s = summarize(pop, r1)
    v_beta, r2_beta = adjusted_moments(pop, r1, beta1, beta0)
    total = v_beta + s.s2_tau_minus_w
    if not knows_design or not design.is_rejective or pop.k == 0:
        return MixtureDist(scale2=total, r2=0.0, k=max(pop.k, 1), a=math.inf)
    r2 = 0.0 if total <= 0 else min(v_beta * r2_beta / total, 1.0)
    return MixtureDist(scale2=total, r2=r2, k=pop.k, a=design.a)
