"""Asymptotic sampling laws, optimal adjustment, and precision gains.

Under rerandomization the scaled adjusted estimator converges to a mixture
of an untouched Gaussian component and a truncated-Gaussian component whose
weights are population R-squared quantities.  This module builds those
mixtures, decomposes their two squared coefficients, locates the
variance-optimal adjustment coefficient, and evaluates the closed-form
percentage gains from adjusting (analyzer) and from rerandomizing
(designer) under the nested-information scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design import DesignSpec
from .dists import MixtureDist, v_constant
from .fpstats import FinitePopulation, adjusted_moments, summarize

__all__ = [
    "Scenario",
    "GainReport",
    "sampling_distribution",
    "decompose",
    "s_optimal_gamma",
    "min_variance_gamma",
    "adjustment_helps",
    "gains_sampling",
    "gains_estimated",
    "condition2_holds",
    "condition3_holds",
    "population_report",
]

_SPAN_RTOL = 1e-8


class Scenario:
    """Which side holds the richer covariate set."""

    ANALYZER_RICHER = "analyzer_richer"   # x linearly spanned by w
    DESIGNER_RICHER = "designer_richer"   # w linearly spanned by x


@dataclass(frozen=True)
class GainReport:
    """Percentage reductions from one comparison of two asymptotic laws.

    ``pct_qr_reduction`` maps a two-sided level alpha to the reduction in
    the 1-alpha quantile-range length; ``monotone_in`` names the population
    R-squared the reductions are nondecreasing in.
    """

    pct_var_reduction: float
    pct_qr_reduction: Callable[[float], float]
    monotone_in: str


def _spanned_by(target: np.ndarray, basis: np.ndarray) -> bool:
    """True when every column of target is a linear combination of basis."""
    if target.shape[1] == 0:
        return True
    if basis.shape[1] == 0:
        return False
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = target - basis @ coef
    scale = np.linalg.norm(target) + 1e-300
    return np.linalg.norm(resid) / scale < _SPAN_RTOL


def condition2_holds(pop: FinitePopulation) -> bool:
    """Analyzer has no less covariate information: x = B1 w for some B1."""
    return _spanned_by(pop.x, pop.w)


def condition3_holds(pop: FinitePopulation) -> bool:
    """Designer has no less covariate information: w = B2 x for some B2."""
    return _spanned_by(pop.w, pop.x)


def _r1_of(pop: FinitePopulation, design: DesignSpec) -> float:
    return design.n1 / pop.n


def _betas(pop: FinitePopulation, beta1, beta0):
    if beta1 is None:
        beta1 = np.zeros(pop.j)
    if beta0 is None:
        beta0 = np.zeros(pop.j)
    return (np.asarray(beta1, dtype=np.float64).ravel(),
            np.asarray(beta0, dtype=np.float64).ravel())


def sampling_distribution(pop: FinitePopulation, design: DesignSpec,
                          beta1=None, beta0=None) -> MixtureDist:
    """Asymptotic law of sqrt(n)*(tauhat(beta1,beta0) - tau) under the design.

    The mixture has total variance factor V_tautau(beta1, beta0) and routes
    the x-explained share R2_tau_x(beta1, beta0) through the truncated
    component; a CRE (or a = inf) is the pure Gaussian special case.
    Omitted coefficients default to zero, the unadjusted estimator.
    """
    beta1, beta0 = _betas(pop, beta1, beta0)
    r1 = _r1_of(pop, design)
    v, r2 = adjusted_moments(pop, r1, beta1, beta0)
    if not design.is_rejective or pop.k == 0:
        return MixtureDist(scale2=v, r2=0.0, k=max(pop.k, 1), a=math.inf)
    return MixtureDist(scale2=v, r2=r2, k=pop.k, a=design.a)


def decompose(pop: FinitePopulation, design: DesignSpec, beta1, beta0
              ) -> tuple[float, float]:
    """Squared Gaussian and truncated coefficients of the asymptotic law.

    Uses the projection decomposition around gamma = r0*beta1 + r1*beta0:
        eps_coef2 = V(1-R2_x)(1-R2_res)
                    + (r1 r0)^{-1} (g - g_res)' S2_{w minus x} (g - g_res)
        L_coef2   = V R2_x (1-R2_proj)
                    + (r1 r0)^{-1} (g - g_proj)' S2_{w given x} (g - g_proj)
    and is consistent with ``sampling_distribution`` (their sum of squared
    coefficients reproduces V_tautau(beta) and its split).
    """
    beta1, beta0 = _betas(pop, beta1, beta0)
    r1 = _r1_of(pop, design)
    r0 = 1.0 - r1
    s = summarize(pop, r1)
    gamma = r0 * beta1 + r1 * beta0
    rr = 1.0 / (r1 * r0)
    d_res = gamma - s.gamma_res
    d_proj = gamma - s.gamma_proj
    eps2 = (s.v_tautau * (1.0 - s.r2_tau_x) * (1.0 - s.r2_res)
            + rr * float(d_res @ s.S2w_minus_x @ d_res))
    l2 = (s.v_tautau * s.r2_tau_x * (1.0 - s.r2_proj)
          + rr * float(d_proj @ s.S2w_given_x @ d_proj))
    return max(eps2, 0.0), max(l2, 0.0)


def s_optimal_gamma(pop: FinitePopulation, r1: float) -> np.ndarray:
    """Combined coefficient attaining the shortest quantile ranges.

    Valid whenever one covariate set linearly spans the other (the caller
    asserts that); equals the population projection coefficient gamma_tilde.
    """
    return summarize(pop, r1).gamma_tilde


def min_variance_gamma(pop: FinitePopulation, r1: float, a: float) -> np.ndarray:
    """Combined coefficient minimizing the asymptotic variance under ReM.

    (S2_{w minus x} + v_{K,a} S2_{w given x})^{-1}
        (S2_{w minus x} gamma_res + v_{K,a} S2_{w given x} gamma_proj);
    collapses to gamma_tilde at a = inf and approaches gamma_res as a -> 0.
    """
    s = summarize(pop, r1)
    v = v_constant(pop.k, a) if pop.k else 1.0
    mat = s.S2w_minus_x + v * s.S2w_given_x
    if np.linalg.matrix_rank(mat, rtol=1e-10) < pop.j:
        raise np.linalg.LinAlgError(
            "combined covariance S2_{w\\x} + v*S2_{w|x} is singular")
    rhs = s.S2w_minus_x @ s.gamma_res + v * (s.S2w_given_x @ s.gamma_proj)
    return np.linalg.solve(mat, rhs)


def adjustment_helps(pop: FinitePopulation, r1: float) -> bool:
    """Does interaction-OLS adjustment beat no adjustment under tight ReM?

    Compares the Gaussian-component coefficients (the dominant part when the
    threshold is small): adjustment helps iff
    R2_tau_w + (1 - R2_tau_w) * R2_tau_x(beta_tilde) >= R2_tau_x.
    """
    s = summarize(pop, r1)
    _, r2_beta = adjusted_moments(pop, r1, s.beta1_tilde, s.beta0_tilde)
    return bool(s.r2_tau_w + (1.0 - s.r2_tau_w) * r2_beta >= s.r2_tau_x)


def _q(k: int, a: float, rho2: float, p: float) -> float:
    """Quantile of sqrt(1-rho2)*eps + |rho|*L_{k,a} at probability p."""
    return MixtureDist(scale2=1.0, r2=min(max(rho2, 0.0), 1.0),
                       k=k, a=a).quantile(p)


def _var_reduction_analyzer_c2(r2w: float, r2x: float, v: float,
                               kappa: float = 1.0) -> float:
    return (r2w - (1.0 - v) * r2x) / (kappa - (1.0 - v) * r2x)


def _var_reduction_analyzer_c3(r2w: float, r2x: float, v: float) -> float:
    return v * r2w / (1.0 - (1.0 - v) * r2x)


def gains_sampling(pop: FinitePopulation, r1: float, a: float,
                   scenario: str, role: str) -> GainReport:
    """Percentage gains in sampling precision under a nested-covariate scenario.

    role='analyzer' compares the optimally adjusted estimator to the
    unadjusted one under ReM(a); role='designer' compares the optimally
    adjusted estimator under ReM(a) to the same estimator under the CRE.
    The scenario precondition (which covariate set spans the other) is
    checked numerically.
    """
    if role not in ("analyzer", "designer"):
        raise ValueError("role must be 'analyzer' or 'designer'")
    if scenario == Scenario.ANALYZER_RICHER:
        if not condition2_holds(pop):
            raise ValueError("x is not linearly spanned by w")
    elif scenario == Scenario.DESIGNER_RICHER:
        if not condition3_holds(pop):
            raise ValueError("w is not linearly spanned by x")
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    s = summarize(pop, r1)
    k = max(pop.k, 1)
    v = v_constant(k, a)
    r2w, r2x = s.r2_tau_w, s.r2_tau_x

    if scenario == Scenario.ANALYZER_RICHER:
        if role == "designer":
            # optimal adjustment already absorbs x: rerandomizing adds nothing
            return GainReport(0.0, lambda alpha: 0.0, "none")
        var_red = _var_reduction_analyzer_c2(r2w, r2x, v)

        def qr_red(alpha: float) -> float:
            return 1.0 - math.sqrt(1.0 - r2w) * (
                _q(k, a, 0.0, 1.0 - alpha / 2.0)
                / _q(k, a, r2x, 1.0 - alpha / 2.0))

        return GainReport(var_red, qr_red, "r2_tau_w")

    rho2 = s.rho2_x_minus_w
    if role == "analyzer":
        var_red = _var_reduction_analyzer_c3(r2w, r2x, v)

        def qr_red(alpha: float) -> float:
            return 1.0 - math.sqrt(1.0 - r2w) * (
                _q(k, a, rho2, 1.0 - alpha / 2.0)
                / _q(k, a, r2x, 1.0 - alpha / 2.0))

        return GainReport(var_red, qr_red, "r2_tau_w")

    var_red = (1.0 - v) * rho2

    def qr_red(alpha: float) -> float:
        return 1.0 - (_q(k, a, rho2, 1.0 - alpha / 2.0)
                      / _q(k, a, 0.0, 1.0 - alpha / 2.0))

    return GainReport(var_red, qr_red, "r2_tau_x")


def gains_estimated(pop: FinitePopulation, r1: float, a: float,
                    knows_design: bool, role: str) -> GainReport:
    """Percentage gains in estimated precision (confidence-interval scale).

    The inestimable residual-effect variance inflates every estimated law
    through kappa = 1 + S2_{tau minus w} / V_tautau.  The designer never
    changes the estimated law, so the designer's gain is identically zero.
    """
    if role not in ("analyzer", "designer"):
        raise ValueError("role must be 'analyzer' or 'designer'")
    if role == "designer":
        return GainReport(0.0, lambda alpha: 0.0, "none")
    s = summarize(pop, r1)
    if s.v_tautau <= 0.0:
        return GainReport(0.0, lambda alpha: 0.0, "none")
    kappa = 1.0 + s.s2_tau_minus_w / s.v_tautau
    k = max(pop.k, 1)
    r2w, r2x = s.r2_tau_w, s.r2_tau_x

    if knows_design:
        v = v_constant(k, a)
        var_red = _var_reduction_analyzer_c2(r2w, r2x, v, kappa=kappa)

        def qr_red(alpha: float) -> float:
            return 1.0 - math.sqrt(1.0 - r2w / kappa) * (
                _q(k, a, 0.0, 1.0 - alpha / 2.0)
                / _q(k, a, r2x / kappa, 1.0 - alpha / 2.0))

        return GainReport(var_red, qr_red, "r2_tau_w")

    var_red = r2w / kappa

    def qr_red(alpha: float) -> float:
        return 1.0 - math.sqrt(1.0 - r2w / kappa)

    return GainReport(var_red, qr_red, "r2_tau_w")


def population_report(pop: FinitePopulation, r1: float, a: float) -> dict:
    """JSON-ready block of population quantities and gains for a threshold."""
    s = summarize(pop, r1)
    out = s.to_dict()
    k = max(pop.k, 1)
    out["k"] = pop.k
    out["j"] = pop.j
    out["n"] = pop.n
    out["a"] = a
    out["v_k_a"] = v_constant(k, a)
    out["adjustment_helps"] = adjustment_helps(pop, r1)
    out["min_variance_gamma"] = min_variance_gamma(pop, r1, a).tolist()
    gains = {}
    if condition2_holds(pop):
        rep = gains_sampling(pop, r1, a, Scenario.ANALYZER_RICHER, "analyzer")
        gains["sampling_analyzer_richer"] = {
            "var": rep.pct_var_reduction, "qr_95": rep.pct_qr_reduction(0.05)}
    if condition3_holds(pop):
        for role in ("analyzer", "designer"):
            rep = gains_sampling(pop, r1, a, Scenario.DESIGNER_RICHER, role)
            gains[f"sampling_designer_richer_{role}"] = {
                "var": rep.pct_var_reduction, "qr_95": rep.pct_qr_reduction(0.05)}
    for knows in (True, False):
        rep = gains_estimated(pop, r1, a, knows, "analyzer")
        gains[f"estimated_knows_{str(knows).lower()}"] = {
            "var": rep.pct_var_reduction, "qr_95": rep.pct_qr_reduction(0.05)}
    out["gains"] = gains
    return out
