"""Distribution engine for constrained-randomization asymptotics.

Provides chi-square CDF/quantiles, the symmetric truncated Gaussian that
arises as the first coordinate of a K-dimensional standard normal
conditioned on squared norm <= a, its variance constant, and quantiles of
the two-component mixture scale*[sqrt(1-r2)*eps + sqrt(r2)*L] that houses
every asymptotic and estimated law in this package.

Numerics: truncated-Gaussian CDFs use composite Gauss-Legendre quadrature
with 256 nodes over the support, split at 0, after an arcsine change of
variable that removes the square-root kink at the support edges.  Quantiles
invert the CDF by bisection to 1e-10 in probability followed by one Newton
polish with the density.  a = inf is representable and short-circuits all
formulas to the Gaussian case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special as sp

__all__ = [
    "chi2_cdf",
    "chi2_quantile",
    "v_constant",
    "TruncatedGaussian",
    "MixtureDist",
    "mixture_quantile",
]

_GL_NODES = 256            # total quadrature nodes over the support
_PROB_TOL = 1e-10          # bisection tolerance, probability scale
_GAUSSIAN_CUTOFF = 1e-12   # truncation mass below this is treated as none


def chi2_cdf(k: int, x: float) -> float:
    """Chi-square CDF with k degrees of freedom (regularized lower gamma).

    k = 0 is the point mass at zero, the degenerate case used by the
    truncated-Gaussian density when K = 1.
    """
    if k < 0:
        raise ValueError("degrees of freedom must be >= 0")
    if math.isinf(x):
        return 1.0
    if x < 0:
        return 0.0
    if k == 0:
        return 1.0
    return float(sp.gammainc(k / 2.0, x / 2.0))


def chi2_quantile(k: int, p: float) -> float:
    """Inverse chi-square CDF; p must lie strictly inside (0, 1)."""
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p={p} outside (0, 1)")
    return float(2.0 * sp.gammaincinv(k / 2.0, p))


def v_constant(k: int, a: float) -> float:
    """Variance of the radially truncated Gaussian coordinate.

    Equals P(chi2_{k+2} <= a) / P(chi2_k <= a); returns 1 for a = inf.
    """
    if k <= 0:
        raise ValueError("k must be a positive integer")
    if math.isinf(a):
        return 1.0
    if a <= 0:
        raise ValueError("a must be positive")
    return chi2_cdf(k + 2, a) / chi2_cdf(k, a)


def _phi(t):
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def _gl_panel(lo: float, hi: float, m: int):
    nodes, weights = np.polynomial.legendre.leggauss(m)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * nodes, half * weights


@dataclass(frozen=True)
class TruncatedGaussian:
    """First coordinate of a standard K-vector given squared norm <= a.

    Density on |t| <= sqrt(a) is proportional to
    phi(t) * P(chi2_{k-1} <= a - t^2), with normalizer P(chi2_k <= a);
    for k = 1 this is the standard normal truncated to [-sqrt(a), sqrt(a)].
    """

    k: int
    a: float

    def __post_init__(self):
        if self.k < 1 or self.k != int(self.k):
            raise ValueError("k must be a positive integer")
        if not (self.a > 0):
            raise ValueError("a must be positive (inf allowed)")

    @property
    def is_gaussian(self) -> bool:
        """True when the truncation keeps essentially all of the mass."""
        return math.isinf(self.a) or chi2_cdf(self.k, self.a) >= 1.0 - _GAUSSIAN_CUTOFF

    @property
    def support(self) -> float:
        return math.inf if math.isinf(self.a) else math.sqrt(self.a)

    @property
    def normalizer(self) -> float:
        """Acceptance probability P(chi2_k <= a); expected rejection cost is
        1/normalizer draws per accepted sample."""
        return chi2_cdf(self.k, self.a)

    @property
    def variance(self) -> float:
        return v_constant(self.k, self.a)

    @cached_property
    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes t_i and masses m_i with sum m_i ~ 1.

        Built in theta with t = sqrt(a)*sin(theta) so the integrand is smooth
        at the support edges; panels split at 0.
        """
        root = self.support
        half = _GL_NODES // 2
        th1, w1 = _gl_panel(-math.pi / 2.0, 0.0, half)
        th2, w2 = _gl_panel(0.0, math.pi / 2.0, half)
        theta = np.concatenate([th1, th2])
        wq = np.concatenate([w1, w2])
        t = root * np.sin(theta)
        jac = root * np.cos(theta)
        dens = self._raw_density(t)
        return t, dens * jac * wq

    def _raw_density(self, t: np.ndarray) -> np.ndarray:
        """Normalized density evaluated inside the support."""
        t = np.asarray(t, dtype=np.float64)
        base = _phi(t) / self.normalizer
        if self.k == 1:
            return base
        tail = sp.gammainc((self.k - 1) / 2.0, np.maximum(self.a - t * t, 0.0) / 2.0)
        return base * tail

    def pdf(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        if self.is_gaussian:
            out = _phi(t)
        else:
            out = np.where(np.abs(t) <= self.support, self._raw_density(t), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, t: float) -> float:
        """P(L <= t); arguments outside the support clamp to 0 or 1."""
        if self.is_gaussian:
            return float(sp.ndtr(t))
        root = self.support
        if t <= -root:
            return 0.0
        if t >= root:
            return 1.0
        if self.k == 1:
            lo = sp.ndtr(-root)
            return float((sp.ndtr(t) - lo) / (sp.ndtr(root) - lo))
        theta_t = math.asin(min(max(t / root, -1.0), 1.0))
        if t <= 0.0:
            th, wq = _gl_panel(-math.pi / 2.0, theta_t, _GL_NODES)
            sgn, base = 1.0, 0.0
        else:
            th, wq = _gl_panel(theta_t, math.pi / 2.0, _GL_NODES)
            sgn, base = -1.0, 1.0
        tt = root * np.sin(th)
        mass = float(np.sum(self._raw_density(tt) * root * np.cos(th) * wq))
        return min(max(base + sgn * mass, 0.0), 1.0)

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError(f"p={p} outside (0, 1)")
        if self.is_gaussian:
            return float(sp.ndtri(p))
        lo, hi = -self.support, self.support
        return _invert_cdf(self.cdf, self.pdf, p, lo, hi)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Rejection sampler: draw D ~ N(0, I_k) until D'D <= a, keep D_1."""
        m = 1 if size is None else int(size)
        if self.is_gaussian:
            out = rng.standard_normal(m)
            return float(out[0]) if size is None else out
        out = np.empty(m)
        filled = 0
        cap = max(1024, 8_000_000 // self.k)  # bound per-round memory
        while filled < m:
            need = int(1.2 * (m - filled) / max(self.normalizer, 1e-12)) + 64
            d = rng.standard_normal((min(need, cap), self.k))
            keep = d[(d * d).sum(axis=1) <= self.a, 0]
            take = min(keep.size, m - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return float(out[0]) if size is None else out


def _invert_cdf(cdf, pdf, p: float, lo: float, hi: float) -> float:
    """Bisection to _PROB_TOL in probability, then one Newton polish."""
    while hi - lo > 1e-14 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        fmid = cdf(mid)
        if abs(fmid - p) <= _PROB_TOL:
            lo = hi = mid
            break
        if fmid < p:
            lo = mid
        else:
            hi = mid
    q = 0.5 * (lo + hi)
    dens = pdf(q)
    if np.ndim(dens):
        dens = float(dens)
    if dens > 0:
        q -= (cdf(q) - p) / dens
    return float(q)


@dataclass(frozen=True)
class MixtureDist:
    """Law of scale * [sqrt(1-r2)*eps + sqrt(r2)*L_{k,a}], eps ~ N(0,1).

    ``scale2`` is the total variance factor (e.g. the adjusted-estimator
    variance), ``r2`` the share routed through the truncated component.
    Immutable and shareable; sampling takes a caller-owned Generator.
    """

    scale2: float
    r2: float
    k: int
    a: float

    def __post_init__(self):
        if self.scale2 < 0:
            raise ValueError("scale2 must be >= 0")
        if not 0.0 <= self.r2 <= 1.0:
            raise ValueError("r2 must be in [0, 1]")
        # validates k, a
        TruncatedGaussian(self.k, self.a)

    @cached_property
    def _trunc(self) -> TruncatedGaussian:
        return TruncatedGaussian(self.k, self.a)

    @property
    def is_degenerate(self) -> bool:
        return self.scale2 == 0.0

    @property
    def is_gaussian(self) -> bool:
        return self.r2 == 0.0 or self._trunc.is_gaussian

    @property
    def variance(self) -> float:
        return self.scale2 * ((1.0 - self.r2) + self.r2 * v_constant(self.k, self.a))

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def _coefs(self) -> tuple[float, float]:
        s = math.sqrt(self.scale2)
        return s * math.sqrt(1.0 - self.r2), s * math.sqrt(self.r2)

    def cdf(self, xval: float) -> float:
        if self.is_degenerate:
            return 0.5 if xval == 0 else (0.0 if xval < 0 else 1.0)
        c_eps, c_l = self._coefs()
        if self.is_gaussian:
            # r2 = 0 or negligible truncation: plain N(0, variance)
            return float(sp.ndtr(xval / math.sqrt(self.variance)))
        if c_eps == 0.0:
            return self._trunc.cdf(xval / c_l)
        t, masses = self._trunc._nodes
        return float(np.sum(masses * sp.ndtr((xval - c_l * t) / c_eps)))

    def pdf(self, xval: float) -> float:
        if self.is_degenerate:
            return math.inf if xval == 0 else 0.0
        c_eps, c_l = self._coefs()
        if self.is_gaussian:
            sd = math.sqrt(self.variance)
            return float(_phi(xval / sd) / sd)
        if c_eps == 0.0:
            return float(self._trunc.pdf(xval / c_l) / c_l)
        t, masses = self._trunc._nodes
        return float(np.sum(masses * _phi((xval - c_l * t) / c_eps)) / c_eps)

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError(f"p={p} outside (0, 1)")
        if self.is_degenerate:
            return 0.0
        c_eps, c_l = self._coefs()
        if self.is_gaussian:
            return float(sp.ndtri(p)) * math.sqrt(self.variance)
        if c_eps == 0.0:
            return c_l * self._trunc.quantile(p)
        spread = c_eps * 9.0 + c_l * self._trunc.support
        return _invert_cdf(self.cdf, self.pdf, p, -spread, spread)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        c_eps, c_l = self._coefs()
        m = 1 if size is None else int(size)
        out = c_eps * rng.standard_normal(m)
        if c_l > 0.0:
            out = out + c_l * self._trunc.sample(rng, m)
        return float(out[0]) if size is None else out


def mixture_quantile(m: MixtureDist, p: float) -> float:
    """p-th quantile of the mixture law; see MixtureDist.quantile."""
    return m.quantile(p)
