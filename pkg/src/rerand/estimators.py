"""Point estimators and variance estimators from one realized experiment.

Implements the difference-in-means, general linearly adjusted estimators,
the interaction-OLS (group-specific slopes) estimator, the sample-moment
plug-in variance estimator with its x-explained share, and the Huber-White
sandwich for the interaction fit.  All quantities are computed from observed
data only: outcomes, the assignment, and centered covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import Assignment
from .fpstats import SingularCovarianceError, fp_cov

__all__ = [
    "TrialData",
    "FitResult",
    "diff_in_means",
    "adjusted_estimate",
    "lin_fit",
    "neyman_variance",
    "huber_white",
]

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class TrialData:
    """Observed outcomes, assignment, and centered analyzer covariates.

    ``x`` is present only when the analyzer knows the design covariates;
    estimators that need it return their degenerate value otherwise.
    Covariate columns are recentered to full-sample mean zero.
    """

    y: np.ndarray
    z: Assignment
    w: np.ndarray
    x: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = y.size
        if self.z.n != n:
            raise ValueError("assignment length must match y")
        w = np.zeros((n, 0)) if self.w is None else np.atleast_2d(np.asarray(self.w, dtype=np.float64))
        if w.shape[0] != n and w.shape == (1, n):
            w = w.T
        x = None
        if self.x is not None:
            x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
            if x.shape[0] != n and x.shape == (1, n):
                x = x.T
            if x.shape[0] != n:
                raise ValueError("x rows must match y")
            x = x - x.mean(axis=0)
        if w.shape[0] != n:
            raise ValueError("w rows must match y")
        if w.shape[1]:
            w = w - w.mean(axis=0)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def j(self) -> int:
        return self.w.shape[1]

    @property
    def r1(self) -> float:
        return self.z.n1 / self.n

    def groups(self):
        mask = self.z.z == 1
        return mask, ~mask


@dataclass(frozen=True)
class FitResult:
    """Interaction-OLS fit: point estimate plus its variance estimators.

    ``v_hat`` and ``r2_hat_x`` are the sample-moment plug-ins scaled for
    sqrt(n)*(tauhat - tau); ``r2_hat_x`` is 0 whenever x is unknown and is
    clipped to [0, 1] against sampling noise.  ``v_hw`` is the Huber-White
    sandwich on the same scale.
    """

    tau_hat: float
    beta1_hat: np.ndarray
    beta0_hat: np.ndarray
    v_hat: float
    r2_hat_x: float
    v_hw: float


def diff_in_means(d: TrialData):
    """Group-mean differences of the outcome, w, and (if known) x."""
    t, c = d.groups()
    if not t.any() or not c.any():
        raise ValueError("both groups must be nonempty")
    tau_hat = float(d.y[t].mean() - d.y[c].mean())
    tau_w = d.w[t].mean(axis=0) - d.w[c].mean(axis=0) if d.j else np.zeros(0)
    tau_x = None
    if d.x is not None:
        tau_x = d.x[t].mean(axis=0) - d.x[c].mean(axis=0)
    return tau_hat, tau_w, tau_x


def adjusted_estimate(d: TrialData, beta1, beta0) -> float:
    """Linearly adjusted estimator tauhat - (r0*beta1 + r1*beta0)' tauhat_w.

    Identical (given centered w) to the unit-level form that subtracts
    beta_z'w from each observed outcome before differencing group means.
    """
    beta1 = np.asarray(beta1, dtype=np.float64).ravel()
    beta0 = np.asarray(beta0, dtype=np.float64).ravel()
    if beta1.shape != (d.j,) or beta0.shape != (d.j,):
        raise ValueError(f"coefficients must have length J={d.j}")
    tau_hat, tau_w, _ = diff_in_means(d)
    r1 = d.r1
    gamma = (1.0 - r1) * beta1 + r1 * beta0
    return float(tau_hat - gamma @ tau_w)


def _group_moments(vals: np.ndarray, w: np.ndarray):
    """Within-group sample mean/variance/covariances (ddof=1)."""
    m = vals.shape[0]
    if m < 2:
        raise ValueError("each group needs at least 2 units")
    mean = vals.mean()
    s2 = float(np.dot(vals - mean, vals - mean) / (m - 1))
    if w.shape[1]:
        wc = w - w.mean(axis=0)
        s_vw = wc.T @ (vals - mean) / (m - 1)
    else:
        s_vw = np.zeros(0)
    return mean, s2, s_vw


def _group_ols(y: np.ndarray, w: np.ndarray, label: str) -> np.ndarray:
    """Within-group OLS slope of y on w (intercept implicit via centering)."""
    if w.shape[1] == 0:
        return np.zeros(0)
    wc = w - w.mean(axis=0)
    gram = wc.T @ wc
    if np.linalg.matrix_rank(gram, rtol=_RANK_RTOL) < w.shape[1]:
        raise SingularCovarianceError(f"{label} within-group Gram")
    coef, *_ = np.linalg.lstsq(wc, y - y.mean(), rcond=_RANK_RTOL)
    return coef


def neyman_variance(d: TrialData, beta1, beta0) -> tuple[float, float]:
    """Sample-moment plug-ins for the adjusted variance and x-share.

    v_hat estimates the variance of sqrt(n)*(tauhat(beta) - tau):
        r1^{-1} s2_{Y(1;b1)} + r0^{-1} s2_{Y(0;b0)}
        - (s_{Y(1;b1),w} - s_{Y(0;b0),w})' (S2_w)^{-1} (...)
    with within-group sample moments and the full-sample covariance of w.
    r2_hat applies the same template against x; it is 0 when x is unknown.
    Both plug-ins are clipped to their parameter ranges.
    """
    beta1 = np.asarray(beta1, dtype=np.float64).ravel()
    beta0 = np.asarray(beta0, dtype=np.float64).ravel()
    if beta1.shape != (d.j,) or beta0.shape != (d.j,):
        raise ValueError(f"coefficients must have length J={d.j}")
    t, c = d.groups()
    if t.sum() < 2 or c.sum() < 2:
        raise ValueError("both groups need at least 2 units")
    r1 = d.r1
    r0 = 1.0 - r1
    adj1 = d.y[t] - d.w[t] @ beta1
    adj0 = d.y[c] - d.w[c] @ beta0

    _, s2_1, s_1w = _group_moments(adj1, d.w[t])
    _, s2_0, s_0w = _group_moments(adj0, d.w[c])

    v_hat = s2_1 / r1 + s2_0 / r0
    if d.j:
        S2w = fp_cov(d.w, d.w)
        if np.linalg.matrix_rank(S2w, rtol=_RANK_RTOL) < d.j:
            raise SingularCovarianceError("S2_w")
        diff = s_1w - s_0w
        v_hat -= float(diff @ np.linalg.solve(S2w, diff))
    v_hat = max(v_hat, 0.0)

    r2_hat = 0.0
    if d.x is not None and d.x.shape[1] and v_hat > 0.0:
        k = d.x.shape[1]
        S2x = fp_cov(d.x, d.x)
        if np.linalg.matrix_rank(S2x, rtol=_RANK_RTOL) < k:
            raise SingularCovarianceError("S2_x")
        _, _, s_1x = _group_moments(adj1, d.x[t])
        _, _, s_0x = _group_moments(adj0, d.x[c])
        s2x_t = fp_cov(d.x[t], d.x[t])
        s2x_c = fp_cov(d.x[c], d.x[c])
        # within-group variance of the projection of the adjusted outcome on x
        proj1 = float(s_1x @ np.linalg.lstsq(s2x_t, s_1x, rcond=_RANK_RTOL)[0])
        proj0 = float(s_0x @ np.linalg.lstsq(s2x_c, s_0x, rcond=_RANK_RTOL)[0])
        diffx = s_1x - s_0x
        num = proj1 / r1 + proj0 / r0 - float(diffx @ np.linalg.solve(S2x, diffx))
        r2_hat = min(max(num / v_hat, 0.0), 1.0)
    return v_hat, r2_hat


def _interaction_design(d: TrialData) -> np.ndarray:
    zf = d.z.z.astype(np.float64)
    return np.column_stack([np.ones(d.n), zf, d.w, zf[:, None] * d.w])


def lin_fit(d: TrialData) -> FitResult:
    """Group-specific OLS adjustment (the interaction-OLS estimator).

    beta_hat_z is the slope of the within-group OLS of Y on w; the resulting
    adjusted estimate equals the treatment coefficient in the joint OLS of Y
    on (1, Z, w, Z x w).  Variance estimators come from ``neyman_variance``
    and ``huber_white`` evaluated at the fitted slopes.
    """
    t, c = d.groups()
    beta1_hat = _group_ols(d.y[t], d.w[t], "treated")
    beta0_hat = _group_ols(d.y[c], d.w[c], "control")
    tau_hat = adjusted_estimate(d, beta1_hat, beta0_hat)
    v_hat, r2_hat = neyman_variance(d, beta1_hat, beta0_hat)
    return FitResult(
        tau_hat=tau_hat,
        beta1_hat=beta1_hat,
        beta0_hat=beta0_hat,
        v_hat=v_hat,
        r2_hat_x=r2_hat,
        v_hw=huber_white(d),
    )


def huber_white(d: TrialData) -> float:
    """Huber-White sandwich for the treatment coefficient, scaled by n.

    Builds U_i = (1, Z_i, w_i', Z_i w_i')', G = n^{-1} sum U_i U_i' and
    H = n^{-1} sum e_i^2 U_i U_i' with interaction-OLS residuals e_i, and
    returns the (2,2) element of G^{-1} H G^{-1}, the variance estimate for
    sqrt(n)*(tauhat - tau).
    """
    U = _interaction_design(d)
    p = U.shape[1]
    G = U.T @ U / d.n
    if np.linalg.matrix_rank(G, rtol=_RANK_RTOL) < p:
        raise SingularCovarianceError("interaction OLS Gram (G)")
    coef, *_ = np.linalg.lstsq(U, d.y, rcond=_RANK_RTOL)
    resid = d.y - U @ coef
    H = (U * (resid * resid)[:, None]).T @ U / d.n
    Ginv = np.linalg.inv(G)
    return float((Ginv @ H @ Ginv)[1, 1])
