"""Finite-population moments, linear projections, and R-squared quantities.

Everything here is deterministic linear algebra on a fixed science table:
potential outcomes under treatment and control plus two covariate sets, the
design covariates x (K columns) and the analysis covariates w (J columns).
The randomization-covariance matrix of the scaled estimator vector and all
projection coefficients derived from it parameterize the asymptotic theory
used by the rest of the package.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FinitePopulation",
    "PopulationSummary",
    "SingularCovarianceError",
    "fp_cov",
    "summarize",
    "v_matrix",
    "adjusted_moments",
]

# relative cutoff on singular values when a projected/residual covariance is
# rank deficient; the projections themselves remain unique
PINV_RTOL = 1e-10


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance matrix that must be inverted is numerically singular."""

    def __init__(self, name: str):
        super().__init__(f"{name} is singular (or not full rank); "
                         f"drop collinear covariate columns")
        self.name = name


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected vector or matrix, got ndim={a.ndim}")
    return a


def fp_cov(a, b) -> np.ndarray:
    """Finite-population covariance (n-1 denominator) between column sets.

    Returns the p x q matrix (n-1)^{-1} sum_i (a_i - abar)(b_i - bbar)'.
    Vectors are treated as single columns.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row mismatch: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows for a covariance")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    return ac.T @ bc / (n - 1)


def _var(vec: np.ndarray) -> float:
    """Scalar finite-population variance (n-1 denominator)."""
    return float(fp_cov(vec, vec)[0, 0])


def _solve_spd(mat: np.ndarray, rhs: np.ndarray, name: str) -> np.ndarray:
    """Solve mat @ out = rhs, raising SingularCovarianceError on rank loss."""
    if mat.shape[0] == 0:
        return np.zeros(rhs.shape)
    if np.linalg.matrix_rank(mat, rtol=PINV_RTOL) < mat.shape[0]:
        raise SingularCovarianceError(name)
    return np.linalg.solve(mat, rhs)


def _proj_coef(cov: np.ndarray, cross: np.ndarray,
               anchor: np.ndarray) -> np.ndarray:
    """Projection coefficient solving cov @ out = cross.

    When cov is singular the solution is not unique; the pseudo-inverse
    picks the member closest to ``anchor`` (the combined projection
    coefficient), which keeps the collapsed cases equal to it.  Downstream
    results depend only on the projections, which are unique either way.
    """
    if cov.shape[0] == 0:
        return np.zeros(cross.shape)
    if np.linalg.matrix_rank(cov, rtol=PINV_RTOL) == cov.shape[0]:
        return np.linalg.solve(cov, cross)
    return anchor + np.linalg.pinv(cov, rcond=PINV_RTOL) @ (cross - cov @ anchor)


def _ratio(num: float, den: float) -> float:
    """num/den with the 0 convention for a degenerate denominator."""
    if den <= 0.0 or not np.isfinite(den):
        return 0.0
    return float(num / den)


@dataclass(frozen=True)
class FinitePopulation:
    """A fixed science table: potential outcomes plus centered covariates.

    Covariate columns of ``x`` and ``w`` are recentered to exact mean zero at
    construction; the theory assumes centered covariates throughout.  Either
    covariate set may be empty (an n x 0 matrix).
    """

    y1: np.ndarray
    y0: np.ndarray
    x: np.ndarray = field(default=None)
    w: np.ndarray = field(default=None)

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=np.float64).ravel()
        y0 = np.asarray(self.y0, dtype=np.float64).ravel()
        if y1.shape != y0.shape:
            raise ValueError("y1 and y0 must have the same length")
        n = y1.shape[0]
        x = np.zeros((n, 0)) if self.x is None else _as_matrix(self.x).copy()
        w = np.zeros((n, 0)) if self.w is None else _as_matrix(self.w).copy()
        if x.shape[0] != n or w.shape[0] != n:
            raise ValueError("covariate row counts must match the outcomes")
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y0))
                and np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("inputs must be finite")
        if n < max(x.shape[1], w.shape[1]) + 2:
            raise ValueError(
                f"n={n} too small: need n >= max(K, J) + 2 "
                f"with K={x.shape[1]}, J={w.shape[1]}")
        if x.shape[1]:
            x -= x.mean(axis=0)
        if w.shape[1]:
            w -= w.mean(axis=0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.y1.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def j(self) -> int:
        return self.w.shape[1]

    @property
    def tau(self) -> float:
        """Average treatment effect over the n units."""
        return float(self.y1.mean() - self.y0.mean())

    def observed(self, z: np.ndarray) -> np.ndarray:
        """Observed outcome vector z*y1 + (1-z)*y0 for an assignment."""
        z = np.asarray(z)
        return np.where(z == 1, self.y1, self.y0)

    @classmethod
    def from_csv(cls, path, k: int | None = None, j: int | None = None
                 ) -> "FinitePopulation":
        """Load a population from a CSV with headers y1,y0,x1..xK,w1..wJ.

        If ``k``/``j`` are given, headers must declare exactly that many
        x/w columns.  Columns outside the schema are rejected.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row]
        xcols, wcols = {}, {}
        for pos, name in enumerate(header):
            if name in ("y1", "y0"):
                continue
            m = re.fullmatch(r"([xw])(\d+)", name)
            if not m:
                raise ValueError(f"unexpected column {name!r}; schema is "
                                 "y1,y0,x1..xK,w1..wJ")
            (xcols if m.group(1) == "x" else wcols)[int(m.group(2))] = pos
        for need in ("y1", "y0"):
            if need not in header:
                raise ValueError(f"missing required column {need!r}")
        for label, cols, declared in (("x", xcols, k), ("w", wcols, j)):
            got = sorted(cols)
            if got != list(range(1, len(got) + 1)):
                raise ValueError(f"{label}-columns must be {label}1..{label}"
                                 f"{len(got)} without gaps, got {got}")
            if declared is not None and len(got) != declared:
                raise ValueError(f"expected {declared} {label}-columns, "
                                 f"found {len(got)}")
        data = np.array([[float(v) for v in row] for row in rows])
        if data.shape[1] != len(header):
            raise ValueError("ragged CSV rows")
        y1 = data[:, header.index("y1")]
        y0 = data[:, header.index("y0")]
        x = data[:, [xcols[i] for i in sorted(xcols)]]
        w = data[:, [wcols[i] for i in sorted(wcols)]]
        return cls(y1=y1, y0=y0, x=x, w=w)


@dataclass(frozen=True)
class PopulationSummary:
    """Population-level moments and projection quantities for a given r1.

    All fields are exact functions of the science table and the treated
    proportion; see ``summarize`` for the defining formulas.
    """

    r1: float
    tau: float
    s2_y1: float
    s2_y0: float
    s2_tau: float
    S2x: np.ndarray
    S2w: np.ndarray
    Sxw: np.ndarray
    beta1_tilde: np.ndarray
    beta0_tilde: np.ndarray
    gamma_tilde: np.ndarray
    gamma_proj: np.ndarray
    gamma_res: np.ndarray
    r2_tau_x: float
    r2_tau_w: float
    r2_proj: float
    r2_res: float
    rho2_x_minus_w: float
    v_tautau: float
    s2_tau_minus_w: float
    S2w_given_x: np.ndarray
    S2w_minus_x: np.ndarray

    def to_dict(self) -> dict:
        out = {}
        for name in ("r1", "tau", "s2_y1", "s2_y0", "s2_tau", "r2_tau_x",
                     "r2_tau_w", "r2_proj", "r2_res", "rho2_x_minus_w",
                     "v_tautau", "s2_tau_minus_w"):
            out[name] = float(getattr(self, name))
        for name in ("beta1_tilde", "beta0_tilde", "gamma_tilde",
                     "gamma_proj", "gamma_res"):
            out[name] = np.asarray(getattr(self, name)).tolist()
        return out


def _check_r1(pop: FinitePopulation, r1: float) -> float:
    r1 = float(r1)
    if not 0.0 < r1 < 1.0:
        raise ValueError("r1 must be in (0, 1)")
    n1 = r1 * pop.n
    if abs(n1 - round(n1)) > 1e-9 or round(n1) <= 0 or round(n1) >= pop.n:
        raise ValueError(f"r1*n = {n1} must be a positive integer < n")
    return r1


def summarize(pop: FinitePopulation, r1: float) -> PopulationSummary:
    """Compute every population-level quantity the asymptotic theory needs.

    The scaled estimator vector sqrt(n)*(tauhat - tau, tauhat_x', tauhat_w')
    has randomization covariance V (see ``v_matrix``).  From V this derives:

    * the outcome-on-w projection coefficients beta_tilde_z and their
      combination gamma_tilde = r0*beta1_tilde + r1*beta0_tilde,
    * gamma_proj / gamma_res, the coefficients from projecting the
      x-explained and x-orthogonal parts of tauhat on the matching parts of
      tauhat_w (pseudo-inverses when those parts are rank deficient),
    * the proportions of variance explained: r2_tau_x, r2_tau_w, r2_proj,
      r2_res, and rho2_x_minus_w, all set to 0 when a denominator vanishes.
    """
    r1 = _check_r1(pop, r1)
    r0 = 1.0 - r1
    y1, y0, x, w = pop.y1, pop.y0, pop.x, pop.w
    tau_i = y1 - y0

    s2_y1 = _var(y1)
    s2_y0 = _var(y0)
    s2_tau = _var(tau_i)
    S2x = fp_cov(x, x)
    S2w = fp_cov(w, w)
    Sxw = fp_cov(x, w)
    S_w_y1 = fp_cov(w, y1)[:, 0]
    S_w_y0 = fp_cov(w, y0)[:, 0]
    S_x_y1 = fp_cov(x, y1)[:, 0]
    S_x_y0 = fp_cov(x, y0)[:, 0]

    beta1_tilde = _solve_spd(S2w, S_w_y1, "S2_w")
    beta0_tilde = _solve_spd(S2w, S_w_y0, "S2_w")

    v_tt = s2_y1 / r1 + s2_y0 / r0 - s2_tau
    V_xt = S_x_y1 / r1 + S_x_y0 / r0
    V_wt = S_w_y1 / r1 + S_w_y0 / r0
    rr = 1.0 / (r1 * r0)
    V_xx = rr * S2x
    V_ww = rr * S2w
    V_wx = rr * Sxw.T

    gamma_tilde = _solve_spd(V_ww, V_wt, "S2_w")

    # split tauhat_w against tauhat_x: explained and residual covariances
    Vxx_inv_Vxt = _solve_spd(V_xx, V_xt, "S2_x")
    Vxx_inv_Vxw = _solve_spd(V_xx, V_wx.T, "S2_x")
    cov_proj_w = V_wx @ Vxx_inv_Vxw            # Cov of proj(tauhat_w | tauhat_x)
    cov_res_w = V_ww - cov_proj_w              # Cov of res(tauhat_w | tauhat_x)
    cross_proj = V_wx @ Vxx_inv_Vxt            # Cov(proj part, tauhat)
    cross_res = V_wt - cross_proj

    gamma_proj = _proj_coef(cov_proj_w, cross_proj, gamma_tilde)
    gamma_res = _proj_coef(cov_res_w, cross_res, gamma_tilde)

    var_tau_proj = float(V_xt @ Vxx_inv_Vxt)   # Var of proj(tauhat | tauhat_x)
    var_tau_res = v_tt - var_tau_proj
    clip01 = lambda v: min(max(v, 0.0), 1.0)
    r2_tau_x = clip01(_ratio(var_tau_proj, v_tt))
    r2_tau_w = clip01(_ratio(float(V_wt @ gamma_tilde), v_tt))
    r2_proj = clip01(_ratio(float(gamma_proj @ cov_proj_w @ gamma_proj),
                            var_tau_proj))
    r2_res = clip01(_ratio(float(gamma_res @ cov_res_w @ gamma_res),
                           var_tau_res))
    rho2 = clip01(_ratio(r2_tau_x - r2_tau_w, 1.0 - r2_tau_w))

    S2w_given_x = (r1 * r0) * cov_proj_w
    S2w_minus_x = S2w - S2w_given_x

    s_tau_w = S_w_y1 - S_w_y0
    s2_tau_minus_w = s2_tau - float(s_tau_w @ _solve_spd(S2w, s_tau_w, "S2_w"))

    return PopulationSummary(
        r1=r1, tau=pop.tau,
        s2_y1=s2_y1, s2_y0=s2_y0, s2_tau=s2_tau,
        S2x=S2x, S2w=S2w, Sxw=Sxw,
        beta1_tilde=beta1_tilde, beta0_tilde=beta0_tilde,
        gamma_tilde=gamma_tilde, gamma_proj=gamma_proj, gamma_res=gamma_res,
        r2_tau_x=r2_tau_x, r2_tau_w=r2_tau_w,
        r2_proj=r2_proj, r2_res=r2_res, rho2_x_minus_w=rho2,
        v_tautau=max(v_tt, 0.0),
        s2_tau_minus_w=max(s2_tau_minus_w, 0.0),
        S2w_given_x=S2w_given_x, S2w_minus_x=S2w_minus_x,
    )


def v_matrix(pop: FinitePopulation, r1: float) -> np.ndarray:
    """Randomization covariance of sqrt(n)*(tauhat - tau, tauhat_x', tauhat_w').

    Block layout: scalar V_tautau, then the K design-covariate rows, then the
    J analysis-covariate rows.  Exact for every n, not an asymptotic object.
    """
    r1 = _check_r1(pop, r1)
    r0 = 1.0 - r1
    y1, y0, x, w = pop.y1, pop.y0, pop.x, pop.w
    k, j = pop.k, pop.j
    tau_i = y1 - y0

    V = np.zeros((1 + k + j, 1 + k + j))
    V[0, 0] = (_var(y1) / r1 + _var(y0) / r0
               - _var(tau_i))
    rr = 1.0 / (r1 * r0)
    sx, sw = slice(1, 1 + k), slice(1 + k, 1 + k + j)
    V[0, sx] = fp_cov(y1, x)[0] / r1 + fp_cov(y0, x)[0] / r0
    V[0, sw] = fp_cov(y1, w)[0] / r1 + fp_cov(y0, w)[0] / r0
    V[sx, 0] = V[0, sx]
    V[sw, 0] = V[0, sw]
    V[sx, sx] = rr * fp_cov(x, x)
    V[sw, sw] = rr * fp_cov(w, w)
    V[sx, sw] = rr * fp_cov(x, w)
    V[sw, sx] = V[sx, sw].T
    return V


def adjusted_moments(pop: FinitePopulation, r1: float, beta1, beta0
                     ) -> tuple[float, float]:
    """Variance and x-explained share for a linearly adjusted estimator.

    Applies the covariance formulas to the adjusted potential outcomes
    Y(z) - beta_z'w and returns (V_tautau(beta1, beta0),
    R2_tau_x(beta1, beta0)); the R2 is 0 by convention when the variance is.
    """
    r1 = _check_r1(pop, r1)
    r0 = 1.0 - r1
    beta1 = np.asarray(beta1, dtype=np.float64).ravel()
    beta0 = np.asarray(beta0, dtype=np.float64).ravel()
    if beta1.shape != (pop.j,) or beta0.shape != (pop.j,):
        raise ValueError(f"coefficients must have length J={pop.j}")
    ya1 = pop.y1 - pop.w @ beta1
    ya0 = pop.y0 - pop.w @ beta0
    tau_a = ya1 - ya0

    v = (_var(ya1) / r1 + _var(ya0) / r0
         - _var(tau_a))

    S2x = fp_cov(pop.x, pop.x)
    s_x_1 = fp_cov(pop.x, ya1)[:, 0]
    s_x_0 = fp_cov(pop.x, ya0)[:, 0]
    s_x_t = s_x_1 - s_x_0

    def proj_var(cross):
        return float(cross @ _solve_spd(S2x, cross, "S2_x"))

    num = proj_var(s_x_1) / r1 + proj_var(s_x_0) / r0 - proj_var(s_x_t)
    r2 = min(max(_ratio(num, v), 0.0), 1.0)
    return max(v, 0.0), r2
