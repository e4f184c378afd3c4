"""Assignment generation: complete randomization and rerandomization.

Rerandomization repeats complete randomization until the Mahalanobis
imbalance of the design covariates falls at or below the threshold a, so an
accepted assignment is uniform on the acceptance set {z : M(z) <= a}.  The
exhaustive enumerator provides the exactness oracle for desk-scale tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .fpstats import FinitePopulation, SingularCovarianceError, fp_cov

__all__ = [
    "Assignment",
    "DesignSpec",
    "RejectionCapError",
    "mahalanobis",
    "draw_cre",
    "draw_rem",
    "enumerate_assignments",
]

ENUMERATION_CAP = 200_000


class RejectionCapError(RuntimeError):
    """Raised when rerandomization exhausts its attempt budget.

    Carries the empirical acceptance estimate observed before giving up,
    which is the diagnostic for a threshold that is too strict for the
    finite population at hand.
    """

    def __init__(self, attempts: int, acceptance_estimate: float):
        super().__init__(
            f"no acceptable assignment in {attempts} attempts "
            f"(empirical acceptance ~ {acceptance_estimate:.2e}); "
            "raise the threshold or max_attempts")
        self.attempts = attempts
        self.acceptance_estimate = acceptance_estimate


@dataclass(frozen=True)
class Assignment:
    """A binary allocation with exactly n1 treated units."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z)
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("assignment entries must be 0 or 1")
        z = z.astype(np.int8)
        if not 0 < int(z.sum()) < z.size:
            raise ValueError("both groups must be nonempty")
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def n1(self) -> int:
        return int(self.z.sum())

    @property
    def treated(self) -> np.ndarray:
        return np.flatnonzero(self.z == 1)

    @classmethod
    def from_treated(cls, n: int, treated) -> "Assignment":
        z = np.zeros(n, dtype=np.int8)
        z[np.asarray(treated, dtype=np.int64)] = 1
        return cls(z)


@dataclass(frozen=True)
class DesignSpec:
    """Generating rule for assignments: CRE, or ReM with threshold a.

    ReM with a = inf accepts every draw and is identical to the CRE.
    """

    kind: str
    n1: int
    a: float = math.inf
    max_attempts: int = 10**6

    def __post_init__(self):
        if self.kind not in ("cre", "rem"):
            raise ValueError("kind must be 'cre' or 'rem'")
        if self.n1 <= 0:
            raise ValueError("n1 must be positive")
        if self.kind == "rem" and not self.a > 0:
            raise ValueError("ReM threshold a must be positive")
        if self.max_attempts <= 0:
            raise ValueError("max_attempts must be positive")

    @property
    def is_rejective(self) -> bool:
        return self.kind == "rem" and math.isfinite(self.a)


def _mahalanobis_weight(pop: FinitePopulation, n1: int) -> np.ndarray:
    """Matrix A with M = tauhat_x' A tauhat_x, A = n r1 r0 (S2_x)^{-1}."""
    n = pop.n
    r1 = n1 / n
    s2x = fp_cov(pop.x, pop.x)
    if np.linalg.matrix_rank(s2x, rtol=1e-10) < pop.k:
        raise SingularCovarianceError("S2_x")
    return n * r1 * (1.0 - r1) * np.linalg.inv(s2x)


def mahalanobis(pop: FinitePopulation, assignment: Assignment) -> float:
    """Mahalanobis imbalance of the design covariates for one assignment.

    M = tauhat_x' {Cov(tauhat_x)}^{-1} tauhat_x with the analytic
    randomization covariance Cov(tauhat_x) = (n r1 r0)^{-1} S2_x, fixed
    before the experiment.  Zero covariates give M = 0.
    """
    if assignment.n != pop.n:
        raise ValueError("assignment length does not match population")
    if pop.k == 0:
        return 0.0
    z = assignment.z
    n1 = assignment.n1
    tau_x = pop.x[z == 1].mean(axis=0) - pop.x[z == 0].mean(axis=0)
    A = _mahalanobis_weight(pop, n1)
    return float(tau_x @ A @ tau_x)


def draw_cre(n: int, n1: int, rng: np.random.Generator) -> Assignment:
    """One completely randomized assignment, uniform over all C(n, n1)."""
    if not 0 < n1 < n:
        raise ValueError("need 0 < n1 < n")
    treated = rng.choice(n, size=n1, replace=False)
    return Assignment.from_treated(n, treated)


def draw_rem(pop: FinitePopulation, spec: DesignSpec,
             rng: np.random.Generator) -> tuple[Assignment, int]:
    """Rerandomize until the balance criterion holds; ties at M = a accepted.

    Returns the accepted assignment and the number of attempts used.  Raises
    RejectionCapError past spec.max_attempts.
    """
    if spec.kind == "cre" or not spec.is_rejective:
        return draw_cre(pop.n, spec.n1, rng), 1
    if pop.k == 0:
        raise ValueError("ReM needs at least one design covariate")
    A = _mahalanobis_weight(pop, spec.n1)
    xc = pop.x
    n, n1 = pop.n, spec.n1
    mask = np.zeros(n, dtype=bool)
    for attempt in range(1, spec.max_attempts + 1):
        treated = rng.choice(n, size=n1, replace=False)
        # same arithmetic as mahalanobis() so the acceptance set is
        # bitwise identical across code paths
        mask[:] = False
        mask[treated] = True
        tau_x = xc[mask].mean(axis=0) - xc[~mask].mean(axis=0)
        if float(tau_x @ A @ tau_x) <= spec.a:
            return Assignment.from_treated(n, treated), attempt
    raise RejectionCapError(spec.max_attempts, 1.0 / (spec.max_attempts + 1.0))


def enumerate_assignments(n: int, n1: int) -> list[Assignment]:
    """All C(n, n1) assignments in lexicographic order of treated indices."""
    if not 0 < n1 < n:
        raise ValueError("need 0 < n1 < n")
    total = math.comb(n, n1)
    if total > ENUMERATION_CAP:
        raise ValueError(
            f"C({n},{n1}) = {total} exceeds the enumeration cap {ENUMERATION_CAP}")
    return [Assignment.from_treated(n, combo)
            for combo in combinations(range(n), n1)]
