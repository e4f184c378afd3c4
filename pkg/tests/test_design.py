"""Assignment generation vs enumeration and frequency oracles."""

import math

import numpy as np
import pytest

from rerand import (Assignment, DesignSpec, FinitePopulation,
                    RejectionCapError, SingularCovarianceError, chi2_quantile,
                    draw_cre, draw_rem, enumerate_assignments, mahalanobis)

from conftest import random_population


class TestMahalanobis:
    def test_balanced_assignment_is_zero(self):
        x = np.array([-1.0, 1.0, -2.0, 2.0])
        pop = FinitePopulation(y1=np.zeros(4), y0=np.zeros(4), x=x)
        m = mahalanobis(pop, Assignment(np.array([1, 1, 0, 0])))
        assert m == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_example(self):
        # tau_x = -2, S2_x = 5/3, M = 4 * 0.25 * 4 / (5/3) = 2.4
        pop = FinitePopulation(y1=np.zeros(4), y0=np.zeros(4),
                               x=np.array([-1.5, -0.5, 0.5, 1.5]))
        m = mahalanobis(pop, Assignment(np.array([1, 1, 0, 0])))
        assert m == pytest.approx(2.4, abs=1e-12)

    def test_sampled_mean_matches_enumeration(self, rng):
        pop = random_population(rng, n=6, k=1, j=1)
        ms = [mahalanobis(pop, a) for a in enumerate_assignments(6, 3)]
        draws = [mahalanobis(pop, draw_cre(6, 3, rng)) for _ in range(4000)]
        se = np.std(draws, ddof=1) / math.sqrt(len(draws))
        assert abs(np.mean(draws) - np.mean(ms)) < 4 * se

    def test_singular_design_covariance(self, rng):
        x = rng.standard_normal((8, 1))
        pop = FinitePopulation(y1=np.zeros(8), y0=np.zeros(8),
                               x=np.hstack([x, 2 * x]))
        with pytest.raises(SingularCovarianceError):
            mahalanobis(pop, Assignment(np.array([1, 1, 1, 1, 0, 0, 0, 0])))


class TestDrawCre:
    def test_two_point_uniform(self, rng):
        hits = sum(int(draw_cre(2, 1, rng).z[0]) for _ in range(20_000))
        se = math.sqrt(0.25 * 20_000)
        assert abs(hits - 10_000) < 3 * se

    def test_goodness_of_fit_n6(self, rng):
        keys = {tuple(a.treated): i for i, a in
                enumerate(enumerate_assignments(6, 3))}
        counts = np.zeros(20)
        draws = 100_000
        for _ in range(draws):
            counts[keys[tuple(draw_cre(6, 3, rng).treated)]] += 1
        expected = draws / 20
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2_quantile(19, 0.99)

    def test_seed_determinism(self):
        a = [draw_cre(10, 4, np.random.default_rng(5)).treated for _ in "ab"]
        b = draw_cre(10, 4, np.random.default_rng(5)).treated
        np.testing.assert_array_equal(a[0], b)

    def test_group_sizes(self, rng):
        asg = draw_cre(9, 2, rng)
        assert asg.n1 == 2 and asg.n == 9
        with pytest.raises(ValueError):
            draw_cre(5, 0, rng)


class TestDrawRem:
    def test_infinite_threshold_accepts_first(self, rng):
        pop = random_population(rng, n=8, k=1, j=1)
        spec = DesignSpec(kind="rem", n1=4, a=math.inf)
        _, attempts = draw_rem(pop, spec, rng)
        assert attempts == 1

    def test_acceptance_rate_matches_enumeration(self, rng):
        pop = random_population(rng, n=8, k=1, j=1)
        ms = np.array([mahalanobis(pop, a)
                       for a in enumerate_assignments(8, 4)])
        a_thr = float(np.median(ms))
        frac = float(np.mean(ms <= a_thr))
        spec = DesignSpec(kind="rem", n1=4, a=a_thr)
        n_draws = 3000
        attempts = np.array([draw_rem(pop, spec, rng)[1]
                             for _ in range(n_draws)])
        # attempts are geometric with success probability frac
        est = n_draws / attempts.sum()
        se = frac * math.sqrt((1 - frac) / n_draws) / frac
        assert abs(est - frac) < 4 * math.sqrt(frac * frac * (1 - frac) / n_draws) + 0.02

    def test_tight_threshold_mean_attempts(self, rng):
        # asymptotic acceptance probability P(chi2_1 <= a) = 0.02
        pop = random_population(rng, n=500, k=1, j=1, scale=1.0)
        a_thr = chi2_quantile(1, 0.02)
        spec = DesignSpec(kind="rem", n1=250, a=a_thr)
        attempts = np.array([draw_rem(pop, spec, rng)[1] for _ in range(300)])
        mean = attempts.mean()
        se = attempts.std(ddof=1) / math.sqrt(attempts.size)
        assert abs(mean - 50.0) < 4 * se + 5.0

    def test_accepted_assignment_satisfies_criterion(self, rng):
        pop = random_population(rng, n=10, k=2, j=1)
        spec = DesignSpec(kind="rem", n1=5, a=1.0)
        asg, _ = draw_rem(pop, spec, rng)
        assert mahalanobis(pop, asg) <= 1.0

    def test_rejection_cap(self, rng):
        pop = random_population(rng, n=8, k=1, j=1)
        spec = DesignSpec(kind="rem", n1=4, a=1e-12, max_attempts=50)
        with pytest.raises(RejectionCapError) as err:
            draw_rem(pop, spec, rng)
        assert err.value.acceptance_estimate <= 1 / 50

    def test_uniform_on_acceptance_set(self, rng):
        pop = random_population(rng, n=8, k=1, j=1)
        assignments = enumerate_assignments(8, 4)
        ms = np.array([mahalanobis(pop, a) for a in assignments])
        # threshold strictly between distinct M values (M ties in
        # complement pairs, so order statistics alone can sit on a datum)
        uniq = np.unique(ms)
        a_thr = float(0.5 * (uniq[6] + uniq[7]))
        accepted = {}
        for a, m in zip(assignments, ms):
            if m <= a_thr:
                accepted[tuple(a.treated)] = len(accepted)
        spec = DesignSpec(kind="rem", n1=4, a=a_thr)
        counts = np.zeros(len(accepted))
        draws = 20_000
        for _ in range(draws):
            asg, _ = draw_rem(pop, spec, rng)
            counts[accepted[tuple(asg.treated)]] += 1
        expected = draws / len(accepted)
        stat = float(((counts - expected) ** 2 / expected).sum())
        assert stat < chi2_quantile(len(accepted) - 1, 0.99)


class TestEnumeration:
    def test_counts(self):
        assert len(enumerate_assignments(4, 2)) == 6
        assert len(enumerate_assignments(8, 4)) == 70

    def test_all_have_n1_treated(self):
        assert all(a.n1 == 2 for a in enumerate_assignments(5, 2))

    def test_unique_and_lexicographic(self):
        seen = [tuple(a.treated) for a in enumerate_assignments(6, 3)]
        assert len(set(seen)) == 20
        assert seen == sorted(seen)

    def test_cap_enforced(self):
        with pytest.raises(ValueError, match="cap"):
            enumerate_assignments(22, 11)

    def test_unbiasedness_under_enumeration(self, rng):
        pop = random_population(rng, n=7, k=1, j=1)
        taus = []
        for asg in enumerate_assignments(7, 3):
            y = pop.observed(asg.z)
            taus.append(y[asg.z == 1].mean() - y[asg.z == 0].mean())
        assert np.mean(taus) == pytest.approx(pop.tau, abs=1e-12)

    def test_balance_improvement_under_restriction(self, rng):
        # restricting to {M <= a} strictly shrinks every tau_x component
        pop = random_population(rng, n=8, k=2, j=1)
        assignments = enumerate_assignments(8, 4)
        ms = np.array([mahalanobis(pop, a) for a in assignments])
        tau_x = np.array([pop.x[a.z == 1].mean(axis=0)
                          - pop.x[a.z == 0].mean(axis=0)
                          for a in assignments])
        a_thr = float(np.quantile(ms, 0.4))
        keep = ms <= a_thr
        assert keep.any() and not keep.all()
        var_all = tau_x.var(axis=0)
        var_kept = tau_x[keep].var(axis=0)
        assert np.all(var_kept < var_all)
