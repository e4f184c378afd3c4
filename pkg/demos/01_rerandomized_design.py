"""Rerandomization in the design stage: balance now, precision later.

Draws completely randomized and balance-constrained assignments for one
fixed population and shows what the Mahalanobis criterion buys: covariate
mean differences shrink, and with them the sampling spread of the
difference-in-means estimator.
"""

import numpy as np

import rerand as rr

rng = np.random.default_rng(1)

# one fixed population: outcomes strongly driven by the design covariate
n, n1 = 200, 100
x = rng.standard_normal((n, 2))
y0 = x @ np.array([2.0, -1.0]) + rng.standard_normal(n)
pop = rr.FinitePopulation(y1=y0 + 1.0, y0=y0, x=x, w=x)

a = rr.chi2_quantile(pop.k, 0.05)   # accept the best-balanced 5% of draws
print(f"threshold a = {a:.4f} (chi2_{pop.k} quantile at 0.05)")

cre_m, cre_tau = [], []
rem_m, rem_tau = [], []
attempts_used = []
for _ in range(400):
    asg = rr.draw_cre(n, n1, rng)
    cre_m.append(rr.mahalanobis(pop, asg))
    y = pop.observed(asg.z)
    cre_tau.append(y[asg.z == 1].mean() - y[asg.z == 0].mean())

    asg, att = rr.draw_rem(pop, rr.DesignSpec(kind="rem", n1=n1, a=a), rng)
    attempts_used.append(att)
    rem_m.append(rr.mahalanobis(pop, asg))
    y = pop.observed(asg.z)
    rem_tau.append(y[asg.z == 1].mean() - y[asg.z == 0].mean())

print(f"mean Mahalanobis imbalance: CRE {np.mean(cre_m):.3f}  "
      f"ReM {np.mean(rem_m):.4f}")
print(f"mean attempts per accepted ReM draw: {np.mean(attempts_used):.1f} "
      f"(expected ~{1 / 0.05:.0f})")
print(f"sampling SD of the unadjusted estimator: "
      f"CRE {np.std(cre_tau, ddof=1):.4f}  ReM {np.std(rem_tau, ddof=1):.4f}")

dist = rr.sampling_distribution(pop, rr.DesignSpec(kind="rem", n1=n1, a=a))
print(f"asymptotic mixture SD under ReM: {dist.sd / np.sqrt(n):.4f} "
      f"(R2 routed through the truncated component: {dist.r2:.3f})")
