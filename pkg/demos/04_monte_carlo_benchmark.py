"""The Monte Carlo laboratory: benchmark table and coverage curves, desk size.

Reproduces the headline simulation at reduced replication counts so it runs
in under a minute: the two-population table of sampling vs estimated
standard errors, and the coverage/length curves across sample sizes.  The
full-size versions (1e5 and 1e4 replications) live in the acceptance tests.
"""

import rerand as rr

print("benchmark table (reduced to 5000 replications):")
text, cells = rr.reproduce_table1(reps=5000)
print(text)
print()
print("published cells: rho=0.9 adjusted (1.47, 1.86), unadjusted (2.10, 4.69)")
print("                 rho=0   adjusted (2.95, 3.61), unadjusted (2.07, 4.71)")

print("\ncoverage and interval length across sample sizes "
      "(reduced to 2000 replications):")
csv_text, rows = rr.reproduce_sec81(n_grid=(100, 300, 1000), reps=2000)
print(csv_text)
print("\nreading: the (x,w)-adjusted interval is near-exact (coverage ~0.95)")
print("while the unadjusted and w-adjusted intervals stay conservative;")
print("lengths order as xw < w < unadjusted.")
