"""Closed-form penalty gradients next to their sampled counterparts.

For a grid of single-weight settings, prints the closed-form gradient
(zero variance by construction), the Monte Carlo mean and standard error
of the sampled estimator, and an adaptive-quadrature reference for the
sampled estimator's exact expectation.
"""

from sparsebnn import variance_comparison

settings = [
    (m, sigma, 0.5, 1.0, 0.1)
    for m in (-1.0, 0.0, 0.5, 2.0)
    for sigma in (0.3, 1.0)
]
rows = variance_comparison(settings, draws=100_000, seed=0)

header = (f"{'m':>5} {'sigma':>6} | {'closed dR/dm':>13} {'mc mean':>10} "
          f"{'se':>8} {'quad ref':>10}")
print(header)
print("-" * len(header))
for row in rows:
    print(f"{row['m']:>5.1f} {row['sigma']:>6.1f} | "
          f"{row['closed_form_m']:>13.4f} {row['mc_mean_m']:>10.4f} "
          f"{row['mc_std_error_m']:>8.4f} "
          f"{row['quadrature_reference_m']:>10.4f}")

print()
header = (f"{'m':>5} {'sigma':>6} | {'closed dR/ds2':>13} {'mc mean':>10} "
          f"{'se':>8} {'quad ref':>10}")
print(header)
print("-" * len(header))
for row in rows:
    print(f"{row['m']:>5.1f} {row['sigma']:>6.1f} | "
          f"{row['closed_form_sigma2']:>13.4f} {row['mc_mean_sigma2']:>10.4f} "
          f"{row['mc_std_error_sigma2']:>8.4f} "
          f"{row['quadrature_reference_sigma2']:>10.4f}")

print("\nThe sampled estimator is unbiased for its own expectation (the")
print("quadrature column); at settings where the mixture responsibilities")
print("vary over the sampling range, that expectation differs from the")
print("closed-form coordinate gradient, which holds p fixed at its optimum.")
