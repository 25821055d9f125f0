"""Recover the active-feature proportion by cross-validated thresholding.

Runs the select-then-refit pipeline over a grid of candidate keep
proportions with 10-fold cross-validation and reports the proportion
with the lowest held-out error next to the generator's ground truth.
"""

import numpy as np

import sparsebnn as sb

pi_active = 0.3
spec = sb.SyntheticSpec(n=2000, n_features=50, alpha=2.0,
                        pi_active=pi_active, link="nonlinear", seed=400)
full = sb.gen_sparse_regression(spec)
ds_std, _, _ = sb.standardize_fit_apply(full)

topology = sb.NetworkTopology((50, 20, 10, 1))
prior = sb.SpikeSlabPrior(pi=0.5, tau1=1.0, tau0=0.1)
config = sb.TrainConfig(epochs=300, batch_size=256, learning_rate=0.01,
                        seed=1)

grid = np.round(np.arange(0.1, 1.0001, 0.1), 2)
proportion = sb.cv_threshold(topology, prior, ds_std, config, folds=10,
                             candidate_proportions=grid, seed=2)

base = sb.train(topology, prior, ds_std, config)
outcome = sb.variable_selection(topology, base.params, ds_std,
                                keep_quantile=1.0 - proportion,
                                retrain=config, prior=prior)

print(f"true active proportion      : {full.z.mean():.2f}")
print(f"cross-validated proportion  : {proportion:.2f}")
print(f"selection accuracy          : {outcome.accuracy:.3f}")
