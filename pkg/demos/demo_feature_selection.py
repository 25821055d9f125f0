"""Select active features with a fixed quantile threshold, then refit.

Generates a sparse additive dataset (100 features, ~20% active), trains
the full network, keeps the top-20% features by scaled importance, and
compares the refit network's held-out error against the unrestricted one.
"""

import numpy as np

import sparsebnn as sb

spec = sb.SyntheticSpec(n=2000, n_features=100, alpha=2.0, pi_active=0.2,
                        link="nonlinear", seed=300)
full = sb.gen_sparse_regression(spec)
train_ds, test_ds = sb.split(full, 0.8, seed=0)
train_std, test_std, _ = sb.standardize_fit_apply(train_ds, test_ds)

topology = sb.NetworkTopology((100, 20, 10, 1))
prior = sb.SpikeSlabPrior(pi=0.5, tau1=1.0, tau0=0.1)
config = sb.TrainConfig(epochs=300, batch_size=256, learning_rate=0.01,
                        seed=1)

base = sb.train(topology, prior, train_std, config)
outcome = sb.variable_selection(topology, base.params, train_std,
                                keep_quantile=0.8, retrain=config,
                                prior=prior)

pred_full = sb.predict(topology, base.params, test_std.X)[:, 0]
masked_test = test_std.with_feature_mask(outcome.selected)
pred_sel = sb.predict(topology, outcome.refit.params, masked_test.X)[:, 0]

print(f"truly active features : {int(full.z.sum())} of 100")
print(f"selected features     : {int(outcome.selected.sum())}")
print(f"selection accuracy    : {outcome.accuracy:.3f}")
print(f"test mse, full model  : {np.mean((pred_full - test_std.y)**2):.4f}")
print(f"test mse, refit model : {np.mean((pred_sel - test_std.y)**2):.4f}")
