"""Test error as a growing fraction of weights is forced to zero.

Trains on sparse synthetic data at two activity levels and sweeps the
droprate grid, pruning by posterior inclusion probability.  With few
active features the error curve stays flat well past half the network;
with most features active the curve bends sooner.
"""

import numpy as np

import sparsebnn as sb

rates = [0.0, 0.1, 0.2, 0.25, 0.5, 0.75, 0.8, 0.9, 0.95]
topology = sb.NetworkTopology((20, 20, 10, 1))
prior = sb.SpikeSlabPrior(pi=0.5, tau1=1.0, tau0=0.1)

for pi_active in (0.2, 0.9):
    rel = np.zeros(len(rates))
    repeats = 5
    for r in range(repeats):
        spec = sb.SyntheticSpec(n=2000, n_features=20, alpha=2.0,
                                pi_active=pi_active, link="linear",
                                seed=500 + r)
        full = sb.gen_sparse_regression(spec)
        train_ds, test_ds = sb.split(full, 0.8, seed=r)
        train_std, test_std, _ = sb.standardize_fit_apply(train_ds, test_ds)
        report = sb.train(
            topology, prior, train_std,
            sb.TrainConfig(epochs=300, batch_size=256, learning_rate=0.01,
                           seed=1 + r),
        )
        mses = []
        for rate in rates:
            mask, pruned = sb.prune(report.params, "inclusion_p", rate)
            pred = sb.predict(topology, pruned, test_std.X)[:, 0]
            mses.append(np.mean((pred - test_std.y) ** 2))
        rel += np.array(mses) / mses[0]
    rel /= repeats
    print(f"\nactive fraction = {pi_active}")
    print(f"{'droprate':>9} {'rel. test mse':>14}")
    for rate, v in zip(rates, rel):
        print(f"{rate:>9.0%} {v:>14.3f}")
