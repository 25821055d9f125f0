"""Feature scores vs ground-truth relevance on a two-feature linear mix.

Sweeps the mixing weight of y = (1-a) x1 + a x2 + eps from 0 to 1,
trains a small spike-and-slab network at each point, and tabulates the
path-product importances next to the scale-free relevance measure
I = 1 - ||y - a x2||^2 / ||y||^2.  The two columns should move in
opposite directions as the mix shifts from x1 to x2.
"""

import numpy as np

import sparsebnn as sb

topology = sb.NetworkTopology((2, 20, 10, 1))
prior = sb.SpikeSlabPrior(pi=0.5, tau1=1.0, tau0=0.1)

print(f"{'a':>5} {'I':>7} {'psi_1':>8} {'psi_2':>8}")
rows = []
for a in np.round(np.arange(0.0, 1.0001, 0.1), 2):
    ds = sb.gen_two_feature(float(a), 2000, seed=100)
    ds_std, _, _ = sb.standardize_fit_apply(ds)
    psis = [
        sb.feature_importance_psi(
            topology,
            sb.train(topology, prior, ds_std,
                     sb.TrainConfig(epochs=400, batch_size=500,
                                    learning_rate=0.005, seed=s)).params,
        )
        for s in range(2)
    ]
    psi = np.mean(psis, axis=0)
    I = sb.relevance_I(ds.y, float(a) * ds.X[:, 1])
    rows.append((I, psi[0], psi[1]))
    print(f"{a:>5.2f} {I:>7.3f} {psi[0]:>8.4f} {psi[1]:>8.4f}")

I_vals, psi1, psi2 = map(np.array, zip(*rows))
print(f"\ncorr(I, psi_2) = {np.corrcoef(I_vals, psi2)[0, 1]:+.3f}")
print(f"corr(I, psi_1) = {np.corrcoef(I_vals, psi1)[0, 1]:+.3f}")
