"""Coordinate-descent training loop for the spike-and-slab network.

Each optimizer step draws pathwise noise, takes a gradient step on
(m, rho) for one minibatch with that batch's share of the penalty, then
refreshes every inclusion probability from its closed form.  The penalty
share is either uniform (1/M per batch) or the geometric schedule
r_i = 2^(M-i) / (2^M - 1).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datasets import Dataset
from .network import NetworkTopology, apply_head, forward
from .svi import (
    NoiseDraw,
    SpikeSlabPrior,
    VariationalParams,
    _grads_and_objective,
    optimal_p,
    sample_weights,
)

KL_SCHEDULES = ("uniform", "blundell")
OPTIMIZERS = ("sgd", "adam")


class NumericalAbort(RuntimeError):
    """Training hit a non-finite quantity; names the step and the culprit."""

    def __init__(self, step: int, quantity: str):
        self.step = step
        self.quantity = quantity
        super().__init__(
            f"non-finite {quantity} at optimizer step {step}; aborting"
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.01
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mc_samples: int = 1
    kl_schedule: str = "uniform"
    seed: int = 0
    init_m_std: float = 0.1
    init_rho: float = -3.0
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("epochs, batch_size, mc_samples must be positive")
        if self.learning_rate <= 0:
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.kl_schedule not in KL_SCHEDULES:
            raise ValueError(f"kl_schedule must be one of {KL_SCHEDULES}")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")


@dataclass
class TrainReport:
    """Loss trace and final state of one training run.

    All numeric state is bit-reproducible for a fixed seed; wall times are
    measured and therefore are not.
    """

    objective: np.ndarray
    train_loss: np.ndarray
    wall_ms: np.ndarray
    params: VariationalParams
    seed: int
    config: TrainConfig = None
    draw_count: int = 0


def minibatch_weights(n_batches: int, schedule: str) -> np.ndarray:
    """Per-batch share of the penalty; entries sum to 1.

    uniform: 1/M each.  blundell: geometric r_i = 2^(M-i) / (2^M - 1),
    computed as 2^-i / (1 - 2^-M) so large M cannot overflow.
    """
    if n_batches < 1:
        raise ValueError(f"n_batches must be >= 1, got {n_batches}")
    if schedule == "uniform":
        return np.full(n_batches, 1.0 / n_batches)
    if schedule == "blundell":
        i = np.arange(1, n_batches + 1, dtype=float)
        return 2.0**-i / (1.0 - 2.0 ** -float(n_batches))
    raise ValueError(f"kl_schedule must be one of {KL_SCHEDULES}")


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def update(self, theta, grad):
        return theta - self.lr * grad


class _Adam:
    def __init__(self, lr, beta1, beta2, eps, size):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m1 = np.zeros(size)
        self.m2 = np.zeros(size)
        self.t = 0

    def update(self, theta, grad):
        self.t += 1
        self.m1 = self.beta1 * self.m1 + (1.0 - self.beta1) * grad
        self.m2 = self.beta2 * self.m2 + (1.0 - self.beta2) * grad * grad
        mhat = self.m1 / (1.0 - self.beta1**self.t)
        vhat = self.m2 / (1.0 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def init_params(
    topology: NetworkTopology, prior: SpikeSlabPrior, config: TrainConfig,
    rng: np.random.Generator,
) -> VariationalParams:
    """Fresh variational state: small random means, constant rho, closed-form p."""
    m = rng.normal(0.0, config.init_m_std, topology.n_params)
    rho = np.full(topology.n_params, config.init_rho)
    vp = VariationalParams(m, rho, np.zeros(topology.n_params))
    vp.p = optimal_p(vp.m, vp.sigma, prior)
    return vp


def _train_loss(topology, vp, x, y, noise_variance):
    outputs, _ = forward(topology, sample_weights(vp, np.zeros(len(vp))), x)
    if topology.output_head == "identity":
        t = np.asarray(y, dtype=float)
        if t.ndim == 1 and outputs.shape[1] == 1:
            t = t[:, None]
        return float(np.mean((outputs - t) ** 2))
    return float(np.mean(outputs.argmax(axis=1) != np.asarray(y)))


def train(
    topology: NetworkTopology,
    prior: SpikeSlabPrior,
    dataset: Dataset,
    config: TrainConfig,
    init: Optional[VariationalParams] = None,
) -> TrainReport:
    """Run the full optimization loop and return the final state with traces.

    Per epoch the rows are reshuffled and partitioned into ceil(n / batch)
    minibatches; each step draws fresh noise, updates (m, rho), then resets
    p to its closed-form optimum.  A non-finite objective or gradient
    raises :class:`NumericalAbort` naming the offending quantity.
    """
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    if dataset.n_features != topology.n_inputs:
        raise ValueError(
            f"dataset has {dataset.n_features} features but the topology "
            f"expects {topology.n_inputs}"
        )
    x_all = dataset.X
    y_all = dataset.y
    master = np.random.default_rng(config.seed)
    vp = init.copy() if init is not None else init_params(
        topology, prior, config, master
    )
    size = len(vp)
    if config.optimizer == "adam":
        opt = _Adam(config.learning_rate, config.adam_beta1,
                    config.adam_beta2, config.adam_eps, 2 * size)
    else:
        opt = _Sgd(config.learning_rate)

    n_batches = -(-dataset.n // config.batch_size)
    kl_weights = minibatch_weights(n_batches, config.kl_schedule)
    objective = np.zeros(config.epochs)
    train_loss = np.zeros(config.epochs)
    wall_ms = np.zeros(config.epochs)
    active = vp.active_mask()

    draw_index = 0
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = master.permutation(dataset.n)
        epoch_obj = 0.0
        for b, idx in enumerate(np.array_split(perm, n_batches)):
            xb, yb = x_all[idx], y_all[idx]
            gm = np.zeros(size)
            gr = np.zeros(size)
            obj = 0.0
            for _ in range(config.mc_samples):
                eps = NoiseDraw.draw(size, config.seed, draw_index)
                draw_index += 1
                gm_l, gr_l, obj_l = _grads_and_objective(
                    topology, vp, prior, xb, yb, eps,
                    kl_weights[b], config.noise_variance,
                )
                gm += gm_l
                gr += gr_l
                obj += obj_l
            gm /= config.mc_samples
            gr /= config.mc_samples
            obj /= config.mc_samples
            if not np.isfinite(obj):
                raise NumericalAbort(step, "objective")
            if not np.all(np.isfinite(gm)):
                raise NumericalAbort(step, "grad_m")
            if not np.all(np.isfinite(gr)):
                raise NumericalAbort(step, "grad_rho")
            theta = opt.update(
                np.concatenate([vp.m, vp.rho]), np.concatenate([gm, gr])
            )
            vp.m = np.where(active, theta[:size], vp.m)
            vp.rho = np.where(active, theta[size:], vp.rho)
            vp.p = np.where(active, optimal_p(vp.m, vp.sigma, prior), vp.p)
            epoch_obj += obj
            step += 1
        objective[epoch] = epoch_obj
        train_loss[epoch] = _train_loss(
            topology, vp, x_all, y_all, config.noise_variance
        )
        wall_ms[epoch] = (time.perf_counter() - t0) * 1e3
    return TrainReport(
        objective=objective, train_loss=train_loss, wall_ms=wall_ms,
        params=vp, seed=config.seed, config=config, draw_count=draw_index,
    )


def predict(
    topology: NetworkTopology,
    vp: VariationalParams,
    x,
    mode: str = "mean",
    samples: int = 1,
    seed: int = 0,
    noise=None,
):
    """Network outputs at the posterior mean or averaged over weight samples.

    mode "mean" evaluates at W = m (pruned entries zero); mode "mc"
    averages the forward outputs of ``samples`` pathwise draws.
    """
    if mode == "mean":
        w = sample_weights(vp, np.zeros(len(vp)))
        out, _ = forward(topology, w, x)
        return out
    if mode == "mc":
        if samples < 1:
            raise ValueError(f"samples must be >= 1, got {samples}")
        draws = noise
        if draws is None:
            draws = [NoiseDraw.draw(len(vp), seed, s) for s in range(samples)]
        elif isinstance(draws, NoiseDraw):
            draws = [draws]
        acc = None
        for draw in draws:
            out, _ = forward(topology, sample_weights(vp, draw), x)
            acc = out if acc is None else acc + out
        return acc / len(draws)
    raise ValueError(f"mode must be 'mean' or 'mc', got {mode!r}")


def predict_proba(topology, vp, x, **kwargs):
    """Class probabilities for a softmax-head network."""
    return apply_head("softmax", predict(topology, vp, x, **kwargs))
