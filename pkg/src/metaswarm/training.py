"""Meta-training loop: fresh objective batches, truncated unrolls, Adam.

Every epoch samples m fresh function instances (seeded statelessly from the
epoch index, so a resumed run retraces an uninterrupted one bitwise), rolls
each out for T iterations in windows of at most `window` steps, and sums the
per-window gradients.  Within a window the loss is that window's regret plus
lambda times the posterior entropy fitted on the full history so far, with
samples from earlier windows entering as constants; recurrent state and
particle statistics carry across the boundary while gradient flow stops.
With T <= window this is exactly the single-tape full-unroll loss.

The annealed rho is fixed per function pass at the full final sample count,
and h0 is frozen once, from the posterior of the first training function at
rho0, then stored in the checkpoint.  The L2 penalty C * |phi|^2 enters the
update analytically (2 * C * phi) after batch averaging.

Training log: append-only CSV `epoch, mean_regret, mean_entropy, loss,
grad_norm, wall_ms`; mean_entropy is the final-window (full-history) value,
loss combines mean regret, lambda * mean_entropy and the L2 penalty, and
grad_norm is the pre-clip global norm.  All columns except wall_ms are
deterministic for a fixed config and seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tape as td
from .errors import ConfigError
from .model import (
    MetaParams,
    ModelConfig,
    TrajectoryRecord,
    init_params,
    load_checkpoint,
    param_names,
    param_shape,
    params_to_tensors,
    run_iterations,
    save_checkpoint,
)
from .objectives import default_space, family_instance, sample_instance
from .posterior import PosteriorSettings, anneal_rho, entropy_on_tape, thin_indices, kriging_fit, posterior_entropy
from .seeding import TRAIN_FN, rng_for
from .swarm import detach_swarm, init_swarm

LOG_HEADER = "epoch,mean_regret,mean_entropy,loss,grad_norm,wall_ms"

CHECKPOINT_NAME = "checkpoint.ckpt"
LOG_NAME = "training_log.csv"


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, params: MetaParams) -> "AdamState":
        return cls(m={k: np.zeros_like(a) for k, a in params.arrays.items()},
                   v={k: np.zeros_like(a) for k, a in params.arrays.items()})


def adam_update(params: MetaParams, grads: dict[str, np.ndarray], state: AdamState,
                lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                eps_hat: float = 1e-8) -> bool:
    """One in-place Adam step; returns False (and skips) on non-finite gradients."""
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        params.arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps_hat)
    return True


@dataclass(frozen=True)
class TrainConfig:
    cfg: ModelConfig
    family: str = "quadratic"
    alpha: float | None = None
    epochs: int = 300
    batch: int = 8
    k: int = 4
    T: int = 40
    lam: float = 0.0
    C: float = 1e-4
    lr: float = 1e-3
    window: int = 20
    clip: float = 5.0
    seed: int = 0
    posterior: PosteriorSettings = field(default_factory=PosteriorSettings)

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.k < 1 or self.T < 1:
            raise ConfigError(
                f"need epochs >= 0, batch >= 1, k >= 1, T >= 1; got epochs={self.epochs}, "
                f"batch={self.batch}, k={self.k}, T={self.T}")
        if self.window < 1:
            raise ConfigError(f"truncation window must be >= 1, got {self.window}")
        if self.lam < 0 or self.C < 0 or self.lr <= 0 or self.clip <= 0:
            raise ConfigError(
                f"need lam >= 0, C >= 0, lr > 0, clip > 0; got lam={self.lam}, C={self.C}, "
                f"lr={self.lr}, clip={self.clip}")


def _fn_seeds(base_seed: int, epoch: int, i: int) -> tuple[int, int]:
    """Stateless (instance, swarm) seeds for function i of an epoch."""
    master = rng_for(base_seed, TRAIN_FN, epoch, i)
    return int(master.integers(2 ** 63)), int(master.integers(2 ** 63))


def _training_instance(tc: TrainConfig, space, fn_seed: int):
    # An explicit alpha pins the ripple weight while keeping the instance
    # draw order identical across alpha values, for controlled sweeps.
    if tc.alpha is not None:
        return family_instance(space, tc.alpha, fn_seed)
    return sample_instance(tc.family, space, fn_seed)


def _zero_grads(params: MetaParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(a) for k, a in params.arrays.items()}


def function_pass(tc: TrainConfig, params: MetaParams, epoch: int, i: int,
                  post: PosteriorSettings) -> tuple[dict[str, np.ndarray], float, float]:
    """Gradients, regret and last-window entropy for one training function."""
    cfg = params.cfg
    space = default_space(cfg.n)
    fn_seed, swarm_seed = _fn_seeds(tc.seed, epoch, i)
    inst = _training_instance(tc, space, fn_seed)
    swarm = init_swarm(inst, space, tc.k, swarm_seed, cfg.hidden, cfg.beta)
    rho = None
    if tc.lam > 0:
        rho = anneal_rho(post.rho0, post.h0, tc.k * (tc.T + 1), cfg.n)
    tag = epoch * tc.batch + i
    grads = _zero_grads(params)
    init_regret = sum(f.item() for _, f in swarm.history)
    regret = init_regret
    entropy = float("nan")
    remaining = tc.T
    first = True
    while remaining > 0:
        w = min(tc.window, remaining)
        remaining -= w
        tape = td.Tape()
        pt = params_to_tensors(tape, params)
        rec = TrajectoryRecord(swarm=swarm)
        run_iterations(swarm, inst, pt, cfg, w, rec)
        loss_w = rec.f_nodes[0]
        for f in rec.f_nodes[1:]:
            loss_w = loss_w + f
        regret += sum(f.item() for f in rec.f_nodes)
        if first:
            loss_w = loss_w + init_regret
            first = False
        if tc.lam > 0:
            all_x = [x for x, _ in swarm.history]
            all_f = [f for _, f in swarm.history]
            ent_w = entropy_on_tape(all_x, all_f, space, rho, post, tag=tag)
            entropy = ent_w.item()
            loss_w = loss_w + tc.lam * ent_w
        window_grads = tape.backward(loss_w)
        for name, t in pt.items():
            grads[name] += window_grads[t.nid]
        detach_swarm(swarm)
    return grads, regret, entropy


def epoch_gradients(tc: TrainConfig, params: MetaParams, epoch: int,
                    post: PosteriorSettings, order=None):
    """Batch-summed gradients with a canonical (order-independent) reduction.

    `order` only sets the evaluation sequence; the sum always runs in
    ascending function index, so any two orders give bitwise-equal totals.
    """
    order = list(range(tc.batch)) if order is None else list(order)
    per_fn, regrets, entropies = {}, {}, {}
    for i in order:
        per_fn[i], regrets[i], entropies[i] = function_pass(tc, params, epoch, i, post)
    total = _zero_grads(params)
    for i in sorted(per_fn):
        for name in total:
            total[name] += per_fn[i][name]
    idx = sorted(per_fn)
    return total, [regrets[i] for i in idx], [entropies[i] for i in idx]


def _freeze_h0(tc: TrainConfig, params: MetaParams, post: PosteriorSettings) -> float:
    """Entropy of the rho0-posterior on the first training function's rollout."""
    cfg = params.cfg
    space = default_space(cfg.n)
    fn_seed, swarm_seed = _fn_seeds(tc.seed, 0, 0)
    inst = _training_instance(tc, space, fn_seed)
    swarm = init_swarm(inst, space, tc.k, swarm_seed, cfg.hidden, cfg.beta)
    pt = params_to_tensors(None, params)
    rec = TrajectoryRecord(swarm=swarm)
    run_iterations(swarm, inst, pt, cfg, tc.T, rec)
    xs = np.vstack([x.data.reshape(1, -1) for x, _ in swarm.history])
    ys = np.array([f.item() for _, f in swarm.history])
    idx = thin_indices(len(ys), post.data_cap, post.seed)
    model = kriging_fit(xs[idx], ys[idx], post.length_scale, post.eps)
    return posterior_entropy(model, space, post.rho0, post.mc_samples, post.seed)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _grad_global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def train(tc: TrainConfig, out_dir, on_epoch=None) -> tuple[MetaParams, list[str]]:
    """Run (or resume) training; writes checkpoint and log under out_dir.

    Returns the final parameters and the log rows written by this call.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / CHECKPOINT_NAME
    log_path = out / LOG_NAME

    params = init_params(tc.cfg, tc.seed)
    adam = AdamState.zeros(params)
    start_epoch = 0
    h0 = None
    if ckpt_path.exists():
        params, scalars, extra = load_checkpoint(ckpt_path)
        if params.cfg != tc.cfg:
            raise ConfigError(f"{ckpt_path}: checkpoint architecture {params.cfg} "
                              f"does not match the requested {tc.cfg}")
        start_epoch = int(scalars["epoch"])
        h0 = scalars.get("h0")
        adam = AdamState(
            m={k: extra[f"adam_m_{k}"] for k in params.arrays},
            v={k: extra[f"adam_v_{k}"] for k in params.arrays},
            t=int(scalars.get("adam_t", 0)), skipped=int(scalars.get("adam_skipped", 0)))

    if tc.lam > 0 and h0 is None and tc.epochs > start_epoch:
        h0 = _freeze_h0(tc, params, tc.posterior)
    post = replace(tc.posterior, h0=h0, seed=tc.seed)

    new_rows: list[str] = []
    if not log_path.exists():
        log_path.write_text(LOG_HEADER + "\n")
    for epoch in range(start_epoch, tc.epochs):
        t0 = time.perf_counter()
        total, regrets, entropies = epoch_gradients(tc, params, epoch, post)
        scale = 1.0 / tc.batch
        for name in total:
            total[name] *= scale
            if tc.C > 0:
                total[name] += 2.0 * tc.C * params.arrays[name]
        mean_regret = float(np.mean(regrets))
        mean_entropy = float(np.mean(entropies)) if tc.lam > 0 else float("nan")
        loss = mean_regret + (tc.lam * mean_entropy if tc.lam > 0 else 0.0) \
            + tc.C * params.flat_norm_sq()
        grad_norm = _grad_global_norm(total)
        if grad_norm > tc.clip:
            shrink = tc.clip / grad_norm
            for name in total:
                total[name] *= shrink
        adam_update(params, total, adam, lr=tc.lr)
        wall_ms = int(round((time.perf_counter() - t0) * 1000.0))
        row = ",".join([str(epoch + 1), _fmt(mean_regret), _fmt(mean_entropy),
                        _fmt(loss), _fmt(grad_norm), str(wall_ms)])
        new_rows.append(row)
        with open(log_path, "a") as fh:
            fh.write(row + "\n")
        _save_state(ckpt_path, params, adam, epoch + 1, h0)
        if on_epoch is not None:
            on_epoch(epoch + 1, row)
    if not ckpt_path.exists():
        _save_state(ckpt_path, params, adam, start_epoch, h0)
    return params, new_rows


def _save_state(path, params: MetaParams, adam: AdamState, epoch: int, h0) -> None:
    scalars = {"epoch": int(epoch), "adam_t": int(adam.t), "adam_skipped": int(adam.skipped)}
    if h0 is not None:
        scalars["h0"] = float(h0)
    extra = {}
    for k in params.arrays:
        extra[f"adam_m_{k}"] = adam.m[k]
        extra[f"adam_v_{k}"] = adam.v[k]
    save_checkpoint(path, params, scalars, extra)
