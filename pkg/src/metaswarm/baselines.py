"""Classical reference optimizers and the ablation ladder.

Every runner reports the same evaluation accounting: a run with budget B
returns a best-so-far curve with exactly B entries, one per objective
evaluation, in evaluation order.  Population methods spend k evaluations
per iteration (plus k at initialization) and require k to divide the
budget.  A diverged point-based run (non-finite or astronomically large
value) keeps its last best for the remaining budget and is flagged.

Ablation levels:
  B0        single particle, gradient feature only, no attention
  B1        the B0 model restarted k times, interleaved, best of all
  B2        k independent particles, gradient+momentum features, intra-attention
  B3        B2 plus velocity/attraction features and inter-attention
  proposed  B3's architecture trained with the entropy term (lambda > 0)

SGD equals GD here because the objectives are deterministic; it is kept as a
separate entry for menu parity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import MetaParams, ModelConfig, rollout
from .objectives import FunctionInstance, SearchSpace, default_space, evaluate, evaluate_batch
from .seeding import PSO_COEFF, RESTART, SWARM_INIT, rng_for

DIVERGENCE_LIMIT = 1e150

ABLATION_LEVELS = ("B0", "B1", "B2", "B3", "proposed")

_LEVEL_ARCH = {
    "B0": {"features": "gradient", "intra": False, "inter": False},
    "B1": {"features": "gradient", "intra": False, "inter": False},
    "B2": {"features": "point", "intra": True, "inter": False},
    "B3": {"features": "full", "intra": True, "inter": True},
    "proposed": {"features": "full", "intra": True, "inter": True},
}

_LEVEL_LAMBDA = {"B0": 0.0, "B1": 0.0, "B2": 0.0, "B3": 0.0, "proposed": 1.0}


@dataclass
class BaselineResult:
    curve: np.ndarray
    diverged: bool = False
    # (budget, n) sample positions in evaluation order; a frozen diverged
    # tail repeats the last evaluated point.  None for interleaved restarts.
    positions: np.ndarray | None = None


def _check_budget(budget: int, k: int = 1) -> None:
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    if budget % k != 0:
        raise ConfigError(f"budget {budget} is not divisible by the population size {k}")


def _gradient_method(inst: FunctionInstance, x0, budget: int, step_fn) -> BaselineResult:
    """Shared frame: evaluate, take a step from the gradient, repeat."""
    _check_budget(budget)
    x = np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    curve = np.empty(budget)
    pos = np.empty((budget, x.size))
    f, g = evaluate(inst, x)
    best = f
    curve[0] = best
    pos[0] = x
    diverged = False
    for i in range(1, budget):
        x = step_fn(x, g, i)
        f, g = evaluate(inst, x)
        pos[i] = x
        if not np.isfinite(f) or abs(f) > DIVERGENCE_LIMIT or not np.all(np.isfinite(g)):
            diverged = True
            curve[i:] = best
            pos[i + 1:] = x
            break
        best = min(best, f)
        curve[i] = best
    return BaselineResult(curve, diverged, pos)


def run_gd(inst: FunctionInstance, x0, lr: float, budget: int) -> BaselineResult:
    return _gradient_method(inst, x0, budget, lambda x, g, i: x - lr * g)


def run_sgd(inst: FunctionInstance, x0, lr: float, budget: int) -> BaselineResult:
    return run_gd(inst, x0, lr, budget)


def run_adam(inst: FunctionInstance, x0, lr: float, budget: int,
             beta1: float = 0.9, beta2: float = 0.999, eps_hat: float = 1e-8) -> BaselineResult:
    n = np.asarray(x0).size
    m = np.zeros(n)
    v = np.zeros(n)

    def step(x, g, i):
        nonlocal m, v
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** i)
        vhat = v / (1.0 - beta2 ** i)
        return x - lr * mhat / (np.sqrt(vhat) + eps_hat)

    return _gradient_method(inst, x0, budget, step)


def run_pso(inst: FunctionInstance, k: int, budget: int, seed: int,
            w_range: tuple[float, float] = (0.4, 0.9),
            r_range: tuple[float, float] = (0.0, 2.0),
            space: SearchSpace | None = None,
            x0: np.ndarray | None = None) -> BaselineResult:
    """Velocity-form PSO with per-iteration random coefficients.

    One scalar w and two scalar attraction gains are redrawn each iteration;
    velocities start at zero and attraction points toward the bests.
    """
    if k < 2:
        raise ConfigError(f"PSO needs k >= 2, got {k}")
    _check_budget(budget, k)
    space = space if space is not None else default_space(inst.n)
    if x0 is None:
        X = space.uniform(rng_for(seed, SWARM_INIT), k)
    else:
        X = np.asarray(x0, dtype=np.float64).copy()
        if X.shape != (k, inst.n):
            raise ConfigError(f"PSO x0 has shape {X.shape}, expected {(k, inst.n)}")
    coeff_rng = rng_for(seed, PSO_COEFF)
    V = np.zeros_like(X)
    vals = evaluate_batch(inst, X)
    pbest_x = X.copy()
    pbest_f = vals.copy()
    curve = np.empty(budget)
    samples = np.empty((budget, inst.n))
    best = np.inf
    for j in range(k):
        best = min(best, vals[j])
        curve[j] = best
    samples[:k] = X
    pos = k
    while pos < budget:
        w = coeff_rng.uniform(*w_range)
        r1 = coeff_rng.uniform(*r_range)
        r2 = coeff_rng.uniform(*r_range)
        gbest = pbest_x[np.argmin(pbest_f)]
        V = w * V + r1 * (pbest_x - X) + r2 * (gbest - X)
        X = X + V
        vals = evaluate_batch(inst, X)
        improved = vals < pbest_f
        pbest_x[improved] = X[improved]
        pbest_f[improved] = vals[improved]
        for j in range(k):
            best = min(best, vals[j])
            curve[pos + j] = best
        samples[pos:pos + k] = X
        pos += k
    return BaselineResult(curve, False, samples)


def restart_seed(seed: int, j: int) -> int:
    return int(rng_for(seed, RESTART, j).integers(2 ** 63))


def run_lstm_restarts(inst: FunctionInstance, params: MetaParams, restarts: int,
                      budget: int, seed: int,
                      space: SearchSpace | None = None) -> BaselineResult:
    """Independent single-particle runs of a trained model, interleaved.

    Restart j draws its own sub-seed; the curve takes one evaluation from
    each live restart per iteration, so a single restart reproduces the
    model's own best-so-far curve bitwise.
    """
    if restarts < 1:
        raise ConfigError(f"need at least one restart, got {restarts}")
    _check_budget(budget, restarts)
    T = budget // restarts - 1
    if T < 1:
        raise ConfigError(f"budget {budget} leaves no iterations for {restarts} restarts")
    curves = []
    for j in range(restarts):
        rec = rollout(inst, params, k=1, T=T, seed=restart_seed(seed, j), space=space)
        curves.append(np.array([f.item() for f in rec.f_nodes]))
    stacked = np.stack(curves)          # (restarts, T+1) in evaluation order
    interleaved = stacked.T.reshape(-1)  # r0 t0, r1 t0, ..., r0 t1, ...
    return BaselineResult(np.minimum.accumulate(interleaved), False)


def ablation_model_config(level: str, n: int, hidden: int = 20, **overrides) -> ModelConfig:
    if level not in ABLATION_LEVELS:
        raise ConfigError(f"unknown ablation level '{level}', expected one of {ABLATION_LEVELS}")
    arch = dict(_LEVEL_ARCH[level])
    arch.update(overrides)
    return ModelConfig(n=n, hidden=hidden, **arch)


def ablation_lambda(level: str) -> float:
    if level not in ABLATION_LEVELS:
        raise ConfigError(f"unknown ablation level '{level}', expected one of {ABLATION_LEVELS}")
    return _LEVEL_LAMBDA[level]


def check_level_params(level: str, params: MetaParams) -> None:
    """Reject a checkpoint whose architecture flags do not match the level."""
    arch = _LEVEL_ARCH.get(level)
    if arch is None:
        raise ConfigError(f"unknown ablation level '{level}', expected one of {ABLATION_LEVELS}")
    cfg = params.cfg
    got = {"features": cfg.features, "intra": cfg.intra, "inter": cfg.inter}
    if got != arch:
        raise ConfigError(f"checkpoint flags {got} do not match level {level} ({arch})")


def run_ablation(level: str, params: MetaParams, inst: FunctionInstance, k: int,
                 budget: int, seed: int,
                 space: SearchSpace | None = None) -> BaselineResult:
    """One evaluation run of an ablation level under shared budget accounting."""
    check_level_params(level, params)
    if level == "B0":
        return run_lstm_restarts(inst, params, 1, budget, seed, space)
    if level == "B1":
        return run_lstm_restarts(inst, params, k, budget, seed, space)
    _check_budget(budget, k)
    T = budget // k - 1
    if T < 1:
        raise ConfigError(f"budget {budget} leaves no iterations for k={k}")
    rec = rollout(inst, params, k=k, T=T, seed=seed, space=space)
    return BaselineResult(rec.best_curve.copy(), False)
