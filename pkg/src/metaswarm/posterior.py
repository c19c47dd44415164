"""Boltzmann posterior over the global optimum and the trajectory meta-loss.

The posterior is p(x*) ~ exp(-rho * fhat(x)) over the search box, where fhat
is a Kriging (BLUE) fit of all samples a swarm has collected and rho follows
an annealing schedule that sharpens with the sample count.  Its differential
entropy, estimated by seeded Monte Carlo, is the exploration term of the
meta-loss.

Everything exists twice: a plain-array version for diagnostics and oracles,
and a tape version whose gradients flow back into the trajectory samples.
The two agree to rounding on identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import tape as td
from .errors import ConfigError, NumericError
from .objectives import SearchSpace
from .seeding import ENTROPY_MC, THIN, rng_for

DEFAULT_EPS = 2.1
DEFAULT_RHO0 = 1.0
DATA_CAP = 512


@dataclass(frozen=True)
class PosteriorSettings:
    """Knobs shared by every posterior fit inside one training run."""

    length_scale: float = 1.0
    eps: float = DEFAULT_EPS
    rho0: float = DEFAULT_RHO0
    h0: float | None = None
    mc_samples: int = 1024
    data_cap: int = DATA_CAP
    seed: int = 0

    def __post_init__(self):
        if self.length_scale <= 0:
            raise ConfigError(f"kernel length scale must be positive, got {self.length_scale}")
        if self.eps < 0:
            raise ConfigError(f"kriging noise must be >= 0, got {self.eps}")
        if self.rho0 <= 0:
            raise ConfigError(f"rho0 must be positive, got {self.rho0}")
        if self.mc_samples < 100:
            raise ConfigError(f"need at least 100 Monte Carlo samples, got {self.mc_samples}")
        if self.data_cap < 2:
            raise ConfigError(f"data cap must be >= 2, got {self.data_cap}")


@dataclass
class KrigingModel:
    X: np.ndarray
    y: np.ndarray
    length_scale: float
    eps: float
    factor: tuple
    weights: np.ndarray


def _kernel(sqdist: np.ndarray, length_scale: float) -> np.ndarray:
    return np.exp(-sqdist / (2.0 * length_scale))


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    sa = np.sum(A * A, axis=1, keepdims=True)
    sb = np.sum(B * B, axis=1, keepdims=True)
    return np.maximum(sa + sb.T - 2.0 * (A @ B.T), 0.0)


def kriging_fit(X, y, length_scale: float = 1.0, eps: float = DEFAULT_EPS) -> KrigingModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] < 1:
        raise ConfigError("kriging fit needs at least one data point")
    if X.shape[0] != y.size:
        raise ConfigError(f"kriging fit got {X.shape[0]} points but {y.size} values")
    if eps < 0:
        raise ConfigError(f"kriging noise must be >= 0, got {eps}")
    D = _sqdist(X, X)
    if eps == 0.0 and X.shape[0] > 1:
        off = D + np.diag(np.full(X.shape[0], np.inf))
        if off.min() == 0.0:
            raise NumericError("duplicate data points make the eps=0 kriging system singular")
    K = _kernel(D, length_scale) + (eps * eps) * np.eye(X.shape[0])
    try:
        factor = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"kriging system is singular (duplicate or near-duplicate points): {err}") from err
    weights = cho_solve(factor, y)
    return KrigingModel(X, y, length_scale, eps, factor, weights)


def kriging_predict(model: KrigingModel, pts):
    """Posterior mean at pts; scalar for a single 1-D point, else one value per row."""
    P = np.asarray(pts, dtype=np.float64)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    vals = _kernel(_sqdist(P, model.X), model.length_scale) @ model.weights
    return float(vals[0]) if single else vals


def anneal_rho(rho0: float, h0: float, sample_count: int, n: int) -> float:
    """rho = rho0 * exp(|D|^(1/n) / h0); an empty history keeps rho at rho0."""
    if sample_count < 0:
        raise ConfigError(f"sample count must be >= 0, got {sample_count}")
    if sample_count == 0:
        return float(rho0)
    if h0 <= 0:
        raise NumericError(f"degenerate initial posterior: h0 must be positive, got {h0}")
    return float(rho0 * np.exp(float(sample_count) ** (1.0 / n) / h0))


def _entropy_from_values(fhat: np.ndarray, volume: float, rho: float) -> float:
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    shift = float(fhat.min())
    w = np.exp(-rho * (fhat - shift))
    if np.count_nonzero(w) < 2:
        raise NumericError("rho too large: posterior weights collapse to a point mass")
    return float(np.log(volume * w.mean()) - rho * shift + rho * (w @ fhat) / w.sum())


def posterior_entropy(model: KrigingModel, space: SearchSpace, rho: float,
                      mc_samples: int, seed: int) -> float:
    """Differential entropy of exp(-rho*fhat)/Z by seeded uniform Monte Carlo."""
    if mc_samples < 100:
        raise ConfigError(f"need at least 100 Monte Carlo samples, got {mc_samples}")
    draws = space.uniform(rng_for(seed, ENTROPY_MC), mc_samples)
    return _entropy_from_values(kriging_predict(model, draws), space.volume, rho)


def thin_indices(total: int, cap: int, seed: int, *tags: int) -> np.ndarray:
    """Ascending keeper indices; a seeded uniform subset when total exceeds cap."""
    if total <= cap:
        return np.arange(total)
    rng = rng_for(seed, THIN, *tags)
    return np.sort(rng.choice(total, size=cap, replace=False))


def compute_h0(xs: np.ndarray, ys: np.ndarray, space: SearchSpace,
               settings: PosteriorSettings) -> float:
    """Entropy of the rho0-posterior on one fitted history; frozen for annealing."""
    idx = thin_indices(len(ys), settings.data_cap, settings.seed)
    model = kriging_fit(np.asarray(xs)[idx], np.asarray(ys)[idx],
                        settings.length_scale, settings.eps)
    return posterior_entropy(model, space, settings.rho0, settings.mc_samples, settings.seed)


def entropy_on_tape(x_nodes, f_nodes, space: SearchSpace, rho: float,
                    settings: PosteriorSettings, tag: int | None = None) -> td.Tensor:
    """Monte Carlo posterior entropy as a (1, 1) tape scalar.

    Gradients flow through the kriging fit (positions and values of the
    trajectory samples); the uniform draws and the min-value shift are
    constants, which leaves the estimate mathematically unchanged.  With
    tag=None the draws and thinning match the plain-array version bitwise.
    """
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    if len(x_nodes) != len(f_nodes) or not x_nodes:
        raise ConfigError("entropy needs matching, non-empty sample and value lists")
    extra = () if tag is None else (int(tag),)
    idx = thin_indices(len(x_nodes), settings.data_cap, settings.seed, *extra)
    X = td.vstack([td.transpose(x_nodes[i]) for i in idx])
    y = td.vstack([f_nodes[i] for i in idx])
    m = len(idx)
    scale = -0.5 / settings.length_scale
    K = td.exp(td.pairwise_sqdist(X) * scale) + (settings.eps ** 2) * np.eye(m)
    w = td.solve_psd(K, y)
    draws = space.uniform(rng_for(settings.seed, ENTROPY_MC, *extra), settings.mc_samples)
    fhat = td.matmul(td.transpose(td.exp(td.cross_sqdist(X, draws) * scale)), w)
    shift = float(fhat.data.min())
    boltz = td.exp((fhat - shift) * (-rho))
    if np.count_nonzero(boltz.data) < 2:
        raise NumericError("rho too large: posterior weights collapse to a point mass")
    log_z = td.log(td.sum_all(boltz) * (space.volume / settings.mc_samples)) - rho * shift
    return log_z + rho * (td.sum_all(boltz * fhat) / td.sum_all(boltz))


def meta_loss(records, params_tensors, lam: float, C: float, space: SearchSpace,
              settings: PosteriorSettings):
    """Mean per-function (regret + lambda * entropy) plus C * ||params||^2.

    Returns the (1, 1) loss tensor and a dict of plain-float components
    (per-record regrets and entropies, their means, the penalty).
    """
    if not records:
        raise ConfigError("meta-loss needs at least one trajectory")
    if lam < 0 or C < 0:
        raise ConfigError(f"lambda and C must be >= 0, got lambda={lam}, C={C}")
    if lam > 0 and settings.h0 is None:
        raise ConfigError("entropy-weighted loss needs h0 (freeze it from the first batch)")
    total = None
    regrets, entropies = [], []
    for ridx, rec in enumerate(records):
        regret = rec.f_nodes[0]
        for f in rec.f_nodes[1:]:
            regret = regret + f
        regrets.append(regret.item())
        loss_f = regret
        if lam > 0:
            rho = anneal_rho(settings.rho0, settings.h0, len(rec.f_nodes), space.n)
            ent = entropy_on_tape(rec.x_nodes, rec.f_nodes, space, rho, settings, tag=ridx)
            entropies.append(ent.item())
            loss_f = regret + lam * ent
        total = loss_f if total is None else total + loss_f
    loss = total * (1.0 / len(records))
    penalty = 0.0
    if C > 0:
        pen = None
        for name in sorted(params_tensors):
            term = td.sqnorm(params_tensors[name])
            pen = term if pen is None else pen + term
        pen = C * pen
        penalty = pen.item()
        loss = loss + pen
    parts = {
        "regrets": regrets,
        "entropies": entropies,
        "mean_regret": float(np.mean(regrets)),
        "mean_entropy": float(np.mean(entropies)) if entropies else float("nan"),
        "penalty": penalty,
        "loss": loss.item(),
    }
    return loss, parts
