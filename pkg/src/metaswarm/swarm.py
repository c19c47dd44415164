"""Particle population state and the four per-particle input features.

Positions, objective values, gradients and momentum accumulators are tensors,
so a rollout built on a tape stays differentiable end to end; with no tape
they are plain constants and the same code runs as fast inference.  Objective
values and gradients enter the tape as external nodes whose adjoints use the
instance's analytic gradient and Hessian.

Feature columns for particle i at iteration t:
  gradient    grad f(x_i)
  momentum    m_t = beta * m_{t-1} + (1 - beta) * grad f(x_t), from t = 1
  velocity    x_i - best_x_i (sign kept as is; downstream layers may negate)
  attraction  weighted mean of (x_i - x_j) over particles j currently better
              than i, weights exp(-alpha * |x_i - x_j|^2) normalized to 1;
              the zero vector when no particle is better

Positions are never clipped to the search box; the box only scopes
initialization and entropy integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as td
from .errors import NumericError
from .objectives import FunctionInstance, SearchSpace, evaluate, hessian
from .seeding import SWARM_INIT, rng_for

FEATURE_NAMES = ("gradient", "momentum", "velocity", "attraction")


@dataclass
class ParticleState:
    x: td.Tensor               # (n, 1)
    fval: td.Tensor            # (1, 1)
    grad: td.Tensor            # (n, 1)
    momentum: td.Tensor        # (n, 1)
    best_x: td.Tensor          # (n, 1)
    best_f: float
    prev_step: np.ndarray      # (n, 1), bookkeeping only
    hidden: td.Tensor          # (n, H)
    cell: td.Tensor            # (n, H)


@dataclass
class SwarmState:
    particles: list[ParticleState]
    global_best_x: np.ndarray
    global_best_f: float
    t: int
    history: list[tuple[td.Tensor, td.Tensor]] = field(default_factory=list)
    best_curve: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.particles)


def _eval_node_pair(inst: FunctionInstance, x: td.Tensor) -> tuple[td.Tensor, td.Tensor]:
    """Objective value and gradient at x as tape nodes (constants off tape)."""
    v, g = evaluate(inst, x.data)
    fval = td.external_scalar(x, v, g.reshape(-1, 1))
    xdata = x.data.copy()
    gnode = td.external_vector(x, g.reshape(-1, 1), lambda: hessian(inst, xdata))
    return fval, gnode


def init_swarm(inst: FunctionInstance, space: SearchSpace, k: int, seed: int,
               hidden_size: int, beta: float) -> SwarmState:
    """Uniform positions in the box, evaluated, with zero recurrent state.

    Initial positions are constants; gradients start flowing from the first
    parameterized step.
    """
    rng = rng_for(seed, SWARM_INIT)
    xs = space.uniform(rng, k)
    particles: list[ParticleState] = []
    history = []
    curve: list[float] = []
    best_f = np.inf
    best_x = xs[0].reshape(-1, 1).copy()
    for i in range(k):
        x = td.Tensor(xs[i].reshape(-1, 1))
        fval, gnode = _eval_node_pair(inst, x)
        p = ParticleState(
            x=x, fval=fval, grad=gnode, momentum=(1.0 - beta) * gnode,
            best_x=x, best_f=fval.item(), prev_step=np.zeros((space.n, 1)),
            hidden=td.Tensor(np.zeros((space.n, hidden_size))),
            cell=td.Tensor(np.zeros((space.n, hidden_size))),
        )
        particles.append(p)
        history.append((x, fval))
        if p.best_f < best_f:
            best_f = p.best_f
            best_x = x.data.copy()
        curve.append(best_f)
    return SwarmState(particles, best_x, best_f, 1, history, curve)


def apply_steps(swarm: SwarmState, steps: list[td.Tensor], inst: FunctionInstance,
                beta: float) -> SwarmState:
    """Move every particle, evaluate, and refresh bests, momentum and history."""
    if len(steps) != swarm.k:
        raise ValueError(f"got {len(steps)} steps for {swarm.k} particles")
    for i, (p, step) in enumerate(zip(swarm.particles, steps)):
        if not np.all(np.isfinite(step.data)):
            raise NumericError(f"non-finite step for particle {i} at iteration {swarm.t}")
        p.x = p.x + step
        p.fval, p.grad = _eval_node_pair(inst, p.x)
        if not np.isfinite(p.fval.item()):
            raise NumericError(f"non-finite objective for particle {i} at iteration {swarm.t}")
        p.momentum = beta * p.momentum + (1.0 - beta) * p.grad
        p.prev_step = step.data.copy()
        if p.fval.item() < p.best_f:
            p.best_f = p.fval.item()
            p.best_x = p.x
        swarm.history.append((p.x, p.fval))
    for p in swarm.particles:
        if p.best_f < swarm.global_best_f:
            swarm.global_best_f = p.best_f
            swarm.global_best_x = p.best_x.data.copy()
    running = swarm.best_curve[-1] if swarm.best_curve else np.inf
    for p in swarm.particles:
        running = min(running, p.fval.item())
        swarm.best_curve.append(running)
    swarm.t += 1
    return swarm


def compute_features(swarm: SwarmState, inst: FunctionInstance, i: int,
                     beta: float, alpha_attr: float) -> list[td.Tensor]:
    """Feature columns for particle i; pure, reads only cached state."""
    p = swarm.particles[i]
    if p.fval is None or p.grad is None:
        raise NumericError(f"particle {i} has no cached evaluation at iteration {swarm.t}")
    velocity = p.x - p.best_x
    better = [q for q in swarm.particles if q.fval.item() < p.fval.item()]
    if better:
        d2s = [td.sqnorm(p.x - q.x) for q in better]
        # shift by the smallest distance: normalized weights are unchanged and
        # the denominator cannot underflow to zero
        shift = min(d.item() for d in d2s)
        num = None
        den = None
        for q, d2 in zip(better, d2s):
            w = td.exp(alpha_attr * (shift - d2))
            term = w * (p.x - q.x)
            num = term if num is None else num + term
            den = w if den is None else den + w
        attraction = num / den
    else:
        attraction = td.Tensor(np.zeros_like(p.x.data))
    return [p.grad, p.momentum, velocity, attraction]


def detach_swarm(swarm: SwarmState) -> None:
    """Replace every live tensor with a constant; cuts gradient flow at a
    truncation boundary while values and statistics carry over."""
    for p in swarm.particles:
        p.x = p.x.detach()
        p.fval = p.fval.detach()
        p.grad = p.grad.detach()
        p.momentum = p.momentum.detach()
        p.best_x = p.best_x.detach()
        p.hidden = p.hidden.detach()
        p.cell = p.cell.detach()
    swarm.history = [(x.detach(), f.detach()) for x, f in swarm.history]
