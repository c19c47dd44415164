"""Objective families: random quadratics and a Rastrigin-like family around them.

A function instance is f(x) = ||Ax - b||^2 - alpha * sum_i c_i cos(2 pi x_i) + alpha n,
which reduces to the plain quadratic at alpha = 0.  Instances carry analytic
gradient and Hessian so trajectories can be differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .seeding import rng_for

QUADRATIC = "quadratic"
RASTRIGIN_FAMILY = "rastrigin-family"
FAMILIES = (QUADRATIC, RASTRIGIN_FAMILY)

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box [lo, hi]^n."""

    n: int
    lo: float = -5.12
    hi: float = 5.12

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"search space dimension must be >= 1, got {self.n}")
        if not self.lo < self.hi:
            raise ConfigError(f"search space needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def volume(self) -> float:
        return (self.hi - self.lo) ** self.n

    def uniform(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """count points drawn uniformly in the box, shape (count, n)."""
        return rng.uniform(self.lo, self.hi, size=(count, self.n))


@dataclass(frozen=True)
class FunctionInstance:
    family: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    alpha: float

    @property
    def n(self) -> int:
        return self.A.shape[0]


def sample_instance(family: str, space: SearchSpace, seed: int) -> FunctionInstance:
    """Instance with i.i.d. standard normal A, b (and c for the Rastrigin family)."""
    if family not in (QUADRATIC, RASTRIGIN_FAMILY):
        raise ConfigError(f"unknown objective family '{family}'")
    rng = rng_for(seed)
    n = space.n
    A = rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    if family == QUADRATIC:
        c = np.zeros(n)
        alpha = 0.0
    else:
        c = rng.standard_normal(n)
        alpha = 10.0
    return FunctionInstance(family, A, b, c, alpha)


def family_instance(space: SearchSpace, alpha: float, seed: int) -> FunctionInstance:
    """Rastrigin-family instance with an explicit alpha (alpha = 0 gives a quadratic shape)."""
    rng = rng_for(seed)
    n = space.n
    A = rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    family = QUADRATIC if alpha == 0.0 else RASTRIGIN_FAMILY
    return FunctionInstance(family, A, b, c, float(alpha))


def canonical_rastrigin(n: int) -> FunctionInstance:
    """The fixed test target: A = I, b = 0, c = 1, alpha = 10."""
    return FunctionInstance(RASTRIGIN_FAMILY, np.eye(n), np.zeros(n), np.ones(n), 10.0)


def evaluate(inst: FunctionInstance, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient at x (any shape with inst.n entries)."""
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    if xv.size != inst.n:
        raise ValueError(f"point has {xv.size} entries, instance expects {inst.n}")
    r = inst.A @ xv - inst.b
    value = float(r @ r)
    grad = 2.0 * (inst.A.T @ r)
    if inst.alpha != 0.0:
        value += inst.alpha * (inst.n - float(inst.c @ np.cos(_TWO_PI * xv)))
        grad = grad + _TWO_PI * inst.alpha * inst.c * np.sin(_TWO_PI * xv)
    return value, grad


def hessian(inst: FunctionInstance, x: np.ndarray) -> np.ndarray:
    """Analytic Hessian at x, shape (n, n)."""
    H = 2.0 * (inst.A.T @ inst.A)
    if inst.alpha != 0.0:
        xv = np.asarray(x, dtype=np.float64).reshape(-1)
        H = H + np.diag(_TWO_PI * _TWO_PI * inst.alpha * inst.c * np.cos(_TWO_PI * xv))
    return H


def evaluate_batch(inst: FunctionInstance, xs: np.ndarray) -> np.ndarray:
    """Values at many points, xs shape (m, n); no gradients."""
    xs = np.asarray(xs, dtype=np.float64)
    r = xs @ inst.A.T - inst.b
    vals = np.sum(r * r, axis=1)
    if inst.alpha != 0.0:
        vals = vals + inst.alpha * (inst.n - np.cos(_TWO_PI * xs) @ inst.c)
    return vals


def default_space(n: int) -> SearchSpace:
    return SearchSpace(n)


def instance_to_text(inst: FunctionInstance) -> str:
    """Plain-text record that round-trips bitwise."""
    parts = [inst.family, str(inst.n), _fmt(inst.alpha)]
    parts.extend(_fmt(v) for v in inst.A.ravel())
    parts.extend(_fmt(v) for v in inst.b.ravel())
    parts.extend(_fmt(v) for v in inst.c.ravel())
    return ", ".join(parts)


def instance_from_text(text: str) -> FunctionInstance:
    fields = [f.strip() for f in text.strip().split(",")]
    if len(fields) < 3:
        raise ConfigError("instance record too short")
    family = fields[0]
    if family not in (QUADRATIC, RASTRIGIN_FAMILY):
        raise ConfigError(f"unknown objective family '{family}'")
    n = int(fields[1])
    alpha = float(fields[2])
    need = 3 + n * n + 2 * n
    if len(fields) != need:
        raise ConfigError(f"instance record has {len(fields)} fields, expected {need} for n={n}")
    nums = np.array([float(f) for f in fields[3:]])
    A = nums[: n * n].reshape(n, n)
    b = nums[n * n: n * n + n]
    c = nums[n * n + n:]
    return FunctionInstance(family, A, b, c, alpha)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")
