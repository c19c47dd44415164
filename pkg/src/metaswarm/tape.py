"""Reverse-mode automatic differentiation over dense 2D float64 arrays.

Define-by-run: each operation on tracked tensors appends one node to a Tape,
and ``Tape.backward`` walks the node list in reverse, accumulating adjoints of
a scalar loss.  A Tensor without a tape is a constant; mixing constants and
tracked tensors is allowed and gradients simply do not flow into constants.

Shapes are (rows, cols), fixed at creation.  Elementwise binaries require
equal shapes or a (1, 1) scalar against any shape; there is no other
broadcasting.  Softmax subtracts the per-axis max before exponentiation, which
changes nothing mathematically and avoids overflow.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import NumericError, ShapeError

Array = np.ndarray


def _as2d(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ShapeError(f"only 2D arrays are supported, got ndim={a.ndim}")
    return a


class _Node:
    __slots__ = ("inputs", "vjp")

    def __init__(self, inputs: tuple, vjp: Callable[[Array], tuple]):
        self.inputs = inputs
        self.vjp = vjp


class Tensor:
    """A 2D float64 value, optionally tracked on a tape."""

    __slots__ = ("data", "tape", "nid")

    def __init__(self, data, tape: "Tape | None" = None, nid: int | None = None):
        self.data = _as2d(data)
        self.tape = tape
        self.nid = nid

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """Same value as a constant; cuts the gradient path."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = "const" if self.tape is None else f"node {self.nid}"
        return f"Tensor({tag}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only record of primitive operations; single-threaded."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._params: list[int] = []
        self._param_shapes: dict[int, tuple[int, int]] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, data) -> Tensor:
        """Tracked input that can receive a gradient."""
        t = Tensor(data, self, len(self._nodes))
        self._nodes.append(_Node((), None))
        return t

    def param(self, data) -> Tensor:
        """Tracked leaf registered for inclusion in backward's gradient map."""
        t = self.leaf(data)
        self._params.append(t.nid)
        self._param_shapes[t.nid] = t.data.shape
        return t

    def backward(self, loss: Tensor) -> dict[int, Array]:
        """Adjoints of a scalar loss for every registered parameter leaf.

        Unreachable parameters get zero gradients.  Repeated calls on the same
        tape are independent and yield identical results.
        """
        if loss.tape is not self or loss.nid is None:
            raise ValueError("loss does not belong to this tape")
        if loss.data.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        adj: list[Array | None] = [None] * len(self._nodes)
        adj[loss.nid] = np.ones((1, 1))
        for nid in range(loss.nid, -1, -1):
            g = adj[nid]
            if g is None:
                continue
            node = self._nodes[nid]
            if not node.inputs:
                continue
            for inp, grad in zip(node.inputs, node.vjp(g)):
                if inp is None or grad is None:
                    continue
                adj[inp] = grad if adj[inp] is None else adj[inp] + grad
        out = {}
        for nid in self._params:
            g = adj[nid]
            out[nid] = np.zeros(self._param_shapes[nid]) if g is None else g
        return out


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands live on different tapes")
    return tape


def _emit(tape: Tape | None, data: Array, inputs: Sequence[Tensor], vjp) -> Tensor:
    if tape is None:
        return Tensor(data)
    nids = tuple(t.nid if t.tape is tape else None for t in inputs)
    out = Tensor(data, tape, len(tape._nodes))
    tape._nodes.append(_Node(nids, vjp))
    return out


def _binary_shapes(a: Array, b: Array, opname: str) -> None:
    if a.shape != b.shape and a.shape != (1, 1) and b.shape != (1, 1):
        raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(shape: tuple[int, int], g: Array) -> Array:
    # adjoint of the scalar broadcast: sum back to (1, 1)
    if g.shape == shape:
        return g
    return np.array([[g.sum()]])


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a.data, b.data, "add")
    out = a.data + b.data

    def vjp(g, sa=a.data.shape, sb=b.data.shape):
        return _reduce_to(sa, g), _reduce_to(sb, g)

    return _emit(_tape_of(a, b), out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a.data, b.data, "subtract")
    out = a.data - b.data

    def vjp(g, sa=a.data.shape, sb=b.data.shape):
        return _reduce_to(sa, g), _reduce_to(sb, -g)

    return _emit(_tape_of(a, b), out, (a, b), vjp)


def neg(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (-g,)

    return _emit(_tape_of(a), -a.data, (a,), vjp)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a.data, b.data, "multiply")
    out = a.data * b.data

    def vjp(g, da=a.data, db=b.data):
        return _reduce_to(da.shape, g * db), _reduce_to(db.shape, g * da)

    return _emit(_tape_of(a, b), out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _binary_shapes(a.data, b.data, "divide")
    out = a.data / b.data

    def vjp(g, da=a.data, db=b.data):
        return _reduce_to(da.shape, g / db), _reduce_to(db.shape, -g * da / (db * db))

    return _emit(_tape_of(a, b), out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = a.data @ b.data

    def vjp(g, da=a.data, db=b.data):
        return g @ db.T, da.T @ g

    return _emit(_tape_of(a, b), out, (a, b), vjp)


def transpose(a) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        return (g.T,)

    return _emit(_tape_of(a), a.data.T.copy(), (a,), vjp)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def vjp(g, y=out):
        return (g * (1.0 - y * y),)

    return _emit(_tape_of(a), out, (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = expit(a.data)

    def vjp(g, y=out):
        return (g * y * (1.0 - y),)

    return _emit(_tape_of(a), out, (a,), vjp)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.data)

    def vjp(g, y=out):
        return (g * y,)

    return _emit(_tape_of(a), out, (a,), vjp)


def log(a) -> Tensor:
    a = _wrap(a)
    out = np.log(a.data)

    def vjp(g, da=a.data):
        return (g / da,)

    return _emit(_tape_of(a), out, (a,), vjp)


def sum_all(a) -> Tensor:
    a = _wrap(a)
    out = np.array([[a.data.sum()]])

    def vjp(g, shape=a.data.shape):
        return (np.full(shape, g[0, 0]),)

    return _emit(_tape_of(a), out, (a,), vjp)


def sum_axis(a, axis: int) -> Tensor:
    """Sum along one axis, keeping the result 2D: axis 0 -> (1, c), axis 1 -> (r, 1)."""
    a = _wrap(a)
    if axis not in (0, 1):
        raise ShapeError(f"sum_axis: axis must be 0 or 1, got {axis}")
    out = a.data.sum(axis=axis, keepdims=True)

    def vjp(g, shape=a.data.shape):
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(_tape_of(a), out, (a,), vjp)


def sqnorm(a) -> Tensor:
    """Sum of squared entries, as a (1, 1) scalar."""
    a = _wrap(a)
    out = np.array([[float(np.sum(a.data * a.data))]])

    def vjp(g, da=a.data):
        return (2.0 * g[0, 0] * da,)

    return _emit(_tape_of(a), out, (a,), vjp)


def softmax(a, axis: int) -> Tensor:
    """Softmax along an axis with max-subtraction."""
    a = _wrap(a)
    if axis not in (0, 1):
        raise ShapeError(f"softmax: axis must be 0 or 1, got {axis}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g, y=out, ax=axis):
        inner = (g * y).sum(axis=ax, keepdims=True)
        return (y * (g - inner),)

    return _emit(_tape_of(a), out, (a,), vjp)


def vstack(tensors: Iterable) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ShapeError("vstack: empty input")
    cols = ts[0].data.shape[1]
    for t in ts:
        if t.data.shape[1] != cols:
            raise ShapeError(f"vstack: column mismatch {t.data.shape} vs {ts[0].data.shape}")
    out = np.vstack([t.data for t in ts])
    offsets = np.cumsum([0] + [t.data.shape[0] for t in ts])

    def vjp(g, offs=offsets):
        return tuple(g[offs[i]:offs[i + 1], :] for i in range(len(offs) - 1))

    return _emit(_tape_of(*ts), out, ts, vjp)


def hstack(tensors: Iterable) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise ShapeError("hstack: empty input")
    rows = ts[0].data.shape[0]
    for t in ts:
        if t.data.shape[0] != rows:
            raise ShapeError(f"hstack: row mismatch {t.data.shape} vs {ts[0].data.shape}")
    out = np.hstack([t.data for t in ts])
    offsets = np.cumsum([0] + [t.data.shape[1] for t in ts])

    def vjp(g, offs=offsets):
        return tuple(g[:, offs[i]:offs[i + 1]] for i in range(len(offs) - 1))

    return _emit(_tape_of(*ts), out, ts, vjp)


def slice_cols(a, j0: int, j1: int) -> Tensor:
    a = _wrap(a)
    out = a.data[:, j0:j1].copy()

    def vjp(g, shape=a.data.shape, j0=j0, j1=j1):
        full = np.zeros(shape)
        full[:, j0:j1] = g
        return (full,)

    return _emit(_tape_of(a), out, (a,), vjp)


def slice_rows(a, i0: int, i1: int) -> Tensor:
    a = _wrap(a)
    out = a.data[i0:i1, :].copy()

    def vjp(g, shape=a.data.shape, i0=i0, i1=i1):
        full = np.zeros(shape)
        full[i0:i1, :] = g
        return (full,)

    return _emit(_tape_of(a), out, (a,), vjp)


def pairwise_sqdist(x) -> Tensor:
    """Matrix of squared Euclidean distances between the rows of x."""
    x = _wrap(x)
    s = np.sum(x.data * x.data, axis=1, keepdims=True)
    out = s + s.T - 2.0 * (x.data @ x.data.T)

    def vjp(g, dx=x.data):
        sym = g + g.T
        return (2.0 * (sym.sum(axis=1, keepdims=True) * dx - sym @ dx),)

    return _emit(_tape_of(x), out, (x,), vjp)


def cross_sqdist(x, u: Array) -> Tensor:
    """Squared distances between rows of x (tracked) and rows of the constant u."""
    x = _wrap(x)
    u = np.asarray(u, dtype=np.float64)
    sx = np.sum(x.data * x.data, axis=1, keepdims=True)
    su = np.sum(u * u, axis=1, keepdims=True)
    out = sx + su.T - 2.0 * (x.data @ u.T)

    def vjp(g, dx=x.data, du=u):
        return (2.0 * (g.sum(axis=1, keepdims=True) * dx - g @ du),)

    return _emit(_tape_of(x), out, (x,), vjp)


def solve_psd(a, b) -> Tensor:
    """Solve A x = b for symmetric positive definite A via Cholesky."""
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[0] != a.data.shape[1] or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"solve_psd: incompatible shapes {a.data.shape} and {b.data.shape}")
    try:
        factor = cho_factor(a.data, lower=True)
    except np.linalg.LinAlgError as err:
        raise NumericError(f"solve_psd: matrix is not positive definite ({err})") from err
    x = cho_solve(factor, b.data)

    def vjp(g, fac=factor, sol=x):
        db = cho_solve(fac, g)
        return -db @ sol.T, db

    return _emit(_tape_of(a, b), x, (a, b), vjp)


def external_scalar(x, value: float, grad: Array) -> Tensor:
    """Scalar produced outside the tape, with its gradient at x supplied by the caller."""
    x = _wrap(x)
    g0 = _as2d(grad)
    if g0.shape != x.data.shape:
        raise ShapeError(f"external_scalar: gradient shape {g0.shape} does not match input {x.data.shape}")

    def vjp(g, gr=g0):
        return (g[0, 0] * gr,)

    return _emit(_tape_of(x), np.array([[float(value)]]), (x,), vjp)


def external_vector(x, value: Array, jac_fn: Callable[[], Array]) -> Tensor:
    """Vector produced outside the tape; jac_fn() supplies its Jacobian at x on demand."""
    x = _wrap(x)
    val = _as2d(value)

    def vjp(g, fn=jac_fn):
        return (np.asarray(fn(), dtype=np.float64).T @ g,)

    return _emit(_tape_of(x), val, (x,), vjp)


def grad_check(build: Callable[[Tape, dict[str, Tensor]], Tensor],
               theta: dict[str, Array], step: float = 1e-5) -> float:
    """Max relative error between tape gradients and central finite differences.

    ``build(tape, tensors)`` must construct a scalar loss from parameter
    tensors keyed like ``theta``; it is re-run for every perturbed evaluation,
    so any internal randomness must be fixed by the caller.
    """
    theta = {k: _as2d(v) for k, v in theta.items()}
    tape = Tape()
    tensors = {k: tape.param(v) for k, v in theta.items()}
    loss = build(tape, tensors)
    grads_by_nid = tape.backward(loss)
    analytic = {k: grads_by_nid[t.nid] for k, t in tensors.items()}

    def value_at(pert: dict[str, Array]) -> float:
        t2 = Tape()
        return build(t2, {k: t2.param(v) for k, v in pert.items()}).item()

    worst = 0.0
    for name, base in theta.items():
        an = analytic[name]
        if an.shape != base.shape:
            an = np.broadcast_to(an, base.shape)
        flat = base.ravel()
        for idx in range(flat.size):
            bumped = {k: (v.copy() if k == name else v) for k, v in theta.items()}
            bumped[name].ravel()[idx] = flat[idx] + step
            fplus = value_at(bumped)
            bumped[name].ravel()[idx] = flat[idx] - step
            fminus = value_at(bumped)
            if not (np.isfinite(fplus) and np.isfinite(fminus)):
                raise NumericError(f"grad_check: non-finite value at parameter {name}[{idx}]")
            fd = (fplus - fminus) / (2.0 * step)
            a = float(an.ravel()[idx])
            if not np.isfinite(a):
                raise NumericError(f"grad_check: non-finite analytic gradient at {name}[{idx}]")
            err = abs(a - fd) / (abs(a) + abs(fd) + 1e-12)
            if err > worst:
                worst = err
    return worst
