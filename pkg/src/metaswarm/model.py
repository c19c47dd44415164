"""The population meta-optimizer: features -> intra-attention -> inter-attention
-> shared coordinate-wise LSTM -> step.

One LSTM weight set is shared across all particles and all coordinates; each
coordinate feeds its scalar input through the cell with its own (hidden, cell)
row.  The new hidden row is projected to a scalar step (out_proj) and a scalar
context for the next iteration's intra-attention (ctx_proj), and the step is
scaled by a fixed step_scale.

Architectural switches (feature set, intra, inter) cover the whole ablation
ladder; the richest setting is the default.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import tape as td
from .attention import inter_attend, intra_attend, trace_share
from .errors import ConfigError, NumericError
from .objectives import FunctionInstance, SearchSpace, default_space
from .seeding import INIT_PARAMS, rng_for
from .swarm import SwarmState, _eval_node_pair, apply_steps, compute_features, init_swarm

FEATURE_ORDER = ("gradient", "momentum", "velocity", "attraction")
FEATURE_COUNTS = {"gradient": 1, "point": 2, "full": 4}

_LSTM_GATES = ("i", "f", "o", "g")


@dataclass(frozen=True)
class ModelConfig:
    n: int
    hidden: int = 20
    features: str = "full"
    intra: bool = True
    inter: bool = True
    step_scale: float = 0.1
    beta: float = 0.9
    attract_alpha: float = 1.0
    gamma: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if self.features not in FEATURE_COUNTS:
            raise ConfigError(f"unknown feature set '{self.features}'")
        if self.n < 1 or self.hidden < 1:
            raise ConfigError(f"need n >= 1 and hidden >= 1, got n={self.n}, hidden={self.hidden}")

    @property
    def feature_count(self) -> int:
        return FEATURE_COUNTS[self.features]


def param_names(cfg: ModelConfig) -> list[str]:
    names = []
    if cfg.intra:
        names += ["w_a", "u_a", "v_a"]
    for g in _LSTM_GATES:
        names.append(f"w_{g}")
    for g in _LSTM_GATES:
        names.append(f"u_{g}")
    for g in _LSTM_GATES:
        names.append(f"b_{g}")
    names.append("out_proj")
    if cfg.intra:
        names.append("ctx_proj")
    return names


def param_shape(cfg: ModelConfig, name: str) -> tuple[int, int]:
    n, h = cfg.n, cfg.hidden
    if name in ("w_a", "u_a"):
        return (n, n)
    if name == "v_a":
        return (n, 1)
    if name.startswith("w_"):
        return (1, h)
    if name.startswith("u_"):
        return (h, h)
    if name.startswith("b_"):
        return (1, h)
    if name in ("out_proj", "ctx_proj"):
        return (h, 1)
    raise KeyError(name)


@dataclass
class MetaParams:
    cfg: ModelConfig
    arrays: dict[str, np.ndarray]

    def copy(self) -> "MetaParams":
        return MetaParams(self.cfg, {k: v.copy() for k, v in self.arrays.items()})

    def flat_norm_sq(self) -> float:
        return float(sum(np.sum(v * v) for v in self.arrays.values()))


def init_params(cfg: ModelConfig, seed: int) -> MetaParams:
    """Uniform [-0.1, 0.1] weights with the forget-gate bias at 1."""
    rng = rng_for(seed, INIT_PARAMS)
    arrays = {}
    for name in param_names(cfg):
        shape = param_shape(cfg, name)
        if name == "b_f":
            arrays[name] = np.ones(shape)
        else:
            arrays[name] = rng.uniform(-0.1, 0.1, shape)
    return MetaParams(cfg, arrays)


def zero_params(cfg: ModelConfig) -> MetaParams:
    return MetaParams(cfg, {name: np.zeros(param_shape(cfg, name)) for name in param_names(cfg)})


def params_to_tensors(tape: td.Tape | None, params: MetaParams) -> dict[str, td.Tensor]:
    if tape is None:
        return {k: td.Tensor(v) for k, v in params.arrays.items()}
    return {k: tape.param(v) for k, v in params.arrays.items()}


def _lstm_step(pt: dict[str, td.Tensor], e: td.Tensor, h: td.Tensor, c: td.Tensor,
               ones: td.Tensor) -> tuple[td.Tensor, td.Tensor]:
    def gate(g: str, act):
        z = td.matmul(e, pt[f"w_{g}"]) + td.matmul(h, pt[f"u_{g}"]) + td.matmul(ones, pt[f"b_{g}"])
        return act(z)

    i = gate("i", td.sigmoid)
    f = gate("f", td.sigmoid)
    o = gate("o", td.sigmoid)
    g = gate("g", td.tanh)
    c2 = f * c + i * g
    h2 = o * td.tanh(c2)
    return h2, c2


def _check_finite(stage: str, tensors, t: int) -> None:
    for x in tensors:
        if not np.all(np.isfinite(x.data)):
            raise NumericError(f"non-finite value after {stage} at iteration {t}")


def swarm_step(swarm: SwarmState, inst: FunctionInstance, pt: dict[str, td.Tensor],
               cfg: ModelConfig) -> tuple[list[td.Tensor], dict]:
    """One update for every particle; returns steps and the attention log."""
    k = swarm.k
    nf = cfg.feature_count
    cs = []
    ps = []
    for i in range(k):
        feats = compute_features(swarm, inst, i, cfg.beta, cfg.attract_alpha)[:nf]
        _check_finite("features", feats, swarm.t)
        if cfg.intra:
            ctx = td.matmul(swarm.particles[i].hidden, pt["ctx_proj"])
            c, p = intra_attend(feats, ctx, pt["w_a"], pt["u_a"], pt["v_a"])
        else:
            c = feats[0]
            p = td.Tensor(np.full((nf, 1), 1.0 / nf))
        cs.append(c)
        ps.append(p.data.reshape(-1))
    _check_finite("intra-attention", cs, swarm.t)

    if cfg.inter:
        es, qmat, mmat = inter_attend(cs, [p.x for p in swarm.particles],
                                      cfg.gamma, cfg.length_scale)
        _check_finite("inter-attention", es, swarm.t)
        q_log, m_log = qmat.data.copy(), mmat.data.copy()
        share = trace_share(q_log, m_log, cfg.gamma)
    else:
        es = cs
        q_log = m_log = None
        share = None

    ones = td.Tensor(np.ones((cfg.n, 1)))
    steps = []
    for i, p in enumerate(swarm.particles):
        h2, c2 = _lstm_step(pt, es[i], p.hidden, p.cell, ones)
        _check_finite("lstm", (h2, c2), swarm.t)
        p.hidden, p.cell = h2, c2
        steps.append(cfg.step_scale * td.matmul(h2, pt["out_proj"]))
    log = {"p": np.vstack(ps), "q": q_log, "m": m_log, "trace_share": share}
    return steps, log


@dataclass
class TrajectoryRecord:
    """Per-iteration numbers for loss, metrics and interpretation; when built
    on a tape, also the live sample nodes in evaluation order."""

    positions: list[np.ndarray] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    steps: list[np.ndarray] = field(default_factory=list)
    p_weights: list[np.ndarray] = field(default_factory=list)
    q_mats: list = field(default_factory=list)
    m_mats: list = field(default_factory=list)
    trace_shares: list = field(default_factory=list)
    best_curve: np.ndarray | None = None
    x_nodes: list[td.Tensor] = field(default_factory=list)
    f_nodes: list[td.Tensor] = field(default_factory=list)
    swarm: SwarmState | None = None

    def snapshot(self, swarm: SwarmState) -> None:
        self.positions.append(np.hstack([p.x.data for p in swarm.particles]).T.copy())
        self.values.append(np.array([p.fval.item() for p in swarm.particles]))


def run_iterations(swarm: SwarmState, inst: FunctionInstance, pt: dict[str, td.Tensor],
                   cfg: ModelConfig, iters: int, rec: TrajectoryRecord) -> None:
    for _ in range(iters):
        steps, log = swarm_step(swarm, inst, pt, cfg)
        apply_steps(swarm, steps, inst, cfg.beta)
        for p in swarm.particles:
            rec.x_nodes.append(p.x)
            rec.f_nodes.append(p.fval)
        rec.steps.append(np.hstack([s.data for s in steps]).T.copy())
        rec.p_weights.append(log["p"])
        rec.q_mats.append(log["q"])
        rec.m_mats.append(log["m"])
        rec.trace_shares.append(log["trace_share"])
        rec.snapshot(swarm)


def rollout(inst: FunctionInstance, params: MetaParams, k: int, T: int, seed: int,
            space: SearchSpace | None = None, tape: td.Tape | None = None,
            x0: np.ndarray | None = None) -> TrajectoryRecord:
    """Fresh swarm, T meta-optimizer iterations, full record."""
    if T < 1:
        raise ValueError(f"rollout needs T >= 1, got {T}")
    if k < 1:
        raise ValueError(f"rollout needs k >= 1, got {k}")
    cfg = params.cfg
    space = space if space is not None else default_space(cfg.n)
    pt = params_to_tensors(tape, params)
    swarm = init_swarm(inst, space, k, seed, cfg.hidden, cfg.beta)
    if x0 is not None:
        _override_positions(swarm, inst, np.asarray(x0, dtype=float), cfg)
    rec = TrajectoryRecord(swarm=swarm)
    for x, f in swarm.history:
        rec.x_nodes.append(x)
        rec.f_nodes.append(f)
    rec.snapshot(swarm)
    run_iterations(swarm, inst, pt, cfg, T, rec)
    rec.best_curve = np.array(swarm.best_curve)
    return rec


def _override_positions(swarm: SwarmState, inst: FunctionInstance, x0: np.ndarray,
                        cfg: ModelConfig) -> None:
    if x0.shape != (swarm.k, cfg.n):
        raise ValueError(f"x0 has shape {x0.shape}, expected {(swarm.k, cfg.n)}")
    swarm.history.clear()
    swarm.best_curve.clear()
    best_f = np.inf
    for i, p in enumerate(swarm.particles):
        p.x = td.Tensor(x0[i].reshape(-1, 1))
        p.fval, p.grad = _eval_node_pair(inst, p.x)
        p.momentum = (1.0 - cfg.beta) * p.grad
        p.best_x = p.x
        p.best_f = p.fval.item()
        swarm.history.append((p.x, p.fval))
        best_f = min(best_f, p.best_f)
        swarm.best_curve.append(best_f)
        if p.best_f == best_f:
            swarm.global_best_x = p.x.data.copy()
    swarm.global_best_f = best_f


# ---------------------------------------------------------------------------
# checkpoint format: versioned plain text, 17 significant digits, bitwise

_CKPT_HEADER = "metaswarm-checkpoint v1"

_META_FIELDS = ("n", "hidden", "features", "intra", "inter", "step_scale", "beta",
                "attract_alpha", "gamma", "length_scale")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_checkpoint(path, params: MetaParams, scalars: dict | None = None,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    cfg = params.cfg
    buf = io.StringIO()
    buf.write(_CKPT_HEADER + "\n")
    buf.write(f"n {cfg.n}\n")
    buf.write(f"hidden {cfg.hidden}\n")
    buf.write(f"features {cfg.features}\n")
    buf.write(f"intra {int(cfg.intra)}\n")
    buf.write(f"inter {int(cfg.inter)}\n")
    for name in ("step_scale", "beta", "attract_alpha", "gamma", "length_scale"):
        buf.write(f"{name} {_fmt(getattr(cfg, name))}\n")
    for key in sorted(scalars or {}):
        val = (scalars or {})[key]
        if isinstance(val, int):
            buf.write(f"scalar {key} int {val}\n")
        else:
            buf.write(f"scalar {key} float {_fmt(val)}\n")
    for name, arr in params.arrays.items():
        _write_array(buf, name, arr)
    for name in sorted(extra_arrays or {}):
        _write_array(buf, name, (extra_arrays or {})[name])
    buf.write("end\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _write_array(buf, name: str, arr: np.ndarray) -> None:
    r, c = arr.shape
    buf.write(f"array {name} {r} {c}\n")
    for row in arr:
        buf.write(" ".join(_fmt(v) for v in row) + "\n")


def load_checkpoint(path) -> tuple[MetaParams, dict, dict[str, np.ndarray]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CKPT_HEADER:
        raise ConfigError(f"{path}: not a recognized checkpoint (missing '{_CKPT_HEADER}')")
    meta: dict = {}
    scalars: dict = {}
    arrays: dict[str, np.ndarray] = {}
    idx = 1
    while idx < len(lines):
        line = lines[idx]
        if line == "end":
            break
        parts = line.split()
        if parts[0] == "array":
            if len(parts) != 4:
                raise ConfigError(f"{path}: malformed array header '{line}'")
            name, r, c = parts[1], int(parts[2]), int(parts[3])
            if idx + r >= len(lines):
                raise ConfigError(f"{path}: truncated checkpoint inside array '{name}'")
            rows = []
            for j in range(r):
                row = [float(v) for v in lines[idx + 1 + j].split()]
                if len(row) != c:
                    raise ConfigError(f"{path}: array '{name}' row {j} has {len(row)} values, expected {c}")
                rows.append(row)
            arrays[name] = np.array(rows).reshape(r, c)
            idx += 1 + r
            continue
        if parts[0] == "scalar":
            key, typ, raw = parts[1], parts[2], parts[3]
            scalars[key] = int(raw) if typ == "int" else float(raw)
        else:
            meta[parts[0]] = parts[1]
        idx += 1
    else:
        raise ConfigError(f"{path}: truncated checkpoint (no 'end' marker)")
    try:
        cfg = ModelConfig(
            n=int(meta["n"]), hidden=int(meta["hidden"]), features=meta["features"],
            intra=bool(int(meta["intra"])), inter=bool(int(meta["inter"])),
            step_scale=float(meta["step_scale"]), beta=float(meta["beta"]),
            attract_alpha=float(meta["attract_alpha"]), gamma=float(meta["gamma"]),
            length_scale=float(meta["length_scale"]),
        )
    except KeyError as err:
        raise ConfigError(f"{path}: checkpoint missing field {err}") from err
    names = param_names(cfg)
    missing = [nm for nm in names if nm not in arrays]
    if missing:
        raise ConfigError(f"{path}: checkpoint missing parameter arrays {missing}")
    params = MetaParams(cfg, {nm: arrays.pop(nm) for nm in names})
    for nm, arr in params.arrays.items():
        want = param_shape(cfg, nm)
        if arr.shape != want:
            raise ConfigError(f"{path}: array {nm} has shape {arr.shape}, expected {want}")
    return params, scalars, arrays
