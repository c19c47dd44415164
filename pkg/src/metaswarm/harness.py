"""Experiment harness: configs, batteries, statistics and file emission.

Configs are flat `key = value` text with per-command schemas; unknown or
missing keys are rejected by name, and the fully resolved configuration
(defaults included) is echoed to `resolved-config` in the output directory,
so no default is ever silent.

Evaluation follows two protocols: `battery` samples fresh function instances
per (repeat, index) pair, `canonical` runs repeated trajectories on the one
canonical ripple benchmark.  All methods inside a run share instance and
seed draws, so comparisons are paired.  Statistics are mean and population
standard deviation over repeats of battery-mean best-so-far values, reported
every 50 evaluations.  Budgets count objective evaluations, never
iterations.

Repeats and battery functions can fan out over worker threads
(METASWARM_THREADS); results are merged in deterministic task order, so the
emitted bytes never depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import svg
from .baselines import (ABLATION_LEVELS, run_ablation, run_adam, run_gd,
                        run_lstm_restarts, run_pso, run_sgd)
from .errors import ConfigError
from .model import (FEATURE_ORDER, MetaParams, ModelConfig, TrajectoryRecord,
                    load_checkpoint, rollout)
from .objectives import (FAMILIES, canonical_rastrigin, default_space,
                         instance_from_text, sample_instance)
from .posterior import PosteriorSettings
from .seeding import BATTERY, rng_for
from .training import TrainConfig, train

STATS_EVERY = 50
THREADS_ENV = "METASWARM_THREADS"
RESULTS_HEADER = "method,evals,mean_best_f,std_best_f,n,k,seed_group"
RESOLVED_NAME = "resolved-config"

METHOD_MENU = ("gd", "sgd", "adam", "pso", "lstm", "meta")

REQUIRED = object()


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _default_k(resolved: dict) -> int:
    return 4 if resolved["n"] == 2 else 10


# ---------------------------------------------------------------------------
# config text


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Flat `key = value` lines; `#` comments and blank lines are skipped."""
    raw: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, val = s.partition("=")
        key = key.strip()
        val = val.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{ln}: expected 'key = value', got '{s}'")
        if key in raw:
            raise ConfigError(f"{origin}:{ln}: duplicate key '{key}'")
        raw[key] = val
    return raw


def read_config(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(), str(path))


def _coerce(command: str, key: str, kind: str, val: str):
    try:
        if kind == "int":
            return int(val)
        if kind == "float":
            return float(val)
        if kind == "float?":
            return None if val == "none" else float(val)
        if kind == "bool":
            if val in ("true", "false"):
                return val == "true"
            raise ValueError(val)
        if kind == "list":
            items = [t.strip() for t in val.split(",") if t.strip()]
            if not items:
                raise ValueError(val)
            return items
        return val  # str
    except ValueError:
        raise ConfigError(f"{command}: key '{key}' expects a {kind} value, got '{val}'") \
            from None


def resolve_config(command: str, raw: dict[str, str], schema) -> dict:
    """Typed values for every schema key; unknown/missing keys are named.

    schema rows are (key, kind, default); REQUIRED marks a mandatory key and
    a callable default receives the keys resolved so far.
    """
    known = {key for key, _, _ in schema}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{command}: unknown config key '{key}'")
    out: dict = {}
    for key, kind, default in schema:
        if key in raw:
            out[key] = _coerce(command, key, kind, raw[key])
        elif default is REQUIRED:
            raise ConfigError(f"{command}: missing required config key '{key}'")
        elif callable(default):
            out[key] = default(out)
        else:
            out[key] = default
    return out


def _echo_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    if isinstance(v, list):
        return ",".join(v)
    if v is None:
        return "none"
    return str(v)


def write_resolved(out_dir: Path, command: str, seed: int, resolved: dict,
                   order) -> None:
    lines = [f"command = {command}", f"seed = {seed}"]
    lines += [f"{key} = {_echo_value(resolved[key])}" for key in order]
    (out_dir / RESOLVED_NAME).write_text("\n".join(lines) + "\n")


def _out_dir(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def thread_count() -> int:
    val = os.environ.get(THREADS_ENV)
    if val is None:
        return 1
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{val}'") \
            from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def _map_ordered(fn, items: list):
    """fn over items, optionally threaded; output order always matches input."""
    workers = thread_count()
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# evaluation engine


@dataclass(frozen=True)
class RunPlan:
    """Shared frame for one statistics run: who is evaluated on what."""

    protocol: str            # "battery" or "canonical"
    family: str
    n: int
    k: int
    budget: int
    repeats: int
    battery: int
    seed: int


@dataclass
class MethodSpec:
    name: str                # CSV label
    kind: str                # gd | sgd | adam | pso | lstm | meta | level
    k_eff: int
    lr: float = 0.0
    params: MetaParams | None = None
    level: str | None = None


def _draws(plan: RunPlan, rep: int, i: int):
    """Instance seed, run seed and start point for battery slot (rep, i).

    One master stream per slot, drawn in a fixed order, so every method
    sees identical instances and starts.
    """
    master = rng_for(plan.seed, BATTERY, rep, i)
    inst_seed = int(master.integers(2 ** 63))
    run_seed = int(master.integers(2 ** 63))
    x0 = default_space(plan.n).uniform(master, 1)[0]
    return inst_seed, run_seed, x0


def _instance(plan: RunPlan, inst_seed: int):
    if plan.protocol == "canonical":
        return canonical_rastrigin(plan.n)
    return sample_instance(plan.family, default_space(plan.n), inst_seed)


def _run_curve(spec: MethodSpec, inst, x0, run_seed: int, plan: RunPlan) -> np.ndarray:
    if spec.kind == "gd":
        return run_gd(inst, x0, spec.lr, plan.budget).curve
    if spec.kind == "sgd":
        return run_sgd(inst, x0, spec.lr, plan.budget).curve
    if spec.kind == "adam":
        return run_adam(inst, x0, spec.lr, plan.budget).curve
    if spec.kind == "pso":
        return run_pso(inst, plan.k, plan.budget, run_seed).curve
    if spec.kind == "lstm":
        return run_lstm_restarts(inst, spec.params, 1, plan.budget, run_seed).curve
    if spec.kind == "meta":
        rec = rollout(inst, spec.params, plan.k, plan.budget // plan.k - 1, run_seed)
        return rec.best_curve
    if spec.kind == "level":
        return run_ablation(spec.level, spec.params, inst, plan.k, plan.budget,
                            run_seed).curve
    raise ConfigError(f"unknown method kind '{spec.kind}'")


def repeat_curves(spec: MethodSpec, plan: RunPlan) -> np.ndarray:
    """(repeats, budget) battery-mean best-so-far curves for one method."""
    tasks = [(rep, i) for rep in range(plan.repeats) for i in range(plan.battery)]

    def one(task):
        rep, i = task
        inst_seed, run_seed, x0 = _draws(plan, rep, i)
        return _run_curve(spec, _instance(plan, inst_seed), x0, run_seed, plan)

    curves = _map_ordered(one, tasks)
    mat = np.empty((plan.repeats, plan.budget))
    idx = 0
    for rep in range(plan.repeats):
        acc = np.zeros(plan.budget)
        for _ in range(plan.battery):
            acc += curves[idx]
            idx += 1
        mat[rep] = acc / plan.battery
    return mat


def stats_rows(name: str, mat: np.ndarray, plan: RunPlan, k_eff: int) -> list[str]:
    """One CSV row per 50-evaluation checkpoint: mean and population std."""
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    rows = []
    for e in range(STATS_EVERY, plan.budget + 1, STATS_EVERY):
        rows.append(",".join([name, str(e), _fmt(mean[e - 1]), _fmt(std[e - 1]),
                              str(plan.n), str(k_eff), str(plan.seed)]))
    return rows


def _write_results(out: Path, rows: list[str]) -> None:
    (out / "results.csv").write_text("\n".join([RESULTS_HEADER] + rows) + "\n")


def _write_curves_svg(out: Path, plan: RunPlan, curve_series, title: str) -> None:
    evals = np.arange(STATS_EVERY, plan.budget + 1, STATS_EVERY)
    series = [(name, evals.astype(float), mat.mean(axis=0)[evals - 1])
              for name, mat in curve_series]
    svg.write_svg(out / "curves.svg",
                  svg.line_chart(series, title, "evaluations", "mean best f"))


def _load_params(command: str, label: str, path: str, n: int) -> MetaParams:
    if not path:
        raise ConfigError(f"{command}: no checkpoint for {label} (empty path)")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{command}: checkpoint for {label} not found: {path}")
    params, _, _ = load_checkpoint(p)
    if params.cfg.n != n:
        raise ConfigError(f"{command}: checkpoint {path} has n={params.cfg.n}, "
                          f"config says n={n}")
    return params


def _check_population(command: str, budget: int, k: int, needed: bool) -> None:
    if needed and budget % k != 0:
        raise ConfigError(f"{command}: budget {budget} is not divisible by k={k}")
    if needed and budget // k < 2:
        raise ConfigError(f"{command}: budget {budget} leaves no iterations for k={k}")


# ---------------------------------------------------------------------------
# evaluate


_EVALUATE_SCHEMA = (
    ("family", "str", "quadratic"),
    ("protocol", "str",
     lambda out: "canonical" if out["family"] == "rastrigin-family" else "battery"),
    ("n", "int", REQUIRED),
    ("k", "int", _default_k),
    ("budget", "int", REQUIRED),
    ("repeats", "int", 100),
    ("battery", "int", lambda out: 128 if out["protocol"] == "battery" else 1),
    ("methods", "list", REQUIRED),
    ("checkpoint", "str", ""),
    ("lstm_checkpoint", "str", ""),
    ("lr_gd", "float", 0.01),
    ("lr_sgd", "float", 0.01),
    ("lr_adam", "float", 0.01),
)


def _check_plan_sizes(command: str, cv: dict) -> None:
    for key in ("n", "budget", "repeats", "battery"):
        if cv[key] < 1:
            raise ConfigError(f"{command}: '{key}' must be >= 1, got {cv[key]}")
    if cv["k"] < 1:
        raise ConfigError(f"{command}: 'k' must be >= 1, got {cv['k']}")
    if cv["protocol"] not in ("battery", "canonical"):
        raise ConfigError(f"{command}: protocol must be 'battery' or 'canonical', "
                          f"got '{cv['protocol']}'")
    if cv["protocol"] == "canonical":
        if cv["family"] != "rastrigin-family":
            raise ConfigError(f"{command}: the canonical protocol runs the "
                              f"rastrigin-family benchmark, got family "
                              f"'{cv['family']}'")
        if cv["battery"] != 1:
            raise ConfigError(f"{command}: the canonical protocol uses a single "
                              f"instance, got battery={cv['battery']}")
    elif cv["family"] not in FAMILIES:
        raise ConfigError(f"{command}: unknown family '{cv['family']}', expected "
                          f"one of {sorted(FAMILIES)}")


def cmd_evaluate(config_path, out, seed: int) -> None:
    cv = resolve_config("evaluate", read_config(config_path), _EVALUATE_SCHEMA)
    _check_plan_sizes("evaluate", cv)
    methods = cv["methods"]
    if len(set(methods)) != len(methods):
        raise ConfigError(f"evaluate: duplicate method in {methods}")
    for m in methods:
        if m not in METHOD_MENU:
            raise ConfigError(f"evaluate: unknown method '{m}', expected one of "
                              f"{list(METHOD_MENU)}")
    needs_pop = any(m in ("pso", "meta") for m in methods)
    _check_population("evaluate", cv["budget"], cv["k"], needs_pop)
    if "pso" in methods and cv["k"] < 2:
        raise ConfigError(f"evaluate: PSO needs k >= 2, got {cv['k']}")
    plan = RunPlan(cv["protocol"], cv["family"], cv["n"], cv["k"], cv["budget"],
                   cv["repeats"], cv["battery"], seed)
    specs = []
    for m in methods:
        spec = MethodSpec(name=m, kind=m, k_eff=1)
        if m in ("gd", "sgd", "adam"):
            spec.lr = cv[f"lr_{m}"]
        elif m == "pso":
            spec.k_eff = cv["k"]
        elif m == "lstm":
            spec.params = _load_params("evaluate", "method 'lstm'",
                                       cv["lstm_checkpoint"], cv["n"])
        elif m == "meta":
            spec.k_eff = cv["k"]
            spec.params = _load_params("evaluate", "method 'meta'",
                                       cv["checkpoint"], cv["n"])
        specs.append(spec)
    out_dir = _out_dir(out)
    write_resolved(out_dir, "evaluate", seed, cv, [k for k, _, _ in _EVALUATE_SCHEMA])
    rows, curve_series = [], []
    for spec in specs:
        mat = repeat_curves(spec, plan)
        rows += stats_rows(spec.name, mat, plan, spec.k_eff)
        curve_series.append((spec.name, mat))
    _write_results(out_dir, rows)
    _write_curves_svg(out_dir, plan, curve_series,
                      f"{plan.family} n={plan.n} ({plan.protocol})")


# ---------------------------------------------------------------------------
# transfer


def _transfer_schema(raw: dict[str, str]):
    base = [("n", "int", 10),
            ("k", "int", _default_k),
            ("budget", "int", REQUIRED),
            ("repeats", "int", 100),
            ("alphas", "list", ["0", "5", "10"])]
    tokens = _coerce("transfer", "alphas", "list", raw["alphas"]) \
        if "alphas" in raw else ["0", "5", "10"]
    for tok in tokens:
        _coerce("transfer", "alphas", "float", tok)
        base.append((f"checkpoint_a{tok}", "str", REQUIRED))
    return tuple(base), tokens


def cmd_transfer(config_path, out, seed: int) -> None:
    raw = read_config(config_path)
    schema, tokens = _transfer_schema(raw)
    cv = resolve_config("transfer", raw, schema)
    cv["protocol"], cv["family"], cv["battery"] = "canonical", "rastrigin-family", 1
    _check_plan_sizes("transfer", cv)
    _check_population("transfer", cv["budget"], cv["k"], True)
    plan = RunPlan("canonical", "rastrigin-family", cv["n"], cv["k"], cv["budget"],
                   cv["repeats"], 1, seed)
    specs = [MethodSpec(name=f"alpha={tok}", kind="meta", k_eff=cv["k"],
                        params=_load_params("transfer", f"alpha={tok}",
                                            cv[f"checkpoint_a{tok}"], cv["n"]))
             for tok in tokens]
    out_dir = _out_dir(out)
    write_resolved(out_dir, "transfer", seed, cv, [k for k, _, _ in schema])
    rows, curve_series = [], []
    for spec in specs:
        mat = repeat_curves(spec, plan)
        rows += stats_rows(spec.name, mat, plan, spec.k_eff)
        curve_series.append((spec.name, mat))
    _write_results(out_dir, rows)
    _write_curves_svg(out_dir, plan, curve_series,
                      f"ripple-weight transfer, canonical n={plan.n}")


# ---------------------------------------------------------------------------
# ablate


_LEVEL_CKPT_KEY = {"B0": "checkpoint_b0", "B1": "checkpoint_b0",
                   "B2": "checkpoint_b2", "B3": "checkpoint_b3",
                   "proposed": "checkpoint_proposed"}

FINALS_HEADER = "level,mean_final,std_final,repeats"


def _ablate_schema(raw: dict[str, str]):
    levels = _coerce("ablate", "levels", "list", raw["levels"]) \
        if "levels" in raw else list(ABLATION_LEVELS)
    for lv in levels:
        if lv not in ABLATION_LEVELS:
            raise ConfigError(f"ablate: unknown level '{lv}', expected one of "
                              f"{list(ABLATION_LEVELS)}")
    base = [("n", "int", 10),
            ("k", "int", _default_k),
            ("budget", "int", REQUIRED),
            ("repeats", "int", 100),
            ("levels", "list", list(ABLATION_LEVELS))]
    for key in dict.fromkeys(_LEVEL_CKPT_KEY[lv] for lv in levels):
        base.append((key, "str", REQUIRED))
    return tuple(base), levels


def cmd_ablate(config_path, out, seed: int) -> None:
    raw = read_config(config_path)
    schema, levels = _ablate_schema(raw)
    cv = resolve_config("ablate", raw, schema)
    if len(set(levels)) != len(levels):
        raise ConfigError(f"ablate: duplicate level in {levels}")
    cv["protocol"], cv["family"], cv["battery"] = "canonical", "rastrigin-family", 1
    _check_plan_sizes("ablate", cv)
    _check_population("ablate", cv["budget"], cv["k"], True)
    plan = RunPlan("canonical", "rastrigin-family", cv["n"], cv["k"], cv["budget"],
                   cv["repeats"], 1, seed)
    specs = [MethodSpec(name=lv, kind="level", k_eff=1 if lv == "B0" else cv["k"],
                        level=lv,
                        params=_load_params("ablate", f"level {lv}",
                                            cv[_LEVEL_CKPT_KEY[lv]], cv["n"]))
             for lv in levels]
    out_dir = _out_dir(out)
    write_resolved(out_dir, "ablate", seed, cv, [k for k, _, _ in schema])
    rows, finals, curve_series = [], [], []
    for spec in specs:
        mat = repeat_curves(spec, plan)
        rows += stats_rows(spec.name, mat, plan, spec.k_eff)
        last = mat[:, -1]
        finals.append(",".join([spec.name, _fmt(last.mean()), _fmt(last.std()),
                                str(plan.repeats)]))
        curve_series.append((spec.name, mat))
    _write_results(out_dir, rows)
    (out_dir / "finals.csv").write_text("\n".join([FINALS_HEADER] + finals) + "\n")
    _write_curves_svg(out_dir, plan, curve_series, f"ablation ladder, n={plan.n}")


# ---------------------------------------------------------------------------
# interpret


_INTERPRET_SCHEMA = (
    ("n", "int", 2),
    ("k", "int", _default_k),
    ("iters", "int", 20),
    ("checkpoint", "str", REQUIRED),
    ("instance_file", "str", ""),
    ("paths", "bool", True),
    ("path_samples", "int", 80),
    ("lr_gd", "float", 0.01),
)

WEIGHTS_HEADER = "iter," + ",".join(f"w_{name}" for name in FEATURE_ORDER)
TRACE_HEADER = "iter,trace_share"
PATHS_HEADER = "method,sample,particle,x1,x2"


def _padded_feature_weights(rec: TrajectoryRecord, cfg: ModelConfig,
                            iters: int) -> np.ndarray:
    """(iters, 4) rows: p summed over particles, renormalized, absent
    features carrying zero weight."""
    out = np.zeros((iters, len(FEATURE_ORDER)))
    for t in range(iters):
        summed = rec.p_weights[t].sum(axis=0)
        out[t, :summed.size] = summed / summed.sum()
    return out


def cmd_interpret(config_path, out, seed: int) -> None:
    cv = resolve_config("interpret", read_config(config_path), _INTERPRET_SCHEMA)
    n, k, iters = cv["n"], cv["k"], cv["iters"]
    if n < 1 or k < 1 or iters < 1:
        raise ConfigError(f"interpret: need n, k, iters >= 1; got n={n}, k={k}, "
                          f"iters={iters}")
    if cv["paths"]:
        if n != 2:
            raise ConfigError(f"interpret: the sample-path plot needs n=2, got "
                              f"n={n}; set paths = false for CSV-only output")
        if cv["path_samples"] % k != 0 or cv["path_samples"] // k < 2:
            raise ConfigError(f"interpret: path_samples={cv['path_samples']} must "
                              f"be a multiple of k={k} with at least two rounds")
        if k < 2:
            raise ConfigError(f"interpret: the PSO reference path needs k >= 2, "
                              f"got k={k}")
    params = _load_params("interpret", "interpret", cv["checkpoint"], n)
    cfg = params.cfg
    if cv["instance_file"]:
        p = Path(cv["instance_file"])
        if not p.is_file():
            raise ConfigError(f"interpret: instance file not found: {p}")
        inst = instance_from_text(p.read_text())
        if inst.n != n:
            raise ConfigError(f"interpret: instance file has n={inst.n}, config "
                              f"says n={n}")
    else:
        inst = canonical_rastrigin(n)
    space = default_space(n)
    path_iters = cv["path_samples"] // k - 1 if cv["paths"] else 0
    T = max(iters, path_iters)
    rec = rollout(inst, params, k, T, seed, space)

    out_dir = _out_dir(out)
    write_resolved(out_dir, "interpret", seed, cv,
                   [key for key, _, _ in _INTERPRET_SCHEMA])

    weights = _padded_feature_weights(rec, cfg, iters)
    w_rows = [",".join([str(t + 1)] + [_fmt(w) for w in weights[t]])
              for t in range(iters)]
    (out_dir / "feature_weights.csv").write_text(
        "\n".join([WEIGHTS_HEADER] + w_rows) + "\n")
    it_axis = np.arange(1, iters + 1, dtype=float)
    svg.write_svg(out_dir / "feature_weights.svg", svg.line_chart(
        [(name, it_axis, weights[:, j]) for j, name in enumerate(FEATURE_ORDER)],
        "feature attention over iterations", "iteration", "normalized weight"))

    shares = [rec.trace_shares[t] for t in range(iters)]
    if shares[0] is not None:
        t_rows = [f"{t + 1},{_fmt(s)}" for t, s in enumerate(shares)]
        (out_dir / "trace_share.csv").write_text(
            "\n".join([TRACE_HEADER] + t_rows) + "\n")
        svg.write_svg(out_dir / "trace_share.svg", svg.line_chart(
            [("trace share", it_axis, np.array(shares, dtype=float))],
            "self-impact share of the interaction trace", "iteration", "share"))

    if cv["paths"]:
        _emit_paths(out_dir, inst, params, space, cv, seed, rec)
    _write_report(out_dir, cfg, weights, shares, iters)


def _emit_paths(out_dir: Path, inst, params, space, cv: dict, seed: int,
                rec: TrajectoryRecord) -> None:
    """First path_samples evaluation positions for meta, PSO and GD.

    The meta swarm and PSO share initial positions (same seed stream); GD
    starts from one uniform draw of its own.
    """
    k, m = cv["k"], cv["path_samples"]
    rounds = m // k
    pso = run_pso(inst, k, m, seed, space=space)
    x0 = space.uniform(rng_for(seed, BATTERY), 1)[0]
    gd = run_gd(inst, x0, cv["lr_gd"], m)
    meta_pos = np.concatenate(rec.positions[:rounds], axis=0)  # (m, 2)
    rows = []
    for label, pos in (("meta", meta_pos), ("pso", pso.positions),
                       ("gd", gd.positions)):
        width = 1 if label == "gd" else k
        rows += [",".join([label, str(i), str(i % width),
                           _fmt(pos[i, 0]), _fmt(pos[i, 1])])
                 for i in range(m)]
    (out_dir / "paths.csv").write_text("\n".join([PATHS_HEADER] + rows) + "\n")
    lines = []
    for j in range(k):
        lines.append(("meta", np.stack([rec.positions[t][j] for t in range(rounds)])))
    for j in range(k):
        lines.append(("pso", pso.positions[j::k]))
    lines.append(("gd", gd.positions))
    svg.write_svg(out_dir / "paths.svg", svg.path_chart(
        lines, space.lo, space.hi, f"first {m} samples"))


def _report_fmt(v: float) -> str:
    return format(float(v), ".6f")


def _write_report(out_dir: Path, cfg: ModelConfig, weights: np.ndarray,
                  shares: list, iters: int) -> None:
    """Qualitative summary: early-iteration feature balance, reported not
    asserted, plus the observed trace-share range."""
    early = min(6, iters)
    point = float(weights[:early, :2].sum(axis=1).mean())
    pop = float(weights[:early, 2:].sum(axis=1).mean())
    lines = [f"features = {cfg.features}",
             f"iterations = {iters}",
             f"early window = first {early} iterations",
             f"mean point-feature weight (gradient+momentum) = {_report_fmt(point)}",
             f"mean population-feature weight (velocity+attraction) = {_report_fmt(pop)}",
             f"population features dominate early iterations: "
             f"{'yes' if pop > point else 'no'}"]
    if shares and shares[0] is not None:
        arr = np.array(shares, dtype=float)
        lines.append(f"trace-share min = {_report_fmt(arr.min())}")
        lines.append(f"trace-share max = {_report_fmt(arr.max())}")
    else:
        lines.append("trace-share: not defined (no pairwise attention)")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# train


_TRAIN_SCHEMA = (
    ("family", "str", "quadratic"),
    ("alpha", "float?", None),
    ("n", "int", REQUIRED),
    ("hidden", "int", 20),
    ("level", "str", "none"),
    ("features", "str", "full"),
    ("intra", "bool", True),
    ("inter", "bool", True),
    ("step_scale", "float", 0.1),
    ("beta", "float", 0.9),
    ("attract_alpha", "float", 1.0),
    ("gamma", "float", 1.0),
    ("length_scale", "float", 1.0),
    ("epochs", "int", REQUIRED),
    ("batch", "int", 8),
    ("k", "int", _default_k),
    ("T", "int", 40),
    ("lam", "float", 0.0),
    ("C", "float", 1e-4),
    ("lr", "float", 1e-3),
    ("window", "int", 20),
    ("clip", "float", 5.0),
    ("mc_samples", "int", 1024),
    ("eps", "float", 2.1),
    ("rho0", "float", 1.0),
    ("data_cap", "int", 512),
)

_LEVEL_TRAIN = {
    "B0": {"features": "gradient", "intra": False, "inter": False, "lam": 0.0},
    "B1": {"features": "gradient", "intra": False, "inter": False, "lam": 0.0},
    "B2": {"features": "point", "intra": True, "inter": False, "lam": 0.0},
    "B3": {"features": "full", "intra": True, "inter": True, "lam": 0.0},
    "proposed": {"features": "full", "intra": True, "inter": True, "lam": 1.0},
}


def cmd_train(config_path, out, seed: int) -> None:
    raw = read_config(config_path)
    cv = resolve_config("train", raw, _TRAIN_SCHEMA)
    if cv["level"] != "none":
        if cv["level"] not in _LEVEL_TRAIN:
            raise ConfigError(f"train: unknown level '{cv['level']}', expected one "
                              f"of {list(_LEVEL_TRAIN)}")
        fixed = set(_LEVEL_TRAIN[cv["level"]]) & set(raw)
        if fixed:
            raise ConfigError(f"train: level={cv['level']} fixes "
                              f"{sorted(_LEVEL_TRAIN[cv['level']])}; remove "
                              f"{sorted(fixed)} from the config")
        cv.update(_LEVEL_TRAIN[cv["level"]])
    if cv["alpha"] is None and cv["family"] not in FAMILIES:
        raise ConfigError(f"train: unknown family '{cv['family']}', expected one "
                          f"of {sorted(FAMILIES)}")
    cfg = ModelConfig(n=cv["n"], hidden=cv["hidden"], features=cv["features"],
                      intra=cv["intra"], inter=cv["inter"],
                      step_scale=cv["step_scale"], beta=cv["beta"],
                      attract_alpha=cv["attract_alpha"], gamma=cv["gamma"],
                      length_scale=cv["length_scale"])
    post = PosteriorSettings(length_scale=cv["length_scale"], eps=cv["eps"],
                             rho0=cv["rho0"], mc_samples=cv["mc_samples"],
                             data_cap=cv["data_cap"])
    tc = TrainConfig(cfg=cfg, family=cv["family"], alpha=cv["alpha"],
                     epochs=cv["epochs"], batch=cv["batch"], k=cv["k"], T=cv["T"],
                     lam=cv["lam"], C=cv["C"], lr=cv["lr"], window=cv["window"],
                     clip=cv["clip"], seed=seed, posterior=post)
    out_dir = _out_dir(out)
    write_resolved(out_dir, "train", seed, cv, [key for key, _, _ in _TRAIN_SCHEMA])
    train(tc, out_dir)
