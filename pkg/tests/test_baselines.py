"""Reference optimizers and ablation ladder: analytic checks and run oracles."""

import numpy as np
import pytest

from metaswarm.baselines import (
    ABLATION_LEVELS,
    ablation_lambda,
    ablation_model_config,
    check_level_params,
    restart_seed,
    run_ablation,
    run_adam,
    run_gd,
    run_lstm_restarts,
    run_pso,
    run_sgd,
)
from metaswarm.errors import ConfigError
from metaswarm.model import ModelConfig, init_params, rollout
from metaswarm.objectives import FunctionInstance, canonical_rastrigin, default_space


def _bowl(n=2):
    return FunctionInstance("quadratic", np.eye(n), np.zeros(n), np.zeros(n), 0.0)


def test_gd_contracts_the_bowl_at_the_analytic_rate():
    res = run_gd(_bowl(), [1.0, 1.0], lr=0.4, budget=10)
    assert not res.diverged
    assert res.curve[0] == pytest.approx(2.0)
    for i in range(1, 10):
        assert res.curve[i] / res.curve[i - 1] == pytest.approx(0.04, rel=1e-12)


def test_gd_above_stability_threshold_diverges():
    res = run_gd(_bowl(), [1.0, 1.0], lr=1.5, budget=2000)
    assert res.diverged
    assert res.curve.shape == (2000,)
    assert np.all(np.diff(res.curve) <= 0)
    assert res.curve[-1] == res.curve[0] == pytest.approx(2.0)


def test_sgd_equals_gd_on_deterministic_objectives():
    inst = canonical_rastrigin(3)
    a = run_gd(inst, [1.2, -0.7, 2.2], lr=0.01, budget=50)
    b = run_sgd(inst, [1.2, -0.7, 2.2], lr=0.01, budget=50)
    np.testing.assert_array_equal(a.curve, b.curve)


def test_adam_makes_progress_on_the_bowl():
    res = run_adam(_bowl(), [0.5, -0.5], lr=1e-2, budget=2000)
    assert not res.diverged
    assert res.curve.shape == (2000,)
    assert np.all(np.diff(res.curve) <= 0)
    assert res.curve[-1] < 1e-4


def test_pso_initialized_at_the_optimum_stays_there():
    inst = canonical_rastrigin(2)
    res = run_pso(inst, k=4, budget=40, seed=1, x0=np.zeros((4, 2)))
    np.testing.assert_array_equal(res.curve, np.zeros(40))


def test_pso_solves_the_sphere_for_most_seeds():
    inst = _bowl()
    hits = 0
    for seed in range(100):
        res = run_pso(inst, k=10, budget=1000, seed=seed)
        if res.curve[-1] < 1e-3:
            hits += 1
    assert hits >= 90


def test_pso_is_deterministic_per_seed():
    inst = canonical_rastrigin(2)
    a = run_pso(inst, k=5, budget=200, seed=7)
    b = run_pso(inst, k=5, budget=200, seed=7)
    np.testing.assert_array_equal(a.curve, b.curve)
    c = run_pso(inst, k=5, budget=200, seed=8)
    assert not np.array_equal(a.curve, c.curve)


def test_pso_input_validation():
    inst = canonical_rastrigin(2)
    with pytest.raises(ConfigError):
        run_pso(inst, k=1, budget=10, seed=0)
    with pytest.raises(ConfigError):
        run_pso(inst, k=3, budget=100, seed=0)
    with pytest.raises(ConfigError):
        run_pso(inst, k=2, budget=10, seed=0, x0=np.zeros((3, 2)))


def test_single_restart_reproduces_the_plain_rollout():
    inst = canonical_rastrigin(2)
    cfg = ablation_model_config("B0", n=2, hidden=4)
    params = init_params(cfg, seed=2)
    res = run_lstm_restarts(inst, params, restarts=1, budget=20, seed=3)
    rec = rollout(inst, params, k=1, T=19, seed=restart_seed(3, 0))
    np.testing.assert_array_equal(res.curve, rec.best_curve)


def test_more_restarts_never_finish_worse():
    inst = canonical_rastrigin(2)
    cfg = ablation_model_config("B0", n=2, hidden=4)
    params = init_params(cfg, seed=4)
    one = run_lstm_restarts(inst, params, restarts=1, budget=30, seed=5)
    three = run_lstm_restarts(inst, params, restarts=3, budget=90, seed=5)
    assert three.curve[-1] <= one.curve[-1]


def test_all_curves_have_exactly_budget_entries():
    inst = canonical_rastrigin(2)
    assert run_gd(inst, [1.0, 1.0], 0.01, 37).curve.shape == (37,)
    assert run_adam(inst, [1.0, 1.0], 0.01, 37).curve.shape == (37,)
    assert run_pso(inst, k=5, budget=35, seed=0).curve.shape == (35,)
    cfg = ablation_model_config("B0", n=2, hidden=4)
    params = init_params(cfg, seed=0)
    assert run_lstm_restarts(inst, params, restarts=2, budget=40, seed=0).curve.shape == (40,)


def test_ablation_levels_cover_every_switch():
    assert ABLATION_LEVELS == ("B0", "B1", "B2", "B3", "proposed")
    b0 = ablation_model_config("B0", n=3)
    assert (b0.features, b0.intra, b0.inter) == ("gradient", False, False)
    b2 = ablation_model_config("B2", n=3)
    assert (b2.features, b2.intra, b2.inter) == ("point", True, False)
    b3 = ablation_model_config("B3", n=3)
    prop = ablation_model_config("proposed", n=3)
    assert b3 == prop
    assert ablation_lambda("B3") == 0.0 and ablation_lambda("proposed") == 1.0
    with pytest.raises(ConfigError):
        ablation_model_config("B7", n=3)


def test_mismatched_checkpoint_level_rejected():
    params = init_params(ablation_model_config("B2", n=2, hidden=4), seed=0)
    check_level_params("B2", params)
    with pytest.raises(ConfigError):
        check_level_params("B3", params)
    with pytest.raises(ConfigError):
        check_level_params("B0", params)


def test_run_ablation_budget_accounting():
    inst = canonical_rastrigin(2)
    b3 = init_params(ablation_model_config("B3", n=2, hidden=4), seed=1)
    res = run_ablation("B3", b3, inst, k=4, budget=40, seed=2)
    assert res.curve.shape == (40,)
    assert np.all(np.diff(res.curve) <= 0)
    b0 = init_params(ablation_model_config("B0", n=2, hidden=4), seed=1)
    assert run_ablation("B0", b0, inst, k=4, budget=40, seed=2).curve.shape == (40,)
    assert run_ablation("B1", b0, inst, k=4, budget=40, seed=2).curve.shape == (40,)
    with pytest.raises(ConfigError):
        run_ablation("B3", b3, inst, k=7, budget=40, seed=2)
