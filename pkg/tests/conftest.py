"""Session-scoped trained checkpoints shared by the end-to-end acceptance tests.

Training a meta-optimizer even at desk scale takes minutes per model, so the
models used by several acceptance checks are trained once per session here.
Every ablation level uses one uniform recipe — identical horizon, batch size,
learning rate and seed — so that differences between levels are attributable
to the architecture flags and the entropy weight alone.
"""

import pytest

from metaswarm.model import ModelConfig
from metaswarm.posterior import PosteriorSettings
from metaswarm.training import TrainConfig, train

DESK_EPOCHS = 400
DESK_T = 60
DESK_BATCH = 2
DESK_LR = 5e-3
DESK_SEED = 0
DESK_MC = 512

# Architecture flags, population size and entropy weight per ablation level.
LEVEL_RECIPE = {
    "b0": dict(features="gradient", intra=False, inter=False, k=1, lam=0.0),
    "b2": dict(features="point", intra=True, inter=False, k=10, lam=0.0),
    "b3": dict(features="full", intra=True, inter=True, k=10, lam=0.0),
    "prop": dict(features="full", intra=True, inter=True, k=10, lam=1.0),
}


def train_desk(out_dir, *, n, features, intra, inter, k, lam, alpha=None,
               family="rastrigin-family", epochs=DESK_EPOCHS, T=DESK_T):
    """Train one desk-scale model into out_dir and return its parameters."""
    cfg = ModelConfig(n=n, features=features, intra=intra, inter=inter)
    tc = TrainConfig(cfg=cfg, family=family, alpha=alpha, epochs=epochs,
                     batch=DESK_BATCH, k=k, T=T, lam=lam, lr=DESK_LR,
                     seed=DESK_SEED,
                     posterior=PosteriorSettings(mc_samples=DESK_MC))
    params, _ = train(tc, out_dir)
    return params


@pytest.fixture(scope="session")
def ablation_checkpoints(tmp_path_factory):
    """Checkpoint paths for the four trained ablation-level models (10-D)."""
    root = tmp_path_factory.mktemp("ablation-ckpts")
    out = {}
    for name, recipe in LEVEL_RECIPE.items():
        print(f"\n[fixture] training ablation level {name} "
              f"({DESK_EPOCHS} epochs, k={recipe['k']}) ...", flush=True)
        train_desk(root / name, n=10, **recipe)
        out[name] = root / name / "checkpoint.ckpt"
    return out


@pytest.fixture(scope="session")
def alpha_checkpoints(tmp_path_factory, ablation_checkpoints):
    """Ripple-weight sweep models: alpha=10 training draws the same instances
    as the rastrigin-family proposal model bit for bit, so that checkpoint is
    reused; only the alpha=0 model is trained fresh."""
    root = tmp_path_factory.mktemp("alpha-ckpts")
    print("\n[fixture] training alpha=0 model "
          f"({DESK_EPOCHS} epochs, k=10) ...", flush=True)
    train_desk(root / "alpha0", n=10, features="full", intra=True, inter=True,
               k=10, lam=1.0, alpha=0.0)
    return {0.0: root / "alpha0" / "checkpoint.ckpt",
            10.0: ablation_checkpoints["prop"]}


@pytest.fixture(scope="session")
def interpret_checkpoint(tmp_path_factory):
    """A modest 2-D model of the full architecture for interpretation runs."""
    root = tmp_path_factory.mktemp("interpret-ckpt")
    print("\n[fixture] training 2-D interpretation model (150 epochs) ...",
          flush=True)
    train_desk(root / "model", n=2, features="full", intra=True, inter=True,
               k=4, lam=1.0, epochs=150, T=40)
    return root / "model" / "checkpoint.ckpt"
