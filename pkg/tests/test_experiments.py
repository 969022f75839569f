from pathlib import Path

from mganet.config import Order, ToyConfig, load_run_config
from mganet.experiments import ABLATIONS, ablation_model, prepare_toy, run_ablation, toy_training_config, train_toy

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def test_ablation_grid_covers_order_and_every_stage():
    models = {name: ablation_model(name).mga for name in ABLATIONS}
    assert models["coarse_fine"].order is Order.COARSE_FINE
    assert models["fine_coarse"].order is Order.FINE_COARSE
    for stage in ("global", "local", "frame"):
        cfg = models[f"no_{stage}"]
        assert not getattr(cfg, f"{stage}_stage")
        assert sum((cfg.global_stage, cfg.local_stage, cfg.frame_stage)) == 2


def test_toy_recipe_matches_the_shipped_config():
    cfg = load_run_config(SCRIPTS / "toy_tiny.cfg")
    recipe = toy_training_config()
    assert cfg.model.preset == "tiny"
    for key in ("lr", "warmup_steps", "ema_alpha", "ramp_epochs"):
        assert getattr(cfg.training, key) == getattr(recipe, key)


def test_small_runs_produce_curves_and_scores():
    data = prepare_toy(ToyConfig(n_strong=2, n_weak=1, n_unlabeled=1, n_holdout=1), seed=0)
    assert (len(data.split.strong), len(data.split.weak), len(data.split.unlabeled), len(data.holdout)) == (2, 1, 1, 1)
    result = train_toy(data, training=toy_training_config(epochs=2), eval_every=1)
    assert [p.epoch for p in result.curve] == [1, 2]
    assert not result.timed_out
    (score,) = run_ablation(data, epochs=1, names=["no_frame"])
    assert score.name == "no_frame" and score.holdout_bce > 0
