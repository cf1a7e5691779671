import json

import numpy as np
import pytest

from conftest import make_toy_cache
from livetex import nn
from livetex.train import (
    LeakageError,
    TrainConfig,
    rmsprop_init,
    rmsprop_step,
    train,
)


class TestRmsprop:
    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = rmsprop_init(params, learning_rate=0.1, decay=0.9)
        state.avg_sq["w"][:] = 0.5
        rmsprop_step(params, {"w": np.zeros(2)}, state)
        assert params["w"].tolist() == [1.0, -2.0]
        assert np.allclose(state.avg_sq["w"], 0.45)  # decays by alpha

    def test_scalar_update_formula(self):
        # oracle: evaluate the update by hand
        lr, decay, eps = 0.01, 0.9, 1e-8
        s = (1 - decay) * 1.0**2
        expected_theta = 0.0 - lr * 1.0 / (np.sqrt(s) + eps)
        assert expected_theta == pytest.approx(-0.031622776, abs=1e-9)

        params = {"w": np.array([0.0])}
        state = rmsprop_init(params, lr, decay, eps)
        rmsprop_step(params, {"w": np.array([1.0])}, state)
        assert state.avg_sq["w"][0] == pytest.approx(0.1)
        assert params["w"][0] == pytest.approx(expected_theta, abs=1e-12)

    def test_second_identical_step_smaller(self):
        params = {"w": np.array([0.0])}
        state = rmsprop_init(params, 0.01, 0.9, 1e-8)
        rmsprop_step(params, {"w": np.array([1.0])}, state)
        first = abs(params["w"][0])
        before = params["w"][0]
        rmsprop_step(params, {"w": np.array([1.0])}, state)
        second = abs(params["w"][0] - before)
        assert second < first

    def test_nonfinite_gradient_aborts(self):
        params = {"w": np.array([0.0])}
        state = rmsprop_init(params)
        with pytest.raises(FloatingPointError):
            rmsprop_step(params, {"w": np.array([np.nan])}, state)

    def test_underscore_entries_skipped(self):
        params = {"w": np.array([0.0])}
        state = rmsprop_init(params)
        rmsprop_step(params, {"w": np.array([0.0]), "_input": np.array([np.inf])}, state)


@pytest.fixture()
def toy_cache(tmp_path):
    return make_toy_cache(tmp_path / "toy")


def quick_config(**kw):
    defaults = dict(variant="dual", hidden=8, epochs=4, batch_size=4,
                    learning_rate=1e-2, seed=3)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestTrainLoop:
    def test_separable_toy_reaches_perfect_validation(self, toy_cache, tmp_path):
        result = train(quick_config(epochs=5), toy_cache, tmp_path / "run")
        assert not result.diverged
        assert any(h["val_balanced_accuracy"] == 1.0 for h in result.history)

    def test_history_file_matches_records(self, toy_cache, tmp_path):
        result = train(quick_config(), toy_cache, tmp_path / "run")
        lines = (tmp_path / "run" / "history.jsonl").read_text().splitlines()
        assert len(lines) == len(result.history)
        first = json.loads(lines[0])
        assert set(first) == {"epoch", "train_loss", "val_balanced_accuracy", "val_acer"}

    def test_same_seed_identical_history(self, toy_cache, tmp_path):
        a = train(quick_config(), toy_cache, tmp_path / "a")
        b = train(quick_config(), toy_cache, tmp_path / "b")
        assert a.history == b.history

    def test_different_seed_different_history(self, toy_cache, tmp_path):
        a = train(quick_config(seed=3), toy_cache, tmp_path / "a")
        b = train(quick_config(seed=4), toy_cache, tmp_path / "b")
        assert a.history != b.history

    def test_leakage_guard(self, toy_cache, tmp_path):
        # claim a training user also holds validation videos
        toy_cache.dataset.splits["validation"].append(
            toy_cache.dataset.splits["training"][0]
        )
        with pytest.raises(LeakageError):
            train(quick_config(), toy_cache, tmp_path / "run")

    def test_checkpoint_roundtrip_reproduces_metrics(self, toy_cache, tmp_path):
        from livetex.features import normalize
        from livetex.train import _split_metrics

        result = train(quick_config(), toy_cache, tmp_path / "run")
        val = toy_cache.select("validation")
        x = normalize(toy_cache.load_matrix(val), result.norm)
        labels = [s.label for s in val]
        before = _split_metrics(result.model, x, labels)

        model2, norm2, *_ = nn.load_checkpoint(result.checkpoint_path)
        x2 = normalize(toy_cache.load_matrix(val), norm2)
        after = _split_metrics(model2, x2, labels)
        assert before == after

    def test_best_epoch_recorded(self, toy_cache, tmp_path):
        result = train(quick_config(), toy_cache, tmp_path / "run")
        assert result.best_epoch is not None
        assert result.checkpoint_path.exists()
        best = result.history[result.best_epoch - 1]["val_balanced_accuracy"]
        assert best == max(h["val_balanced_accuracy"] for h in result.history)

    def test_divergence_stops_training(self, toy_cache, tmp_path):
        result = train(quick_config(learning_rate=1e300, epochs=10),
                       toy_cache, tmp_path / "run")
        assert result.diverged
        assert len(result.history) < 10

    def test_empty_training_split_errors(self, toy_cache, tmp_path):
        toy_cache.dataset.splits["training"] = []
        with pytest.raises(ValueError):
            train(quick_config(), toy_cache, tmp_path / "run")

    def test_batch_of_duplicates_matches_single_sample_loss(self):
        model = nn.Model(nn.ModelConfig("dual", input_dim=6, hidden=4, seed=0))
        x = np.random.default_rng(0).normal(size=(1, 3, 6))
        single = model.loss(model.forward(x)[0], [1])
        batch = np.repeat(x, 4, axis=0)
        batched = model.loss(model.forward(batch)[0], [1, 1, 1, 1])
        assert batched == pytest.approx(single, rel=1e-12)
