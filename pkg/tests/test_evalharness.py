import numpy as np
import pytest

from conftest import make_toy_cache
from livetex.evalharness import (
    classify_sample,
    cross_dataset,
    evaluate_samples,
    majority_vote,
    run_protocol,
)
from livetex.features import SampleTensor
from livetex.train import TrainConfig, train


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("harness")
    cache = make_toy_cache(root / "toy")
    result = train(
        TrainConfig(variant="dual", hidden=8, epochs=5, batch_size=4,
                    learning_rate=1e-2, seed=1),
        cache, root / "run",
    )
    return cache, result


class TestClassifySample:
    def test_deterministic(self, trained):
        cache, result = trained
        sample = cache.load_sample(cache.samples[0])
        a = classify_sample(result.model, result.norm, sample)
        b = classify_sample(result.model, result.norm, sample)
        assert a == b
        assert 0.0 <= a[1] <= 1.0

    def test_width_mismatch_errors(self, trained):
        _, result = trained
        bad = SampleTensor(np.zeros((4, 7)))
        with pytest.raises(ValueError):
            classify_sample(result.model, result.norm, bad)

    def test_decision_matches_threshold(self, trained):
        cache, result = trained
        for rec in cache.samples[:6]:
            decision, score = classify_sample(result.model, result.norm,
                                              cache.load_sample(rec))
            assert decision == ("bonafide" if score >= 0.5 else "attack")


class TestMajorityVote:
    def test_two_one(self):
        v = majority_vote(["attack", "attack", "bonafide"])
        assert v.final == "attack"
        assert v.margin == 1

    def test_single_window(self):
        assert majority_vote(["bonafide"]).final == "bonafide"

    def test_tie_fails_closed(self):
        v = majority_vote(["attack", "bonafide"])
        assert v.final == "attack"
        assert v.margin == 0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        decisions = ["bonafide"] * 5 + ["attack"] * 3
        base = majority_vote(decisions).final
        for _ in range(10):
            rng.shuffle(decisions)
            assert majority_vote(decisions).final == base

    def test_zero_windows_errors(self):
        with pytest.raises(ValueError):
            majority_vote([])


class TestRunProtocol:
    def test_full_split_equals_always_true_protocol(self, trained):
        cache, result = trained
        report = run_protocol(result.model, result.norm, cache,
                              protocol="all", split="testing")
        manual = evaluate_samples(result.model, result.norm, cache,
                                  cache.select("testing"))
        assert report.window.to_record() == manual.window.to_record()
        assert report.video.to_record() == manual.video.to_record()

    def test_both_granularities_present(self, trained):
        cache, result = trained
        report = run_protocol(result.model, result.norm, cache, split="testing")
        assert report.window.n == len(cache.select("testing"))
        assert report.video.n == len({s.video_id for s in cache.select("testing")})
        assert len(report.verdicts) == report.video.n

    def test_empty_selection_errors(self, trained):
        cache, result = trained
        cache.dataset.protocols["nothing"] = {"testing": {"session": ["99"]}}
        with pytest.raises(ValueError):
            run_protocol(result.model, result.norm, cache,
                         protocol="nothing", split="testing")

    def test_video_verdicts_from_window_decisions(self, trained):
        cache, result = trained
        report = run_protocol(result.model, result.norm, cache, split="testing")
        for verdict in report.verdicts:
            assert verdict.final == majority_vote(verdict.decisions).final

    def test_report_records_shape(self, trained):
        cache, result = trained
        report = run_protocol(result.model, result.norm, cache, split="testing")
        records = report.to_records()
        assert [r["level"] for r in records] == ["window", "video"]
        assert "window:" in report.to_text()


class TestCrossDataset:
    def test_duplicate_train_names_error(self, tmp_path):
        a = make_toy_cache(tmp_path / "a", name="same")
        b = make_toy_cache(tmp_path / "b", name="same", seed=9)
        with pytest.raises(ValueError, match="duplicate"):
            cross_dataset([a, b], make_toy_cache(tmp_path / "c", name="other"),
                          TrainConfig(hidden=8, epochs=2), tmp_path / "out")

    def test_test_in_train_error(self, tmp_path):
        a = make_toy_cache(tmp_path / "a", name="da")
        b = make_toy_cache(tmp_path / "b", name="db", seed=9)
        with pytest.raises(ValueError, match="training list"):
            cross_dataset([a, b], a, TrainConfig(hidden=8, epochs=2), tmp_path / "out")

    def test_cross_run_produces_finite_hter(self, tmp_path):
        a = make_toy_cache(tmp_path / "a", name="da", seed=5)
        b = make_toy_cache(tmp_path / "b", name="db", seed=9, separation=0.3)
        c = make_toy_cache(tmp_path / "c", name="dc", seed=13, separation=0.35)
        report = cross_dataset(
            [a, b], c,
            TrainConfig(variant="dual", hidden=8, epochs=4, batch_size=4,
                        learning_rate=1e-2, seed=2),
            tmp_path / "out",
        )
        assert np.isfinite(report.window_hter)
        assert np.isfinite(report.video_hter)
        assert report.train_datasets == ["da", "db"]
        assert report.test_dataset == "dc"
        # the whole test dataset is evaluated, not just one split
        assert report.report.window.n == len(c.samples)

    def test_union_counts_cover_both_sources(self, tmp_path):
        from livetex.evalharness import _UnionCache

        a = make_toy_cache(tmp_path / "a", name="da")
        b = make_toy_cache(tmp_path / "b", name="db", seed=9)
        union = _UnionCache([a, b])
        assert len(union.samples) == len(a.samples) + len(b.samples)
        train_sel = union.select("training")
        assert {s.user_id.split("/")[0] for s in train_sel} == {"da", "db"}
        matrix = union.load_matrix(train_sel[:3])
        assert matrix.shape == (3, a.frames_per_sample, a.spec.feature_dim)

    def test_mismatched_specs_rejected(self, tmp_path):
        from livetex.evalharness import _UnionCache
        from livetex.features import HistogramSpec
        from livetex.lbp import LbpParams

        a = make_toy_cache(tmp_path / "a", name="da")
        other_spec = HistogramSpec(4, 4, LbpParams(8, 1.0), ("hsv",))
        b = make_toy_cache(tmp_path / "b", name="db", spec=other_spec)
        with pytest.raises(ValueError, match="identical feature specs"):
            _UnionCache([a, b])

    def test_no_test_user_in_training_audit(self, tmp_path):
        # same raw user ids on both sides must not collide after qualification
        a = make_toy_cache(tmp_path / "a", name="da")
        c = make_toy_cache(tmp_path / "c", name="dc", seed=13)
        report = cross_dataset(
            [a], c, TrainConfig(hidden=8, epochs=2, batch_size=4, seed=0),
            tmp_path / "out",
        )
        trained_users = {f"da/{u}" for u in a.dataset.splits["training"]}
        test_users = {f"dc/{s.user_id}" for s in c.samples}
        assert trained_users.isdisjoint(test_users)
        assert report.window_hter is not None
