"""Inference over cached samples, per-video majority voting, protocol runs,
and cross-dataset experiments.

Reports are always produced at two granularities: per window (each n-frame
sample classified on its own) and per video (majority vote over the video's
window decisions, ties resolved to attack). Video-level scores are the mean
of the window scores and feed only score-based metrics; the video decision
comes from the vote alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .dataset import ATTACK, BONAFIDE, DatasetConfig
from .features import FeatureCache, NormStats, SampleTensor, normalize
from .nn import Model
from .train import TrainConfig, TrainResult, batched_scores, train

logger = logging.getLogger("livetex.eval")


@dataclass(frozen=True)
class VideoVerdict:
    video_id: str
    decisions: tuple[str, ...]
    scores: tuple[float, ...]
    final: str
    margin: int  # winning votes minus losing votes; 0 on a tie (-> attack)


def classify_sample(
    model: Model, stats: NormStats, sample: SampleTensor, threshold: float = 0.5
) -> tuple[str, float]:
    """Normalize, run inference, and threshold the bonafide probability."""
    if sample.frames.shape[1] != model.config.input_dim:
        raise ValueError(
            f"sample width {sample.frames.shape[1]} != model input {model.config.input_dim}"
        )
    score = float(model.scores(normalize(sample.frames, stats)[None])[0])
    return (BONAFIDE if score >= threshold else ATTACK), score


def majority_vote(decisions, video_id: str = "", scores=()) -> VideoVerdict:
    """Strict-majority verdict over window decisions; ties fail closed."""
    decisions = tuple(decisions)
    if not decisions:
        raise ValueError("majority vote needs at least one window decision")
    bona = sum(1 for d in decisions if d == BONAFIDE)
    attack = len(decisions) - bona
    final = BONAFIDE if bona > attack else ATTACK
    return VideoVerdict(
        video_id=video_id,
        decisions=decisions,
        scores=tuple(float(s) for s in scores),
        final=final,
        margin=abs(bona - attack),
    )


@dataclass
class EvalReport:
    window: metrics.MetricReport
    video: metrics.MetricReport
    window_outcomes: list[metrics.EvalOutcome] = field(default_factory=list)
    video_outcomes: list[metrics.EvalOutcome] = field(default_factory=list)
    verdicts: list[VideoVerdict] = field(default_factory=list)

    def to_records(self) -> list[dict]:
        return [
            {"level": "window", **self.window.to_record()},
            {"level": "video", **self.video.to_record()},
        ]

    def to_text(self) -> str:
        return (
            f"window: {self.window.to_text()}\n"
            f"video:  {self.video.to_text()}"
        )


def evaluate_samples(
    model: Model,
    stats: NormStats,
    cache: FeatureCache,
    records,
    threshold: float = 0.5,
) -> EvalReport:
    """Score cached samples and aggregate both report granularities."""
    if not records:
        raise ValueError("no samples selected for evaluation")
    x = normalize(cache.load_matrix(records), stats)
    scores = batched_scores(model, x)

    window_outcomes = []
    by_video: dict[str, list[tuple[float, metrics.EvalOutcome]]] = {}
    video_meta: dict[str, tuple[str, str, dict]] = {}
    for rec, score in zip(records, scores):
        outcome = metrics.outcome_from_score(
            float(score),
            rec.label,
            threshold=threshold,
            fine_label=rec.fine_label,
            video_id=rec.video_id,
            attrs=rec.attrs,
        )
        window_outcomes.append(outcome)
        by_video.setdefault(rec.video_id, []).append((float(score), outcome))
        video_meta[rec.video_id] = (rec.label, rec.fine_label, rec.attrs)

    verdicts = []
    video_outcomes = []
    for video_id, entries in by_video.items():
        vid_scores = [s for s, _ in entries]
        verdict = majority_vote(
            [o.predicted for _, o in entries], video_id=video_id, scores=vid_scores
        )
        verdicts.append(verdict)
        label, fine_label, attrs = video_meta[video_id]
        video_outcomes.append(
            metrics.EvalOutcome(
                score=float(np.mean(vid_scores)),
                predicted=verdict.final,
                label=label,
                fine_label=fine_label,
                video_id=video_id,
                attrs=attrs,
            )
        )

    return EvalReport(
        window=metrics.summarize(window_outcomes),
        video=metrics.summarize(video_outcomes),
        window_outcomes=window_outcomes,
        video_outcomes=video_outcomes,
        verdicts=verdicts,
    )


def run_protocol(
    model: Model,
    stats: NormStats,
    cache: FeatureCache,
    protocol: str = "all",
    split: str = "testing",
    threshold: float = 0.5,
) -> EvalReport:
    """Evaluate one split under a protocol at window and video level."""
    records = cache.select(split, protocol)
    if not records:
        raise ValueError(f"protocol {protocol!r} leaves no samples in split {split!r}")
    return evaluate_samples(model, stats, cache, records, threshold=threshold)


@dataclass
class CrossDatasetReport:
    train_datasets: list[str]
    test_dataset: str
    window_hter: float
    video_hter: float
    report: EvalReport
    train_result: TrainResult


class _UnionCache:
    """Duck-typed FeatureCache over several caches, with users qualified by
    dataset name so identically named users from different sources never
    collide in split selection or the leakage audit."""

    def __init__(self, caches: list[FeatureCache]):
        first_spec = caches[0].spec.to_dict()
        if any(c.spec.to_dict() != first_spec for c in caches[1:]):
            raise ValueError("cross-dataset training needs identical feature specs")
        frames = {c.frames_per_sample for c in caches}
        if len(frames) != 1:
            raise ValueError("cross-dataset training needs one sample length")
        self.spec = caches[0].spec
        self.frames_per_sample = caches[0].frames_per_sample
        self.stride = caches[0].stride
        self._entries = []  # (cache, sample, qualified record)
        splits = {"training": [], "validation": [], "testing": []}
        for c in caches:
            for split_name, users in c.dataset.splits.items():
                splits.setdefault(split_name, []).extend(
                    f"{c.dataset.name}/{u}" for u in users
                )
            for s in c.samples:
                qualified = replace(
                    s,
                    user_id=f"{c.dataset.name}/{s.user_id}",
                    video_id=f"{c.dataset.name}/{s.video_id}",
                )
                self._entries.append((c, s, qualified))
        self.dataset = DatasetConfig(
            name="+".join(c.dataset.name for c in caches),
            splits=splits,
            protocols={"all": {}},
        )
        self.samples = [q for _, _, q in self._entries]
        self._source = {id(q): (c, s) for c, s, q in self._entries}

    def select(self, split_name: str, protocol_name: str = "all"):
        split = self.dataset.split(split_name)
        proto = self.dataset.protocol(protocol_name)
        return [
            q
            for q in self.samples
            if q.user_id in split.users and proto.matches(split_name, q.attrs)
        ]

    def load_matrix(self, records) -> np.ndarray:
        if not records:
            return np.zeros((0, self.frames_per_sample, self.spec.feature_dim))
        rows = []
        for q in records:
            cache, sample = self._source[id(q)]
            rows.append(cache.load_sample(sample).frames)
        return np.stack(rows)


def cross_dataset(
    train_caches: list[FeatureCache],
    test_cache: FeatureCache,
    config: TrainConfig,
    out_dir,
    threshold: float = 0.5,
) -> CrossDatasetReport:
    """Train on the union of the training caches, report HTER on the whole
    held-out dataset at both granularities."""
    train_names = [c.dataset.name for c in train_caches]
    if len(set(train_names)) != len(train_names):
        raise ValueError(f"duplicate training dataset names: {train_names}")
    if test_cache.dataset.name in train_names:
        raise ValueError(
            f"test dataset {test_cache.dataset.name!r} appears in the training list"
        )

    union = _UnionCache(train_caches)
    result = train(config, union, out_dir)
    if result.diverged or result.checkpoint_path is None:
        raise RuntimeError("cross-dataset training did not produce a usable model")

    # the full test dataset: every cached sample, all splits
    report = evaluate_samples(
        result.model, result.norm, test_cache, list(test_cache.samples),
        threshold=threshold,
    )
    window_hter = metrics.hter(report.window_outcomes)
    video_hter = metrics.hter(report.video_outcomes)
    logger.info(
        "cross-dataset %s -> %s: window HTER %.4f, video HTER %.4f",
        "+".join(train_names), test_cache.dataset.name, window_hter, video_hter,
    )
    return CrossDatasetReport(
        train_datasets=train_names,
        test_dataset=test_cache.dataset.name,
        window_hter=window_hter,
        video_hter=video_hter,
        report=report,
        train_result=result,
    )
