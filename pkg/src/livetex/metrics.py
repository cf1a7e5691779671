"""Presentation-attack error rates and accuracy metrics.

Bonafide is the positive class: TP/FN count bonafide samples, FP/TN count
attacks. APCER is the attack-misaccept rate, BPCER the bonafide-misreject
rate, ACER their mean. Balanced accuracy is evaluated as 1 - ACER, which is
the same real number as (TPR + TNR) / 2 and keeps the two metrics in exact
floating-point agreement. When a class is empty, APCER/BPCER/ACER are
reported as absent (None); HTER and balanced accuracy require both classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ATTACK, BONAFIDE


@dataclass(frozen=True)
class EvalOutcome:
    """One classified sample: bonafide probability, decision, and truth."""

    score: float
    predicted: str
    label: str
    fine_label: str = ""
    video_id: str = ""
    attrs: dict = field(default_factory=dict)


def outcome_from_score(
    score: float,
    label: str,
    threshold: float = 0.5,
    fine_label: str = "",
    video_id: str = "",
    attrs: dict | None = None,
) -> EvalOutcome:
    if not np.isfinite(score) or not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    predicted = BONAFIDE if score >= threshold else ATTACK
    return EvalOutcome(score, predicted, label, fine_label, video_id, attrs or {})


def confusion(outcomes) -> dict[str, int]:
    counts = {"TP": 0, "TN": 0, "FP": 0, "FN": 0}
    if not outcomes:
        raise ValueError("no outcomes")
    for o in outcomes:
        if o.label == BONAFIDE:
            counts["TP" if o.predicted == BONAFIDE else "FN"] += 1
        else:
            counts["FP" if o.predicted == BONAFIDE else "TN"] += 1
    return counts


def apcer(outcomes) -> float | None:
    """Attacks misclassified as bonafide over all attacks; None without attacks."""
    c = confusion(outcomes)
    attacks = c["FP"] + c["TN"]
    return c["FP"] / attacks if attacks else None


def bpcer(outcomes) -> float | None:
    """Bonafide misclassified as attack over all bonafide; None without bonafide."""
    c = confusion(outcomes)
    bona = c["TP"] + c["FN"]
    return c["FN"] / bona if bona else None


def acer(outcomes) -> float | None:
    a, b = apcer(outcomes), bpcer(outcomes)
    if a is None or b is None:
        return None
    return (a + b) / 2.0


def hter(outcomes) -> float:
    """(FPR + FNR) / 2; requires both classes."""
    c = confusion(outcomes)
    if c["FP"] + c["TN"] == 0 or c["TP"] + c["FN"] == 0:
        raise ValueError("HTER needs both bonafide and attack samples")
    fpr = c["FP"] / (c["FP"] + c["TN"])
    fnr = c["FN"] / (c["FN"] + c["TP"])
    return (fpr + fnr) / 2.0


def balanced_accuracy(outcomes) -> float:
    """(TPR + TNR) / 2, evaluated as 1 - ACER (bit-exact complement)."""
    value = acer(outcomes)
    if value is None:
        raise ValueError("balanced accuracy needs both bonafide and attack samples")
    return 1.0 - value


def roc_auc(outcomes) -> float:
    """Probability a random bonafide outscores a random attack, ties at 1/2.

    Mann-Whitney statistic via average ranks, O(n log n).
    """
    scores = np.array([o.score for o in outcomes], dtype=np.float64)
    positive = np.array([o.label == BONAFIDE for o in outcomes])
    n_pos = int(positive.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both bonafide and attack samples")
    _, inverse, tie_counts = np.unique(scores, return_inverse=True, return_counts=True)
    # 1-based average rank of each tie group
    upper = np.cumsum(tie_counts)
    avg_rank = upper - (tie_counts - 1) / 2.0
    rank_sum = avg_rank[inverse][positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricReport:
    n: int
    n_bonafide: int
    n_attack: int
    apcer: float | None
    bpcer: float | None
    acer: float | None
    hter: float | None
    balanced_accuracy: float | None
    roc_auc: float | None

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "n_bonafide": self.n_bonafide,
            "n_attack": self.n_attack,
            "apcer": self.apcer,
            "bpcer": self.bpcer,
            "acer": self.acer,
            "hter": self.hter,
            "balanced_accuracy": self.balanced_accuracy,
            "roc_auc": self.roc_auc,
        }

    def to_text(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.4f}"

        return (
            f"n={self.n} bonafide={self.n_bonafide} attack={self.n_attack}  "
            f"bal_acc={fmt(self.balanced_accuracy)} acer={fmt(self.acer)} "
            f"apcer={fmt(self.apcer)} bpcer={fmt(self.bpcer)} "
            f"hter={fmt(self.hter)} auc={fmt(self.roc_auc)}"
        )


def summarize(outcomes) -> MetricReport:
    """Full report; metrics that need a missing class come back as None."""
    c = confusion(outcomes)
    both = (c["FP"] + c["TN"] > 0) and (c["TP"] + c["FN"] > 0)
    return MetricReport(
        n=len(outcomes),
        n_bonafide=c["TP"] + c["FN"],
        n_attack=c["FP"] + c["TN"],
        apcer=apcer(outcomes),
        bpcer=bpcer(outcomes),
        acer=acer(outcomes),
        hter=hter(outcomes) if both else None,
        balanced_accuracy=balanced_accuracy(outcomes) if both else None,
        roc_auc=roc_auc(outcomes) if both else None,
    )


def grouped_report(outcomes, group_by: str) -> dict[str, MetricReport]:
    """Metrics per attribute value. ``group_by`` may be "fine_label" or any
    session attribute; it must be present on every outcome."""
    groups: dict[str, list[EvalOutcome]] = {}
    for o in outcomes:
        if group_by == "fine_label":
            key = o.fine_label
        else:
            if group_by not in o.attrs:
                raise KeyError(f"outcome {o.video_id!r} lacks attribute {group_by!r}")
            key = o.attrs[group_by]
        groups.setdefault(key, []).append(o)
    return {key: summarize(items) for key, items in sorted(groups.items())}
