"""Classification metrics, threshold tuning, ROC/AUC, hierarchy and
embedding-similarity diagnostics.

Threshold comparisons are inclusive: predict positive iff score >= threshold.
Undefined precision/recall (empty denominator) is reported as None, never 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MetricsReport:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def accuracy(self):
        return (self.tp + self.tn) / (self.tp + self.fp + self.tn + self.fn)

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
        }


def _split_scored(scored):
    scores = np.asarray([s for s, _ in scored], dtype=np.float64)
    labels = np.asarray([y for _, y in scored], dtype=np.int64)
    if not np.isfinite(scores).all():
        raise ConfigError("scores must be finite")
    if scores.size and (scores.min() < 0 or scores.max() > 1):
        raise ConfigError("scores must lie in [0, 1]")
    return scores, labels


def confusion_metrics(scored, threshold):
    if not scored:
        raise ConfigError("confusion_metrics requires at least one example")
    scores, labels = _split_scored(scored)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return MetricsReport(threshold=float(threshold), tp=tp, fp=fp, tn=tn, fn=fn)


def roc_curve(scored):
    """((FPR, TPR) points from (0,0) to (1,1), trapezoid AUC).

    Thresholds sweep the distinct observed scores descending; tied scores
    move as a block, which makes the trapezoid AUC equal the pairwise
    win-probability with ties counted 1/2.
    """
    scores, labels = _split_scored(scored)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("roc_curve requires both classes present")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[j] == scores[i]:
            tp += int(labels[j] == 1)
            fp += int(labels[j] == 0)
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, auc


def auc_pairwise(scored):
    """O(n^2) oracle: P(random positive outscores random negative), ties 1/2."""
    scores, labels = _split_scored(scored)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ConfigError("auc_pairwise requires both classes present")
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins) / (pos.size * neg.size)


@dataclass(frozen=True)
class ThresholdResult:
    attainable: bool
    report: MetricsReport | None

    @property
    def threshold(self):
        return self.report.threshold if self.report else None


def tune_threshold(scored, target_precision):
    """Smallest observed-score threshold with precision >= target."""
    scores, labels = _split_scored(scored)
    if labels.sum() in (0, labels.size):
        raise ConfigError("tune_threshold requires both classes present")
    for cand in np.unique(scores):
        report = confusion_metrics(scored, float(cand))
        if report.precision is not None and report.precision >= target_precision:
            return ThresholdResult(attainable=True, report=report)
    return ThresholdResult(attainable=False, report=None)


def hierarchy_violation_rate(scores, taxonomy):
    """Fraction of scored (parent, child) edges with score(parent) < score(child)."""
    edges = [(p, c) for p, c in taxonomy.edges() if p in scores and c in scores]
    if not edges:
        return 0.0
    violations = sum(1 for p, c in edges if scores[p] < scores[c])
    return violations / len(edges)


@dataclass(frozen=True)
class SimilarityReport:
    intra_mean: float
    inter_mean: float
    excluded_zero_vectors: int

    @property
    def gap(self):
        return self.intra_mean - self.inter_mean


def embedding_similarity_report(labels, embeddings):
    """Mean pairwise cosine similarity within vs across classes."""
    vecs = np.asarray(embeddings, dtype=np.float64)
    labels = list(labels)
    norms = np.linalg.norm(vecs, axis=1)
    keep = norms > 0
    excluded = int((~keep).sum())
    vecs = vecs[keep] / norms[keep][:, None]
    labels = [l for l, k in zip(labels, keep) if k]
    classes = sorted(set(labels))
    if len(classes) < 2 or any(labels.count(c) < 2 for c in classes):
        raise ConfigError("need >= 2 classes with >= 2 examples each")
    sims = vecs @ vecs.T
    intra, inter = [], []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            (intra if labels[i] == labels[j] else inter).append(sims[i, j])
    return SimilarityReport(intra_mean=float(np.mean(intra)),
                            inter_mean=float(np.mean(inter)),
                            excluded_zero_vectors=excluded)


def micro_f1(true_sets, score_matrix, class_ids, threshold=0.5):
    """Micro-averaged F1 of thresholded multi-label predictions.

    ``true_sets``: iterable of sets of class ids; ``score_matrix``: (B, C)
    scores aligned with ``class_ids``.
    """
    scores = np.asarray(score_matrix)
    truth = np.zeros_like(scores, dtype=bool)
    index = {c: j for j, c in enumerate(class_ids)}
    for i, cats in enumerate(true_sets):
        for c in cats:
            if c in index:
                truth[i, index[c]] = True
    pred = scores >= threshold
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)
