"""Post-hoc analyses: forest feature importance, rank-sum tests, sensor ranking
and the sliding-window accuracy curve."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import seeding
from .features import N_FEATURES, FeatureDataset

logger = logging.getLogger(__name__)

BONFERRONI_ALPHA = 0.05 / 297


# --------------------------------------------------------------------------
# random-forest importance


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    max_features: int | None = None  # default: floor(sqrt(n_features))
    min_samples_split: int = 2
    seed: int = 0


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray):
    """Best Gini split of one node over candidate features ``feats``.

    Returns ``(feature, threshold, weighted_child_impurity)`` or ``None`` when
    no candidate feature takes two distinct values.
    """
    n = len(y)
    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    vals = np.take_along_axis(cols, order, axis=0)
    pos = np.cumsum(y[order], axis=0)[:-1]
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    p_left = pos / n_left
    p_right = (y.sum() - pos) / n_right
    child = (n_left * 2 * p_left * (1 - p_left) + n_right * 2 * p_right * (1 - p_right)) / n
    child[vals[1:] == vals[:-1]] = np.inf
    flat = int(np.argmin(child))
    i, j = divmod(flat, len(feats))
    if not np.isfinite(child[i, j]):
        return None
    return int(feats[j]), 0.5 * (vals[i, j] + vals[i + 1, j]), float(child[i, j])


def _grow(X, y, idx, depth, cfg, m, gen, importance, n_total, nodes):
    yn = y[idx]
    p = yn.mean()
    gini = 2 * p * (1 - p)
    node = {"value": float(p)}
    nodes.append(node)
    if depth >= cfg.max_depth or len(idx) < cfg.min_samples_split or gini == 0:
        return node
    feats = np.sort(gen.choice(X.shape[1], m, replace=False))
    split = _best_split(X[idx], yn, feats)
    if split is None or split[2] >= gini:
        return node
    f, thr, child = split
    importance[f] += len(idx) / n_total * (gini - child)
    go_left = X[idx, f] <= thr
    node.update(feature=f, threshold=thr)
    node["left"] = _grow(X, y, idx[go_left], depth + 1, cfg, m, gen, importance, n_total, nodes)
    node["right"] = _grow(X, y, idx[~go_left], depth + 1, cfg, m, gen, importance, n_total, nodes)
    return node


def _predict_tree(node, x):
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["value"]


class RandomForest:
    """Bootstrap ensemble of depth-limited Gini trees, used for feature ranking."""

    def __init__(self, config: ForestConfig | None = None):
        self.config = config or ForestConfig()
        self.trees: list[dict] = []
        self.feature_importances_: np.ndarray | None = None

    def fit(self, X, y) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be (n, d) with one label per row")
        if len(np.unique(y)) < 2:
            raise ValueError("random forest importance needs both classes")
        cfg = self.config
        n, d = X.shape
        m = cfg.max_features or max(1, int(np.sqrt(d)))
        total = np.zeros(d)
        self.trees = []
        for t in range(cfg.n_trees):
            gen = seeding.rng(cfg.seed, seeding.FOREST, t)
            boot = gen.integers(0, n, n)
            imp = np.zeros(d)
            self.trees.append(_grow(X, y, boot, 0, cfg, m, gen, imp, n, []))
            if imp.sum() > 0:
                total += imp / imp.sum()
        self.feature_importances_ = total / total.sum() if total.sum() > 0 else np.full(d, 1.0 / d)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([np.mean([_predict_tree(t, x) for t in self.trees]) for x in X])


def rf_importance(X, y, config: ForestConfig | None = None) -> np.ndarray:
    """Normalized mean impurity-decrease importance (sums to 1)."""
    return RandomForest(config).fit(X, y).feature_importances_


# --------------------------------------------------------------------------
# significance


def significance_test(X, y) -> np.ndarray:
    """Two-sided Mann-Whitney U p-value per column of ``X``.

    Normal approximation with tie and continuity corrections; a column that
    is constant across both classes gets p = 1.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    a, b = X[~y], X[y]
    if min(len(a), len(b)) < 20:
        raise ValueError("each class needs at least 20 samples for the normal approximation")
    constant = np.ptp(X, axis=0) == 0
    p = np.ones(X.shape[1])
    if (~constant).any():
        p[~constant] = stats.mannwhitneyu(
            a[:, ~constant], b[:, ~constant], alternative="two-sided", method="asymptotic",
            use_continuity=True, axis=0,
        ).pvalue
    return p


# --------------------------------------------------------------------------
# reports


@dataclass
class ImportanceReport:
    importance: np.ndarray
    pvalues: np.ndarray
    alpha: float = BONFERRONI_ALPHA

    @property
    def ranking(self) -> np.ndarray:
        """Feature indices by importance, descending (ties by index)."""
        return np.lexsort((np.arange(len(self.importance)), -self.importance))

    @property
    def passed(self) -> np.ndarray:
        return self.pvalues < self.alpha

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "importance": self.importance.tolist(),
            "pvalues": self.pvalues.tolist(),
            "passed": self.passed.tolist(),
            "ranking": self.ranking.tolist(),
        }


@dataclass
class TopK:
    indices: np.ndarray
    k: int
    flagged: bool


def top_k_features(report: ImportanceReport, k: int = 30) -> TopK:
    """The ``k`` most important features among those passing the significance test."""
    ranked = [i for i in report.ranking if report.passed[i]]
    chosen = np.array(ranked[:k], dtype=np.int64)
    if len(chosen) < k:
        logger.warning("only %d features pass p < %.3g; fewer than k=%d", len(chosen), report.alpha, k)
    return TopK(chosen, k, len(chosen) < k)


@dataclass
class SensorRanking:
    counts: dict[str, int]

    def rows(self) -> list[tuple[str, int]]:
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "count"])
            w.writerows(self.rows())


def sensor_ranking(features, pair_names: list[str]) -> SensorRanking:
    """Count selected features per sensor pair (feature ``i`` belongs to pair ``i // 11``)."""
    counts: dict[str, int] = {}
    for i in np.asarray(features, dtype=np.int64):
        name = pair_names[int(i) // N_FEATURES]
        counts[name] = counts.get(name, 0) + 1
    return SensorRanking(counts)


def quartiles(X, y, features) -> list[dict]:
    """Per-class five-number summaries for the given feature columns."""
    X = np.asarray(X)
    y = np.asarray(y)
    out = []
    for f in features:
        row = {"feature": int(f)}
        for cls, name in ((0, "left"), (1, "right")):
            q = np.percentile(X[y == cls, f], [0, 25, 50, 75, 100])
            row[name] = dict(zip(("min", "q1", "median", "q3", "max"), q.tolist()))
        out.append(row)
    return out


def segment_features(ds: FeatureDataset) -> np.ndarray:
    """Collapse the time-step axis by averaging: (n, steps, 297) -> (n, 297)."""
    return ds.X.mean(axis=1)


@dataclass
class AnalysisResult:
    report: ImportanceReport
    top: TopK
    sensors: SensorRanking
    quartiles: list[dict] = field(default_factory=list)


def analyze(ds: FeatureDataset, k: int = 30, forest: ForestConfig | None = None) -> AnalysisResult:
    X = segment_features(ds)
    report = ImportanceReport(rf_importance(X, ds.y, forest), significance_test(X, ds.y))
    top = top_k_features(report, k)
    pairs = ds.meta.get("pairs") or [f"pair{i}" for i in range(X.shape[1] // N_FEATURES)]
    return AnalysisResult(report, top, sensor_ranking(top.indices, pairs), quartiles(X, ds.y, top.indices[:3]))


def write_analysis(result: AnalysisResult, out: str | Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "importance.json").write_text(json.dumps(result.report.to_dict(), sort_keys=True) + "\n")
    top = {"k": result.top.k, "flagged": result.top.flagged, "features": result.top.indices.tolist()}
    (out / "top_features.json").write_text(json.dumps(top, sort_keys=True) + "\n")
    result.sensors.to_csv(out / "sensor_ranking.csv")
    (out / "quartiles.json").write_text(json.dumps(result.quartiles, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# temporal accuracy


@dataclass
class TemporalCurve:
    offsets: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    per_fold: np.ndarray  # (n_folds, n_offsets); NaN where a fold had no trials

    def to_dict(self) -> dict:
        return {
            "offsets": self.offsets.tolist(),
            "accuracy_mean": self.mean.tolist(),
            "accuracy_sd": self.sd.tolist(),
        }


def temporal_accuracy(result, ds: FeatureDataset) -> TemporalCurve:
    """Held-out accuracy of each fold model as the segment slides past cue onset.

    ``ds`` holds every trial featurized at several offsets (see
    ``featurize_recording(offsets=...)``); each fold model is scored only on
    the trials it was tested on. Offsets for which a trial is too short are
    absent from ``ds`` and so simply skipped.
    """
    from .harness import _apply_scaler, evaluate
    from .nn import predict

    offsets = np.unique(ds.offsets)
    trial_ids = np.asarray(ds.trial_ids)
    acc = np.full((len(result.folds), len(offsets)), np.nan)
    for r, fold in enumerate(result.folds):
        if fold.model is None:
            raise ValueError("temporal_accuracy needs the fold models kept by run_experiment")
        held_out = np.isin(trial_ids, fold.test_trials)
        for c, off in enumerate(offsets):
            mask = held_out & (ds.offsets == off)
            if mask.any():
                X = _apply_scaler(ds.X[mask].astype(fold.model.dtype), fold.scaler)
                acc[r, c] = evaluate(predict(fold.model, X), ds.y[mask], result.config.threshold).accuracy
    counts = np.sum(~np.isnan(acc), axis=0)
    mean = np.nanmean(acc, axis=0)
    centered = np.where(np.isnan(acc), 0.0, acc - mean)
    sd = np.sqrt(np.sum(centered**2, axis=0) / np.maximum(counts - 1, 1))
    return TemporalCurve(offsets, mean, sd, acc)
