"""Cross-/intra-subject 10-fold evaluation, metrics, ROC/AUC and baselines."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .features import FeatureDataset, SegmentSpec
from .nn import ModelConfig, fit, init_params, predict, save_checkpoint
from .nn.model import Model

logger = logging.getLogger(__name__)

SCHEMES = ("cross", "intra")


# --------------------------------------------------------------------------
# fold plans


@dataclass
class FoldPlan:
    scheme: str
    folds: list[np.ndarray]
    seed: int

    @property
    def universe(self) -> np.ndarray:
        return np.sort(np.concatenate(self.folds))

    def check(self, universe=None) -> None:
        """Raise if the folds are not a partition of ``universe`` (default: their union)."""
        joined = np.concatenate(self.folds)
        if len(np.unique(joined)) != len(joined):
            raise AssertionError("folds overlap")
        if universe is not None and not np.array_equal(np.sort(joined), np.sort(np.asarray(universe))):
            raise AssertionError("folds do not cover the universe")

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "seed": self.seed, "folds": [f.tolist() for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(d["scheme"], [np.asarray(f, dtype=np.int64) for f in d["folds"]], d["seed"])


def make_folds(units, scheme: str, seed: int, n_folds: int = 10, key: int = 0) -> FoldPlan:
    """Shuffle ``units`` (subject ids for ``cross``, segment indices for ``intra``) into folds.

    Fold sizes differ by at most one. ``key`` separates the streams of
    several intra-subject plans drawn from the same seed.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    units = np.unique(np.asarray(units, dtype=np.int64))
    if len(units) < n_folds:
        what = "subjects" if scheme == "cross" else "segments"
        raise ValueError(f"{n_folds}-fold {scheme} validation needs >= {n_folds} {what}, got {len(units)}")
    shuffled = seeding.rng(seed, seeding.PLAN, key).permutation(units)
    return FoldPlan(scheme, [np.sort(f) for f in np.array_split(shuffled, n_folds)], seed)


def intra_plans(subjects, seed: int, n_folds: int = 10) -> dict[int, FoldPlan]:
    """One plan per subject over that subject's segment indices."""
    subjects = np.asarray(subjects)
    return {
        int(s): make_folds(np.flatnonzero(subjects == s), "intra", seed, n_folds, key=int(s))
        for s in np.unique(subjects)
    }


# --------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    accuracy: float
    flags: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def confusion_metrics(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    flags: list[str] = []
    precision = _ratio(tp, tp + fp, "no_positive_predictions", flags)
    recall = _ratio(tp, tp + fn, "no_positive_labels", flags)
    accuracy = _ratio(tp + tn, tp + tn + fp + fn, "empty", flags)
    return Metrics(tp, fp, fn, tn, precision, recall, accuracy, flags)


def evaluate(scores, labels, threshold: float = 0.5) -> Metrics:
    """Confusion counts at ``threshold`` (score >= threshold predicts Right = 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.size == 0:
        raise ValueError("no predictions to evaluate")
    pred = scores >= threshold
    return confusion_metrics(
        int(np.sum(pred & labels)), int(np.sum(pred & ~labels)),
        int(np.sum(~pred & labels)), int(np.sum(~pred & ~labels)),
    )


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, r in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow([repr(float(t)), repr(float(f)), repr(float(r))])


def roc_auc(scores, labels) -> RocCurve:
    """ROC over every distinct score; tied scores move together (diagonal step)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, lab = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(lab)[last]
    fps = np.cumsum(~lab)[last]
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, np.r_[np.inf, s[last]], auc)


def mean_sd(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std(ddof=1)) if len(values) > 1 else 0.0


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    scheme: str = "cross"
    model: ModelConfig = field(default_factory=ModelConfig.cross_subject)
    segment: SegmentSpec = field(default_factory=SegmentSpec)
    seed: int = 0
    features: str | None = None
    out: str | None = None
    n_folds: int = 10
    threshold: float = 0.5
    standardize: bool = False
    max_subjects: int | None = None
    save_models: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @classmethod
    def for_scheme(cls, scheme: str, **overrides) -> "ExperimentConfig":
        model_overrides = overrides.pop("model_overrides", {})
        factory = ModelConfig.cross_subject if scheme == "cross" else ModelConfig.intra_subject
        return cls(scheme=scheme, model=factory(**model_overrides), **overrides)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        d["segment"] = dataclasses.asdict(self.segment)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        scheme = d.get("scheme", "cross")
        base = ModelConfig.cross_subject() if scheme == "cross" else ModelConfig.intra_subject()
        model = {**base.to_dict(), **d.pop("model", {})}
        segment = d.pop("segment", {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(model=ModelConfig.from_dict(model), segment=SegmentSpec(**segment), **d)


@dataclass
class FoldResult:
    fold: int
    subject: int | None
    test_index: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    metrics: Metrics
    auc: float | None
    history: list[float] = field(default_factory=list)
    model: Model | None = None
    scaler: tuple[np.ndarray, np.ndarray] | None = None
    test_trials: list[str] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    folds: list[FoldResult]
    aggregate: dict
    roc: RocCurve | None

    def to_dict(self) -> dict:
        # Output location and parallelism do not affect results; leaving them
        # out keeps metrics.json identical across reruns into other directories.
        config = {k: v for k, v in self.config.to_dict().items() if k not in ("out", "jobs")}
        return {
            "config": config,
            "aggregate": self.aggregate,
            "folds": [
                {
                    "fold": f.fold,
                    "subject": f.subject,
                    "n_test": int(len(f.test_index)),
                    "auc": f.auc,
                    **f.metrics.to_dict(),
                    "final_objective": f.history[-1] if f.history else None,
                }
                for f in self.folds
            ],
        }


def fit_scaler(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std over samples and time steps; zero std becomes 1."""
    flat = X.reshape(-1, X.shape[-1])
    mu = flat.mean(0)
    sd = flat.std(0)
    return mu, np.where(sd > 0, sd, 1.0)


def _apply_scaler(X, scaler):
    if scaler is None:
        return X
    mu, sd = scaler
    return (X - mu) / sd


def _fold_auc(scores, labels):
    if len(np.unique(labels)) < 2:
        return None
    return roc_auc(scores, labels).auc


def _train_fold(args) -> FoldResult:
    (cfg, X, y, trial_ids, train_idx, test_idx, fold, subject, stream_key) = args
    scaler = fit_scaler(X[train_idx]) if cfg.standardize else None
    Xtr = _apply_scaler(X[train_idx], scaler)
    Xte = _apply_scaler(X[test_idx], scaler)
    model = init_params(cfg.model, seeding.rng(cfg.seed, seeding.INIT, stream_key))
    history = fit(model, Xtr, y[train_idx], seed=cfg.seed, stream_key=stream_key)
    scores = predict(model, Xte)
    metrics = evaluate(scores, y[test_idx], cfg.threshold)
    logger.info(
        "fold=%d subject=%s n_train=%d n_test=%d accuracy=%.4f",
        fold, subject, len(train_idx), len(test_idx), metrics.accuracy,
    )
    return FoldResult(
        fold=fold, subject=subject, test_index=np.asarray(test_idx), scores=scores,
        labels=y[test_idx], metrics=metrics, auc=_fold_auc(scores, y[test_idx]),
        history=history, model=model, scaler=scaler, test_trials=[trial_ids[i] for i in test_idx],
    )


def plan_jobs(cfg: ExperimentConfig, ds: FeatureDataset):
    """Yield ``(fold, subject, train_idx, test_idx, stream_key)`` for every training job."""
    if cfg.scheme == "cross":
        plan = make_folds(ds.subjects, "cross", cfg.seed, cfg.n_folds)
        for k, test_subjects in enumerate(plan.folds):
            test = np.isin(ds.subjects, test_subjects)
            yield k, None, np.flatnonzero(~test), np.flatnonzero(test), k
    else:
        subjects = np.unique(ds.subjects)
        if cfg.max_subjects is not None:
            subjects = subjects[: cfg.max_subjects]
        plans = intra_plans(ds.subjects[np.isin(ds.subjects, subjects)], cfg.seed, cfg.n_folds)
        for s in subjects:
            own = np.flatnonzero(ds.subjects == s)
            for k, test_idx in enumerate(plans[int(s)].folds):
                yield k, int(s), np.setdiff1d(own, test_idx), test_idx, int(s) * cfg.n_folds + k


def fold_plans(cfg: ExperimentConfig, ds: FeatureDataset) -> dict:
    if cfg.scheme == "cross":
        return {"cross": make_folds(ds.subjects, "cross", cfg.seed, cfg.n_folds).to_dict()}
    return {str(s): p.to_dict() for s, p in intra_plans(ds.subjects, cfg.seed, cfg.n_folds).items()}


def _aggregate(cfg: ExperimentConfig, folds: list[FoldResult]) -> dict:
    names = ("accuracy", "precision", "recall")
    if cfg.scheme == "cross":
        rows = [{n: getattr(f.metrics, n) for n in names} for f in folds]
    else:
        by_subject: dict[int, list[FoldResult]] = {}
        for f in folds:
            by_subject.setdefault(f.subject, []).append(f)
        rows = [
            {n: float(np.mean([getattr(f.metrics, n) for f in fs])) for n in names}
            for _, fs in sorted(by_subject.items())
        ]
    agg = {}
    for n in names:
        m, s = mean_sd([r[n] for r in rows])
        agg[n] = {"mean": m, "sd": s}
    aucs = [f.auc for f in folds if f.auc is not None]
    if aucs:
        m, s = mean_sd(aucs)
        agg["fold_auc"] = {"mean": m, "sd": s}
    agg["n_units"] = len(rows)
    agg["n_test"] = int(sum(len(f.test_index) for f in folds))
    return agg


def run_experiment(cfg: ExperimentConfig, ds: FeatureDataset | None = None) -> ExperimentResult:
    """Train and evaluate one model per fold and aggregate the results.

    Artifacts (``metrics.json``, ``roc.csv``, ``folds.json``, ``predictions.csv``
    and, with ``save_models``, per-fold checkpoints) go to ``cfg.out`` when set.
    """
    if ds is None:
        if cfg.features is None:
            raise ValueError("no dataset given and cfg.features is unset")
        from .store import load

        ds = load(cfg.features)
    if ds.X.shape[1:] != (cfg.model.n_steps, cfg.model.input_dim):
        raise ValueError(
            f"features are {ds.X.shape[1:]} but the model expects ({cfg.model.n_steps}, {cfg.model.input_dim})"
        )
    X = ds.X.astype(cfg.model.dtype)
    jobs = [(cfg, X, ds.y, ds.trial_ids, tr, te, k, s, key) for k, s, tr, te, key in plan_jobs(cfg, ds)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            folds = list(pool.map(_train_fold, jobs))
    else:
        folds = [_train_fold(j) for j in jobs]
    folds.sort(key=lambda f: (f.subject if f.subject is not None else -1, f.fold))

    scores = np.concatenate([f.scores for f in folds])
    labels = np.concatenate([f.labels for f in folds])
    roc = roc_auc(scores, labels) if len(np.unique(labels)) == 2 else None
    aggregate = _aggregate(cfg, folds)
    aggregate["pooled"] = evaluate(scores, labels, cfg.threshold).to_dict()
    aggregate["pooled_auc"] = roc.auc if roc else None
    result = ExperimentResult(cfg, folds, aggregate, roc)
    if cfg.out:
        write_artifacts(result, ds, Path(cfg.out))
    return result


def write_artifacts(result: ExperimentResult, ds: FeatureDataset, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "folds.json").write_text(json.dumps(fold_plans(result.config, ds), sort_keys=True) + "\n")
    if result.roc is not None:
        result.roc.to_csv(out / "roc.csv")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "subject", "index", "trial", "label", "score"])
        for f in result.folds:
            for i, s in zip(f.test_index, f.scores):
                w.writerow([f.fold, ds.subjects[i], int(i), ds.trial_ids[i], int(ds.y[i]), repr(float(s))])
    if result.config.save_models:
        ckdir = out / "checkpoints"
        ckdir.mkdir(exist_ok=True)
        for f in result.folds:
            tag = f"fold{f.fold}" if f.subject is None else f"s{f.subject:03d}_fold{f.fold}"
            save_checkpoint(f.model, ckdir / f"{tag}.alsm")
            if f.scaler is not None:
                np.savez(ckdir / f"{tag}.scaler.npz", mean=f.scaler[0], sd=f.scaler[1])


def shuffle_labels(ds: FeatureDataset, seed: int) -> FeatureDataset:
    """Label-permuted copy of ``ds`` (chance-level control)."""
    out = ds.subset(np.arange(len(ds)))
    out.y = seeding.rng(seed, seeding.LABELS).permutation(ds.y)
    return out


# --------------------------------------------------------------------------
# segment-size sweep


SWEEP_SIZES = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)


@dataclass
class SweepRow:
    size: float
    accuracy: float
    sd: float
    n_segments: int


def segment_size_sweep(cfg: ExperimentConfig, build, sizes=SWEEP_SIZES) -> list[SweepRow]:
    """Cross-validate once per segment size.

    ``build(size)`` returns the :class:`FeatureDataset` for that segment length
    (7 half-overlapping steps of ``size / 4`` seconds each).
    """
    rows = []
    for size in sizes:
        ds = build(size)
        sub = dataclasses.replace(cfg, segment=dataclasses.replace(cfg.segment, segment_len=size), out=None)
        result = run_experiment(sub, ds)
        acc = result.aggregate["accuracy"]
        rows.append(SweepRow(size, acc["mean"], acc["sd"], len(ds)))
        logger.info("sweep size=%.2f accuracy=%.4f sd=%.4f", size, acc["mean"], acc["sd"])
    return rows


def write_sweep(rows: list[SweepRow], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Size (seconds)"] + [f"{r.size:g}" for r in rows])
        w.writerow(["Accuracy +- SD"] + [f"{100 * r.accuracy:.1f} +- {100 * r.sd:.1f}" for r in rows])


# --------------------------------------------------------------------------
# logistic-regression baseline


class LogisticRegression:
    """L2-regularized logistic regression fitted by full-batch gradient descent."""

    def __init__(self, l2: float = 1e-3, lr: float = 0.1, n_iter: int = 500):
        self.l2, self.lr, self.n_iter = l2, lr, n_iter
        self.w: np.ndarray | None = None
        self.b = 0.0

    def fit(self, X, y) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.w = np.zeros(X.shape[1])
        self.b = 0.0
        for _ in range(self.n_iter):
            err = self.predict_proba(X) - y
            self.w -= self.lr * (X.T @ err / len(y) + 2 * self.l2 * self.w)
            self.b -= self.lr * err.mean()
        return self

    def predict_proba(self, X) -> np.ndarray:
        from scipy.special import expit

        return expit(np.asarray(X, dtype=np.float64) @ self.w + self.b)


def baseline_logreg(cfg: ExperimentConfig, ds: FeatureDataset, l2: float = 1e-3, lr: float = 0.1,
                    n_iter: int = 500) -> ExperimentResult:
    """Same folds and metrics as :func:`run_experiment`, flattened (steps * features) inputs."""
    X = ds.X.reshape(len(ds), -1)
    folds = []
    for k, subject, tr, te, _ in plan_jobs(cfg, ds):
        scaler = fit_scaler(X[tr]) if cfg.standardize else None
        clf = LogisticRegression(l2, lr, n_iter).fit(_apply_scaler(X[tr], scaler), ds.y[tr])
        scores = clf.predict_proba(_apply_scaler(X[te], scaler))
        metrics = evaluate(scores, ds.y[te], cfg.threshold)
        folds.append(FoldResult(k, subject, te, scores, ds.y[te], metrics, _fold_auc(scores, ds.y[te]),
                                test_trials=[ds.trial_ids[i] for i in te]))
    scores = np.concatenate([f.scores for f in folds])
    labels = np.concatenate([f.labels for f in folds])
    roc = roc_auc(scores, labels) if len(np.unique(labels)) == 2 else None
    aggregate = _aggregate(cfg, folds)
    aggregate["pooled_auc"] = roc.auc if roc else None
    return ExperimentResult(cfg, folds, aggregate, roc)
