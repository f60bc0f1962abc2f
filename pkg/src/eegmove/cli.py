"""Command-line entry point: ``eegmove <subcommand> ...``.

Logs go to stderr; every output file is written under ``--out``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import urllib.request
from pathlib import Path

import numpy as np

from . import analysis, edf, harness, store
from .dsp import FilterSpec
from .features import SegmentSpec, build_dataset
from .synth import SynthSpec, write_synth

logger = logging.getLogger("eegmove")

DEFAULT_BASE_URL = "https://physionet.org/files/eegmmidb/1.0.0"
MANIFEST_NAME = "MANIFEST.sha256"
FEATURES_NAME = "features.eegf"


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# argument helpers


def _int_ranges(text: str) -> list[int]:
    """``"1-3,7"`` -> ``[1, 2, 3, 7]``."""
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi or lo) + 1))
    return out


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="master random seed (default 0)")
    p.add_argument("--config", type=Path, help="JSON config file; explicit flags take precedence")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="stderr log level")


def _add_filter(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("preprocessing")
    g.add_argument("--notch-hz", type=float, default=50.0, help="mains notch frequency in Hz (default 50)")
    g.add_argument("--band-lo", type=float, default=0.5, help="band-pass low edge in Hz (default 0.5)")
    g.add_argument("--band-hi", type=float, default=70.0, help="band-pass high edge in Hz (default 70)")
    g.add_argument("--filter-order", type=int, default=4, help="Butterworth band-pass order (default 4)")
    g.add_argument("--relative-to", choices=["total", "bands"], default="total",
                   help="band-power denominator: whole passband or the sum of the four bands")
    g.add_argument("--subjects", type=_int_ranges, help="subject ids to use, e.g. 1-10,12 (default all)")


def _add_training(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--scheme", choices=harness.SCHEMES, default=None, help="cross- or intra-subject folds")
    g.add_argument("--hidden", type=int, help="LSTM units per layer")
    g.add_argument("--depth", type=int, help="number of stacked LSTM layers")
    g.add_argument("--epochs", type=int, help="training epochs")
    g.add_argument("--batch-size", type=int, help="minibatch size")
    g.add_argument("--lr", type=float, help="Adam learning rate")
    g.add_argument("--l2", type=float, help="L2 penalty on LSTM weight matrices")
    g.add_argument("--dropout", type=_floats, help="comma-separated rates: input, then one per layer")
    g.add_argument("--attention", choices=["scalar", "vector"], help="attention scoring form")
    g.add_argument("--attention-dim", type=int, help="projection size for vector attention")
    g.add_argument("--n-folds", type=int, help="number of folds (default 10)")
    g.add_argument("--max-subjects", type=int, help="intra-subject: only the first N subjects")
    g.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                   help="z-score features with training-fold statistics")
    g.add_argument("--save-models", action=argparse.BooleanOptionalAction, default=None,
                   help="write per-fold checkpoints under OUT/checkpoints")
    g.add_argument("--jobs", type=int, default=1, help="parallel fold jobs (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegmove", description="EEG left/right movement classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fetch", help="download the movement runs and write a digest manifest")
    _add_common(p)
    p.add_argument("--base-url", default=DEFAULT_BASE_URL, help="dataset root URL")
    p.add_argument("--subjects", type=_int_ranges, default=_int_ranges("1-109"), help="subject ids (default 1-109)")
    p.add_argument("--runs", type=_int_ranges, default=list(edf.MOVEMENT_RUNS), help="run numbers (default 3,7,11)")

    p = sub.add_parser("verify", help="check a data directory against its sha256 manifest")
    _add_common(p)
    p.add_argument("--data", required=True, type=Path, help="dataset directory")
    p.add_argument("--manifest", type=Path, help=f"manifest file (default DATA/{MANIFEST_NAME})")

    p = sub.add_parser("synth", help="write a seeded synthetic dataset as EDF files")
    _add_common(p)
    p.add_argument("--n-subjects", type=int, default=20, help="number of subjects (default 20)")
    p.add_argument("--trials", type=int, default=45, help="movement cues per subject (default 45)")
    p.add_argument("--effect", type=float, default=SynthSpec.effect, help="relative alpha modulation in [0, 1)")
    p.add_argument("--noise", type=float, default=SynthSpec.noise, help="per-electrode white noise SD in uV")
    p.add_argument("--onset-delay", type=float, default=0.0, help="seconds after cue onset before the effect starts")

    p = sub.add_parser("featurize", help="preprocess EDF files into a feature store")
    _add_common(p)
    p.add_argument("--data", required=True, type=Path, help="dataset directory")
    p.add_argument("--segment", type=float, default=2.0, help="segment length in seconds (default 2.0)")
    p.add_argument("--offsets", type=_floats, default=[0.0], help="segment start offsets after cue onset, in s")
    _add_filter(p)

    p = sub.add_parser("train", help="cross-validate the attention LSTM on a feature store")
    _add_common(p)
    p.add_argument("--features", required=True, type=Path, help="feature store file or featurize output directory")
    _add_training(p)

    p = sub.add_parser("evaluate", help="recompute metrics and ROC from a predictions CSV")
    _add_common(p)
    p.add_argument("--predictions", required=True, type=Path, help="predictions.csv written by train")
    p.add_argument("--threshold", type=float, default=0.5, help="decision threshold (default 0.5)")

    p = sub.add_parser("sweep", help="cross-validate at several segment lengths")
    _add_common(p)
    p.add_argument("--data", required=True, type=Path, help="dataset directory")
    p.add_argument("--sizes", type=_floats, default=list(harness.SWEEP_SIZES), help="segment lengths in seconds")
    p.add_argument("--baseline", action="store_true", help="use the logistic-regression baseline instead of the LSTM")
    _add_filter(p)
    _add_training(p)

    p = sub.add_parser("analyze", help="feature importance, significance, sensor ranking and temporal curve")
    _add_common(p)
    p.add_argument("--features", required=True, type=Path, help="feature store file or featurize output directory")
    p.add_argument("--k", type=int, default=30, help="number of top features (default 30)")
    p.add_argument("--trees", type=int, default=100, help="forest size (default 100)")
    p.add_argument("--max-depth", type=int, default=8, help="tree depth limit (default 8)")
    p.add_argument("--temporal-data", type=Path, help="dataset directory; enables the sliding-window accuracy curve")
    p.add_argument("--temporal-hop", type=float, default=0.25, help="offset step in seconds (default 0.25)")
    p.add_argument("--temporal-max", type=float, default=2.0, help="largest offset in seconds (default 2.0)")
    _add_filter(p)
    _add_training(p)
    return parser


# --------------------------------------------------------------------------
# shared plumbing


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    try:
        cfg = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise CliError(f"cannot parse config {args.config}: {exc}")
    if not isinstance(cfg, dict):
        raise CliError(f"config {args.config} must hold a JSON object")
    return cfg


_MODEL_FLAGS = {
    "hidden": "hidden", "depth": "depth", "epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
    "l2": "l2", "dropout": "dropout", "attention": "attention", "attention_dim": "attention_dim",
}
_EXPERIMENT_FLAGS = ("scheme", "seed", "n_folds", "max_subjects", "standardize", "save_models")


def experiment_config(args, **extra) -> harness.ExperimentConfig:
    """Merge config file and flags (flags win) into an :class:`ExperimentConfig`."""
    raw = _load_config(args)
    model = dict(raw.pop("model", {}))
    for flag in _EXPERIMENT_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            raw[flag] = value
    for flag, key in _MODEL_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            model[key] = value
    if "depth" in model and "dropout" not in model:
        model["dropout"] = [0.0] + [0.2] * model["depth"]
    raw.update(extra)
    raw["model"] = model
    raw["jobs"] = args.jobs
    try:
        return harness.ExperimentConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid experiment configuration: {exc}")


def _filter_spec(args, fs: float = 160.0) -> FilterSpec:
    return FilterSpec(fs=fs, notch_freq=args.notch_hz, band=(args.band_lo, args.band_hi), order=args.filter_order)


def find_recordings(data: Path, subjects=None) -> list[Path]:
    if not data.is_dir():
        raise CliError(f"data directory not found: {data}")
    paths = []
    for path in sorted(data.rglob("*.edf")):
        subject, run = edf.parse_filename(path)
        if run not in edf.MOVEMENT_RUNS or (subjects and subject not in subjects):
            continue
        paths.append(path)
    if not paths:
        raise CliError(f"no movement-run EDF files (runs {edf.MOVEMENT_RUNS}) under {data}")
    return paths


def _featurize(args, data: Path, segment_len: float, offsets=(0.0,)):
    paths = find_recordings(data, args.subjects)
    seg = SegmentSpec(segment_len=segment_len)
    logger.info("featurize files=%d segment=%.3fs offsets=%s", len(paths), segment_len, list(offsets))
    loaders = [lambda p=p: edf.read_edf(p) for p in paths]
    return build_dataset(loaders, seg, offsets, filter_spec=_filter_spec(args), relative_to=args.relative_to)


def _load_features(path: Path):
    if path.is_dir():
        path = path / FEATURES_NAME
    if not path.is_file():
        raise CliError(f"feature store not found: {path}")
    return store.load(path)


# --------------------------------------------------------------------------
# subcommands


def cmd_fetch(args) -> int:
    out: Path = args.out
    entries = {}
    for s in args.subjects:
        for r in args.runs:
            rel = f"S{s:03d}/S{s:03d}R{r:02d}.edf"
            target = out / rel
            if not target.exists():
                target.parent.mkdir(parents=True, exist_ok=True)
                url = f"{args.base_url.rstrip('/')}/{rel}"
                logger.info("download url=%s", url)
                tmp = target.with_suffix(".part")
                try:
                    with urllib.request.urlopen(url, timeout=60) as resp, open(tmp, "wb") as fh:
                        fh.write(resp.read())
                except OSError as exc:
                    tmp.unlink(missing_ok=True)
                    raise CliError(f"download failed for {url}: {exc}")
                tmp.rename(target)
            entries[rel] = edf.file_digest(target)
    manifest = out / MANIFEST_NAME
    if manifest.exists():
        known = edf.read_manifest(manifest)
        bad = [p for p, d in entries.items() if p in known and known[p] != d]
        if bad:
            raise CliError(f"digest mismatch against existing manifest: {', '.join(bad)}")
        entries = {**known, **entries}
    manifest.write_text("".join(f"{p} {d}\n" for p, d in sorted(entries.items())))
    logger.info("fetch files=%d manifest=%s", len(entries), manifest)
    return 0


def cmd_verify(args) -> int:
    manifest = args.manifest or args.data / MANIFEST_NAME
    if not Path(manifest).is_file():
        raise CliError(f"manifest not found: {manifest}")
    try:
        report = edf.verify_manifest(args.data, manifest)
    except NotADirectoryError as exc:
        raise CliError(str(exc))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "verify.txt").write_text("\n".join(report.lines()) + "\n")
    for line in report.lines():
        logger.info("verify %s", line)
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    seed = 0 if args.seed is None else args.seed
    spec = SynthSpec(n_subjects=args.n_subjects, trials_per_subject=args.trials, effect=args.effect,
                     noise=args.noise, onset_delay=args.onset_delay, seed=seed)
    paths = write_synth(spec, args.out, MANIFEST_NAME)
    logger.info("synth files=%d out=%s", len(paths), args.out)
    return 0


def cmd_featurize(args) -> int:
    ds = _featurize(args, args.data, args.segment, args.offsets)
    args.out.mkdir(parents=True, exist_ok=True)
    store.save(ds, args.out / FEATURES_NAME)
    logger.info("featurize segments=%d shape=%s out=%s", len(ds), ds.X.shape[1:], args.out / FEATURES_NAME)
    return 0


def _report(result: harness.ExperimentResult) -> None:
    agg = result.aggregate
    logger.info(
        "result scheme=%s accuracy=%.4f+-%.4f precision=%.4f recall=%.4f pooled_auc=%s",
        result.config.scheme, agg["accuracy"]["mean"], agg["accuracy"]["sd"],
        agg["precision"]["mean"], agg["recall"]["mean"], agg.get("pooled_auc"),
    )


def cmd_train(args) -> int:
    ds = _load_features(args.features)
    cfg = experiment_config(args, features=str(args.features), out=str(args.out))
    if ds.X.shape[-1] != cfg.model.input_dim:
        cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, input_dim=ds.X.shape[-1]))
    _report(harness.run_experiment(cfg, ds))
    return 0


def cmd_evaluate(args) -> int:
    import csv

    if not args.predictions.is_file():
        raise CliError(f"predictions file not found: {args.predictions}")
    with open(args.predictions, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"no predictions in {args.predictions}")
    scores = np.array([float(r["score"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    out = {"threshold": args.threshold, "pooled": harness.evaluate(scores, labels, args.threshold).to_dict()}
    args.out.mkdir(parents=True, exist_ok=True)
    if len(np.unique(labels)) == 2:
        roc = harness.roc_auc(scores, labels)
        out["auc"] = roc.auc
        roc.to_csv(args.out / "roc.csv")
    _write_json(args.out / "metrics.json", out)
    logger.info("evaluate n=%d accuracy=%.4f auc=%s", len(rows), out["pooled"]["accuracy"], out.get("auc"))
    return 0


def cmd_sweep(args) -> int:
    cfg = experiment_config(args)
    built = {}

    def build(size):
        built[size] = _featurize(args, args.data, size)
        return built[size]

    if args.baseline:
        rows = []
        for size in args.sizes:
            res = harness.baseline_logreg(cfg, build(size))
            acc = res.aggregate["accuracy"]
            rows.append(harness.SweepRow(size, acc["mean"], acc["sd"], len(built[size])))
    else:
        rows = harness.segment_size_sweep(cfg, build, args.sizes)
    harness.write_sweep(rows, args.out)
    for r in rows:
        logger.info("sweep size=%.2f accuracy=%.4f sd=%.4f", r.size, r.accuracy, r.sd)
    return 0


def cmd_analyze(args) -> int:
    ds = _load_features(args.features)
    seed = 0 if args.seed is None else args.seed
    forest = analysis.ForestConfig(n_trees=args.trees, max_depth=args.max_depth, seed=seed)
    base = ds.subset(np.flatnonzero(ds.offsets == 0)) if (ds.offsets == 0).any() else ds
    result = analysis.analyze(base, k=args.k, forest=forest)
    analysis.write_analysis(result, args.out)
    top = result.sensors.rows()[:3]
    logger.info("analyze passing=%d top_pairs=%s", int(result.report.passed.sum()), top)
    if args.temporal_data is not None:
        offsets = np.round(np.arange(0.0, args.temporal_max + 1e-9, args.temporal_hop), 6)
        multi = _featurize(args, args.temporal_data, 2.0, tuple(offsets))
        train_set = multi.subset(np.flatnonzero(multi.offsets == 0))
        cfg = experiment_config(args)
        exp = harness.run_experiment(cfg, train_set)
        curve = analysis.temporal_accuracy(exp, multi)
        _write_json(args.out / "temporal.json", curve.to_dict())
        logger.info("temporal offsets=%d", len(curve.offsets))
    return 0


COMMANDS = {
    "fetch": cmd_fetch, "verify": cmd_verify, "synth": cmd_synth, "featurize": cmd_featurize,
    "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep, "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level, stream=sys.stderr, force=True,
        format="%(asctime)s level=%(levelname)s logger=%(name)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (CliError, edf.EdfError, store.StoreError, ValueError) as exc:
        logger.error("error=%s", exc)
        print(f"eegmove {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
