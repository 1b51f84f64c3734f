"""Leave-one-subject-out comparison of rule-based, SVM and LSTM predictors.

Per fold: augment the training subjects, standardise with training-fold
statistics, window, train, then score every frame of the untouched test
subject.  Frames before the first full window are warm-up and are not
scored, for any method, so all methods see the same frames.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics as M
from . import stability, svm, ukf
from .data import (
    Standardizer,
    augment,
    build_sequence,
    loocv_split,
    one_hot_phase,
    window_arrays,
)
from .nn.network import architecture
from .nn.training import TrainConfig, predict_sequence, save_checkpoint, train
from .seeding import sub_rng
from .sim import SimConfig, generate_episode
from .stability import FootGeometry, LabelThresholds

logger = logging.getLogger(__name__)

METHODS = ("rule", "svm", "lstm", "fc-lstm")
REPORT_COLUMNS = ("method", "fold", "auc", "fscore", "accuracy", "precision", "recall")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "benchmark"
    seed: int = 2018
    subjects: int = 5
    subject_variation: float = 1.0
    noiseless: bool = False
    sim: SimConfig = SimConfig()
    ukf: ukf.UkfConfig = ukf.UkfConfig()
    geom: FootGeometry = FootGeometry()
    thr: LabelThresholds = LabelThresholds()
    window: int = 100
    train_stride: Optional[int] = None
    augment_noise: tuple = (0.15, 0.20)
    augment_copies: int = 1
    methods: tuple = METHODS
    arch: str = "fc-lstm2-128"
    lstm_arch: str = "lstm1-256"
    one_hot_phase: bool = False
    nn_dtype: str = "float32"
    net_overrides: tuple = ()  # (field, value) pairs applied to both architectures
    train: TrainConfig = TrainConfig(epochs=8)
    svm: svm.SvmConfig = svm.SvmConfig()

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "net_overrides", tuple(tuple(kv) for kv in self.net_overrides))
        object.__setattr__(self, "augment_noise", tuple(float(v) for v in self.augment_noise))
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def noiseless_variant(cfg):
    """Zero sensor noise, no dropped detections, camera at the LRF rate and
    a near-exact CoM filter, so tracked inputs reproduce the ground truth.

    The motion model barely moves the estimate along y, so the predicted y
    variance can get very small; the observation std has to sit far below
    it for the update to land on the detection (1e-6 leaves ~1 mm lags).
    """
    sim = cfg.sim.replace(com_obs_noise=(0.0, 0.0), leg_obs_noise=0.0, detection_dropout_prob=0.0,
                          camera_rate=cfg.sim.lrf_rate)
    return cfg.replace(sim=sim, ukf=dataclasses.replace(cfg.ukf, obs_std=(1e-10, 1e-10)), noiseless=True)


def effective_config(cfg):
    return noiseless_variant(cfg) if cfg.noiseless else cfg


def subject_config(cfg, k):
    """Per-subject gait parameters jittered around ``cfg.sim``."""
    rng = sub_rng(cfg.seed, "subject", k)
    base = cfg.sim
    s = cfg.subject_variation
    speed = base.walk_speed * (1 + s * rng.uniform(-0.15, 0.15))
    step = base.step_duration * (1 + s * rng.uniform(-0.1, 0.1))
    return base.replace(
        walk_speed=speed,
        step_duration=step,
        stride_length=None,
        step_width=base.step_width * (1 + s * rng.uniform(-0.2, 0.2)),
        sway_amplitude=base.sway_amplitude * (1 + s * rng.uniform(-0.3, 0.3)),
        com_start=(base.com_start[0] + s * rng.uniform(-0.03, 0.03),
                   base.com_start[1] + s * rng.uniform(-0.1, 0.1)),
        gait_start=float(rng.uniform(0, step)) if s else base.gait_start,
        rng_seed=int(sub_rng(cfg.seed, "subject-seed", k).integers(2 ** 31)),
    )


def subject_ids(n):
    return [f"S{k + 1}" for k in range(n)]


def generate_cohort(cfg):
    """Labelled, sensorised episodes for ``cfg.subjects`` synthetic subjects."""
    cfg = effective_config(cfg)
    episodes = []
    for k, sid in enumerate(subject_ids(cfg.subjects)):
        ep = generate_episode(subject_config(cfg, k), sid)
        episodes.append(stability.label_episode(ep, cfg.geom, cfg.thr))
    return episodes


def track_and_label(episode, cfg):
    cfg = effective_config(cfg)
    if episode.com_detections is None or len(episode.com_detections) == 0:
        raise ValueError(f"episode {episode.subject_id} has no CoM detections")
    estimates = ukf.track_stream(episode.com_detections, episode.t, cfg.ukf, cfg.sim.camera_rate)
    return build_sequence(episode, estimates, cfg.geom, cfg.thr)


@dataclass
class FoldResult:
    method: str
    fold: str
    auc: float
    fscore: float
    accuracy: float
    precision: float
    recall: float

    def row(self):
        return [getattr(self, c) for c in REPORT_COLUMNS]


@dataclass
class MethodOutput:
    scores: Optional[np.ndarray]  # None for hard-label methods
    predicted: np.ndarray
    model: object = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)  # (method, fold) -> (MethodOutput, labels, t)
    timings: dict = field(default_factory=dict)

    def fold_rows(self, method):
        return [r for r in self.rows if r.method == method and r.fold != "mean"]

    def mean_row(self, method):
        for r in self.rows:
            if r.method == method and r.fold == "mean":
                return r
        raise KeyError(method)


def _nn_arch(method, cfg):
    name = cfg.lstm_arch if method == "lstm" else cfg.arch
    return name, architecture(name, dtype=cfg.nn_dtype, one_hot_phase=cfg.one_hot_phase,
                              **dict(cfg.net_overrides))


def _fold_train_data(train_seqs, cfg, fold):
    """Original + augmented training sequences (raw units)."""
    out = []
    for seq in train_seqs:
        out.append(seq)
        for c in range(cfg.augment_copies):
            rng = sub_rng(cfg.seed, "augment", fold, seq.subject_id, c)
            out.append(augment(seq, cfg.augment_noise, rng, cfg.geom, cfg.thr))
    return out


def _features(seq_features, cfg):
    return one_hot_phase(seq_features) if cfg.one_hot_phase else seq_features


def run_fold(train_seqs, test_seq, cfg, methods=None):
    """Run the selected methods on one fold; returns {method: MethodOutput}."""
    methods = methods or cfg.methods
    if any(s.subject_id == test_seq.subject_id for s in train_seqs):
        raise ValueError("test subject leaked into the training fold")
    out = {}
    if "rule" in methods:
        pred = stability.rule_based_predict(
            test_seq.features[:, :2],
            (test_seq.features[:, 2:6], test_seq.features[:, 6].round().astype(int)),
            cfg.geom,
            cfg.thr,
        )
        out["rule"] = MethodOutput(None, pred)

    learned = [m for m in methods if m != "rule"]
    if not learned:
        return out
    fold = test_seq.subject_id
    train_data = _fold_train_data(train_seqs, cfg, fold)
    assert all(s.subject_id != fold for s in train_data)
    train_feats = [_features(s.features, cfg) for s in train_data]
    st = Standardizer.fit(train_feats)
    train_std = [st.transform(f) for f in train_feats]
    test_std = st.transform(_features(test_seq.features, cfg))

    if "svm" in learned:
        X = np.concatenate(train_std)
        y = np.concatenate([s.labels for s in train_data])
        scfg = dataclasses.replace(cfg.svm, rng_seed=int(sub_rng(cfg.seed, "svm", fold).integers(2 ** 31)))
        model = svm.fit(X, y, scfg)
        scores = svm.decision_score(model, test_std)
        out["svm"] = MethodOutput(scores, (scores >= 0).astype(np.int8), model)

    for method in (m for m in learned if m in ("lstm", "fc-lstm")):
        _, net = _nn_arch(method, cfg)
        X, Y = window_arrays([(f, s.labels) for f, s in zip(train_std, train_data)],
                             cfg.window, cfg.train_stride or max(1, cfg.window // 2))
        tcfg = dataclasses.replace(cfg.train, rng_seed=int(sub_rng(cfg.seed, "nn", method, fold).integers(2 ** 31)))
        model = train((X, Y), net, tcfg)
        probs = predict_sequence(model, test_std, cfg.window)
        pred = (np.nan_to_num(probs, nan=0.0) >= 0.5).astype(np.int8)
        out[method] = MethodOutput(probs, pred, model)
    return out


def score_fold(method, fold, output, labels, window):
    keep = np.arange(len(labels)) >= window - 1
    y = labels[keep]
    counts = M.ConfusionCounts.from_labels(output.predicted[keep], y)
    m = M.metrics(counts)
    auc = float("nan")
    if output.scores is not None and 0 < y.sum() < len(y):
        _, auc = M.roc_auc(output.scores[keep], y)
    return FoldResult(method, fold, auc, m.fscore, m.accuracy, m.precision, m.recall)


def mean_rows(rows, methods):
    out = []
    for method in methods:
        rs = [r for r in rows if r.method == method]
        if not rs:
            continue
        vals = {}
        for c in REPORT_COLUMNS[2:]:
            col = np.array([getattr(r, c) for r in rs], dtype=float)
            vals[c] = float(np.mean(col)) if np.all(np.isfinite(col)) else float("nan")
        out.append(FoldResult(method, "mean", **vals))
    return out


def run_experiment(cfg=ExperimentConfig(), sequences=None, run_dir=None, progress=None):
    """Full leave-one-subject-out comparison.

    ``sequences`` (one LabeledSequence per subject) defaults to a freshly
    simulated and tracked cohort.  When ``run_dir`` is given, the report,
    tables, ROC curves, per-frame scores and trained models are written
    under it.
    """
    t0 = time.time()
    result = ExperimentResult(cfg)
    if sequences is None:
        sequences = [track_and_label(ep, cfg) for ep in generate_cohort(cfg)]
    result.timings["data"] = time.time() - t0
    by_id = {s.subject_id: s for s in sequences}
    ordered = [m for m in METHODS if m in cfg.methods]
    fold_rows = []
    for split in loocv_split(sorted(by_id)):
        tf = time.time()
        test = by_id[split.test_subject]
        train_seqs = [by_id[s] for s in split.train_subjects]
        outputs = run_fold(train_seqs, test, cfg, ordered)
        for method in ordered:
            out = outputs[method]
            fold_rows.append(score_fold(method, split.test_subject, out, test.labels, cfg.window))
            result.outputs[(method, split.test_subject)] = (out, test.labels, test.t)
        result.timings[split.test_subject] = time.time() - tf
        if progress:
            progress(split.test_subject, [r for r in fold_rows if r.fold == split.test_subject])
    rows = []
    for method in ordered:
        rows += [r for r in fold_rows if r.method == method]
    rows += mean_rows(fold_rows, ordered)
    result.rows = rows
    result.timings["total"] = time.time() - t0
    if run_dir is not None:
        write_run(result, run_dir)
    return result


# -- output ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else repr(v)
    return str(v)


def report_csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue()


def format_table(result, metrics=("auc", "fscore", "accuracy")):
    """Text table: one block per metric, methods as rows, folds + mean as columns."""
    cfg = result.config
    folds = sorted({r.fold for r in result.rows if r.fold != "mean"})
    cols = folds + ["mean"]
    methods = [m for m in METHODS if any(r.method == m for r in result.rows)]
    label = {m: m for m in methods}
    if "fc-lstm" in label:
        label["fc-lstm"] = f"fc-lstm ({cfg.arch})"
    if "lstm" in label:
        label["lstm"] = f"lstm ({cfg.lstm_arch})"
    width = max(len(v) for v in label.values()) + 2
    lines = [f"window T={cfg.window}"]
    for metric in metrics:
        lines.append("")
        lines.append(metric.upper().ljust(width) + "".join(c.rjust(9) for c in cols))
        for m in methods:
            vals = {r.fold: getattr(r, metric) for r in result.rows if r.method == m}
            cells = []
            for c in cols:
                v = vals.get(c, float("nan"))
                cells.append(("-" if not np.isfinite(v) else f"{100 * v:.2f}").rjust(9))
            lines.append(label[m].ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def write_run(result, run_dir):
    """runs/<name>/report.csv, table.txt and <method>/<fold>/{roc,scores}.csv + model."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    for (method, fold), (out, labels, t) in sorted(result.outputs.items()):
        d = run_dir / method / fold
        d.mkdir(parents=True, exist_ok=True)
        keep = np.arange(len(labels)) >= result.config.window - 1
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "label", "score", "predicted"])
        for i in np.flatnonzero(keep):
            score = "" if out.scores is None else repr(float(out.scores[i]))
            w.writerow([repr(float(t[i])), int(labels[i]), score, int(out.predicted[i])])
        _atomic_write(d / "scores.csv", buf.getvalue())
        if out.scores is not None and 0 < labels[keep].sum() < keep.sum():
            curve, _ = M.roc_auc(out.scores[keep], labels[keep])
            M.write_roc_csv(d / "roc.csv", curve)
        if method in ("lstm", "fc-lstm") and out.model is not None:
            save_checkpoint(out.model, d / "model.npz")
        elif method == "svm" and out.model is not None:
            svm.save_model(out.model, d / "model.npz")
    _atomic_write(run_dir / "table.txt", format_table(result))
    # the report goes last: its presence marks a complete run
    _atomic_write(run_dir / "report.csv", report_csv_text(result.rows))
    return run_dir
