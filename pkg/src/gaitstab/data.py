"""Per-subject labelled sequences and their preparation for learning.

A :class:`LabeledSequence` holds, per LRF tick, the fused observation
vector (tracked CoM, observed legs, gait phase), the ground-truth label and
the ground truth it was derived from, so that augmentation can relabel
perturbed frames with the same stability rules.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import stability
from .stability import FootGeometry, LabelThresholds

logger = logging.getLogger(__name__)

FEATURES = ("qx", "qy", "x_l", "y_l", "x_r", "y_r", "phase")
PHASE_COLUMN = 6


@dataclass
class LabeledSequence:
    subject_id: str
    t: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    gt_com: np.ndarray
    gt_legs: np.ndarray
    phase: np.ndarray
    source: str = "original"
    from_update: np.ndarray = None

    def __len__(self):
        return len(self.t)


def build_sequence(episode, estimates, geom=FootGeometry(), thr=LabelThresholds()):
    """Fuse tracked CoM with observed gait and attach ground-truth labels."""
    if episode.obs_legs is None:
        raise ValueError(f"episode {episode.subject_id} has no gait observations")
    if len(estimates) != len(episode.t):
        raise ValueError("one CoM estimate per LRF tick is required")
    com = np.array([[e.qx, e.qy] for e in estimates])
    labels = episode.labels
    if labels is None:
        labels, _ = stability.label_arrays(episode.com, episode.legs, episode.phase, geom, thr)
    feats = np.column_stack([com, episode.obs_legs, episode.obs_phase.astype(float)])
    return LabeledSequence(
        subject_id=episode.subject_id,
        t=episode.t.copy(),
        features=feats,
        labels=np.asarray(labels, dtype=np.int8),
        gt_com=episode.com.copy(),
        gt_legs=episode.legs.copy(),
        phase=episode.phase.copy(),
        from_update=np.array([e.from_update for e in estimates]),
    )


def one_hot_phase(features):
    """Replace the scalar phase column by a 4-way one-hot block (7 -> 10 columns)."""
    features = np.asarray(features)
    hot = np.eye(4)[features[:, PHASE_COLUMN].round().astype(int)]
    return np.column_stack([features[:, :PHASE_COLUMN], hot])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frames):
        X = np.concatenate([np.atleast_2d(f) for f in frames]) if isinstance(frames, (list, tuple)) else np.asarray(frames)
        if len(X) == 0:
            raise ValueError("cannot standardise with an empty training fold")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X):
        return (np.asarray(X) - self.mean) / self.std

    def inverse(self, Z):
        return np.asarray(Z) * self.std + self.mean


def standardize(train, apply_to):
    """Fit statistics on ``train`` only and apply them to both."""
    st = Standardizer.fit(train)
    tr = [st.transform(x) for x in train] if isinstance(train, (list, tuple)) else st.transform(train)
    ap = [st.transform(x) for x in apply_to] if isinstance(apply_to, (list, tuple)) else st.transform(apply_to)
    return tr, ap, st


@dataclass
class WindowSample:
    inputs: np.ndarray
    labels: np.ndarray
    subject_id: str = ""
    start: int = 0


def window_starts(n, T, stride):
    if T <= 0 or stride <= 0:
        raise ValueError("window length and stride must be positive")
    if n < T:
        return np.arange(0)
    return np.arange(0, n - T + 1, stride)


def windowize(features, labels, T=100, stride=None, subject_id=""):
    """Length-T windows every ``stride`` frames (default T // 2)."""
    stride = stride or max(1, T // 2)
    features = np.asarray(features)
    labels = np.asarray(labels)
    starts = window_starts(len(features), T, stride)
    if len(starts) == 0:
        logger.warning("sequence of %d frames is shorter than the window (%d)", len(features), T)
    return [WindowSample(features[s:s + T], labels[s:s + T], subject_id, int(s)) for s in starts]


def window_arrays(sequences, T=100, stride=None):
    """Stacked (W, T, D) inputs and (W, T) labels over several (features, labels) pairs."""
    stride = stride or max(1, T // 2)
    xs, ys = [], []
    for feats, labels in sequences:
        starts = window_starts(len(feats), T, stride)
        if len(starts) == 0:
            logger.warning("sequence of %d frames is shorter than the window (%d)", len(feats), T)
            continue
        idx = starts[:, None] + np.arange(T)[None, :]
        xs.append(np.asarray(feats)[idx])
        ys.append(np.asarray(labels)[idx])
    if not xs:
        return np.zeros((0, T, 0)), np.zeros((0, T), dtype=np.int8)
    return np.concatenate(xs), np.concatenate(ys)


def augment(seq, noise=(0.15, 0.20), rng=None, geom=FootGeometry(), thr=LabelThresholds()):
    """Noisy copy of ``seq``: Safe frames get Gaussian CoM noise, then relabelled.

    The same noise vector perturbs the ground-truth CoM (which defines the
    new label) and the tracked CoM feature.  Fall-Risk frames are copied
    verbatim.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    out = replace(
        seq,
        features=seq.features.copy(),
        labels=seq.labels.copy(),
        gt_com=seq.gt_com.copy(),
        source="augmented",
    )
    safe = np.flatnonzero(seq.labels == stability.SAFE)
    vec = rng.normal(size=(len(safe), 2)) * np.asarray(noise, dtype=float)[None, :]
    if len(safe) == 0:
        return out
    out.gt_com[safe] += vec
    out.features[safe, 0:2] += vec
    new_labels, _ = stability.label_arrays(out.gt_com[safe], seq.gt_legs[safe], seq.phase[safe], geom, thr)
    out.labels[safe] = new_labels
    return out


@dataclass(frozen=True)
class FoldSplit:
    test_subject: str
    train_subjects: tuple


def loocv_split(subject_ids):
    ids = list(subject_ids)
    if len(ids) < 2:
        raise ValueError("leave-one-out needs at least two subjects")
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    return [FoldSplit(s, tuple(o for o in ids if o != s)) for s in ids]


def write_sequence_csv(path, seq, margins=None):
    """Per-tick dataset row: t, fused features, from_update, gt label."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *FEATURES, "from_update", "label"])
        fu = seq.from_update if seq.from_update is not None else np.zeros(len(seq), bool)
        for i in range(len(seq)):
            row = [repr(float(seq.t[i]))]
            row += [repr(float(v)) for v in seq.features[i, :PHASE_COLUMN]]
            row += [int(seq.features[i, PHASE_COLUMN]), int(fu[i]), int(seq.labels[i])]
            w.writerow(row)
    tmp.replace(path)
    return path


def read_sequence_csv(path, subject_id=None):
    """Inverse of :func:`write_sequence_csv` (ground-truth geometry not stored)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    feats = np.array([[float(r[k]) for k in FEATURES] for r in rows]).reshape(-1, len(FEATURES))
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int8)
    fu = np.array([bool(int(r["from_update"])) for r in rows])
    sid = subject_id or Path(path).name.split(".")[0]
    nan2 = np.full((len(t), 2), np.nan)
    return LabeledSequence(sid, t, feats, labels, nan2, np.full((len(t), 4), np.nan),
                           feats[:, PHASE_COLUMN].astype(np.int8), "original", fu)
