import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitstab import stability
from gaitstab.data import (
    LabeledSequence,
    Standardizer,
    augment,
    build_sequence,
    loocv_split,
    one_hot_phase,
    read_sequence_csv,
    standardize,
    window_arrays,
    windowize,
    write_sequence_csv,
)
from gaitstab.sim import SimConfig, generate_episode
from gaitstab.ukf import track_stream


@pytest.fixture(scope="module")
def seq():
    cfg = SimConfig(duration=120.0, fall_risk_count=4)
    ep = stability.label_episode(generate_episode(cfg, "S2"))
    return build_sequence(ep, track_stream(ep.com_detections, ep.t))


def test_build_sequence_layout(seq):
    assert seq.features.shape == (len(seq.t), 7)
    assert np.array_equal(seq.features[:, 6], seq.phase)
    assert seq.labels.sum() > 0 and seq.source == "original"


def test_standardize_properties():
    rng = np.random.default_rng(0)
    train = rng.normal(3, 2, size=(500, 7))
    train[:, 4] = 1.5
    test = rng.normal(3, 2, size=(100, 7))
    tr, te, st_ = standardize(train, test)
    assert np.all(np.abs(np.delete(tr, 4, 1).mean(0)) < 1e-9)
    assert np.all(np.abs(np.delete(tr, 4, 1).std(0) - 1) < 1e-9)
    assert np.all(tr[:, 4] == 0.0) and st_.std[4] == 1.0
    np.testing.assert_allclose(st_.inverse(te), test, atol=1e-12)


def test_constant_feature_unchanged():
    x = np.column_stack([np.random.default_rng(1).normal(size=50), np.zeros(50)])
    tr, _, _ = standardize(x, x)
    assert np.array_equal(tr[:, 1], x[:, 1])


def test_standardize_empty():
    with pytest.raises(ValueError):
        Standardizer.fit(np.zeros((0, 7)))


def test_window_examples(caplog):
    f = np.arange(150 * 7, dtype=float).reshape(150, 7)
    y = np.arange(150) % 2
    assert len(windowize(f[:100], y[:100], T=100)) == 1
    ws = windowize(f, y, T=100, stride=50)
    assert [w.start for w in ws] == [0, 50]
    with caplog.at_level(logging.WARNING):
        assert windowize(f[:99], y[:99], T=100) == []
    assert "shorter" in caplog.text


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 300), T=st.integers(1, 60), stride=st.integers(1, 40))
def test_window_index_audit(n, T, stride):
    f = np.random.default_rng(n).normal(size=(n, 3))
    y = np.arange(n)
    ws = windowize(f, y, T, stride)
    X, Y = window_arrays([(f, y)], T, stride)
    assert len(ws) == len(X) == (max(0, (n - T) // stride + 1) if n >= T else 0)
    for k, w in enumerate(ws):
        assert np.array_equal(w.inputs, f[w.start:w.start + T])
        assert np.array_equal(Y[k], y[w.start:w.start + T])


def test_augment_zero_noise_keeps_labels(seq):
    aug = augment(seq, (0.0, 0.0), np.random.default_rng(0))
    assert np.array_equal(aug.labels, seq.labels)
    combined = np.r_[seq.labels, aug.labels]
    assert (combined == 0).sum() == 2 * (seq.labels == 0).sum()
    assert aug.source == "augmented"


def test_augment_relabels_and_spares_fall_risk(seq):
    rng = np.random.default_rng(1)
    aug = augment(seq, (0.15, 0.20), rng)
    fr = seq.labels == 1
    assert np.array_equal(aug.features[fr], seq.features[fr])
    assert np.array_equal(aug.gt_com[fr], seq.gt_com[fr])
    assert np.all(aug.labels[fr] == 1)
    # the same noise vector moves the ground truth and the tracked CoM
    np.testing.assert_allclose(aug.gt_com - seq.gt_com, aug.features[:, :2] - seq.features[:, :2], atol=1e-12)
    relabel, _ = stability.label_arrays(aug.gt_com, aug.gt_legs, aug.phase)
    assert np.array_equal(relabel, aug.labels)
    assert aug.labels.mean() > seq.labels.mean()
    # the source sequence is untouched
    assert seq.source == "original"


def test_loocv():
    folds = loocv_split([1, 2, 3, 4, 5])
    assert len(folds) == 5
    f3 = [f for f in folds if f.test_subject == 3][0]
    assert f3.train_subjects == (1, 2, 4, 5)
    assert sorted(f.test_subject for f in folds) == [1, 2, 3, 4, 5]
    assert len(loocv_split(["a", "b"])) == 2
    with pytest.raises(ValueError):
        loocv_split(["a"])
    with pytest.raises(ValueError):
        loocv_split(["a", "a"])


def test_one_hot_phase():
    f = np.zeros((4, 7))
    f[:, 6] = [0, 1, 2, 3]
    h = one_hot_phase(f)
    assert h.shape == (4, 10)
    assert np.array_equal(h[:, 6:], np.eye(4))


def test_sequence_csv_roundtrip(tmp_path, seq):
    path = write_sequence_csv(tmp_path / "S2.dataset.csv", seq)
    back = read_sequence_csv(path)
    assert back.subject_id == "S2"
    assert np.array_equal(back.t, seq.t)
    assert np.array_equal(back.features, seq.features)
    assert np.array_equal(back.labels, seq.labels)
    assert np.array_equal(back.from_update, seq.from_update)
