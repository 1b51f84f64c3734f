import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitstab import stability
from gaitstab.sim import (
    LRF_RANGE_GATE,
    ConfigError,
    GaitPhase,
    SimConfig,
    camera_grid,
    generate_episode,
    inject_fall_risk,
    is_legal_transition,
    load_episode,
    save_episode,
    sensorize,
    simulate_walk,
)


def short(**kw):
    base = dict(duration=20.0, fall_risk_count=0)
    base.update(kw)
    return SimConfig(**base)


def test_zero_sway_ground_frame_progression():
    cfg = short(sway_amplitude=0.0, walk_speed=0.5, duration=2.0, frame="ground")
    ep = simulate_walk(cfg)
    x0, y0 = cfg.com_start
    assert np.all(ep.com[:, 0] == x0)
    np.testing.assert_allclose(ep.com[:, 1], y0 + 0.5 * ep.t, rtol=0, atol=1e-12)


def test_frames_cover_duration_at_lrf_rate():
    cfg = short(duration=10.0)
    ep = simulate_walk(cfg)
    assert ep.t[0] == 0.0 and ep.t[-1] == pytest.approx(10.0)
    assert abs(len(ep.t) - cfg.duration * cfg.lrf_rate) <= 1
    assert np.all(np.diff(ep.t) > 0)


def test_determinism():
    cfg = SimConfig(duration=120.0, rng_seed=3)
    a = generate_episode(cfg, "S1")
    b = generate_episode(cfg, "S1")
    for name in ("t", "com", "legs", "phase", "com_detections", "obs_legs", "obs_phase"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.fall_risk_windows == b.fall_risk_windows


def test_seed_changes_streams():
    a = generate_episode(SimConfig(duration=120.0, rng_seed=1))
    b = generate_episode(SimConfig(duration=120.0, rng_seed=2))
    assert not np.array_equal(a.com_detections[:20], b.com_detections[:20])


def test_default_double_support_fraction():
    cfg = SimConfig()
    ep = simulate_walk(cfg)
    ds = np.isin(ep.phase, [GaitPhase.LEFT_DS, GaitPhase.RIGHT_DS]).mean()
    assert abs(ds - cfg.double_support_fraction) <= 0.02


@settings(max_examples=25, deadline=None)
@given(
    speed=st.floats(0.2, 0.8),
    step=st.floats(0.4, 1.0),
    dsf=st.floats(0.1, 0.5),
    start=st.floats(0.0, 0.7),
)
def test_phase_transitions_are_cyclic(speed, step, dsf, start):
    cfg = short(walk_speed=speed, step_duration=step, double_support_fraction=dsf, gait_start=start)
    ph = simulate_walk(cfg).phase
    for a, b in zip(ph[:-1], ph[1:]):
        assert is_legal_transition(a, b)
    assert set(np.unique(ph)) <= {0, 1, 2, 3}


def test_phase_cycle_order():
    ph = simulate_walk(short()).phase
    changes = ph[1:][ph[1:] != ph[:-1]]
    prev = ph[0]
    for p in changes:
        assert int(p) == (int(prev) + 1) % 4
        prev = p


def test_gait_state_bounds():
    cfg = SimConfig()
    ep = simulate_walk(cfg)
    assert np.all(np.abs(ep.legs[:, 0] - ep.legs[:, 2]) <= cfg.step_width + 1e-12)
    feet_y = ep.legs[:, [1, 3]]
    assert feet_y.min() >= LRF_RANGE_GATE[0] and feet_y.max() <= LRF_RANGE_GATE[1]


def test_safe_walking_keeps_com_inside_double_support():
    ep = simulate_walk(SimConfig(duration=60.0, fall_risk_count=0))
    margins = stability.margins_for(ep.com, ep.legs, ep.phase)
    ds = np.isin(ep.phase, [0, 2])
    assert np.all(margins[ds] >= 0)
    labels, _ = stability.label_arrays(ep.com, ep.legs, ep.phase)
    assert labels.sum() == 0


def test_inject_zero_count_unchanged():
    cfg = short()
    ep = simulate_walk(cfg)
    out = inject_fall_risk(ep, cfg)
    assert np.array_equal(out.com, ep.com) and out.fall_risk_windows == []


def test_inject_one_window_creates_fall_risk():
    cfg = short(duration=30.0, fall_risk_count=1, fall_risk_offset=0.3)
    out = inject_fall_risk(simulate_walk(cfg), cfg)
    labels, _ = stability.label_arrays(out.com, out.legs, out.phase)
    assert labels.sum() >= 1


def test_inject_leaves_frames_outside_windows_untouched():
    cfg = short(duration=60.0, fall_risk_count=2)
    ep = simulate_walk(cfg)
    out = inject_fall_risk(ep, cfg)
    (a0, a1), (b0, b1) = out.fall_risk_windows
    assert a1 <= b0
    outside = ~(((ep.t >= a0) & (ep.t <= a1)) | ((ep.t >= b0) & (ep.t <= b1)))
    assert np.array_equal(out.com[outside], ep.com[outside])
    assert not np.array_equal(out.com[~outside], ep.com[~outside])
    assert np.array_equal(out.legs, ep.legs)


def test_inject_windows_too_long():
    cfg = short(duration=20.0, fall_risk_count=5, fall_risk_duration=6.0)
    with pytest.raises(ConfigError):
        inject_fall_risk(simulate_walk(cfg), cfg)


def test_sensorize_noiseless_equals_truth():
    cfg = short(com_obs_noise=(0.0, 0.0), leg_obs_noise=0.0, detection_dropout_prob=0.0, camera_rate=40.0)
    ep = sensorize(simulate_walk(cfg), cfg)
    assert len(ep.com_detections) == len(ep.t)
    np.testing.assert_allclose(ep.com_detections[:, 1:], ep.com, atol=1e-12)
    assert np.array_equal(ep.obs_legs, ep.legs)
    assert np.array_equal(ep.obs_phase, ep.phase)


def test_sensorize_full_dropout():
    cfg = short(detection_dropout_prob=1.0)
    ep = sensorize(simulate_walk(cfg), cfg)
    assert len(ep.com_detections) == 0


def test_noise_calibration():
    cfg = SimConfig(duration=400.0, fall_risk_count=0, detection_dropout_prob=0.0)
    ep = sensorize(simulate_walk(cfg), cfg)
    det = ep.com_detections
    assert len(det) >= 10_000
    truth_x = np.interp(det[:, 0], ep.t, ep.com[:, 0])
    truth_y = np.interp(det[:, 0], ep.t, ep.com[:, 1])
    sx = np.std(det[:, 1] - truth_x)
    sy = np.std(det[:, 2] - truth_y)
    assert 0.14 <= sx <= 0.16
    assert 0.18 <= sy <= 0.22
    leg_res = (ep.obs_legs - ep.legs).ravel()
    assert abs(np.std(leg_res) - cfg.leg_obs_noise) <= 0.1 * cfg.leg_obs_noise


def test_camera_grid_and_dropout_subset():
    cfg = SimConfig(duration=100.0)
    ep = generate_episode(cfg)
    grid = camera_grid(cfg)
    np.testing.assert_allclose(np.diff(grid), 1.0 / cfg.camera_rate, rtol=0, atol=1e-12)
    assert np.all(np.isin(ep.com_detections[:, 0], grid))
    kept = len(ep.com_detections) / len(grid)
    assert abs(kept - (1 - cfg.detection_dropout_prob)) < 0.03


@pytest.mark.parametrize("changes", [
    dict(lrf_rate=0.0), dict(camera_rate=-1.0), dict(duration=0.0),
    dict(double_support_fraction=1.0), dict(detection_dropout_prob=1.5),
    dict(stride_length=0.9), dict(frame="world"),
])
def test_invalid_config(changes):
    with pytest.raises(ConfigError):
        SimConfig(**changes).validate()


def test_episode_jsonl_roundtrip(tmp_path):
    cfg = SimConfig(duration=30.0, fall_risk_count=1)
    ep = stability.label_episode(generate_episode(cfg, "S7"))
    path = save_episode(ep, tmp_path / "S7.episode.jsonl")
    first = json.loads(path.read_text().splitlines()[0])
    assert first["record"] == "episode" and first["subject_id"] == "S7"
    back = load_episode(path)
    for name in ("t", "com", "legs", "phase", "labels", "com_detections", "obs_legs", "obs_phase"):
        assert np.array_equal(getattr(back, name), getattr(ep, name)), name
    assert back.fall_risk_windows == ep.fall_risk_windows
    assert not list(tmp_path.glob("*.tmp"))


def test_frames_view():
    ep = simulate_walk(short(duration=1.0))
    frames = ep.frames()
    assert len(frames) == len(ep.t)
    assert frames[3].gait.phase == GaitPhase(int(ep.phase[3]))
    assert frames[3].com_xy == (ep.com[3, 0], ep.com[3, 1])
