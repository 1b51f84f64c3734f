"""Synthetic gait episodes for rollator users.

The walker is modelled as an inverted pendulum vaulting over alternating
stance feet: the CoM advances at constant speed with a lateral sway that
is phase-locked to the steps, and the feet follow a four-phase cycle of
double and single support.

Coordinates are planar, x lateral and y forward.  Episodes are produced
either in a ground-fixed frame or in the frame of the rollator, which
travels with the user (the default, and the frame the on-board sensors
see).  Both frames differ by a pure translation.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

from .seeding import sub_rng

LRF_RANGE_GATE = (0.2, 1.5)


class ConfigError(ValueError):
    """Raised for an invalid simulation configuration."""


class GaitPhase(IntEnum):
    LEFT_DS = 0
    LEFT_STANCE_RIGHT_SWING = 1
    RIGHT_DS = 2
    RIGHT_STANCE_LEFT_SWING = 3

    @property
    def is_double_support(self):
        return self in (GaitPhase.LEFT_DS, GaitPhase.RIGHT_DS)

    def next(self):
        return GaitPhase((self.value + 1) % 4)


DOUBLE_SUPPORT_PHASES = (GaitPhase.LEFT_DS, GaitPhase.RIGHT_DS)


def is_legal_transition(prev, new):
    return new == prev or int(new) == (int(prev) + 1) % 4


@dataclass(frozen=True)
class GaitState:
    x_l: float
    y_l: float
    x_r: float
    y_r: float
    phase: GaitPhase


@dataclass(frozen=True)
class TrajectoryFrame:
    t: float
    com_xy: tuple
    gait: GaitState
    label: Optional[int] = None


@dataclass(frozen=True)
class SimConfig:
    """Walking, sensing and fall-risk parameters of one synthetic subject.

    ``stride_length`` is derived as ``2 * walk_speed * step_duration`` when
    left as None; an explicit value must agree with that product, since the
    feet and the CoM would otherwise drift apart.
    """

    walk_speed: float = 0.4
    step_duration: float = 0.7
    double_support_fraction: float = 0.30
    step_width: float = 0.15
    stride_length: Optional[float] = None
    sway_amplitude: float = 0.03
    duration: float = 300.0
    camera_rate: float = 30.0
    lrf_rate: float = 40.0
    com_obs_noise: tuple = (0.15, 0.20)
    leg_obs_noise: float = 0.02
    detection_dropout_prob: float = 0.2
    fall_risk_count: int = 12
    fall_risk_duration: float = 6.0
    fall_risk_offset: float = 0.3
    fall_risk_ramp: float = 0.75
    com_start: tuple = (0.0, 0.7)
    gait_start: float = 0.01
    robot_drift: float = 0.04
    frame: str = "robot"
    rng_seed: int = 0

    def __post_init__(self):
        if self.stride_length is None:
            object.__setattr__(self, "stride_length", 2.0 * self.walk_speed * self.step_duration)
        object.__setattr__(self, "com_obs_noise", tuple(float(s) for s in self.com_obs_noise))
        object.__setattr__(self, "com_start", tuple(float(s) for s in self.com_start))

    @property
    def step_length(self):
        return self.stride_length / 2.0

    def validate(self):
        for name in ("step_duration", "duration", "camera_rate", "lrf_rate"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.walk_speed < 0:
            raise ConfigError("walk_speed must be non-negative")
        if not 0.0 < self.double_support_fraction < 1.0:
            raise ConfigError("double_support_fraction must lie in (0, 1)")
        if not 0.0 <= self.detection_dropout_prob <= 1.0:
            raise ConfigError("detection_dropout_prob must lie in [0, 1]")
        if min(self.com_obs_noise) < 0 or self.leg_obs_noise < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.step_width < 0 or self.sway_amplitude < 0:
            raise ConfigError("step_width and sway_amplitude must be non-negative")
        expected = 2.0 * self.walk_speed * self.step_duration
        if abs(self.stride_length - expected) > 1e-9 + 1e-6 * expected:
            raise ConfigError(
                f"stride_length {self.stride_length} inconsistent with "
                f"2 * walk_speed * step_duration = {expected}"
            )
        if self.fall_risk_count < 0 or self.fall_risk_duration < 0:
            raise ConfigError("fall-risk count and duration must be non-negative")
        if self.fall_risk_count and 2 * self.fall_risk_ramp > self.fall_risk_duration:
            raise ConfigError("fall_risk_ramp must fit twice inside fall_risk_duration")
        if not 0 <= self.gait_start < 2 * self.step_duration:
            raise ConfigError("gait_start must lie in [0, 2 * step_duration)")
        if self.frame not in ("robot", "ground"):
            raise ConfigError(f"unknown frame {self.frame!r}")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class Episode:
    """One simulated walk.

    Ground truth lives in per-tick arrays at the LRF rate.  ``legs`` columns
    are (x_l, y_l, x_r, y_r).  The observation streams are None until
    :func:`sensorize` fills them; ``labels`` stays None until the stability
    labeller runs.
    """

    subject_id: str
    t: np.ndarray
    com: np.ndarray
    legs: np.ndarray
    phase: np.ndarray
    frame: str = "robot"
    labels: Optional[np.ndarray] = None
    com_detections: Optional[np.ndarray] = None
    obs_legs: Optional[np.ndarray] = None
    obs_phase: Optional[np.ndarray] = None
    fall_risk_windows: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def gait_state(self, i):
        x_l, y_l, x_r, y_r = (float(v) for v in self.legs[i])
        return GaitState(x_l, y_l, x_r, y_r, GaitPhase(int(self.phase[i])))

    def observed_gait_state(self, i):
        x_l, y_l, x_r, y_r = (float(v) for v in self.obs_legs[i])
        return GaitState(x_l, y_l, x_r, y_r, GaitPhase(int(self.obs_phase[i])))

    def frames(self):
        labels = self.labels
        return [
            TrajectoryFrame(
                float(self.t[i]),
                (float(self.com[i, 0]), float(self.com[i, 1])),
                self.gait_state(i),
                None if labels is None else int(labels[i]),
            )
            for i in range(len(self.t))
        ]

    @property
    def gait_observations(self):
        if self.obs_legs is None:
            return []
        return [(float(self.t[i]), self.observed_gait_state(i)) for i in range(len(self.t))]

    def copy(self, **changes):
        def _c(v):
            return v.copy() if isinstance(v, np.ndarray) else v

        kwargs = {f.name: _c(getattr(self, f.name)) for f in dataclasses.fields(self)}
        kwargs["fall_risk_windows"] = list(self.fall_risk_windows)
        kwargs.update(changes)
        return Episode(**kwargs)


def lrf_ticks(config):
    n = int(np.floor(config.duration * config.lrf_rate + 1e-9))
    return np.arange(n + 1) / config.lrf_rate


def camera_grid(config):
    n = int(np.floor(config.duration * config.camera_rate + 1e-9))
    return np.arange(n + 1) / config.camera_rate


def gait_phase_at(t, config):
    """Phase index for each time in ``t`` (array)."""
    u = (np.asarray(t) + config.gait_start) / config.step_duration
    k = np.floor(u + 1e-12).astype(np.int64)
    in_ds = (u - k) < config.double_support_fraction
    left_strike = (k % 2) == 0
    phase = np.where(
        left_strike,
        np.where(in_ds, GaitPhase.LEFT_DS, GaitPhase.LEFT_STANCE_RIGHT_SWING),
        np.where(in_ds, GaitPhase.RIGHT_DS, GaitPhase.RIGHT_STANCE_LEFT_SWING),
    )
    return phase.astype(np.int8)


def _foot_y(t, config, side):
    """Ground-frame forward position of one tibia; side 0 is left."""
    L = config.step_length
    Ts = config.step_duration
    dsf = config.double_support_fraction
    y0 = config.com_start[1] - config.walk_speed * config.gait_start
    # tibia lands ahead of the CoM so that the CoM is centred between the
    # feet halfway through double support
    lead = 0.5 * L * (1.0 + dsf)
    u = (np.asarray(t) + config.gait_start) / Ts
    k = np.floor(u + 1e-12).astype(np.int64)
    frac = u - k
    own_strike = (k % 2) == side
    landing = y0 + k * L + lead
    previous = y0 + (k - 1) * L + lead
    s = np.clip((frac - dsf) / (1.0 - dsf), 0.0, 1.0)
    swing = previous + 2.0 * L * (0.5 - 0.5 * np.cos(np.pi * s))
    return np.where(own_strike, landing, swing)


def _robot_offset(t, config, rng):
    """Rollator position relative to the nominal walking line (ground frame)."""
    t = np.asarray(t)
    out = np.zeros((len(t), 2))
    if config.robot_drift > 0:
        for axis in range(2):
            freqs = rng.uniform(0.01, 0.05, size=3)
            phases = rng.uniform(0, 2 * np.pi, size=3)
            weights = rng.dirichlet(np.ones(3))
            out[:, axis] = config.robot_drift * np.sum(
                weights[None, :] * np.sin(2 * np.pi * freqs[None, :] * t[:, None] + phases[None, :]),
                axis=1,
            )
    else:
        rng.uniform(size=18)  # keep the stream layout fixed
    out[:, 1] += config.walk_speed * t
    return out


def simulate_walk(config, subject_id="S1"):
    """Ground-truth trajectory of one walk, sampled at the LRF rate."""
    config.validate()
    t = lrf_ticks(config)
    x0, y0 = config.com_start
    Ts = config.step_duration
    com = np.empty((len(t), 2))
    # CoM leans over the stance foot: left (negative x) on even steps
    com[:, 0] = x0 - config.sway_amplitude * np.sin(np.pi * (t + config.gait_start) / Ts)
    com[:, 1] = y0 + config.walk_speed * t
    legs = np.empty((len(t), 4))
    legs[:, 0] = x0 - config.step_width / 2
    legs[:, 1] = _foot_y(t, config, 0)
    legs[:, 2] = x0 + config.step_width / 2
    legs[:, 3] = _foot_y(t, config, 1)
    phase = gait_phase_at(t, config)

    if config.frame == "robot":
        offset = _robot_offset(t, config, sub_rng(config.rng_seed, "robot-drift"))
        com -= offset
        legs[:, 0:2] -= offset
        legs[:, 2:4] -= offset
    return Episode(str(subject_id), t, com, legs, phase, frame=config.frame)


def _ramp_profile(t, start, stop, ramp):
    """Raised-cosine window that is 1 on [start+ramp, stop-ramp]."""
    w = np.zeros_like(t)
    inside = (t >= start) & (t <= stop)
    if ramp <= 0:
        w[inside] = 1.0
        return w
    rise = np.clip((t - start) / ramp, 0.0, 1.0)
    fall = np.clip((stop - t) / ramp, 0.0, 1.0)
    w[inside] = (0.5 - 0.5 * np.cos(np.pi * np.minimum(rise, fall)))[inside]
    return w


def inject_fall_risk(episode, config):
    """Displace the ground-truth CoM inside randomly placed windows.

    Each window pushes the CoM by ``fall_risk_offset`` towards a random
    direction in the backward/lateral half plane, ramped in and out over
    ``fall_risk_ramp`` seconds.  Frames outside every window are untouched.
    """
    config.validate()
    out = episode.copy()
    n = config.fall_risk_count
    if n == 0:
        return out
    span = float(episode.t[-1] - episode.t[0])
    width = config.fall_risk_duration
    free = span - n * width
    if free < 0:
        raise ConfigError(
            f"{n} fall-risk windows of {width} s do not fit in a {span} s episode"
        )
    rng = sub_rng(config.rng_seed, "fall-risk", episode.subject_id)
    lead = np.sort(rng.uniform(0.0, free, size=n))
    starts = episode.t[0] + lead + width * np.arange(n)
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=n)
    for start, theta in zip(starts, angles):
        stop = start + width
        w = _ramp_profile(episode.t, start, stop, config.fall_risk_ramp)
        direction = np.array([np.sin(theta), -np.cos(theta)])
        out.com += config.fall_risk_offset * w[:, None] * direction[None, :]
        out.fall_risk_windows.append((float(start), float(stop)))
    out.labels = None
    return out


def sensorize(episode, config):
    """Fill the camera CoM detections and LRF gait observations."""
    config.validate()
    out = episode.copy()
    rng = sub_rng(config.rng_seed, "sensorize", episode.subject_id)
    grid = camera_grid(config)
    grid = grid[grid <= episode.t[-1] + 1e-12]
    truth_x = np.interp(grid, episode.t, episode.com[:, 0])
    truth_y = np.interp(grid, episode.t, episode.com[:, 1])
    sx, sy = config.com_obs_noise
    noisy_x = truth_x + rng.normal(0.0, 1.0, len(grid)) * sx
    noisy_y = truth_y + rng.normal(0.0, 1.0, len(grid)) * sy
    keep = rng.uniform(size=len(grid)) >= config.detection_dropout_prob
    out.com_detections = np.column_stack([grid, noisy_x, noisy_y])[keep]

    leg_noise = rng.normal(0.0, 1.0, episode.legs.shape) * config.leg_obs_noise
    out.obs_legs = episode.legs + leg_noise
    out.obs_phase = episode.phase.copy()
    return out


def generate_episode(config, subject_id="S1"):
    """simulate_walk -> inject_fall_risk -> sensorize."""
    ep = simulate_walk(config, subject_id)
    ep = inject_fall_risk(ep, config)
    return sensorize(ep, config)


# -- serialization -------------------------------------------------------

def _gait_dict(legs_row, phase):
    x_l, y_l, x_r, y_r = (float(v) for v in legs_row)
    return {"x_l": x_l, "y_l": y_l, "x_r": x_r, "y_r": y_r, "phase": int(phase)}


def episode_to_records(episode):
    yield {
        "record": "episode",
        "subject_id": episode.subject_id,
        "frame": episode.frame,
        "fall_risk_windows": [list(w) for w in episode.fall_risk_windows],
        "n_frames": len(episode.t),
    }
    for i in range(len(episode.t)):
        yield {
            "record": "frame",
            "t": float(episode.t[i]),
            "com_xy": [float(episode.com[i, 0]), float(episode.com[i, 1])],
            "gait": _gait_dict(episode.legs[i], episode.phase[i]),
            "label": None if episode.labels is None else int(episode.labels[i]),
        }
    if episode.com_detections is not None:
        for t, qx, qy in episode.com_detections:
            yield {"record": "com_detection", "t": float(t), "qx": float(qx), "qy": float(qy)}
    if episode.obs_legs is not None:
        for i in range(len(episode.t)):
            yield {
                "record": "gait_observation",
                "t": float(episode.t[i]),
                "gait": _gait_dict(episode.obs_legs[i], episode.obs_phase[i]),
            }


def save_episode(episode, path):
    """Write ``episode`` as JSON lines; floats keep full double precision."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for rec in episode_to_records(episode):
            fh.write(json.dumps(rec) + "\n")
    tmp.replace(path)
    return path


def load_episode(path):
    header = None
    frames, dets, obs = [], [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("record")
            if kind == "episode":
                header = rec
            elif kind == "frame":
                frames.append(rec)
            elif kind == "com_detection":
                dets.append((rec["t"], rec["qx"], rec["qy"]))
            elif kind == "gait_observation":
                obs.append(rec)
            else:
                raise ValueError(f"{path}: unknown record type {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing episode header")

    def _legs(recs):
        return np.array([[r["gait"][k] for k in ("x_l", "y_l", "x_r", "y_r")] for r in recs], dtype=float)

    labels = [r["label"] for r in frames]
    ep = Episode(
        subject_id=header["subject_id"],
        t=np.array([r["t"] for r in frames], dtype=float),
        com=np.array([r["com_xy"] for r in frames], dtype=float).reshape(-1, 2),
        legs=_legs(frames).reshape(-1, 4),
        phase=np.array([r["gait"]["phase"] for r in frames], dtype=np.int8),
        frame=header.get("frame", "robot"),
        labels=None if any(v is None for v in labels) else np.array(labels, dtype=np.int8),
        com_detections=np.array(dets, dtype=float).reshape(-1, 3) if (dets or obs) else None,
        fall_risk_windows=[tuple(w) for w in header.get("fall_risk_windows", [])],
    )
    if obs:
        ep.obs_legs = _legs(obs)
        ep.obs_phase = np.array([r["gait"]["phase"] for r in obs], dtype=np.int8)
    return ep
