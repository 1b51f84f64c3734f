"""Unscented Kalman filter for the planar CoM.

State is (q_x, q_y, v, w): position, linear speed and angular rate.  The
motion model advances the position by ``v * (cos(w dt), sin(w dt)) * dt``
and keeps both rates as random walks; the camera observes the position
only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

STATE_DIM = 4
OBS_DIM = 2


class NumericalError(ArithmeticError):
    """Raised when a covariance stops being a valid covariance."""


@dataclass(frozen=True)
class UkfConfig:
    sigma_v: float = 0.98
    sigma_w: float = 1.88
    obs_std: tuple = (0.15, 0.2)
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0
    initial_cov: tuple = (0.15 ** 2, 0.2 ** 2, 0.5 ** 2, 0.5 ** 2)

    def __post_init__(self):
        object.__setattr__(self, "obs_std", tuple(float(s) for s in self.obs_std))
        object.__setattr__(self, "initial_cov", tuple(float(s) for s in self.initial_cov))

    def validate(self):
        if self.sigma_v < 0 or self.sigma_w < 0:
            raise ValueError("process noise stds must be non-negative")
        if min(self.obs_std) <= 0:
            raise ValueError("observation noise stds must be positive")
        if not 0 < self.alpha <= 1 or self.kappa < 0:
            raise ValueError("need alpha in (0, 1] and kappa >= 0")
        return self

    @property
    def R(self):
        return np.diag(np.square(self.obs_std))


@dataclass
class UkfState:
    mean: np.ndarray
    cov: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class ComEstimate:
    t: float
    qx: float
    qy: float
    from_update: bool


def unscented_weights(n, alpha, beta, kappa):
    lam = alpha ** 2 * (n + kappa) - n
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - alpha ** 2 + beta)
    return wm, wc, lam


def psd_sqrt(cov):
    """Lower factor ``S`` with ``S @ S.T == cov``.

    Cholesky first; singular or slightly indefinite inputs fall back to a
    symmetric eigendecomposition with negative eigenvalues clamped to 0.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    sym = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w.min() < -1e-8 * scale:
        raise NumericalError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sigma_points(mean, cov, alpha=0.1, beta=2.0, kappa=0.0):
    """2n+1 sigma points (rows) and their mean and covariance weights."""
    mean = np.asarray(mean, dtype=float)
    n = len(mean)
    wm, wc, lam = unscented_weights(n, alpha, beta, kappa)
    S = psd_sqrt(cov) * np.sqrt(n + lam)
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    pts[1:n + 1] = mean + S.T
    pts[n + 1:] = mean - S.T
    return pts, wm, wc


def weighted_moments(points, wm, wc):
    mu = wm @ points
    d = points - mu
    return mu, (wc[:, None] * d).T @ d


def motion_model(points, dt):
    """Propagate state rows through the CoM kinematics."""
    out = np.array(points, dtype=float, copy=True)
    v = out[..., 2]
    w = out[..., 3]
    out[..., 0] += v * np.cos(w * dt) * dt
    out[..., 1] += v * np.sin(w * dt) * dt
    return out


def check_covariance(cov, where=""):
    if not np.all(np.isfinite(cov)):
        raise NumericalError(f"non-finite covariance {where}")
    if np.max(np.abs(cov - cov.T)) > 1e-12 * max(1.0, np.max(np.abs(cov))):
        raise NumericalError(f"asymmetric covariance {where}")
    if np.linalg.eigvalsh(cov).min() < -1e-10:
        raise NumericalError(f"covariance lost positive semidefiniteness {where}")


def initial_state(detection, config=UkfConfig(), t=0.0):
    mean = np.array([detection[0], detection[1], 0.0, 0.0], dtype=float)
    return UkfState(mean, np.diag(config.initial_cov), float(t))


def ukf_predict(state, dt, config=UkfConfig()):
    if not dt > 0:
        raise ValueError(f"prediction interval must be positive, got {dt}")
    pts, wm, wc = sigma_points(state.mean, state.cov, config.alpha, config.beta, config.kappa)
    mean, cov = weighted_moments(motion_model(pts, dt), wm, wc)
    cov[2, 2] += config.sigma_v ** 2 * dt
    cov[3, 3] += config.sigma_w ** 2 * dt
    cov = 0.5 * (cov + cov.T)
    check_covariance(cov, "after predict")
    return UkfState(mean, cov, state.t + dt)


def ukf_update(state, obs, config=UkfConfig()):
    pts, wm, wc = sigma_points(state.mean, state.cov, config.alpha, config.beta, config.kappa)
    z_pts = pts[:, :OBS_DIM]
    z_mean = wm @ z_pts
    dz = z_pts - z_mean
    dx = pts - wm @ pts
    S = (wc[:, None] * dz).T @ dz + config.R
    Pxz = (wc[:, None] * dx).T @ dz
    try:
        K = np.linalg.solve(S, Pxz.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular innovation covariance {S!r}") from exc
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite Kalman gain")
    innovation = np.asarray(obs, dtype=float)[:OBS_DIM] - z_mean
    mean = state.mean + K @ innovation
    cov = state.cov - K @ S @ K.T
    cov = 0.5 * (cov + cov.T)
    check_covariance(cov, "after update")
    return UkfState(mean, cov, state.t)


def associate(detections, ticks, camera_rate):
    """Map each detection to its nearest LRF tick within half a camera period.

    Returns a dict tick index -> detection row index; when two detections
    compete for one tick the closer one wins.
    """
    ticks = np.asarray(ticks, dtype=float)
    out = {}
    best = {}
    if len(detections) == 0 or len(ticks) == 0:
        return out
    det_t = np.asarray(detections)[:, 0]
    idx = np.clip(np.searchsorted(ticks, det_t), 1, len(ticks) - 1) if len(ticks) > 1 else np.zeros(len(det_t), int)
    if len(ticks) > 1:
        left = ticks[idx - 1]
        right = ticks[idx]
        idx = np.where(np.abs(det_t - left) <= np.abs(det_t - right), idx - 1, idx)
    half = 0.5 / camera_rate
    for j, (i, td) in enumerate(zip(idx, det_t)):
        gap = abs(td - ticks[i])
        if gap <= half + 1e-12 and gap < best.get(i, np.inf):
            best[int(i)] = gap
            out[int(i)] = j
    return out


def track_stream(detections, ticks, config=UkfConfig(), camera_rate=30.0, return_states=False):
    """One CoM estimate per LRF tick from a sparse detection stream.

    ``detections`` rows are (t, q_x, q_y).  The filter starts from the first
    detection; ticks before it repeat that initial estimate without an
    update.  Ticks with an associated detection run predict + update, the
    rest predict only.
    """
    config.validate()
    detections = np.asarray(detections, dtype=float).reshape(-1, 3)
    ticks = np.asarray(ticks, dtype=float)
    if len(detections) == 0:
        raise ValueError("cannot initialise the CoM tracker from an empty detection stream")
    if np.any(np.diff(ticks) <= 0):
        raise ValueError("LRF ticks must be strictly increasing")
    if np.any(np.diff(detections[:, 0]) < 0):
        raise ValueError("detections must be sorted by time")

    matches = associate(detections, ticks, camera_rate)
    if not matches:
        raise ValueError("no detection falls within half a camera period of any LRF tick")
    first_tick = min(matches)
    first = detections[matches[first_tick]]
    state = initial_state(first[1:], config, ticks[first_tick])

    estimates = []
    states = []
    for i, t in enumerate(ticks):
        fused = False
        if i < first_tick:
            pass
        elif i == first_tick:
            fused = True
        else:
            state = ukf_predict(state, t - state.t, config)
            state.t = float(t)
            if i in matches:
                state = ukf_update(state, detections[matches[i]][1:], config)
                fused = True
        estimates.append(ComEstimate(float(t), float(state.mean[0]), float(state.mean[1]), fused))
        if return_states:
            states.append(UkfState(state.mean.copy(), state.cov.copy(), float(t)))
    if return_states:
        return estimates, states
    return estimates


def estimates_to_array(estimates):
    return np.array([[e.qx, e.qy] for e in estimates], dtype=float).reshape(-1, 2)


def write_estimates_csv(path, estimates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "qx", "qy", "from_update"])
        for e in estimates:
            w.writerow([repr(e.t), repr(e.qx), repr(e.qy), int(e.from_update)])


def read_estimates_csv(path):
    with open(path, newline="") as fh:
        return [
            ComEstimate(float(r["t"]), float(r["qx"]), float(r["qy"]), bool(int(r["from_update"])))
            for r in csv.DictReader(fh)
        ]
