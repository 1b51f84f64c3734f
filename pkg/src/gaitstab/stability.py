"""Base of Support geometry, CoM stability margin and Safe/Fall-Risk labels.

The same rules produce the ground-truth labels (from true CoM and feet)
and the rule-based baseline (from tracked CoM and observed legs).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .sim import GaitPhase, GaitState

SAFE = 0
FALL_RISK = 1


class StabilityLabel(IntEnum):
    SAFE = 0
    FALL_RISK = 1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FootGeometry:
    foot_length: float = 0.25
    foot_width: float = 0.10
    tibia_to_foot_center: float = 0.05

    def validate(self):
        if not (self.foot_length > 0 and self.foot_width > 0 and self.tibia_to_foot_center > 0):
            raise GeometryError(f"foot geometry must be positive: {self}")
        return self


@dataclass(frozen=True)
class LabelThresholds:
    """Minimum margin in double support and tolerated CoM separation in
    single support (``ss`` is negative: CoM up to ``-ss`` outside is Safe)."""

    ds: float = 0.0
    ss: float = -0.15

    def validate(self):
        if not (math.isfinite(self.ds) and math.isfinite(self.ss)):
            raise ValueError("thresholds must be finite")
        if self.ss > 0:
            raise ValueError("single-support threshold must be <= 0")
        return self


@dataclass(frozen=True)
class BoSPolygon:
    vertices: np.ndarray  # (k, 2), counter-clockwise

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("a polygon needs at least 3 planar vertices")
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)


@dataclass(frozen=True)
class StabilityMargin:
    signed_distance: float

    @property
    def inside(self):
        return self.signed_distance >= 0


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points):
    """Andrew's monotone chain; CCW, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return np.array(pts)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def foot_rectangle(x, y, geom):
    """CCW corners of the foot whose tibia is at (x, y)."""
    cy = y + geom.tibia_to_foot_center
    hx, hy = geom.foot_width / 2, geom.foot_length / 2
    return np.array([[x - hx, cy - hy], [x + hx, cy - hy], [x + hx, cy + hy], [x - hx, cy + hy]])


def bos_from_gait_state(gait, geom=FootGeometry()):
    geom.validate()
    phase = GaitPhase(int(gait.phase))
    left = foot_rectangle(gait.x_l, gait.y_l, geom)
    right = foot_rectangle(gait.x_r, gait.y_r, geom)
    if phase.is_double_support:
        return BoSPolygon(convex_hull(np.vstack([left, right])))
    if phase == GaitPhase.LEFT_STANCE_RIGHT_SWING:
        return BoSPolygon(left)
    return BoSPolygon(right)


def is_convex_ccw(vertices, tol=1e-12):
    v = np.asarray(vertices)
    k = len(v)
    if k < 3:
        return False
    for i in range(k):
        if _cross(v[i], v[(i + 1) % k], v[(i + 2) % k]) < -tol:
            return False
    area = 0.5 * sum(v[i, 0] * v[(i + 1) % k, 1] - v[(i + 1) % k, 0] * v[i, 1] for i in range(k))
    return area > 0


def _signed_distance(px, py, verts):
    # pure Python: polygons have at most 8 vertices and this runs per frame
    k = len(verts)
    best = math.inf
    inside = True
    for i in range(k):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % k]
        ex, ey = bx - ax, by - ay
        wx, wy = px - ax, py - ay
        if ex * wy - ey * wx < 0:
            inside = False
        L2 = ex * ex + ey * ey
        s = 0.0 if L2 == 0 else min(1.0, max(0.0, (wx * ex + wy * ey) / L2))
        dx, dy = wx - s * ex, wy - s * ey
        d = dx * dx + dy * dy
        if d < best:
            best = d
    d = math.sqrt(best)
    return d if inside else -d


def signed_margin(com_xy, polygon):
    """Signed distance from the CoM to the BoS boundary, positive inside.

    Points on the boundary get margin 0 and count as inside.
    """
    verts = polygon.vertices.tolist() if isinstance(polygon, BoSPolygon) else np.asarray(polygon).tolist()
    return StabilityMargin(_signed_distance(float(com_xy[0]), float(com_xy[1]), verts))


def label_frame(margin, phase, thr=LabelThresholds()):
    value = margin.signed_distance if isinstance(margin, StabilityMargin) else float(margin)
    limit = thr.ds if GaitPhase(int(phase)).is_double_support else thr.ss
    return StabilityLabel.SAFE if value >= limit else StabilityLabel.FALL_RISK


def margins_for(com, legs, phase, geom=FootGeometry()):
    """Vectorised-by-loop margins for arrays com (n,2), legs (n,4), phase (n,)."""
    geom.validate()
    com = np.asarray(com, dtype=float)
    legs = np.asarray(legs, dtype=float)
    out = np.empty(len(com))
    for i in range(len(com)):
        g = GaitState(legs[i, 0], legs[i, 1], legs[i, 2], legs[i, 3], GaitPhase(int(phase[i])))
        poly = bos_from_gait_state(g, geom)
        out[i] = _signed_distance(com[i, 0], com[i, 1], poly.vertices.tolist())
    return out


def labels_from_margins(margins, phase, thr=LabelThresholds()):
    phase = np.asarray(phase)
    ds = (phase == GaitPhase.LEFT_DS) | (phase == GaitPhase.RIGHT_DS)
    limit = np.where(ds, thr.ds, thr.ss)
    return np.where(np.asarray(margins) >= limit, SAFE, FALL_RISK).astype(np.int8)


def label_arrays(com, legs, phase, geom=FootGeometry(), thr=LabelThresholds()):
    m = margins_for(com, legs, phase, geom)
    return labels_from_margins(m, phase, thr), m


def label_episode(episode, geom=FootGeometry(), thr=LabelThresholds()):
    """Copy of ``episode`` with ground-truth labels filled in."""
    labels, _ = label_arrays(episode.com, episode.legs, episode.phase, geom, thr)
    return episode.copy(labels=labels)


def rule_based_predict(com_estimates, gait_observations, geom=FootGeometry(), thr=LabelThresholds(),
                       ticks=None, atol=1e-9):
    """Hard Safe/Fall-Risk labels from tracked CoM and observed gait states.

    ``com_estimates`` is an (n, 2) array or a list of objects with ``qx``,
    ``qy`` and ``t`` attributes.  ``gait_observations`` is either a list of
    (t, GaitState) pairs or a tuple ``(legs (n,4), phase (n,))``.  When both
    streams carry timestamps they must agree tick by tick.
    """
    com_t = None
    if len(com_estimates) and hasattr(com_estimates[0], "qx"):
        com_t = np.array([e.t for e in com_estimates])
        com = np.array([[e.qx, e.qy] for e in com_estimates])
    else:
        com = np.asarray(com_estimates, dtype=float).reshape(-1, 2)

    gait_t = None
    if isinstance(gait_observations, tuple):
        legs, phase = (np.asarray(a) for a in gait_observations)
    else:
        gait_t = np.array([t for t, _ in gait_observations])
        legs = np.array([[g.x_l, g.y_l, g.x_r, g.y_r] for _, g in gait_observations])
        phase = np.array([int(g.phase) for _, g in gait_observations])
    if ticks is not None:
        gait_t = np.asarray(ticks) if gait_t is None else gait_t

    if len(com) != len(legs):
        raise ValueError(f"misaligned streams: {len(com)} CoM estimates vs {len(legs)} gait observations")
    if com_t is not None and gait_t is not None and not np.allclose(com_t, gait_t, atol=atol, rtol=0):
        raise ValueError("misaligned streams: CoM and gait timestamps differ")
    labels, _ = label_arrays(com, legs, phase, geom, thr)
    return labels


def write_label_csv(path, t, margins, phase, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "margin", "phase", "label"])
        for row in zip(t, margins, phase, labels):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])
