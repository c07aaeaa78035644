"""Contour error and scenario performance metrics."""
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .vfo_tracking import CircleTrajectory

GRID_SAMPLES = 2000
REFINE_TOL = 1e-6


def _curve(traj, s):
    """Position, first and second derivative of a figure-8 at parameter s (time)."""
    w = traj.omega
    s1, c1 = np.sin(w * s), np.cos(w * s)
    s2, c2 = np.sin(2 * w * s), np.cos(2 * w * s)
    p = (traj.ax * s2, -traj.ay * c1)
    dp = (2 * w * traj.ax * c2, w * traj.ay * s1)
    ddp = (-4 * w * w * traj.ax * s2, w * w * traj.ay * c1)
    return p, dp, ddp


def contour_errors(xs, ys, traj, chunk=4096):
    """Closest distance from each (x, y) to the reference curve."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if isinstance(traj, CircleTrajectory):
        return np.abs(np.hypot(xs, ys) - traj.radius)
    period = traj.period
    grid = np.linspace(0.0, period, GRID_SAMPLES, endpoint=False)
    (gx, gy), _, _ = _curve(traj, grid)
    h = period / GRID_SAMPLES
    out = np.empty_like(xs)
    for lo in range(0, xs.size, chunk):
        px = xs[lo:lo + chunk, None]
        py = ys[lo:lo + chunk, None]
        d2 = (px - gx) ** 2 + (py - gy) ** 2
        idx = np.argmin(d2, axis=1)
        best = np.sqrt(d2[np.arange(idx.size), idx])
        s = grid[idx]
        px, py = px[:, 0], py[:, 0]
        # Safeguarded Newton on |p - c(s)|^2 inside the neighbouring grid cells.
        lo_s, hi_s = s - h, s + h
        for _ in range(30):
            (cx, cy), (dx, dy), (ddx, ddy) = _curve(traj, s)
            rx, ry = px - cx, py - cy
            f1 = -(rx * dx + ry * dy)
            f2 = dx * dx + dy * dy - (rx * ddx + ry * ddy)
            step = np.where(f2 > 0, -f1 / np.where(f2 > 0, f2, 1.0), 0.0)
            s_new = np.clip(s + step, lo_s, hi_s)
            if np.max(np.abs(s_new - s)) < 1e-12:
                s = s_new
                break
            s = s_new
        (cx, cy), _, _ = _curve(traj, s)
        refined = np.hypot(px - cx, py - cy)
        out[lo:lo + chunk] = np.minimum(best, refined)
    return out


def contour_error(pose, traj):
    return float(contour_errors([pose[0]], [pose[1]], traj)[0])


@dataclass
class Metrics:
    settling_time: float
    contour_rms: Optional[float]
    contour_mean: Optional[float]
    angle_rms: Optional[float]
    b_max: Optional[float]
    violations: int

    @property
    def settled(self):
        return math.isfinite(self.settling_time)

    def as_lines(self):
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                text = "none"
            elif isinstance(value, float):
                text = f"{value:.9g}"
            else:
                text = str(value)
            lines.append(f"{key}={text}")
        return lines


def settling_index(err, threshold):
    """First index after which ``err`` stays below ``threshold``; None if never."""
    above = np.nonzero(err >= threshold)[0]
    if above.size == 0:
        return 0
    last = int(above[-1])
    if last == err.size - 1:
        return None
    return last + 1


def compute_metrics(trace, cfg):
    if len(trace) == 0:
        raise ValueError("cannot compute metrics of an empty trace")
    traj = cfg.trajectory.build()
    err = contour_errors(trace["x"], trace["y"], traj)
    b = trace["B"]
    has_b = not np.all(np.isnan(b))
    b_max = float(np.nanmax(b)) if has_b else None
    violations = int(np.sum(b >= 0.0)) if has_b else 0
    idx = settling_index(err, cfg.settling_threshold_m)
    if idx is None:
        return Metrics(math.inf, None, None, None, b_max, violations)
    ss = err[idx:]
    ang = (trace["theta_a"] - trace["theta"])[idx:]
    return Metrics(
        settling_time=float(trace["t"][idx]),
        contour_rms=float(np.sqrt(np.mean(ss ** 2))),
        contour_mean=float(np.mean(ss)),
        angle_rms=float(np.sqrt(np.mean(ang ** 2))),
        b_max=b_max,
        violations=violations,
    )
