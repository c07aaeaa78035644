"""Reference trajectories, vector-field-orientation tracking and PI control."""
import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
H_EPS = 1e-9


def atan2c(y, x, prev):
    """Four-quadrant arctangent continued to the branch nearest ``prev``."""
    raw = math.atan2(y, x)
    return raw + TWO_PI * math.floor((prev - raw) / TWO_PI + 0.5)


class ReferenceState(NamedTuple):
    xr: float
    yr: float
    dxr: float
    dyr: float
    ddxr: float
    ddyr: float
    theta_r: float
    vr: float
    omega_r: float


def _finish(xr, yr, dxr, dyr, ddxr, ddyr, theta_prev):
    vr2 = dxr * dxr + dyr * dyr
    if theta_prev is None:
        theta_r = math.atan2(dyr, dxr)
    else:
        theta_r = atan2c(dyr, dxr, theta_prev)
    omega_r = (dxr * ddyr - dyr * ddxr) / vr2
    return ReferenceState(xr, yr, dxr, dyr, ddxr, ddyr, theta_r, math.sqrt(vr2), omega_r)


def reference_circle(t, R, omega_r, theta_prev=None):
    """x_r = R sin(w t), y_r = -R cos(w t)."""
    s, c = math.sin(omega_r * t), math.cos(omega_r * t)
    w2 = omega_r * omega_r
    return _finish(
        R * s, -R * c,
        R * omega_r * c, R * omega_r * s,
        -R * w2 * s, R * w2 * c,
        theta_prev,
    )


def reference_figure8(t, ax, ay, omega_r, theta_prev=None):
    """x_r = ax sin(2 w t), y_r = -ay cos(w t)."""
    s2, c2 = math.sin(2.0 * omega_r * t), math.cos(2.0 * omega_r * t)
    s1, c1 = math.sin(omega_r * t), math.cos(omega_r * t)
    w = omega_r
    return _finish(
        ax * s2, -ay * c1,
        2.0 * w * ax * c2, w * ay * s1,
        -4.0 * w * w * ax * s2, w * w * ay * c1,
        theta_prev,
    )


@dataclass(frozen=True)
class CircleTrajectory:
    radius: float
    omega: float

    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("circle radius must be positive")
        if self.omega == 0 or not math.isfinite(self.omega):
            raise ConfigError("circle angular rate must be finite and non-zero")

    @property
    def period(self):
        return TWO_PI / abs(self.omega)

    def state(self, t, theta_prev=None):
        return reference_circle(t, self.radius, self.omega, theta_prev)


@dataclass(frozen=True)
class Figure8Trajectory:
    ax: float
    ay: float
    omega: float

    kind = "figure8"

    def __post_init__(self):
        if not (self.ax > 0 and self.ay > 0):
            raise ConfigError("figure-8 amplitudes must be positive")
        # vr vanishes identically when omega == 0; otherwise dx and dy never
        # vanish together because sin(w t) = 0 forces cos(2 w t) = 1.
        if self.omega == 0 or not math.isfinite(self.omega):
            raise ConfigError("figure-8 angular rate must be finite and non-zero (forward motion)")

    @property
    def period(self):
        return TWO_PI / abs(self.omega)

    def state(self, t, theta_prev=None):
        return reference_figure8(t, self.ax, self.ay, self.omega, theta_prev)


class VfoOutput(NamedTuple):
    v_a: float
    theta_a: float
    dtheta_a: float
    hx: float
    hy: float


def vfo_step(pose, ref, k, theta_a_prev):
    """Adjusted speed, heading and heading rate from the convergence field.

    ``theta_a_prev`` anchors the angle continuation; when the field vanishes
    (``|h| < H_EPS``) the previous heading is held and its rate set to zero.
    """
    x, y, th = pose
    ex = ref.xr - x
    ey = ref.yr - y
    hx = k * ex + ref.dxr
    hy = k * ey + ref.dyr
    c, s = math.cos(th), math.sin(th)
    v_a = hx * c + hy * s
    hn2 = hx * hx + hy * hy
    if hn2 < H_EPS * H_EPS:
        return VfoOutput(v_a, theta_a_prev, 0.0, hx, hy)
    theta_a = atan2c(hy, hx, theta_a_prev)
    dhx = k * (ref.dxr - v_a * c) + ref.ddxr
    dhy = k * (ref.dyr - v_a * s) + ref.ddyr
    dtheta_a = (dhy * hx - hy * dhx) / hn2
    return VfoOutput(v_a, theta_a, dtheta_a, hx, hy)


@dataclass
class PiController:
    kp: float
    ki: float
    integ: float = 0.0

    def step(self, e, dt, freeze=False):
        if not freeze:
            self.integ += e * dt
        return self.kp * e + self.ki * self.integ

    def reset(self):
        self.integ = 0.0


def pi_step(ctrl, e, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    return ctrl.step(e, dt)


def saturation_ratio(u_right_prev, u_left_prev, u_max):
    return max(abs(u_right_prev), abs(u_left_prev)) / u_max


def scale_commands(v_right_a, v_left_a, u_right_prev, u_left_prev, u_max):
    """Divide both adjusted wheel velocities by mu when the last voltages saturate."""
    if u_max <= 0:
        raise ConfigError("u_max must be positive")
    mu = saturation_ratio(u_right_prev, u_left_prev, u_max)
    if mu > 1.0:
        return v_right_a / mu, v_left_a / mu
    return v_right_a, v_left_a
