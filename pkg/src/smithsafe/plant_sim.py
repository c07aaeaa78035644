"""Delayed wheel servo plants and unicycle kinematics.

Each wheel is a second-order transfer function from motor voltage to wheel
linear velocity with a pure input delay::

    V(s)/U(s) = (num1 s + num0) / (s^2 + den1 s + den0) * exp(-tau s)

The LTI part is discretized exactly under a zero-order hold and the delay is
an integer-step ring buffer of past inputs.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError

DELAY_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class SecondOrderDelayPlant:
    num1: float
    num0: float
    den1: float
    den0: float
    tau: float = 0.0

    def __post_init__(self):
        for name in ("num1", "num0", "den1", "den0", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"plant coefficient {name} must be finite")
        if self.den1 <= 0 or self.den0 <= 0:
            raise ConfigError("plant denominator coefficients must be positive (stable plant)")
        if self.tau < 0:
            raise ConfigError("plant delay tau must be non-negative")

    @property
    def dc_gain(self):
        return self.num0 / self.den0

    def poles(self):
        return np.roots([1.0, self.den1, self.den0])

    def zeros(self):
        if self.num1 == 0.0:
            return np.array([])
        return np.array([-self.num0 / self.num1])

    def state_space(self):
        """Controllable canonical form (A, B, C)."""
        a = np.array([[0.0, 1.0], [-self.den0, -self.den1]])
        b = np.array([0.0, 1.0])
        c = np.array([self.num0, self.num1])
        return a, b, c


# Identified wheel model, voltage -> m/s, 0.5 s input delay.
IDENTIFIED_WHEEL = SecondOrderDelayPlant(num1=5.94, num0=1.45, den1=7.40, den0=1.42, tau=0.50)


def delay_steps(tau, dt):
    """Number of whole samples in ``tau``; rejects fractional delays."""
    if dt <= 0:
        raise ConfigError("sample time dt must be positive")
    ratio = tau / dt
    n = int(round(ratio))
    if abs(ratio - n) >= DELAY_RESIDUAL_TOL:
        raise ConfigError(f"delay {tau} s is not an integer multiple of dt={dt} s")
    return n


@dataclass(frozen=True)
class DiscretePlant:
    """Exact ZOH discretization: x+ = A x + B u, y = C x."""

    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float
    c1: float
    c2: float
    dt: float
    delay: int

    @property
    def dc_gain(self):
        a = np.array([[self.a11, self.a12], [self.a21, self.a22]])
        b = np.array([self.b1, self.b2])
        c = np.array([self.c1, self.c2])
        return float(c @ np.linalg.solve(np.eye(2) - a, b))


def discretize_plant(plant, dt):
    """Zero-order-hold discretization of ``plant`` at sample time ``dt``."""
    n_delay = delay_steps(plant.tau, dt)
    a, b, c = plant.state_space()
    # Van Loan block exponential gives Phi and Gamma in one shot.
    m = np.zeros((3, 3))
    m[:2, :2] = a * dt
    m[:2, 2] = b * dt
    em = expm(m)
    phi = em[:2, :2]
    gamma = em[:2, 2]
    return DiscretePlant(
        a11=float(phi[0, 0]), a12=float(phi[0, 1]),
        a21=float(phi[1, 0]), a22=float(phi[1, 1]),
        b1=float(gamma[0]), b2=float(gamma[1]),
        c1=float(c[0]), c2=float(c[1]),
        dt=float(dt), delay=n_delay,
    )


class SecondOrderState:
    """State of the delay-free discrete recurrence."""

    __slots__ = ("model", "x1", "x2")

    def __init__(self, model):
        self.model = model
        self.x1 = 0.0
        self.x2 = 0.0

    @property
    def output(self):
        m = self.model
        return m.c1 * self.x1 + m.c2 * self.x2

    def advance(self, u):
        """Apply ``u`` over one sample and return the new output."""
        m = self.model
        x1 = m.a11 * self.x1 + m.a12 * self.x2 + m.b1 * u
        x2 = m.a21 * self.x1 + m.a22 * self.x2 + m.b2 * u
        self.x1 = x1
        self.x2 = x2
        return m.c1 * x1 + m.c2 * x2


class WheelState(SecondOrderState):
    """Second-order recurrence fed through a fixed-length input delay line."""

    __slots__ = ("delay_line", "_head")

    def __init__(self, model):
        super().__init__(model)
        self.delay_line = [0.0] * model.delay
        self._head = 0

    def push(self, u):
        """Store ``u`` and return the input from ``delay`` samples ago."""
        if not self.delay_line:
            return u
        old = self.delay_line[self._head]
        self.delay_line[self._head] = u
        self._head = (self._head + 1) % len(self.delay_line)
        return old


def step_wheel(state, u, dt=None):
    """Advance one wheel by one sample; returns the wheel velocity at the next sample."""
    if dt is not None and abs(dt - state.model.dt) > 1e-15:
        raise ConfigError("step_wheel called with a dt that differs from the discretization")
    return state.advance(state.push(u))


class Pose(NamedTuple):
    x: float
    y: float
    theta: float


class BodyTwist(NamedTuple):
    v: float
    omega: float


def wheels_to_body(v_right, v_left, d):
    if d <= 0:
        raise ConfigError("wheel separation d must be positive")
    return BodyTwist(0.5 * (v_right + v_left), (v_right - v_left) / d)


def body_to_wheels(v_a, omega_a, d):
    if d <= 0:
        raise ConfigError("wheel separation d must be positive")
    half = 0.5 * d * omega_a
    return v_a + half, v_a - half


def step_pose(pose, twist, dt):
    """One classical RK4 step of the unicycle with the twist held over ``dt``."""
    x, y, th = pose
    v, w = twist
    h2 = 0.5 * dt
    # theta is linear in time, so each stage only needs its own heading.
    c1, s1 = math.cos(th), math.sin(th)
    thm = th + h2 * w
    c2, s2 = math.cos(thm), math.sin(thm)
    th_end = th + dt * w
    c4, s4 = math.cos(th_end), math.sin(th_end)
    k = dt / 6.0 * v
    return Pose(
        x + k * (c1 + 4.0 * c2 + c4),
        y + k * (s1 + 4.0 * s2 + s4),
        th_end,
    )
