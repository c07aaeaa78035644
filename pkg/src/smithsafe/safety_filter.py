"""Barrier-certificate safe-heading filter.

The barrier field is ``B(x, y) = -b0 + sum_j f_j(x, y)`` with one smooth bump
per obstacle. Along unicycle motion the exponential condition
``dB/dt <= -alpha B`` reduces to ``cos(theta - beta) <= c`` where beta is the
gradient angle and ``c = -alpha B / (v |grad B|)``. Headings within
``delta = arccos(c)`` of beta are unsafe; the filter replaces such commanded
headings with the nearer edge on the configured turn side.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .vfo_tracking import TWO_PI

G_EPS = 1e-12
C_OFF = 1.05


@dataclass(frozen=True)
class CircularObstacle:
    """Exponential-circular term exp(-d^2 / sigma); sigma in m^2."""

    x: float
    y: float
    sigma: float

    kind = "circular"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("circular obstacle sigma must be positive")

    def terms(self, px, py):
        dx = px - self.x
        dy = py - self.y
        s = self.sigma
        f = math.exp(-(dx * dx + dy * dy) / s)
        gx = -2.0 * dx / s * f
        gy = -2.0 * dy / s * f
        k = 4.0 / (s * s)
        hxx = (k * dx * dx - 2.0 / s) * f
        hyy = (k * dy * dy - 2.0 / s) * f
        hxy = k * dx * dy * f
        return f, gx, gy, hxx, hxy, hyy


@dataclass(frozen=True)
class SuperellipseObstacle:
    """Term exp(-((x-xo)/sx)^(2n) - ((y-yo)/sy)^(2n)); n=1 is an ellipse."""

    x: float
    y: float
    sigma_x: float
    sigma_y: float
    n: int = 2

    kind = "superellipse"

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ConfigError("superellipse sigma_x and sigma_y must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("superellipse exponent n must be an integer >= 1")

    def terms(self, px, py):
        m = 2 * int(self.n)
        ux = (px - self.x) / self.sigma_x
        uy = (py - self.y) / self.sigma_y
        # p = ux^m + uy^m; derivatives taken w.r.t. x and y (chain rule through sigma).
        ux_m2 = ux ** (m - 2)
        uy_m2 = uy ** (m - 2)
        ux_m1 = ux_m2 * ux
        uy_m1 = uy_m2 * uy
        p = ux_m1 * ux + uy_m1 * uy
        f = math.exp(-p)
        px_ = m * ux_m1 / self.sigma_x
        py_ = m * uy_m1 / self.sigma_y
        pxx = m * (m - 1) * ux_m2 / (self.sigma_x * self.sigma_x)
        pyy = m * (m - 1) * uy_m2 / (self.sigma_y * self.sigma_y)
        return (
            f,
            -px_ * f,
            -py_ * f,
            (px_ * px_ - pxx) * f,
            px_ * py_ * f,
            (py_ * py_ - pyy) * f,
        )


@dataclass(frozen=True)
class BarrierField:
    b0: float
    alpha: float
    obstacles: tuple = ()

    def __post_init__(self):
        if not self.b0 > 0:
            raise ConfigError("barrier offset b0 must be positive")
        if not self.alpha > 0:
            raise ConfigError("barrier rate alpha must be positive")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def evaluate(self, x, y):
        """Return (B, gx, gy, hxx, hxy, hyy) at (x, y) in one pass."""
        b = -self.b0
        gx = gy = hxx = hxy = hyy = 0.0
        for ob in self.obstacles:
            f, a1, a2, a11, a12, a22 = ob.terms(x, y)
            b += f
            gx += a1
            gy += a2
            hxx += a11
            hxy += a12
            hyy += a22
        return b, gx, gy, hxx, hxy, hyy


def barrier_eval(fld, x, y):
    return fld.evaluate(x, y)[0]


def barrier_gradient(fld, x, y):
    _, gx, gy, *_ = fld.evaluate(x, y)
    return np.array([gx, gy])


def barrier_hessian(fld, x, y):
    _, _, _, hxx, hxy, hyy = fld.evaluate(x, y)
    return np.array([[hxx, hxy], [hxy, hyy]])


def barrier_ratio(alpha, b, gnorm, v):
    """c = -alpha B / (v |g|); +inf when the gradient is negligible."""
    if not v > 0:
        raise ValueError("forward speed v must be positive to evaluate the heading condition")
    if gnorm < G_EPS:
        return math.inf
    return -alpha * b / (v * gnorm)


def gradient_norm(gx, gy):
    # Plain sqrt rather than math.hypot so the compiled kernel matches bit for bit.
    return math.sqrt(gx * gx + gy * gy)


def compute_c(fld, x, y, v):
    b, gx, gy, *_ = fld.evaluate(x, y)
    return barrier_ratio(fld.alpha, b, gradient_norm(gx, gy), v)


def compute_delta(c):
    """Half-width of the unsafe heading set, or None when no heading is unsafe."""
    if c >= 1.0:
        return None
    return math.acos(min(max(c, 0.0), 1.0))


def beta_rate(gx, gy, hxx, hxy, hyy, v, theta):
    g2 = gx * gx + gy * gy
    c, s = math.cos(theta), math.sin(theta)
    phi = gx * (hxy * c + hyy * s) - gy * (hxx * c + hxy * s)
    return v * phi / g2


def _beta_rate_at(fld, x, y, v, theta):
    _, gx, gy, hxx, hxy, hyy = fld.evaluate(x, y)
    if gx * gx + gy * gy <= G_EPS * G_EPS:
        return None
    return beta_rate(gx, gy, hxx, hxy, hyy, v, theta)


def integrate_beta(fld, beta, x, y, v, theta, dt, omega=0.0):
    """One RK4 step of beta along the unicycle motion (v, omega held over dt).

    Returns None if the gradient degenerates at any stage.
    """
    h2 = 0.5 * dt
    c0, s0 = math.cos(theta), math.sin(theta)
    k1 = _beta_rate_at(fld, x, y, v, theta)
    thm = theta + h2 * omega
    cm, sm = math.cos(thm), math.sin(thm)
    # Kinematic stages 2 and 3 share the heading; positions follow RK4.
    x2, y2 = x + h2 * v * c0, y + h2 * v * s0
    k2 = _beta_rate_at(fld, x2, y2, v, thm)
    x3, y3 = x + h2 * v * cm, y + h2 * v * sm
    k3 = _beta_rate_at(fld, x3, y3, v, thm)
    x4, y4 = x + dt * v * cm, y + dt * v * sm
    k4 = _beta_rate_at(fld, x4, y4, v, theta + dt * omega)
    if k1 is None or k2 is None or k3 is None or k4 is None:
        return None
    return beta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class SafetyState:
    T: float = 0.05
    turn: str = "left"
    beta: float = math.nan
    active: bool = False
    hpf_out: float = 0.0
    hpf_prev_in: float = math.nan
    theta_s_prev: float = math.nan
    degenerate_events: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("high-pass filter time constant T must be positive")
        if self.turn not in ("left", "right"):
            raise ConfigError("turn must be 'left' or 'right'")


def beta_step(state, fld, x, y, v, theta, dt, just_activated, omega=0.0):
    """Reset beta to the heading on activation, otherwise integrate one step."""
    if just_activated:
        state.beta = theta
        return state.beta
    nb = integrate_beta(fld, state.beta, x, y, v, theta, dt, omega)
    if nb is None:
        state.degenerate_events += 1
    else:
        state.beta = nb
    return state.beta


def unsafe_interval(beta, delta):
    return beta - delta, beta + delta


def nearest_branch(angle, ref):
    """Representative of ``angle`` modulo 2 pi nearest ``ref``."""
    return angle + TWO_PI * math.floor((ref - angle) / TWO_PI + 0.5)


def in_unsafe(theta, interval):
    lo, hi = interval
    beta = 0.5 * (lo + hi)
    t = nearest_branch(theta, beta)
    return lo <= t <= hi


class SafeCommand(NamedTuple):
    theta_s: float
    z: float
    v_s: float
    overridden: bool


def hpf_step(state, theta_s, dt):
    """Bilinear discretization of s/(T s + 1) acting on theta_s."""
    if math.isnan(state.hpf_prev_in):
        state.hpf_prev_in = theta_s
    T = state.T
    a = (2.0 * T - dt) / (2.0 * T + dt)
    b = 2.0 / (2.0 * T + dt)
    state.hpf_out = a * state.hpf_out + b * (theta_s - state.hpf_prev_in)
    state.hpf_prev_in = theta_s
    return state.hpf_out


def apply_override(theta_a, dtheta_a, v_a, v_r, interval, state, dt):
    """Replace an unsafe commanded heading with the turn-side edge of the interval.

    ``interval`` is ``None`` when no heading is unsafe. The high-pass filter
    always runs on the emitted heading so its derivative estimate is warm
    when an override engages.
    """
    if interval is None or not in_unsafe(theta_a, interval):
        cmd = SafeCommand(theta_a, dtheta_a, v_a, False)
    else:
        edge = interval[1] if state.turn == "left" else interval[0]
        prev = theta_a if math.isnan(state.theta_s_prev) else state.theta_s_prev
        theta_s = nearest_branch(edge, prev)
        cmd = SafeCommand(theta_s, math.nan, v_r, True)
    z = hpf_step(state, cmd.theta_s, dt)
    state.theta_s_prev = cmd.theta_s
    if cmd.overridden:
        cmd = cmd._replace(z=z)
    return cmd


class FilterOutput(NamedTuple):
    command: SafeCommand
    b: float
    c: float
    delta: float
    beta: float
    active: bool


@dataclass
class SafetyFilter:
    """Stateful per-simulation filter: activation hysteresis, beta, override."""

    barrier: BarrierField
    state: SafetyState = field(default_factory=SafetyState)
    violations: int = 0

    def step(self, x, y, theta, v, theta_a, dtheta_a, v_a, v_r, dt):
        b, gx, gy, *_ = self.barrier.evaluate(x, y)
        gnorm = gradient_norm(gx, gy)
        if b >= 0.0:
            self.violations += 1
        c = barrier_ratio(self.barrier.alpha, b, gnorm, v) if v > 0 else math.inf
        st = self.state
        just = False
        if c < 1.0 and not st.active:
            st.active = True
            just = True
        elif st.active and c >= C_OFF:
            st.active = False
        if just:
            beta_step(st, self.barrier, x, y, v, theta, dt, True)
        delta = compute_delta(c) if st.active else None
        interval = unsafe_interval(st.beta, delta) if delta is not None else None
        cmd = apply_override(theta_a, dtheta_a, v_a, v_r, interval, st, dt)
        return FilterOutput(
            cmd, b, c,
            math.nan if delta is None else delta,
            st.beta if st.active else math.nan,
            st.active,
        )

    def advance(self, x, y, theta, v, omega, dt):
        """Integrate beta across the sample that the kinematics just took."""
        st = self.state
        if st.active:
            beta_step(st, self.barrier, x, y, v, theta, dt, False, omega)
