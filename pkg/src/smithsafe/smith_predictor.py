"""Two-layer Smith predictor: per-wheel servo loops and the heading-angle loop.

Both layers realize Z(s) = P(s) - P(s) exp(-tau_hat s) for a nominal
delay-free model P. Because P is LTI with zero initial state, the delayed
copy's output equals the undelayed output ``tau_hat`` samples ago, so one
recurrence plus a ring buffer of its outputs is enough.
"""
from dataclasses import dataclass

from .plant_sim import SecondOrderState, discretize_plant
from .vfo_tracking import PiController


@dataclass(frozen=True)
class NominalModel:
    """Nominal plant ``G_hat`` used by the predictor; ``ghat.tau`` is tau_hat."""

    ghat: object

    @property
    def tau_hat(self):
        return self.ghat.tau


class _OutputDelay:
    __slots__ = ("buf", "head")

    def __init__(self, n):
        self.buf = [0.0] * n
        self.head = 0

    def shift(self, y):
        if not self.buf:
            return y
        old = self.buf[self.head]
        self.buf[self.head] = y
        self.head = (self.head + 1) % len(self.buf)
        return old


class ServoSmithState:
    """Nominal wheel model G_hat driven by the applied voltage."""

    def __init__(self, ghat, dt):
        model = discretize_plant(ghat, dt)
        self.undelayed = SecondOrderState(model)
        self._delayed_out = _OutputDelay(model.delay)

    def advance(self, u):
        """Feed ``u`` and return the correction v_hat(t) - v_hat(t - tau_hat)."""
        y = self.undelayed.advance(u)
        return y - self._delayed_out.shift(y)


def servo_correction(state, u, dt=None):
    return state.advance(u)


class ServoLoop:
    """PI velocity loop for one wheel with optional Smith correction and voltage clamp."""

    def __init__(self, kp, ki, ghat, dt, u_max, predictor=True):
        self.pi = PiController(kp, ki)
        self.dt = dt
        self.u_max = u_max
        self.predictor = ServoSmithState(ghat, dt) if predictor else None
        self.correction = 0.0

    def step(self, v_cmd, v_meas, freeze=False):
        e = v_cmd - (v_meas + self.correction)
        u = self.pi.step(e, self.dt, freeze)
        if u > self.u_max:
            u = self.u_max
        elif u < -self.u_max:
            u = -self.u_max
        if self.predictor is not None:
            self.correction = self.predictor.advance(u)
        return u


def servo_loop_step(v_cmd, v_meas, loop, freeze=False):
    return loop.step(v_cmd, v_meas, freeze)


class NominalServoClosedLoop:
    """Delay-free PI + G_hat loop; its output is the nominal closed-loop speed."""

    def __init__(self, kp, ki, ghat, dt):
        self.pi = PiController(kp, ki)
        self.plant = SecondOrderState(discretize_plant(ghat, dt))
        self.dt = dt

    @property
    def output(self):
        return self.plant.output

    def advance(self, r):
        u = self.pi.step(r - self.plant.output, self.dt)
        return self.plant.advance(u)


class AngleSmithState:
    """Nominal angle plant G_hat_v,cl(s)/s driven by omega_a."""

    def __init__(self, kp, ki, ghat, dt):
        self.servo = NominalServoClosedLoop(kp, ki, ghat, dt)
        self.theta_hat = 0.0
        self.dt = dt
        self._delayed_out = _OutputDelay(discretize_plant(ghat, dt).delay)

    def advance(self, omega_a):
        """Feed ``omega_a`` and return theta_hat(t) - theta_hat(t - tau_hat)."""
        omega_hat = self.servo.output
        self.servo.advance(omega_a)
        self.theta_hat = self.theta_hat + self.dt * omega_hat
        return self.theta_hat - self._delayed_out.shift(self.theta_hat)


class AngleLoop:
    """Heading PI with rate feedforward and optional angle-layer Smith correction."""

    def __init__(self, kp, ki, servo_kp, servo_ki, ghat, dt, predictor=True):
        self.pi = PiController(kp, ki)
        self.dt = dt
        self.predictor = AngleSmithState(servo_kp, servo_ki, ghat, dt) if predictor else None
        self.correction = 0.0

    def step(self, theta_cmd, dtheta_cmd, theta_meas, freeze=False):
        e = theta_cmd - (theta_meas + self.correction)
        omega_a = self.pi.step(e, self.dt, freeze) + dtheta_cmd
        if self.predictor is not None:
            self.correction = self.predictor.advance(omega_a)
        return omega_a


def angle_loop_step(theta_cmd, dtheta_cmd, theta_meas, loop, freeze=False):
    return loop.step(theta_cmd, dtheta_cmd, theta_meas, freeze)
