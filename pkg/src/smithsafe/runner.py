"""Closed-loop orchestration at a fixed sample time.

Per-step ordering (fixed): sense -> reference -> VFO -> safety filter ->
angle loop -> wheel mixing -> saturation scaling -> servo loops ->
actuate plants -> integrate kinematics (and beta).
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import SimulationError
from .plant_sim import (
    Pose,
    WheelState,
    body_to_wheels,
    discretize_plant,
    step_pose,
    wheels_to_body,
)
from .safety_filter import SafetyFilter, SafetyState
from .smith_predictor import AngleLoop, ServoLoop
from .vfo_tracking import saturation_ratio, vfo_step

COLUMNS = (
    ("t", "s"),
    ("x", "m"),
    ("y", "m"),
    ("theta", "rad"),
    ("v", "m/s"),
    ("omega", "rad/s"),
    ("v_right", "m/s"),
    ("v_left", "m/s"),
    ("u_right", "V"),
    ("u_left", "V"),
    ("xr", "m"),
    ("yr", "m"),
    ("theta_r", "rad"),
    ("v_r", "m/s"),
    ("v_a", "m/s"),
    ("theta_a", "rad"),
    ("dtheta_a", "rad/s"),
    ("theta_s", "rad"),
    ("z", "rad/s"),
    ("v_s", "m/s"),
    ("omega_a", "rad/s"),
    ("B", "1"),
    ("c", "1"),
    ("delta", "rad"),
    ("beta", "rad"),
    ("active", "bool"),
    ("overridden", "bool"),
)
COLUMN_NAMES = tuple(name for name, _ in COLUMNS)
# Signals that must stay finite; c, delta and beta use inf/nan as "inactive".
_CHECKED = ("x", "y", "theta", "v", "omega", "u_right", "u_left", "v_a", "theta_a",
            "dtheta_a", "theta_s", "z", "v_s", "omega_a")


@dataclass
class SimTrace:
    """Uniformly sampled signals, one row per sample, columns per ``COLUMNS``."""

    data: np.ndarray
    dt: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(COLUMNS))

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name):
        return self.data[:, COLUMN_NAMES.index(name)]

    @classmethod
    def empty(cls, dt):
        return cls(np.zeros((0, len(COLUMNS))), dt)


def _check_row(row, n):
    for name in _CHECKED:
        if not math.isfinite(row[COLUMN_NAMES.index(name)]):
            raise SimulationError(name, n)


def run_python(cfg):
    """Pure-Python closed loop built from the module-level components."""
    dt = cfg.dt_s
    n_steps = cfg.n_steps
    d = cfg.wheel_separation_m
    u_max = cfg.u_max_v
    k = cfg.vfo_gain_per_s
    plant = cfg.plant.build()
    ghat = cfg.nominal.build()
    traj = cfg.trajectory.build()
    pred = cfg.predictor

    model = discretize_plant(plant, dt)
    wheel_r, wheel_l = WheelState(model), WheelState(model)
    sk, si = cfg.servo_pi.kp, cfg.servo_pi.ki_per_s
    servo_r = ServoLoop(sk, si, ghat, dt, u_max, pred.servo)
    servo_l = ServoLoop(sk, si, ghat, dt, u_max, pred.servo)
    angle = AngleLoop(cfg.angle_pi.kp, cfg.angle_pi.ki_per_s, sk, si, ghat, dt, pred.angle)
    angle_freeze = pred.angle_freeze_on_saturation

    filt = None
    if cfg.safety_enabled:
        s = cfg.safety
        filt = SafetyFilter(s.build(), SafetyState(T=s.hpf_time_constant_s, turn=s.turn))

    p0 = cfg.initial_pose
    pose = Pose(p0.x_m, p0.y_m, math.radians(p0.theta_deg))
    y_r = y_l = 0.0
    u_r_prev = u_l_prev = 0.0
    theta_a_prev = pose.theta
    theta_r_prev = None
    nan = math.nan
    rows = []
    for n in range(n_steps + 1 if n_steps > 0 else 0):
        t = n * dt
        x, y, th = pose
        v, w = wheels_to_body(y_r, y_l, d)
        ref = traj.state(t, theta_r_prev)
        theta_r_prev = ref.theta_r
        vfo = vfo_step(pose, ref, k, theta_a_prev)
        theta_a_prev = vfo.theta_a
        if filt is not None:
            out = filt.step(x, y, th, v, vfo.theta_a, vfo.dtheta_a, vfo.v_a, ref.vr, dt)
            cmd = out.command
            b, c, delta, beta, active = out.b, out.c, out.delta, out.beta, out.active
            theta_s, z, v_s, overridden = cmd
        else:
            theta_s, z, v_s, overridden = vfo.theta_a, vfo.dtheta_a, vfo.v_a, False
            b = c = delta = beta = nan
            active = False

        saturated = saturation_ratio(u_r_prev, u_l_prev, u_max) > 1.0
        omega_a = angle.step(theta_s, z, th, angle_freeze and saturated)
        v_ra, v_la = body_to_wheels(v_s, omega_a, d)
        if saturated:
            mu = saturation_ratio(u_r_prev, u_l_prev, u_max)
            v_ra, v_la = v_ra / mu, v_la / mu
        u_r = servo_r.step(v_ra, y_r, saturated)
        u_l = servo_l.step(v_la, y_l, saturated)

        row = (t, x, y, th, v, w, y_r, y_l, u_r, u_l,
               ref.xr, ref.yr, ref.theta_r, ref.vr,
               vfo.v_a, vfo.theta_a, vfo.dtheta_a, theta_s, z, v_s, omega_a,
               b, c, delta, beta, float(active), float(overridden))
        if not math.isfinite(x + y + th + v + w + u_r + u_l + omega_a + theta_s + z + v_s
                             + vfo.v_a + vfo.theta_a + vfo.dtheta_a):
            _check_row(row, n)
        rows.append(row)
        if n == n_steps:
            break
        y_r = wheel_r.advance(wheel_r.push(u_r))
        y_l = wheel_l.advance(wheel_l.push(u_l))
        if filt is not None:
            filt.advance(x, y, th, v, w, dt)
        pose = step_pose(pose, (v, w), dt)
        u_r_prev, u_l_prev = u_r, u_l
    if not rows:
        return SimTrace.empty(dt)
    return SimTrace(np.array(rows), dt)


def run_scenario(cfg, backend=None):
    """Simulate ``cfg`` and return its trace.

    ``backend`` is ``"python"``, ``"compiled"`` or None for the import-time
    default (compiled when the extension is built).
    """
    cfg.validate()
    name = backend or _backend.DEFAULT
    if name == "python":
        return run_python(cfg)
    if name == "compiled":
        from .loop_params import build_loop_params

        if _backend.core is None:
            raise RuntimeError("compiled backend requested but smithsafe._core is not built")
        if cfg.n_steps == 0:
            return SimTrace.empty(cfg.dt_s)
        data, bad_signal, bad_step = _backend.core.run_loop(build_loop_params(cfg))
        if bad_signal >= 0:
            raise SimulationError(_CHECKED[bad_signal], bad_step)
        return SimTrace(data, cfg.dt_s)
    raise ValueError(f"unknown backend {name!r}")
