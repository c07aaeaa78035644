"""Flatten a validated ScenarioConfig into plain numbers for the compiled loop."""
import math

import numpy as np

from .plant_sim import discretize_plant

OBSTACLE_CIRCULAR = 0
OBSTACLE_SUPERELLIPSE = 1
TRAJ_CIRCLE = 0
TRAJ_FIGURE8 = 1


def _model_fields(prefix, model):
    return {
        f"{prefix}_a": np.array([model.a11, model.a12, model.a21, model.a22]),
        f"{prefix}_b": np.array([model.b1, model.b2]),
        f"{prefix}_c": np.array([model.c1, model.c2]),
        f"{prefix}_delay": model.delay,
    }


def _obstacle_rows(cfg):
    rows = []
    if cfg.safety_enabled:
        for ob in cfg.safety.build().obstacles:
            if ob.kind == "circular":
                rows.append((OBSTACLE_CIRCULAR, ob.x, ob.y, ob.sigma, 0.0, 0.0))
            else:
                rows.append((OBSTACLE_SUPERELLIPSE, ob.x, ob.y, ob.sigma_x, ob.sigma_y, float(ob.n)))
    return np.array(rows, dtype=float).reshape(-1, 6)


def build_loop_params(cfg):
    """Everything ``_core.run_loop`` needs, as a dict of floats, ints and arrays."""
    dt = cfg.dt_s
    traj = cfg.trajectory.build()
    if traj.kind == "circle":
        traj_kind, traj_p = TRAJ_CIRCLE, (traj.radius, 0.0, traj.omega)
    else:
        traj_kind, traj_p = TRAJ_FIGURE8, (traj.ax, traj.ay, traj.omega)
    p = {
        "dt": dt,
        "n_steps": cfg.n_steps,
        "d": cfg.wheel_separation_m,
        "u_max": cfg.u_max_v,
        "k": cfg.vfo_gain_per_s,
        "servo_kp": cfg.servo_pi.kp,
        "servo_ki": cfg.servo_pi.ki_per_s,
        "angle_kp": cfg.angle_pi.kp,
        "angle_ki": cfg.angle_pi.ki_per_s,
        "servo_sp": int(cfg.predictor.servo),
        "angle_sp": int(cfg.predictor.angle),
        "angle_freeze": int(cfg.predictor.angle_freeze_on_saturation),
        "x0": cfg.initial_pose.x_m,
        "y0": cfg.initial_pose.y_m,
        "theta0": math.radians(cfg.initial_pose.theta_deg),
        "traj_kind": traj_kind,
        "traj_p": np.array(traj_p, dtype=float),
        "safety": int(cfg.safety_enabled),
        "b0": cfg.safety.b0 if cfg.safety_enabled else 0.0,
        "alpha": cfg.safety.alpha_per_s if cfg.safety_enabled else 0.0,
        "turn_left": int(cfg.safety is None or cfg.safety.turn == "left"),
        "hpf_T": cfg.safety.hpf_time_constant_s if cfg.safety_enabled else 0.05,
        "obstacles": _obstacle_rows(cfg),
    }
    p.update(_model_fields("plant", discretize_plant(cfg.plant.build(), dt)))
    p.update(_model_fields("nom", discretize_plant(cfg.nominal.build(), dt)))
    return p
