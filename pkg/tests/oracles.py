"""Independent reference computations shared by the unit and acceptance tests."""
import math

import numpy as np

from smithsafe.plant_sim import IDENTIFIED_WHEEL, Pose, WheelState, discretize_plant, step_pose, step_wheel
from smithsafe.safety_filter import BarrierField, CircularObstacle, barrier_eval, barrier_gradient, integrate_beta
from smithsafe.smith_predictor import ServoLoop, servo_loop_step
from smithsafe.vfo_tracking import atan2c

DT = 0.001
DELAY = 500
NO_CLAMP = 1e12


def rk4_fine_map(plant, h, substeps):
    """Compose `substeps` classical RK4 steps of x' = A x + B u (u constant).

    Returns (P, S) with x(t + substeps*h) = P x(t) + S u. Built from the
    RK4 stage formulas only; no matrix exponential involved.
    """
    a, b, _ = plant.state_space()
    eye = np.eye(2)
    ha = h * a
    m = eye + ha + ha @ ha / 2 + ha @ ha @ ha / 6 + ha @ ha @ ha @ ha / 24
    n = h * (eye + ha / 2 + ha @ ha / 6 + ha @ ha @ ha / 24) @ b
    p = np.eye(2)
    s = np.zeros(2)
    for _ in range(substeps):
        s = m @ s + n
        p = m @ p
    return p, s, m, n


def delay_free_step_oracle(plant, n_samples, h=1e-6):
    p, s, _, _ = rk4_fine_map(plant, h, int(round(DT / h)))
    _, _, c = plant.state_space()
    x = np.zeros(2)
    out = np.empty(n_samples + 1)
    out[0] = 0.0
    for i in range(n_samples):
        x = p @ x + s
        out[i + 1] = c @ x
    return out


def canonical_inputs(n):
    t = np.arange(n) * DT
    rng = np.random.default_rng(2024)
    noise = rng.normal(size=n)
    filtered = np.empty(n)
    acc = 0.0
    for i, e in enumerate(noise):  # first-order low-pass, 0.2 s
        acc += DT / 0.2 * (e - acc)
        filtered[i] = acc
    return {
        "step": np.full(n, 0.3),
        "ramp": 0.02 * t,
        "sine_slow": 0.25 * np.sin(2 * math.pi * 0.1 * t),
        "sine_fast": 0.1 * np.sin(2 * math.pi * 1.3 * t + 0.4),
        "filtered_noise": filtered,
    }


def servo_with_predictor(cmd):
    """Velocity loop around the delayed wheel, Smith correction on."""
    wheel = WheelState(discretize_plant(IDENTIFIED_WHEEL, DT))
    loop = ServoLoop(2.0, 1.0, IDENTIFIED_WHEEL, DT, NO_CLAMP, predictor=True)
    y = 0.0
    out = np.empty(len(cmd))
    for i, r in enumerate(cmd):
        out[i] = y
        y = step_wheel(wheel, servo_loop_step(r, y, loop))
    return out


def delay_free_servo(cmd):
    """Oracle: PI in feedback with the undelayed plant, written out longhand."""
    m = discretize_plant(IDENTIFIED_WHEEL, DT)
    x1 = x2 = integ = 0.0
    out = np.empty(len(cmd))
    for i, r in enumerate(cmd):
        y = m.c1 * x1 + m.c2 * x2
        out[i] = y
        e = r - y
        integ += e * DT
        u = 2.0 * e + 1.0 * integ
        x1, x2 = m.a11 * x1 + m.a12 * x2 + m.b1 * u, m.a21 * x1 + m.a22 * x2 + m.b2 * u
    return out


def shift(sig, n):
    return np.concatenate([np.zeros(n), sig[: len(sig) - n]])


def random_points(n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2.0, 2.0, size=(n, 2))


def fd_gradient(fld, x, y, h=1e-6):
    return np.array([
        (barrier_eval(fld, x + h, y) - barrier_eval(fld, x - h, y)) / (2 * h),
        (barrier_eval(fld, x, y + h) - barrier_eval(fld, x, y - h)) / (2 * h),
    ])


def fd_hessian(fld, x, y, h=1e-5):
    cols = [
        (barrier_gradient(fld, x + h, y) - barrier_gradient(fld, x - h, y)) / (2 * h),
        (barrier_gradient(fld, x, y + h) - barrier_gradient(fld, x, y - h)) / (2 * h),
    ]
    return np.column_stack(cols)


def circle_around_obstacle(radius, v, revolutions=1.0):
    """Integrate beta while circling a single obstacle; returns (beta, oracle)."""
    fld = BarrierField(0.6, 1.0, (CircularObstacle(0.0, 0.0, 0.4),))
    omega = v / radius
    pose = Pose(radius, 0.0, math.pi / 2)
    _, gx, gy, *_ = fld.evaluate(*pose[:2])
    beta = oracle = math.atan2(gy, gx)
    betas, oracles = [beta], [oracle]
    n = int(round(revolutions * 2 * math.pi / omega / DT))
    for _ in range(n):
        beta = integrate_beta(fld, beta, pose.x, pose.y, v, pose.theta, DT, omega)
        pose = step_pose(pose, (v, omega), DT)
        _, gx, gy, *_ = fld.evaluate(pose.x, pose.y)
        oracle = atan2c(gy, gx, oracle)
        betas.append(beta)
        oracles.append(oracle)
    return np.array(betas), np.array(oracles)
