import copy
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smithsafe.errors import ConfigError
from smithsafe.plant_sim import Pose, step_pose
from smithsafe.safety_filter import (
    BarrierField,
    CircularObstacle,
    SafetyFilter,
    SafetyState,
    SuperellipseObstacle,
    apply_override,
    barrier_eval,
    barrier_gradient,
    barrier_hessian,
    barrier_ratio,
    beta_step,
    compute_c,
    compute_delta,
    hpf_step,
    in_unsafe,
    integrate_beta,
    unsafe_interval,
)
from smithsafe.vfo_tracking import atan2c

from oracles import circle_around_obstacle, fd_gradient, fd_hessian, random_points

DT = 0.001
TWO_OBSTACLES = BarrierField(0.6, 0.5, (
    CircularObstacle(0.85, 0.85, 0.4),
    CircularObstacle(-1.25, 0.0, 0.3),
))
MIXED = BarrierField(0.6, 1.0, (
    CircularObstacle(0.85, 0.85, 0.4),
    SuperellipseObstacle(0.0, 1.2, 1.0, 1.0, 2),
    SuperellipseObstacle(-1.0, -0.5, 0.6, 0.3, 3),
    SuperellipseObstacle(1.0, -1.0, 0.5, 0.8, 1),
))


# --- field values -------------------------------------------------------------

def test_far_field_is_minus_offset():
    assert barrier_eval(TWO_OBSTACLES, 10.0, 10.0) == pytest.approx(-0.6, abs=1e-6)


def test_circular_center_value():
    b = barrier_eval(TWO_OBSTACLES, 0.85, 0.85)
    second = math.exp(-((0.85 + 1.25) ** 2 + 0.85 ** 2) / 0.3)
    assert second < 1e-6
    assert b == pytest.approx(0.4, abs=1e-6)


def test_superellipse_center_value():
    fld = BarrierField(0.6, 1.0, (SuperellipseObstacle(0.0, 1.2, 1.0, 1.0, 2),))
    assert barrier_eval(fld, 0.0, 1.2) == pytest.approx(0.4, abs=1e-15)


def test_superellipse_is_squarer_than_ellipse():
    sq = BarrierField(0.6, 1.0, (SuperellipseObstacle(0, 0, 1, 1, 2),))
    el = BarrierField(0.6, 1.0, (SuperellipseObstacle(0, 0, 1, 1, 1),))
    # At equal distance the n=2 level sets reach further along the diagonal.
    r = 0.9
    assert barrier_eval(sq, r, 0) < barrier_eval(sq, r / math.sqrt(2), r / math.sqrt(2))
    assert barrier_eval(el, r, 0) == pytest.approx(barrier_eval(el, r / math.sqrt(2), r / math.sqrt(2)))


# --- gradient and Hessian -----------------------------------------------------

@pytest.mark.parametrize("fld", [TWO_OBSTACLES, MIXED], ids=["circular", "mixed"])
def test_gradient_matches_finite_differences(fld):
    worst = 0.0
    for x, y in random_points(100, 1):
        g = barrier_gradient(fld, x, y)
        fd = fd_gradient(fld, x, y)
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.linalg.norm(g), 1e-4))
    print(f"gradient FD relative error {worst:.2e}")
    assert worst < 1e-6


@pytest.mark.parametrize("fld", [TWO_OBSTACLES, MIXED], ids=["circular", "mixed"])
def test_hessian_matches_finite_differences(fld):
    worst = max(
        np.max(np.abs(barrier_hessian(fld, x, y) - fd_hessian(fld, x, y)))
        for x, y in random_points(100, 2)
    )
    print(f"Hessian FD absolute error {worst:.2e}")
    assert worst < 1e-4


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_hessian_symmetric(x, y):
    h = barrier_hessian(MIXED, x, y)
    assert h[0, 1] == h[1, 0]


def test_single_obstacle_gradient_closed_form():
    fld = BarrierField(0.6, 1.0, (CircularObstacle(0.0, 0.0, 0.4),))
    r = 0.3
    g = barrier_gradient(fld, r, 0.0)
    assert g[0] == pytest.approx(-(2 * r / 0.4) * math.exp(-r * r / 0.4), rel=1e-14)
    assert g[1] == 0.0
    # grad B points back toward the obstacle center.
    assert g[0] < 0


def test_gradient_vanishes_across_symmetry_axis():
    fld = BarrierField(0.6, 1.0, (CircularObstacle(-1.0, 0.0, 0.5), CircularObstacle(1.0, 0.0, 0.5)))
    for y in (-0.7, 0.0, 0.4):
        assert barrier_gradient(fld, 0.0, y)[0] == pytest.approx(0.0, abs=1e-15)


def test_center_hessian():
    fld = BarrierField(0.6, 1.0, (CircularObstacle(0.0, 0.0, 0.4),))
    np.testing.assert_allclose(barrier_hessian(fld, 0.0, 0.0), -2 / 0.4 * np.eye(2), atol=1e-15)


# --- c and delta --------------------------------------------------------------

def test_c_arithmetic_example():
    assert barrier_ratio(2.0, -0.3, 1.0, 0.157) == pytest.approx(3.8217, abs=1e-4)


def test_c_on_boundary_is_zero():
    assert barrier_ratio(1.0, 0.0, 0.7, 0.2) == 0.0


def test_c_far_field_sentinel():
    assert barrier_ratio(1.0, -0.6, 1e-13, 0.2) == math.inf
    assert compute_c(TWO_OBSTACLES, 100.0, 100.0, 0.2) == math.inf


def test_c_positive_when_outside():
    for x, y in random_points(50, 3):
        if barrier_eval(TWO_OBSTACLES, x, y) < 0:
            assert compute_c(TWO_OBSTACLES, x, y, 0.15) > 0


@pytest.mark.parametrize("v", [0.0, -0.1])
def test_c_requires_forward_speed(v):
    with pytest.raises(ValueError):
        compute_c(TWO_OBSTACLES, 0.5, 0.5, v)


@pytest.mark.parametrize("c, expected", [
    (0.0, math.pi / 2),
    (0.5, math.pi / 3),
    (1.2, None),
    (1.0, None),
    (-0.4, math.pi / 2),
])
def test_delta(c, expected):
    d = compute_delta(c)
    if expected is None:
        assert d is None
    else:
        assert d == pytest.approx(expected, abs=1e-15)


def test_headings_outside_unsafe_set_satisfy_exponential_condition():
    # Oracle for the interval algebra: for B < 0, any heading outside
    # [angle(g) - delta, angle(g) + delta] gives dB/dt <= -alpha B exactly.
    rng = np.random.default_rng(9)
    checked = 0
    for x, y in random_points(400, 4):
        b, gx, gy, *_ = MIXED.evaluate(x, y)
        if b >= 0:
            continue
        v = rng.uniform(0.05, 0.5)
        c = compute_c(MIXED, x, y, v)
        delta = compute_delta(c)
        beta = math.atan2(gy, gx)
        for th in rng.uniform(-math.pi, math.pi, 20):
            if delta is not None and in_unsafe(th, unsafe_interval(beta, delta)):
                continue
            bdot = v * (gx * math.cos(th) + gy * math.sin(th))
            assert bdot <= -MIXED.alpha * b + 1e-12
            checked += 1
    assert checked > 1000


# --- beta ---------------------------------------------------------------------

def test_beta_reset_to_heading():
    st_ = SafetyState()
    assert beta_step(st_, TWO_OBSTACLES, 0.3, 0.3, 0.2, 1.234, DT, True) == 1.234


def test_beta_constant_when_stationary():
    st_ = SafetyState(beta=0.8)
    for _ in range(100):
        beta_step(st_, TWO_OBSTACLES, 0.4, 0.2, 0.0, 0.3, DT, False)
    assert st_.beta == 0.8


def test_beta_degenerate_gradient_held_and_flagged():
    st_ = SafetyState(beta=0.5)
    beta_step(st_, TWO_OBSTACLES, 200.0, 200.0, 0.2, 0.0, DT, False)
    assert st_.beta == 0.5
    assert st_.degenerate_events == 1


def test_beta_ode_tracks_gradient_angle_over_revolution():
    betas, oracles = circle_around_obstacle(0.5, 0.2)
    err = np.max(np.abs(betas - oracles))
    print(f"beta vs atan2 continuation over one revolution: {err:.2e} rad")
    assert err < 0.02
    assert oracles[-1] - oracles[0] == pytest.approx(2 * math.pi, abs=1e-4)


def test_beta_ode_tracks_gradient_along_curved_path():
    fld = MIXED
    pose = Pose(0.9, -0.3, 1.9)
    _, gx, gy, *_ = fld.evaluate(pose.x, pose.y)
    beta = oracle = math.atan2(gy, gx)
    worst = 0.0
    for n in range(8000):
        v, omega = 0.15, 0.4 * math.sin(0.001 * n)
        beta = integrate_beta(fld, beta, pose.x, pose.y, v, pose.theta, DT, omega)
        pose = step_pose(pose, (v, omega), DT)
        _, gx, gy, *_ = fld.evaluate(pose.x, pose.y)
        oracle = atan2c(gy, gx, oracle)
        worst = max(worst, abs(beta - oracle))
    assert worst < 0.02


# --- interval and override ----------------------------------------------------

def test_interval_membership():
    iv = unsafe_interval(math.pi, math.pi / 4)
    assert in_unsafe(math.pi + 0.1, iv)
    assert in_unsafe(math.pi + 0.1 - 6 * math.pi, iv)
    assert not in_unsafe(math.pi + math.pi / 4 + 0.01, iv)
    point = unsafe_interval(0.3, 0.0)
    assert in_unsafe(0.3, point)
    assert not in_unsafe(0.3001, point)


def test_override_passthrough_without_interval():
    st_ = SafetyState()
    cmd = apply_override(0.7, 0.2, 0.3, 0.15, None, st_, DT)
    assert cmd == (0.7, 0.2, 0.3, False)


def test_override_passthrough_outside_interval():
    cmd = apply_override(0.7, 0.2, 0.3, 0.15, unsafe_interval(2.0, 0.5), SafetyState(), DT)
    assert cmd == (0.7, 0.2, 0.3, False)


@pytest.mark.parametrize("turn, edge", [("left", 1.2 + 0.5), ("right", 1.2 - 0.5)])
def test_override_picks_turn_edge(turn, edge):
    cmd = apply_override(1.3, 0.2, 0.3, 0.15, unsafe_interval(1.2, 0.5), SafetyState(turn=turn), DT)
    assert cmd.overridden
    assert cmd.theta_s == pytest.approx(edge, abs=1e-15)
    assert cmd.v_s == 0.15
    assert math.isfinite(cmd.z)


def test_override_continuous_with_previous_command():
    st_ = SafetyState()
    apply_override(6.5, 0.0, 0.3, 0.15, None, st_, DT)
    # Interval expressed on the [-pi, pi) branch; output stays near 6.5.
    cmd = apply_override(6.5, 0.0, 0.3, 0.15, unsafe_interval(6.5 - 2 * math.pi, 0.2), st_, DT)
    assert cmd.theta_s == pytest.approx(6.7, abs=1e-12)


def test_override_idempotent():
    st_ = SafetyState()
    for th in np.linspace(0, 1, 50):
        apply_override(th, 1.0, 0.3, 0.15, None, st_, DT)
    a, b = copy.deepcopy(st_), copy.deepcopy(st_)
    iv = unsafe_interval(1.0, 0.4)
    assert apply_override(1.1, 1.0, 0.3, 0.15, iv, a, DT) == apply_override(1.1, 1.0, 0.3, 0.15, iv, b, DT)


def test_hpf_first_step_and_decay():
    T = 0.05
    st_ = SafetyState(T=T)
    hpf_step(st_, 0.0, DT)
    z0 = hpf_step(st_, 1.0, DT)
    assert z0 == pytest.approx(2.0 / (2 * T + DT))
    zs = [hpf_step(st_, 1.0, DT) for _ in range(1000)]
    assert abs(zs[-1]) < 1e-6 * z0
    assert all(abs(a) >= abs(b) for a, b in zip(zs, zs[1:]))


def test_hpf_tracks_ramp_slope():
    st_ = SafetyState(T=0.05)
    z = [hpf_step(st_, 0.4 * n * DT, DT) for n in range(2000)]
    assert z[-1] == pytest.approx(0.4, rel=1e-9)


# --- stateful filter ----------------------------------------------------------

def speed_for(c_target, fld, x, y):
    b, gx, gy, *_ = fld.evaluate(x, y)
    return -fld.alpha * b / (c_target * math.hypot(gx, gy))


def test_activation_hysteresis():
    x, y = 0.2, 0.3
    f = SafetyFilter(TWO_OBSTACLES)
    step = lambda c: f.step(x, y, 0.0, speed_for(c, TWO_OBSTACLES, x, y), 5.0, 0.0, 0.2, 0.15, DT)
    assert not step(1.2).active
    first = step(0.9)
    assert first.active and first.beta == 0.0
    assert step(1.02).active
    assert not step(1.06).active


def test_nonpositive_speed_keeps_filter_inactive():
    f = SafetyFilter(TWO_OBSTACLES)
    out = f.step(0.5, 0.6, 0.0, 0.0, 0.0, 0.0, 0.2, 0.15, DT)
    assert out.c == math.inf and not out.active


def test_violation_counter():
    f = SafetyFilter(TWO_OBSTACLES)
    f.step(0.85, 0.85, 0.0, 0.1, 0.0, 0.0, 0.2, 0.15, DT)
    f.step(3.0, 3.0, 0.0, 0.1, 0.0, 0.0, 0.2, 0.15, DT)
    assert f.violations == 1


@pytest.mark.parametrize("bad", [
    lambda: CircularObstacle(0, 0, 0.0),
    lambda: SuperellipseObstacle(0, 0, 1.0, -1.0),
    lambda: SuperellipseObstacle(0, 0, 1.0, 1.0, 0),
    lambda: SuperellipseObstacle(0, 0, 1.0, 1.0, 1.5),
    lambda: BarrierField(0.0, 1.0),
    lambda: BarrierField(0.6, 0.0),
    lambda: SafetyState(T=0.0),
    lambda: SafetyState(turn="up"),
])
def test_invalid_safety_parameters(bad):
    with pytest.raises(ConfigError):
        bad()
