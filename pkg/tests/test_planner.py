import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcmbench.planner import (
    DcmPiece,
    Footstep,
    InvalidTiming,
    PendulumConstants,
    Phase,
    PlanInfeasible,
    PlannerConfig,
    Side,
    StepBounds,
    TerminalRule,
    build_references,
    derive_zmp_com,
    dump_footsteps,
    load_footsteps,
    plan_dcm,
    plan_footsteps,
    smooth_dcm,
    step_length,
    validate_footsteps,
    walking_velocity,
)

CONST = PendulumConstants(0.5)
LEFT0, RIGHT0 = (0.0, 0.08, 0.0), (0.0, -0.08, 0.0)
GAIT = PlannerConfig(speed=0.15, bounds=StepBounds(t_min=1.0, t_max=1.2), horizon=6.0)


@pytest.fixture(scope="module")
def ref():
    return build_references(GAIT, CONST, LEFT0, RIGHT0)


def test_pendulum_time_constant():
    c = PendulumConstants(0.53, 9.81)
    assert abs(c.b - math.sqrt(0.53 / 9.81)) <= 1e-12


# -- footsteps -----------------------------------------------------------------

def test_zero_speed_steps_in_place():
    steps = plan_footsteps(LEFT0, RIGHT0, 0.0, 0.0, 5.0)
    assert len(steps) > 2
    for s in steps:
        start = LEFT0 if s.side is Side.LEFT else RIGHT0
        np.testing.assert_allclose(s.pose, start, atol=1e-12)


def test_straight_walk_same_side_advance():
    v = 0.2
    steps = plan_footsteps(LEFT0, RIGHT0, v, 0.0, 6.0)
    for k in range(3, len(steps)):
        t_step = steps[k].step_duration
        assert steps[k].step_duration == steps[k - 1].step_duration
        np.testing.assert_allclose(steps[k].position - steps[k - 2].position, [v * 2 * t_step, 0], atol=1e-9)


def test_first_entries_are_start_poses_and_sides_alternate():
    steps = plan_footsteps(LEFT0, RIGHT0, 0.1, 0.1, 6.0, first_swing=Side.RIGHT)
    assert steps[0].side is Side.RIGHT and steps[0].pose == RIGHT0
    assert steps[1].side is Side.LEFT and steps[1].pose == LEFT0
    assert all(a.side is not b.side for a, b in zip(steps, steps[1:]))


def test_walking_velocity_ratio_example():
    bounds = StepBounds(t_min=0.83, l_max=0.28)
    steps = plan_footsteps(LEFT0, RIGHT0, 0.337, 0.0, 8.0, bounds)
    validate_footsteps(steps, bounds)
    ratio = walking_velocity(steps)
    assert ratio == pytest.approx(0.337, abs=1e-9)
    # measured hardware value, reported to four digits
    assert abs(ratio - 0.3372) <= 5e-4


def test_speed_too_high_is_infeasible():
    with pytest.raises(PlanInfeasible):
        plan_footsteps(LEFT0, RIGHT0, 0.6, 0.0, 4.0, StepBounds(t_min=0.5, l_max=0.28))


def test_inconsistent_bounds_rejected():
    with pytest.raises(ValueError):
        plan_footsteps(LEFT0, RIGHT0, 0.1, 0.0, 4.0, StepBounds(t_min=1.0, t_max=0.5))
    with pytest.raises(ValueError):
        plan_footsteps(LEFT0, RIGHT0, -0.1, 0.0, 4.0)


@settings(max_examples=40, deadline=None)
@given(speed=st.floats(0.0, 0.5), turn=st.floats(-0.3, 0.3), t_min=st.sampled_from([0.5, 0.7, 0.83, 1.0]))
def test_planned_steps_respect_bounds(speed, turn, t_min):
    bounds = StepBounds(t_min=t_min)
    if speed * t_min > bounds.l_max:
        with pytest.raises(PlanInfeasible):
            plan_footsteps(LEFT0, RIGHT0, speed, turn, 5.0, bounds)
        return
    steps = plan_footsteps(LEFT0, RIGHT0, speed, turn, 5.0, bounds)
    validate_footsteps(steps, bounds)


def test_footsteps_round_trip(tmp_path):
    steps = plan_footsteps(LEFT0, RIGHT0, 0.15, 0.05, 4.0)
    dump_footsteps(steps, tmp_path / "footsteps.txt")
    back = load_footsteps(tmp_path / "footsteps.txt")
    assert len(back) == len(steps)
    for a, b in zip(steps, back):
        assert a.side is b.side and a.yaw == b.yaw and a.impact_time == b.impact_time
        np.testing.assert_array_equal(a.position, b.position)


# -- DCM recursion -------------------------------------------------------------------

def _two_step_plan(b):
    steps = [Footstep(Side.RIGHT, [0.0, -0.1], 0.0, 0.0, 0.0),
             Footstep(Side.LEFT, [0.0, 0.0], 0.0, 0.0, 0.0),
             Footstep(Side.RIGHT, [0.2, 0.0], 0.0, 0.8, 0.8)]
    return plan_dcm(steps, PendulumConstants(b * b * 9.81))


def test_recursion_matches_scalar_evaluation():
    b = 0.2325
    pieces = _two_step_plan(b)
    stance = pieces[0]
    assert stance.stance is Side.LEFT and stance.duration == pytest.approx(0.8)
    expected_x = 0.0 + math.exp(-0.8 / b) * (0.2 - 0.0)
    assert stance.xi_ios[0] == pytest.approx(expected_x, rel=1e-12)
    assert stance.xi_ios[1] == pytest.approx(0.0, abs=1e-15)


def test_final_piece_ends_at_last_zmp():
    b = CONST.b
    steps = plan_footsteps(LEFT0, RIGHT0, 0.15, 0.0, 4.0, GAIT.bounds)
    pieces = plan_dcm(steps, CONST)
    last_stance = pieces[-2]
    np.testing.assert_allclose(last_stance.xi_eos(b), steps[-1].position, atol=1e-12)
    for p, q in zip(pieces, pieces[1:]):
        np.testing.assert_allclose(p.xi_eos(b), q.xi_ios, atol=1e-12)
    mid = plan_dcm(steps, CONST, TerminalRule.MIDPOINT)
    np.testing.assert_allclose(mid[-1].r_zmp, 0.5 * (steps[-1].position + steps[-2].position))


def test_coincident_footsteps_are_equilibrium():
    steps = [Footstep(Side.LEFT if k % 2 == 0 else Side.RIGHT, [0.3, 0.1], 0.0, 0.9 * k, 0.9)
             for k in range(6)]
    for p in plan_dcm(steps, CONST):
        np.testing.assert_allclose(p.xi_ios, [0.3, 0.1], atol=1e-15)
        np.testing.assert_allclose(p.xi_eos(CONST.b), [0.3, 0.1], atol=1e-15)


def test_piece_duration_must_be_positive():
    with pytest.raises(ValueError):
        DcmPiece([0, 0], [0, 0], 0.0)


# -- smoothing -------------------------------------------------------------------

def _pieces():
    steps = plan_footsteps(LEFT0, RIGHT0, 0.15, 0.0, 4.0, GAIT.bounds)
    return plan_dcm(steps, CONST)


def test_zero_windows_reproduce_raw_pieces():
    pieces = _pieces()
    s = smooth_dcm(pieces, np.zeros(len(pieces) - 1), 0.01, CONST.b)
    for tk, xi, xid in zip(s.t, s.xi, s.xi_dot):
        p = pieces[s.trajectory.piece_index(tk)]
        x, v = p.evaluate(tk, CONST.b)
        np.testing.assert_array_equal(xi, x)
        np.testing.assert_array_equal(xid, v)


def test_window_boundaries_match_exponentials():
    pieces = _pieces()
    ds = np.full(len(pieces) - 1, 0.3)
    traj = smooth_dcm(pieces, ds, 0.01, CONST.b).trajectory
    from dcmbench.planner.dcm import _hermite
    for i, (ta, tb) in enumerate(traj.windows):
        xa, va = pieces[i].evaluate(ta, CONST.b)
        xb, vb = pieces[i + 1].evaluate(tb, CONST.b)
        for t, x, v in ((ta, xa, va), (tb, xb, vb)):
            hx, hv, _ = _hermite(t, ta, tb, xa, va, xb, vb)
            np.testing.assert_allclose(hx, x, atol=1e-10)
            np.testing.assert_allclose(hv, v, atol=1e-10)
        # evaluation just inside and just outside the window agrees
        inside = traj.evaluate(ta)[0]
        outside = pieces[i].evaluate(ta, CONST.b)[0]
        np.testing.assert_allclose(inside, outside, atol=1e-10)


def test_mid_window_value_matches_coefficient_solve():
    pieces = _pieces()
    W = 0.4
    ds = np.full(len(pieces) - 1, W)
    s = smooth_dcm(pieces, ds, 0.01, CONST.b)
    i = 2
    ta, tb = s.trajectory.windows[i]
    xa, va = pieces[i].evaluate(ta, CONST.b)
    xb, vb = pieces[i + 1].evaluate(tb, CONST.b)
    # independent: solve for c0..c3 in local time tau = t - ta
    V = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, W, W**2, W**3], [0, 1, 2 * W, 3 * W**2]], float)
    tm = 0.5 * (ta + tb)
    k = int(round((tm - s.t[0]) / 0.01))
    assert abs(s.t[k] - tm) < 1e-9
    for d in range(2):
        c = np.linalg.solve(V, [xa[d], va[d], xb[d], vb[d]])
        tau = s.t[k] - ta
        assert s.xi[k, d] == pytest.approx(c @ [1, tau, tau**2, tau**3], abs=1e-12)


def test_overlapping_windows_rejected():
    pieces = _pieces()
    ds = np.full(len(pieces) - 1, 0.3)
    ds[2] = 2 * pieces[2].duration
    with pytest.raises(InvalidTiming):
        smooth_dcm(pieces, ds, 0.01, CONST.b)


# -- sampled reference invariants ------------------------------------------------------

def test_dcm_dynamics_hold_on_samples(ref):
    resid = ref.xi_dot - (ref.xi - ref.zmp) / CONST.b
    assert np.max(np.abs(resid)) <= 1e-9


def test_dcm_is_c1_at_sample_level(ref):
    T = ref.period
    fd = np.diff(ref.xi, axis=0) / T
    avg = 0.5 * (ref.xi_dot[1:] + ref.xi_dot[:-1])
    acc = np.array([ref.schedule.trajectory.evaluate(t)[2] for t in ref.t])
    tol = 10 * T * np.max(np.linalg.norm(acc, axis=1))
    assert np.max(np.linalg.norm(fd - ref.xi_dot[:-1], axis=1)) <= tol
    assert np.max(np.linalg.norm(fd - avg, axis=1)) <= tol


def test_smoothed_zmp_is_continuous_raw_is_not(ref):
    T = ref.period
    jumps = np.linalg.norm(np.diff(ref.zmp, axis=0), axis=1)
    assert np.max(jumps) <= 0.5 * T
    raw = smooth_dcm(ref.pieces, np.zeros(len(ref.pieces) - 1), T, CONST.b)
    raw_zmp, _, _ = derive_zmp_com(raw, CONST)
    assert np.max(np.linalg.norm(np.diff(raw_zmp, axis=0), axis=1)) > 0.5 * T


def test_single_support_zmp_inside_stance_foot(ref):
    half = np.array([0.19, 0.09]) / 2
    n_ss = 0
    for k, ph in enumerate(ref.phase):
        if ph.stance is None:
            continue
        foot = ref.foot(ph.stance)
        x, y, _, yaw = foot.pose[k]
        R = np.array([[np.cos(yaw), -np.sin(yaw)], [np.sin(yaw), np.cos(yaw)]])
        local = R.T @ (ref.zmp[k] - [x, y])
        assert np.all(np.abs(local) <= half + 1e-12)
        n_ss += 1
    assert n_ss > 100


def test_single_support_zmp_equals_piece_constant(ref):
    for k, ph in enumerate(ref.phase):
        if ph.stance is not None:
            p = ref.pieces[ref.schedule.trajectory.piece_index(ref.t[k])]
            np.testing.assert_allclose(ref.zmp[k], p.r_zmp, atol=1e-9)


def test_com_integration_refinement(ref):
    s = smooth_dcm(ref.pieces, ref.ds_durations, ref.period, CONST.b)
    _, com, _ = derive_zmp_com(s, CONST)
    _, fine, _ = derive_zmp_com(s, CONST, substeps=10)
    step = (s.t >= ref.footsteps[2].impact_time) & (s.t <= ref.footsteps[3].impact_time)
    assert np.max(np.abs(com[step] - fine[step])) <= 1e-5


def test_stationary_dcm_com_converges_at_rate_one_over_b():
    steps = [Footstep(Side.LEFT, [0.0, 0.0], 0.0, 0.0, 0.0), Footstep(Side.RIGHT, [0.0, 0.0], 0.0, 1.0, 1.0)]
    pieces = plan_dcm(steps, CONST, t_final=2.0)
    s = smooth_dcm(pieces, np.zeros(len(pieces) - 1), 0.01, CONST.b)
    zmp, com, comv = derive_zmp_com(s, CONST, com0=[0.02, -0.01])
    np.testing.assert_allclose(zmp, s.xi, atol=1e-15)
    expected = np.outer(np.exp(-s.t / CONST.b), [0.02, -0.01])
    np.testing.assert_allclose(com, expected, atol=1e-8)
    np.testing.assert_allclose(comv, (s.xi - com) / CONST.b)


# -- swing -------------------------------------------------------------------------------

def test_swing_boundaries_midpoint_and_apex(ref):
    for sw in ref.schedule.swings:
        for t in (sw.t_lift, sw.t_touch):
            _, twist, _ = sw.evaluate(t, 0.03)
            assert np.linalg.norm(twist) <= 1e-9
        pose0, _, _ = sw.evaluate(sw.t_lift, 0.03)
        pose1, _, _ = sw.evaluate(sw.t_touch, 0.03)
        assert pose0[2] == 0.0 and pose1[2] == 0.0
        mid, _, _ = sw.evaluate(0.5 * (sw.t_lift + sw.t_touch), 0.03)
        assert mid[0] - sw.start[0] == pytest.approx(0.5 * (sw.end[0] - sw.start[0]), abs=1e-12)
        assert mid[2] == pytest.approx(0.03, abs=1e-9)


def test_swing_twist_is_derivative_of_pose(ref):
    sw = ref.schedule.swings[1]
    h = 1e-6
    for s in np.linspace(0.05, 0.95, 9):
        t = sw.t_lift + s * (sw.t_touch - sw.t_lift)
        p1, _, _ = sw.evaluate(t + h, 0.03)
        p0, _, _ = sw.evaluate(t - h, 0.03)
        _, tw, acc = sw.evaluate(t, 0.03)
        np.testing.assert_allclose((p1 - p0) / (2 * h), tw[[0, 1, 2, 5]], atol=1e-7)


def test_stance_feet_are_still_and_phases_consistent(ref):
    for k, ph in enumerate(ref.phase):
        for side in Side:
            f = ref.foot(side)
            if ph is Phase.DS or ph.stance is side:
                assert f.pose[k, 2] == 0.0
                assert np.all(f.twist[k] == 0.0)


def test_reference_csv_export(ref, tmp_path):
    ref.to_csv(tmp_path / "plan.csv")
    rows = list(csv.reader(open(tmp_path / "plan.csv")))
    assert len(rows) == len(ref) + 1
    assert rows[0][0] == "t" and rows[0][-1] == "phase"
    assert float(rows[5][1]) == ref.xi[4, 0]


def test_step_length_helper():
    a = Footstep(Side.LEFT, [0, 0.08], 0.0, 0.0, 0.0)
    b = Footstep(Side.RIGHT, [0.2, -0.08], 0.0, 1.0, 1.0)
    assert step_length(a, b) == pytest.approx(0.2)
