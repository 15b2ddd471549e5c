import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcmbench.qp import QpStatus
from dcmbench.rigidbody import Contact, ContactWrench, RobotState, global_zmp, kinematics as kin, loads_model
from dcmbench.rigidbody.spatial import exp_so3, rot_x
from dcmbench.wbc import (
    FootMotion, TorqueGains, TorqueTaskReferences, WrenchFeasibilitySet, ZmpRefInfeasible, build_torque_qp,
    forward_acceleration, linear_pid, rotational_pid, solve_torque, zmp_equality,
)

from oracles import enumerate_active_subsets, random_rotation

G = 9.81


def stance_refs(model, state, zmp=(0.0, 0.0)):
    d = kin.compute(model, state)
    feet = {}
    for k in ("left_foot", "right_foot"):
        H = kin.frame_pose(model, state, k, d)
        feet[k] = FootMotion(H[:3, 3].copy(), H[:3, :3].copy())
    return TorqueTaskReferences(feet, np.asarray(zmp, float), kin.com_state(model, state, d).position[2],
                                torso_rotation=kin.frame_pose(model, state, "torso", d)[:3, :3].copy(),
                                posture=state.joint_positions.copy())


def _vee_skew_part(M):
    S = 0.5 * (M - M.T)
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _hat(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


# ---------------------------------------------------------------- feedback laws


def test_rotational_pid_examples():
    z = np.zeros(3)
    np.testing.assert_array_equal(rotational_pid(np.eye(3), np.eye(3), z, z, [1, 2, 3], 1, 2, 3), [1, 2, 3])
    th = 0.3
    out = rotational_pid(rot_x(th), np.eye(3), z, z, z, 1.0, 20.0, 100.0)
    np.testing.assert_allclose(out, [-100 * np.sin(th), 0, 0], atol=1e-14)
    out = rotational_pid(np.eye(3), np.eye(3), [0, 0.5, 0], z, z, 1.0, 20.0, 100.0)
    np.testing.assert_allclose(out, [0, -(1.0 + 20.0) * 0.5, 0], atol=1e-14)  # c0 and c1 both act on w


def test_rotational_pid_matches_expression(rng):
    for _ in range(50):
        R, Rr = random_rotation(rng), random_rotation(rng)
        w, wr, dwr = rng.normal(size=(3, 3))
        c0, c1, c2 = rng.uniform(0.1, 50, 3)
        E = R @ Rr.T
        expected = dwr - c0 * _vee_skew_part(_hat(w) @ E - E @ _hat(wr)) - c1 * (w - wr) - c2 * _vee_skew_part(E)
        np.testing.assert_allclose(rotational_pid(R, Rr, w, wr, dwr, c0, c1, c2), expected, atol=1e-10)


def test_linear_pid_matches_expression(rng):
    for _ in range(50):
        p, pr, v, vr, ar = rng.normal(size=(5, 3))
        kp, kd = rng.uniform(1, 500, 2)
        np.testing.assert_allclose(linear_pid(p, pr, v, vr, ar, kp, kd), ar - kd * (v - vr) - kp * (p - pr),
                                   atol=1e-12)
    np.testing.assert_array_equal(linear_pid([1.0], [1.0], [0.0], 0.0, [0.0], 5, 5), [0.0])


# ---------------------------------------------------------------- ZMP rows


def test_single_foot_zmp_round_trip():
    p = np.array([0.1, -0.05, 0.0])
    w_local = np.array([0.0, 0.0, 300.0, 0.012 * 300, -0.02 * 300, 0.0])  # CoP at (0.02, 0.012)
    H = np.eye(4)
    H[:3, 3] = p
    r = global_zmp([Contact(ContactWrench("f", w_local[:3], w_local[3:]), H)])
    np.testing.assert_allclose(r[:2], [0.12, -0.038], atol=1e-12)
    assert np.max(np.abs(zmp_equality([p], r) @ w_local)) <= 1e-9
    assert np.max(np.abs(zmp_equality([p], r[:2] + [0.01, 0]) @ w_local)) > 1.0


def test_symmetric_double_support_zmp_is_midpoint():
    pl, pr = np.array([0.0, 0.08, 0.0]), np.array([0.0, -0.08, 0.0])
    w = np.array([0, 0, 150.0, 0, 0, 0])
    f = np.concatenate([w, w])
    assert np.max(np.abs(zmp_equality([pl, pr], [0, 0]) @ f)) == 0.0
    assert np.max(np.abs(zmp_equality([pl, pr], [0, 0.01]) @ f)) > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_zmp_rows_vanish_at_reproduced_zmp(seed):
    rng = np.random.default_rng(seed)
    contacts, stacked, pos = [], [], []
    for k in range(rng.integers(1, 3)):
        R = exp_so3([0, 0, rng.uniform(-np.pi, np.pi)])
        H = np.eye(4)
        H[:3, :3], H[:3, 3] = R, np.append(rng.uniform(-0.3, 0.3, 2), 0.0)
        fl = np.array([*rng.normal(0, 20, 2), rng.uniform(50, 400)])
        tl = rng.normal(0, 5, 3)
        contacts.append(Contact(ContactWrench(f"c{k}", fl, tl), H))
        stacked.append(np.concatenate([R @ fl, R @ tl]))
        pos.append(H[:3, 3])
    r = global_zmp(contacts)
    f = np.concatenate(stacked)
    # hand computation of the same point from inertial-frame wrenches
    fz = sum(w[2] for w in stacked)
    rx = sum(p[0] * w[2] - w[4] for p, w in zip(pos, stacked)) / fz
    ry = sum(p[1] * w[2] + w[3] for p, w in zip(pos, stacked)) / fz
    np.testing.assert_allclose(r[:2], [rx, ry], atol=1e-9)
    assert np.max(np.abs(zmp_equality(pos, r) @ f)) <= 1e-9 * fz


# ---------------------------------------------------------------- wrench feasibility


def test_wrench_set_examples():
    mu = 1.0 / 3.0
    wf = WrenchFeasibilitySet.build(mu, 0.19, 0.09)
    assert wf.matrix.shape == (13, 6)
    assert np.all(wf.matrix @ [0, 0, 100.0, 0, 0, 0] < 0)
    # tangential force along a facet midpoint direction at the inscribed limit lies on the boundary
    mu_in = mu * np.cos(np.pi / 8)
    th = 2 * np.pi * 0.5 / 8
    w = np.array([mu_in * 100 * np.cos(th), mu_in * 100 * np.sin(th), 100.0, 0, 0, 0])
    assert np.max(wf.matrix @ w) == pytest.approx(0.0, abs=1e-12)
    assert np.max(wf.matrix @ (w + [1e-3, 1e-3, 0, 0, 0, 0])) > 0
    # CoP beyond the toe (x = 0.1 > 0.095) and a pulling force are rejected
    assert np.max(wf.matrix @ [0, 0, 100.0, 0, -10.0, 0]) > 0
    assert np.max(wf.matrix @ [0, 0, -1.0, 0, 0, 0]) > 0
    with pytest.raises(ValueError):
        WrenchFeasibilitySet.build(0.0, 0.19, 0.09)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_wrench_set_is_frame_covariant(seed):
    rng = np.random.default_rng(seed)
    wf = WrenchFeasibilitySet.build(0.5, 0.2, 0.1)
    R = random_rotation(rng)
    w_local = rng.normal(size=6)
    w_world = np.concatenate([R @ w_local[:3], R @ w_local[3:]])
    np.testing.assert_allclose(wf.in_world(R) @ w_world, wf.matrix @ w_local, atol=1e-12)


# ---------------------------------------------------------------- torque QP


def test_static_stance_carries_the_weight(biped_stance):
    model, state, _ = biped_stance
    sol = solve_torque(model, state, stance_refs(model, state), TorqueGains())
    assert sol.status is QpStatus.SOLVED
    fz = sum(w[2] for w in sol.wrenches.values())
    assert fz / (model.total_mass * G) == pytest.approx(1.0, rel=1e-6)
    assert sol.residuals["dynamics"] <= 1e-6
    assert sol.residuals["zmp"] <= 1e-6
    assert np.max(np.abs(sol.nu_dot)) <= 1e-2
    np.testing.assert_allclose(sol.zmp, [0.0, 0.0], atol=1e-6)


def test_zmp_reference_outside_hull(biped_stance):
    model, state, _ = biped_stance
    refs = stance_refs(model, state, zmp=(0.5, 0.0))
    with pytest.raises(ZmpRefInfeasible) as err:
        solve_torque(model, state, refs, TorqueGains())
    assert err.value.distance == pytest.approx(0.5 - 0.095, abs=1e-3)
    sol = solve_torque(model, state, refs, TorqueGains(), project_zmp=True)
    assert sol.projected
    assert sol.zmp_reference[0] == pytest.approx(0.095, abs=1e-3)
    np.testing.assert_allclose(sol.zmp, sol.zmp_reference, atol=1e-6)


@pytest.mark.parametrize("zmp", [(0.0, 0.0), (0.02, 0.03)])
def test_wrench_weight_shrinks_tangential_forces(biped_stance, zmp):
    model, state, _ = biped_stance
    refs = stance_refs(model, state, zmp=zmp)
    tangential = []
    for lam in (1e-4, 1e-2, 1.0, 100.0):
        sol = solve_torque(model, state, refs, TorqueGains(wrench_weight=lam, wrench_mode="literal"))
        tangential.append(sum(np.hypot(w[0], w[1]) for w in sol.wrenches.values()))
    assert all(a >= b - 1e-6 for a, b in zip(tangential, tangential[1:]))


# single leg of the mini-biped with the torso lumped into the pelvis and four joints kept
PINNED_LEG = """
name: pinned_leg
base: pelvis
foot: {length: 0.19, width: 0.09}
roles: {torso: pelvis, left_foot: l_sole}
links:
  - {name: pelvis, mass: 19.0, com: [0.0, -0.08, 0.15], inertia: [0.2, 0.15, 0.12, 0.0, 0.0, 0.0]}
  - {name: l_thigh, mass: 3.8, com: [0.0, 0.0, -0.1], inertia: [0.011, 0.011, 0.0025, 0.0, 0.0, 0.0]}
  - {name: l_shank, mass: 1.7, com: [0.0, 0.0, -0.11], inertia: [0.007367, 0.007367, 0.00102, 0.0, 0.0, 0.0]}
  - {name: l_ankle_1, mass: 0.5, com: [0.0, 0.0, 0.0], inertia: [0.000133, 0.000133, 0.000133, 0.0, 0.0, 0.0]}
  - {name: l_foot, mass: 1.5, com: [0.02, 0.0, -0.025], inertia: [0.001125, 0.004625, 0.005525, 0.0, 0.0, 0.0]}
joints:
  - {name: l_hip_pitch, parent: pelvis, child: l_thigh, axis: [0.0, 1.0, 0.0], origin: {xyz: [0.0, 0.08, -0.09]},
     limits: {torque: 80.0}}
  - {name: l_knee, parent: l_thigh, child: l_shank, axis: [0.0, 1.0, 0.0], origin: {xyz: [0.0, 0.0, -0.2]},
     limits: {torque: 80.0}}
  - {name: l_ankle_pitch, parent: l_shank, child: l_ankle_1, axis: [0.0, 1.0, 0.0], origin: {xyz: [0.0, 0.0, -0.22]},
     limits: {torque: 80.0}}
  - {name: l_ankle_roll, parent: l_ankle_1, child: l_foot, axis: [1.0, 0.0, 0.0], limits: {torque: 80.0}}
frames:
  - {name: pelvis, link: pelvis}
  - {name: l_sole, link: l_foot, origin: {xyz: [0.0, 0.0, -0.04]}}
"""


def _enumeration_check(model, state, refs, max_active):
    # tight limit so that a torque bound binds at the optimum
    free = solve_torque(model, state, refs, TorqueGains())
    limit = 0.9 * np.max(np.abs(free.tau))
    gains = TorqueGains(torque_limit=limit)
    tp = build_torque_qp(model, state, refs, gains)
    qp = tp.qp
    A, lo, hi = qp.constraint_matrix, qp.lower_bounds, qp.upper_bounds
    Aeq, beq = A[:tp.n_eq], lo[:tp.n_eq]
    Ai, li, ui = A[tp.n_eq:], lo[tp.n_eq:], hi[tp.n_eq:]
    up, dn = np.isfinite(ui), np.isfinite(li)
    Ain = np.vstack([Ai[up], -Ai[dn]])
    bin_ = np.concatenate([ui[up], -li[dn]])
    x_ref, _ = enumerate_active_subsets(qp.hessian, qp.gradient, Aeq, beq, Ain, bin_, max_active=max_active)
    assert x_ref is not None
    sol = solve_torque(model, state, refs, gains)
    assert np.any(np.isclose(np.abs(sol.tau), limit, atol=1e-7))
    np.testing.assert_allclose(sol.u, x_ref, atol=1e-5)


@pytest.mark.parametrize("zmp", [(0.0, 0.0), (0.03, 0.02)])
def test_pinned_leg_matches_active_set_enumeration(zmp):
    model = loads_model(PINNED_LEG)
    s = np.array([-0.4, 0.8, -0.4, 0.0])
    sole = kin.frame_pose(model, RobotState(np.zeros(3), np.eye(3), s), "l_sole")
    state = RobotState(-sole[:3, 3], np.eye(3), s)  # sole on the ground at the origin
    H = kin.frame_pose(model, state, "l_sole")
    refs = TorqueTaskReferences({"left_foot": FootMotion(H[:3, 3].copy(), H[:3, :3].copy())}, np.asarray(zmp),
                                kin.com_state(model, state).position[2], posture=s + 0.05)
    _enumeration_check(model, state, refs, max_active=3)


def test_biped_matches_active_set_enumeration(biped_stance):
    model, state, _ = biped_stance
    refs = stance_refs(model, state, zmp=(0.03, 0.02))
    refs.posture = refs.posture + 0.05
    _enumeration_check(model, state, refs, max_active=2)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_solution_invariants(biped_stance, seed):
    model, state, _ = biped_stance
    rng = np.random.default_rng(seed)
    refs = stance_refs(model, state, zmp=(rng.uniform(-0.06, 0.06), rng.uniform(-0.1, 0.1)))
    refs.com_height += rng.normal(0, 0.01)
    refs.torso_rotation = exp_so3(rng.normal(0, 0.05, 3)) @ refs.torso_rotation
    refs.posture = refs.posture + rng.normal(0, 0.05, model.n)
    gains = TorqueGains(torque_limit=60.0)
    sol = solve_torque(model, state, refs, gains)
    r = sol.residuals
    assert r["dynamics"] <= 1e-6 and r["tasks"] <= 1e-6 and r["zmp_rows"] <= 1e-6
    assert r["zmp"] <= 1e-6
    assert r["friction"] <= 1e-6 and r["cop"] <= 1e-6 and r["inequality"] <= 1e-6
    assert np.all(np.abs(sol.tau) <= 60.0 + 1e-6)
    np.testing.assert_allclose(forward_acceleration(model, state, sol.tau, sol.wrenches), sol.nu_dot, atol=1e-6)
    d = kin.compute(model, state)
    for k in sol.wrenches:
        acc = kin.frame_jacobian(model, state, k, d) @ sol.nu_dot + kin.bias_acceleration(model, state, k, d)
        assert np.max(np.abs(acc)) <= 1e-6
