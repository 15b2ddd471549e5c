from dataclasses import replace

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from dcmbench.control import support_polygon
from dcmbench.harness import (ControlTickLog, Disturbances, ExperimentAborted, Impulse, KinematicPlant, LipmPlant,
                              compute_metrics, consistent_zmp, discretize, dump_config, export, lipm_step,
                              load_config, log_columns, parse_arch, positive_work, read_log, read_metrics,
                              run_experiment, specific_energetic_cost, with_overrides, write_log)
from dcmbench.harness.cli import main
from dcmbench.harness.metrics import VelocityUndefined, realized_touchdowns, reconstruct_torques
from dcmbench.harness.plants import normal_forces
from dcmbench.harness.runner import sensed_zmp
from dcmbench.planner import step_length
from dcmbench.rigidbody import dynamics as dyn
from dcmbench.rigidbody import kinematics as kin
from dcmbench.rigidbody.spatial import log_so3

from oracles import rk4

B = float(np.sqrt(0.5 / 9.81))
T = 0.01


def lipm_config(**kw):
    return replace(load_config(), plant="lipm", **kw)


# LIPM discretization ------------------------------------------------------


def test_lipm_equilibrium():
    p = np.array([0.3, -0.1])
    p2, v2 = lipm_step(p, np.zeros(2), p, B, T)
    np.testing.assert_allclose(p2, p, atol=1e-15)
    np.testing.assert_allclose(v2, 0.0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_lipm_dcm_recursion(x):
    p, v, r = np.array(x[:2]), np.array(x[2:4]), np.array(x[4:])
    p2, v2 = lipm_step(p, v, r, B, T)
    F = np.exp(T / B)
    np.testing.assert_allclose(p2 + B * v2, F * (p + B * v) + (1 - F) * r, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_lipm_step_matches_fine_integration(x):
    p, v, r = np.array(x[:2]), np.array(x[2:4]), np.array(x[4:])

    def f(_, y):
        return np.concatenate([y[2:], (y[:2] - r) / B**2])

    y = rk4(f, np.concatenate([p, v]), 0.0, T, 1000)
    p2, v2 = lipm_step(p, v, r, B, T)
    np.testing.assert_allclose(np.concatenate([p2, v2]), y, atol=1e-8)


def test_lipm_eigenvalues():
    d = discretize(B, T)
    np.testing.assert_allclose(d.continuous_eigenvalues(), [-1 / B, -1 / B, 1 / B, 1 / B], rtol=1e-12)
    np.testing.assert_allclose(d.discrete_eigenvalues(), np.exp([-T / B, -T / B, T / B, T / B]), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_consistent_zmp_inverts_step(x):
    p, v, v_next = np.array(x[:2]), np.array(x[2:4]), np.array(x[4:])
    r = consistent_zmp(p, v, v_next, B, T)
    np.testing.assert_allclose(lipm_step(p, v, r, B, T)[1], v_next, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=10, max_size=10), st.sampled_from([1.0, 0.3]))
def test_sensed_zmp_is_a_fixed_point(x, alpha):
    v0, off, delta, p, v = (np.array(x[i:i + 2]) for i in range(0, 10, 2))
    K = np.array([[2.0, 0.3], [0.1, 1.5]])
    r = sensed_zmp(v0, K, off, delta, p, v, alpha, B, T)
    v_cmd = v0 + K @ (r + off) + delta
    realized = v + alpha * (v_cmd - v)
    np.testing.assert_allclose(consistent_zmp(p, v, realized, B, T), r, atol=1e-10)


# plants --------------------------------------------------------------------


def test_lipm_plant_velocity_lag():
    pl = LipmPlant([0, 0], [0, 0], B, T, mode="velocity", lag=0.03)
    pl.step([1.0, 0.0])
    np.testing.assert_allclose(pl.v, [1 - np.exp(-T / 0.03), 0.0], atol=1e-12)
    pp = LipmPlant([0, 0], [0, 0], B, T, mode="position")
    pp.step([1.0, 0.0])
    np.testing.assert_allclose(pp.v, [1.0, 0.0], atol=1e-12)


def test_lipm_plant_push_moves_dcm():
    pl = LipmPlant([0.1, 0], [0.2, 0], B, T)
    xi = pl.dcm.copy()
    pl.push([0.05, -0.02])
    np.testing.assert_allclose(pl.dcm - xi, [0.05, -0.02], atol=1e-15)


def test_kinematic_plant_keeps_contacts_rigid(biped_stance, rng):
    model, state, _ = biped_stance
    plant = KinematicPlant(model, state, T, anchor="left_foot", contacts=("left_foot", "right_foot"))
    feet = {f: kin.frame_pose(model, state, f) for f in ("left_foot", "right_foot")}
    for _ in range(20):
        plant.step(0.3 * rng.standard_normal(model.n), contacts=("left_foot", "right_foot"))
    for f, H0 in feet.items():
        H = kin.frame_pose(model, plant.state, f)
        np.testing.assert_allclose(H[:3, 3], H0[:3, 3], atol=1e-9)
        assert np.linalg.norm(log_so3(H[:3, :3] @ H0[:3, :3].T)) < 1e-9


def test_kinematic_plant_single_support_follows_command(biped_stance, rng):
    model, state, _ = biped_stance
    plant = KinematicPlant(model, state, T, anchor="left_foot")
    sd = 0.2 * rng.standard_normal(model.n)
    nu = plant.step(sd, contacts=("left_foot",))
    np.testing.assert_allclose(nu[6:], sd, atol=1e-12)
    # the anchor foot does not move under the realized velocity
    J = kin.frame_jacobian(model, state, "left_foot")
    np.testing.assert_allclose(J @ nu, 0.0, atol=1e-12)


def test_normal_forces_distribution():
    L, W = 0.19, 0.09
    left = support_polygon([(0.0, 0.08, 0.0)], L, W)
    right = support_polygon([(0.0, -0.08, 0.0)], L, W)
    f = normal_forces("left_foot", [0, 0], left, right, 300.0)
    assert f == {"left_foot": 300.0, "right_foot": 0.0}
    f = normal_forces(None, [0.0, 0.0], left, right, 300.0)
    assert f["left_foot"] == pytest.approx(150.0) and f["right_foot"] == pytest.approx(150.0)
    f = normal_forces(None, [0.0, 0.07], left, right, 300.0)
    assert f == {"left_foot": 300.0, "right_foot": 0.0}
    # soles span |y| in [0.035, 0.125]: 0.005 m from the left one, 0.065 m from the right one
    f = normal_forces(None, [0.0, 0.03], left, right, 300.0)
    assert f["left_foot"] == pytest.approx(300.0 * 0.065 / 0.07)


# metrics -------------------------------------------------------------------


def one_joint_log(tau, sd, com_x, period=0.01):
    log = ControlTickLog(log_columns(["j"]))
    for k, (a, b_, c) in enumerate(zip(tau, sd, com_x)):
        log.append({"t": k * period, "tau_j": a, "sd_j": b_, "com_x": c, "com_y": 0.0})
    return log


def test_cet_definition_example():
    n = 100
    log = one_joint_log(np.ones(n), np.ones(n), np.linspace(0.0, 1.0, n))
    m = compute_metrics(log, mass=1.0, period=0.01)
    assert m.energy == pytest.approx(1.0, abs=1e-12)
    assert m.c_et == pytest.approx(1.0, abs=1e-12)


def test_negative_power_is_not_counted():
    assert positive_work([[1.0, -2.0], [-1.0, 3.0]], [[1.0, 1.0], [1.0, 1.0]], 0.5) == pytest.approx(2.0)


def test_stationary_run_has_undefined_cost():
    n = 50
    log = one_joint_log(np.full(n, 2.0), np.zeros(n), np.zeros(n))
    m = compute_metrics(log, mass=33.0, period=0.01)
    assert m.energy >= 0.0
    assert m.c_et is None and m.walking_velocity is None
    assert "c_et" in m.undefined and "walking_velocity" in m.undefined
    with pytest.raises(VelocityUndefined):
        m.require_velocity()
    with pytest.raises(VelocityUndefined):
        specific_energetic_cost(1.0, 1.0, 0.005)


@pytest.fixture(scope="module")
def lipm_run():
    return run_experiment(lipm_config(duration=10.0))


def test_export_row_count(lipm_run, tmp_path):
    export(lipm_run.log, lipm_run.metrics, tmp_path)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert len(lines) == 1 + 1000
    assert lines[0].split(",") == lipm_run.log.columns


def test_export_empty_log_is_header_only(tmp_path):
    log = ControlTickLog(log_columns(["a", "b"]))
    write_log(log, tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text() == ",".join(log.columns) + "\n"


def test_export_round_trip(lipm_run, tmp_path):
    paths = export(lipm_run.log, lipm_run.metrics, tmp_path, lipm_run.references.footsteps)
    assert read_log(paths["log"]) == lipm_run.log
    m = read_metrics(paths["metrics"])
    assert m["schema_version"] == 1 and m["n_ticks"] == 1000
    assert (tmp_path / "footsteps.txt").exists()


def test_export_reports_bad_directory(lipm_run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        export(lipm_run.log, lipm_run.metrics, blocker / "sub")


def test_log_time_must_increase():
    log = ControlTickLog(log_columns())
    log.append({"t": 0.0})
    with pytest.raises(ValueError):
        log.append({"t": 0.0})


def test_walking_velocity_recomputed_by_hand(lipm_run):
    log = lipm_run.log
    t = log.column("t")
    events = []
    for prefix in ("lf", "rf"):
        c = log.column(f"{prefix}_contact")
        for k in range(1, len(c)):
            if c[k] == 1 and c[k - 1] == 0:
                events.append((t[k], prefix, log.column(f"{prefix}_x")[k], log.column(f"{prefix}_y")[k],
                               log.column(f"{prefix}_yaw")[k]))
    events.sort()
    ratios = []
    for a, b_ in zip(events, events[1:]):
        # step length: along the previous heading, minus the nominal lateral offset
        dx, dy = b_[2] - a[2], b_[3] - a[3]
        fwd = np.cos(a[4]) * dx + np.sin(a[4]) * dy
        lat = -np.sin(a[4]) * dx + np.cos(a[4]) * dy
        ratios.append(np.hypot(fwd, abs(lat) - 0.16) / (b_[0] - a[0]))
    assert len(ratios) >= 3
    assert lipm_run.metrics.walking_velocity == pytest.approx(np.mean(ratios), abs=1e-9)
    steps = realized_touchdowns(log)
    assert len(steps) == len(events)
    assert step_length(steps[0], steps[1], 0.16) > 0


def test_reconstructed_torques_satisfy_dynamics(biped_stance, rng):
    model, state, _ = biped_stance
    st_ = state.with_velocity(0.1 * rng.standard_normal(model.nv))
    nu_dot = rng.standard_normal(model.nv)
    tau, f = reconstruct_torques(model, st_, nu_dot, ["left_foot", "right_foot"])
    J = np.vstack([kin.frame_jacobian(model, st_, c) for c in ("left_foot", "right_foot")])
    lhs = dyn.mass_matrix(model, st_) @ nu_dot + dyn.bias_forces(model, st_)
    rhs = np.concatenate([np.zeros(6), tau]) + J.T @ f
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_static_stance_reconstruction_carries_weight(biped_stance):
    model, state, _ = biped_stance
    _, f = reconstruct_torques(model, state, np.zeros(model.nv), ["left_foot", "right_foot"])
    assert f[2] + f[8] == pytest.approx(model.total_mass * 9.81, rel=1e-9)


# experiments ---------------------------------------------------------------


def test_lipm_run_tracks_and_walks(lipm_run):
    m = lipm_run.metrics
    assert not m.fell and m.n_ticks == 1000
    assert m.dcm_error_max < 5e-3
    assert m.walking_velocity == pytest.approx(0.15, abs=0.01)
    assert m.c_et is None and "c_et" in m.undefined


def test_determinism_with_noise(tmp_path):
    cfg = lipm_config(duration=3.0, seed=7, disturbances=Disturbances(zmp_noise_std=0.005))
    for name in ("a", "b"):
        write_log(run_experiment(cfg).log, tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    write_log(run_experiment(replace(cfg, seed=8)).log, tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_fall_is_monotone_in_impulse():
    falls = []
    for mag in np.arange(0.0, 0.45, 0.05):
        cfg = lipm_config(duration=4.0, disturbances=Disturbances(impulses=(Impulse(2.0, "dcm", (0.0, mag)),)))
        falls.append(run_experiment(cfg).fell)
    assert falls[0] is False and falls[-1] is True
    assert falls == sorted(falls)


def test_fall_truncates_log():
    cfg = lipm_config(duration=4.0, disturbances=Disturbances(impulses=(Impulse(1.0, "dcm", (0.5, 0.0)),)))
    r = run_experiment(cfg)
    assert r.fell and r.metrics.fall_time == pytest.approx(1.0)
    assert len(r.log) == 101


def test_kinematic_short_run():
    r = run_experiment(replace(load_config(), duration=1.5))
    m = r.metrics
    assert not m.fell and m.wholebody_failures == 0
    assert np.max(r.log.column("base_error")) < 1e-9
    assert m.dcm_error_max < 5e-3


def test_torque_replay_matches_kinematic_motion():
    cfg = replace(load_config(), duration=0.5)
    a = run_experiment(cfg).log
    b = run_experiment(with_overrides(cfg, arch="inst-trq")).log
    for col in ("xi_x", "xi_y", "com_x", "com_y", "lf_z", "rf_z"):
        np.testing.assert_array_equal(a.column(col), b.column(col))
    assert np.nanmax(b.column("dynamics_residual")) < 1e-6


def test_aborts_after_repeated_failures():
    cfg = replace(load_config(), duration=0.5,
                  kinematic=replace(load_config().kinematic, joint_velocity_limits=(-1e-6, 1e-6)),
                  max_consecutive_failures=3)
    with pytest.raises(ExperimentAborted) as e:
        run_experiment(cfg)
    assert len(e.value.log) == 4


# configuration -------------------------------------------------------------


@pytest.mark.parametrize("text, expected", [
    ("inst-pos", ("instantaneous", "position")), ("mpcxtrq", ("predictive", "torque")),
    ("instxvel", ("instantaneous", "velocity")), ("mpc_pos", ("predictive", "position"))])
def test_parse_arch(text, expected):
    assert parse_arch(text) == expected


@pytest.mark.parametrize("text", ["", "inst", "lqr-pos", "inst-acc"])
def test_parse_arch_rejects(text):
    with pytest.raises(ValueError):
        parse_arch(text)


def test_config_round_trip(tmp_path):
    cfg = with_overrides(load_config(), arch="mpc-vel", seed=3, speed=0.1, duration=2.0)
    cfg = replace(cfg, disturbances=Disturbances((Impulse(1.0, "zmp", (0.01, 0.0)),), 0.002))
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml").to_dict() == cfg.to_dict()


def test_partial_config_merges_defaults(tmp_path):
    (tmp_path / "c.yaml").write_text("dcm:\n  kp: [4.0, 4.0]\nplanner:\n  speed: 0.1\n")
    cfg = load_config(tmp_path / "c.yaml")
    np.testing.assert_allclose(cfg.dcm.kp, 4.0 * np.eye(2))
    assert cfg.planner.speed == 0.1 and cfg.planner.horizon == load_config().planner.horizon


@pytest.mark.parametrize("change", [
    dict(plant="lipm", wholebody="torque"),
    dict(disturbances=Disturbances((Impulse(1.0, "dcm", (0.1, 0.0)),))),
    dict(period=0.0),
])
def test_invalid_configs_rejected(change):
    with pytest.raises(ValueError):
        replace(load_config(), **change).validate()


# command line --------------------------------------------------------------


def write_cfg(path, **data):
    base = {"plant": "lipm", "duration": 3.0}
    base.update(data)
    path.write_text(yaml.safe_dump(base))
    return path


def test_cli_run_ok(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    assert {p.name for p in (tmp_path / "o").iterdir()} >= {"log.csv", "metrics.txt", "footsteps.txt"}
    assert main(["metrics", str(tmp_path / "o" / "log.csv"), "--config", str(cfg)]) == 0
    assert "dcm_error_max" in capsys.readouterr().out


def test_cli_run_fall_exit_code(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", disturbances={"impulses": [{"time": 1.0, "target": "dcm",
                                                                      "value": [0.5, 0.0]}]})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cli_errors_exit_one(tmp_path):
    assert main(["run", "--arch", "nope", "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["metrics", str(tmp_path / "missing.csv")]) == 1


def test_cli_plan(tmp_path):
    assert main(["plan", "--speed", "0.1", "--out", str(tmp_path)]) == 0
    data = yaml.safe_load((tmp_path / "footsteps.txt").read_text())
    assert len(data["footsteps"]) > 2
    assert (tmp_path / "references.csv").exists()


def test_cli_sweep(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", duration=2.0)
    rc = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--speeds", "0.05,0.1",
               "--step-times", "1.0,1.2", "--jobs", "2"])
    assert rc == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 4
