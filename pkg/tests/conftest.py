import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def biped_stance():
    """Mini-biped converged onto a bent-knee double-support stance (CoM at 0.5 m)."""
    from dcmbench.rigidbody import mini_biped
    from dcmbench.wbc import FootReference, KinematicTaskReferences, converge_pose

    model = mini_biped()
    names = [j.name for j in model.joints]
    s0 = np.zeros(model.n)
    for side in "lr":
        s0[names.index(f"{side}_hip_pitch")] = -0.4
        s0[names.index(f"{side}_knee")] = 0.8
        s0[names.index(f"{side}_ankle_pitch")] = -0.4
    state = model.neutral_state()
    state.joint_positions[:] = s0
    refs = KinematicTaskReferences(
        np.array([0.0, 0.0, 0.5]), np.zeros(3),
        {"left_foot": FootReference(np.array([0.0, 0.08, 0.0]), np.eye(3)),
         "right_foot": FootReference(np.array([0.0, -0.08, 0.0]), np.eye(3))},
        np.eye(3), s0)
    return model, converge_pose(model, state, refs), s0


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
