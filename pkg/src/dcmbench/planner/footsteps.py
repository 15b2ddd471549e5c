"""Unicycle footstep planning."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import yaml


class Side(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"

    @property
    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT

    @property
    def sign(self) -> float:
        """+1 for the left foot (positive lateral offset)."""
        return 1.0 if self is Side.LEFT else -1.0


class PlanInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class Footstep:
    side: Side
    position: np.ndarray
    yaw: float
    impact_time: float
    step_duration: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))

    @property
    def pose(self) -> tuple[float, float, float]:
        return float(self.position[0]), float(self.position[1]), float(self.yaw)


@dataclass(frozen=True)
class StepBounds:
    t_min: float = 0.5
    t_max: float = 1.2
    l_min: float = 0.0
    l_max: float = 0.28
    lateral_offset: float = 0.16
    time_grid: float = 0.1

    def validate(self) -> None:
        if not 0 < self.t_min < self.t_max:
            raise ValueError("step bounds need 0 < t_min < t_max")
        if not 0 <= self.l_min < self.l_max:
            raise ValueError("step bounds need 0 <= l_min < l_max")
        if not self.lateral_offset > 0 or not self.time_grid > 0:
            raise ValueError("lateral offset and time grid must be positive")

    def durations(self) -> np.ndarray:
        k = int(np.floor((self.t_max - self.t_min) / self.time_grid + 1e-9))
        return self.t_min + self.time_grid * np.arange(k + 1)


def midline_anchor(step: Footstep, lateral_offset: float = 0.16) -> np.ndarray:
    """Point on the walking midline that the foothold was offset from."""
    lat = np.array([-np.sin(step.yaw), np.cos(step.yaw)])
    return step.position - step.side.sign * 0.5 * lateral_offset * lat


def step_length(prev: Footstep, step: Footstep, lateral_offset: float = 0.16) -> float:
    """Signed advance between the midline anchors of two consecutive footholds.

    For straight walking this is the forward distance between the feet; for
    turning in place it is zero on both sides.
    """
    d = midline_anchor(step, lateral_offset) - midline_anchor(prev, lateral_offset)
    heading = np.array([np.cos(step.yaw), np.sin(step.yaw)])
    return float(np.copysign(np.linalg.norm(d), d @ heading))


@dataclass
class Unicycle:
    """Planar unicycle at the feet midpoint, integrated with a fixed step."""

    x: float
    y: float
    theta: float
    dt: float = 1e-3
    t: float = 0.0

    def advance_to(self, t: float, speed: float, turn_rate: float) -> None:
        n = int(round((t - self.t) / self.dt))
        for _ in range(n):
            mid = self.theta + 0.5 * turn_rate * self.dt
            self.x += speed * np.cos(mid) * self.dt
            self.y += speed * np.sin(mid) * self.dt
            self.theta += turn_rate * self.dt
        self.t += n * self.dt

    def foot(self, side: Side, offset: float) -> tuple[np.ndarray, float]:
        lat = np.array([-np.sin(self.theta), np.cos(self.theta)])
        return np.array([self.x, self.y]) + side.sign * 0.5 * offset * lat, self.theta


def plan_footsteps(left_start, right_start, speed: float, turn_rate: float, horizon: float,
                   bounds: StepBounds = StepBounds(), t_init: float = 1.0,
                   first_swing: Side = Side.LEFT) -> list[Footstep]:
    """Footholds sampled from a unicycle moving at ``speed`` and ``turn_rate``.

    ``left_start`` and ``right_start`` are ``(x, y, yaw)``.  The first two
    entries are the start stance poses (the first swing foot first); walking
    begins after ``t_init`` seconds of standing.  Each further step takes the
    shortest duration on the candidate grid that satisfies the length bounds;
    steps are added while their impact time stays within ``t_init + horizon``.
    """
    bounds.validate()
    if speed < 0:
        raise ValueError("speed must be non-negative")
    if horizon < 0 or t_init < 0:
        raise ValueError("horizon and t_init must be non-negative")
    starts = {Side.LEFT: left_start, Side.RIGHT: right_start}
    s0, s1 = first_swing, first_swing.other
    steps = [Footstep(s0, starts[s0][:2], starts[s0][2], 0.0, 0.0),
             Footstep(s1, starts[s1][:2], starts[s1][2], t_init, t_init)]
    mid = 0.5 * (np.asarray(left_start[:2], float) + np.asarray(right_start[:2], float))
    theta = float(np.arctan2(np.sin(left_start[2]) + np.sin(right_start[2]),
                             np.cos(left_start[2]) + np.cos(right_start[2])))
    uni = Unicycle(mid[0], mid[1], theta)
    side = s0
    t_end = t_init + horizon
    while True:
        prev = steps[-1]
        chosen = None
        for dur in bounds.durations():
            t_imp = prev.impact_time + dur
            trial = replace(uni)
            trial.advance_to(t_imp - t_init, speed, turn_rate)
            pos, yaw = trial.foot(side, bounds.lateral_offset)
            cand = Footstep(side, pos, yaw, t_imp, float(dur))
            ell = step_length(prev, cand, bounds.lateral_offset)
            if bounds.l_min - 1e-12 <= ell <= bounds.l_max + 1e-12:
                chosen = (cand, trial)
                break
        if chosen is None:
            raise PlanInfeasible(
                f"no step duration in [{bounds.t_min}, {bounds.t_max}] keeps the step length "
                f"within [{bounds.l_min}, {bounds.l_max}] at speed {speed} m/s")
        cand, trial = chosen
        if cand.impact_time > t_end + 1e-9:
            break
        steps.append(cand)
        uni = trial
        side = side.other
    return steps


def validate_footsteps(steps: list[Footstep], bounds: StepBounds, tol: float = 1e-9) -> None:
    """Raise PlanInfeasible if any planned step breaks the bounds or alternation."""
    for k in range(1, len(steps)):
        if steps[k].side is steps[k - 1].side:
            raise PlanInfeasible(f"footstep {k} does not alternate sides")
        if steps[k].impact_time < steps[k - 1].impact_time:
            raise PlanInfeasible(f"footstep {k} impact time goes backwards")
    for k in range(2, len(steps)):
        d = steps[k].step_duration
        if not bounds.t_min - tol <= d <= bounds.t_max + tol:
            raise PlanInfeasible(f"footstep {k}: duration {d} outside bounds")
        ell = step_length(steps[k - 1], steps[k], bounds.lateral_offset)
        if not bounds.l_min - tol <= ell <= bounds.l_max + tol:
            raise PlanInfeasible(f"footstep {k}: length {ell} outside bounds")


def walking_velocity(steps: list[Footstep], lateral_offset: float = 0.16) -> float:
    """Mean ratio of step length to step duration over the planned steps."""
    ratios = [step_length(steps[k - 1], steps[k], lateral_offset) / steps[k].step_duration
              for k in range(2, len(steps))]
    return float(np.mean(ratios)) if ratios else 0.0


def dump_footsteps(steps: list[Footstep], path) -> None:
    rows = [{"side": s.side.value, "x": float(s.position[0]), "y": float(s.position[1]),
             "yaw": float(s.yaw), "impact_time": float(s.impact_time),
             "step_duration": float(s.step_duration)} for s in steps]
    with open(path, "w") as fh:
        yaml.safe_dump({"footsteps": rows}, fh, sort_keys=False)


def load_footsteps(path) -> list[Footstep]:
    with open(path) as fh:
        rows = yaml.safe_load(fh)["footsteps"]
    return [Footstep(Side(r["side"]), [r["x"], r["y"]], r["yaw"], r["impact_time"], r["step_duration"])
            for r in rows]
