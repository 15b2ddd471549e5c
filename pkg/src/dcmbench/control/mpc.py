"""Receding-horizon DCM controller with ZMP polygon constraints.

Decision variables are the ZMP inputs ``r_k .. r_{k+N-1}`` interleaved per
sample (x, y, x, y, ...).  The DCM states are eliminated with the exact
discretization ``xi_{j+1} = F xi_j + G r_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..qp import QpProblem, QpSettings, QpSolution, QpStatus, solve
from .polygon import Polygon


class MpcInfeasible(RuntimeError):
    def __init__(self, status: QpStatus, message: str = ""):
        self.status = status
        super().__init__(message or f"MPC QP not solved: {status.value}")


@dataclass(frozen=True)
class MpcSettings:
    horizon: int = 200
    period: float = 0.01
    Q: np.ndarray = field(default_factory=lambda: np.diag([5.0, 5.0]))
    Q_N: np.ndarray = field(default_factory=lambda: np.diag([50.0, 50.0]))
    R: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0]))
    polygon_margin: float = 0.0
    qp: QpSettings = field(default_factory=QpSettings)

    def __post_init__(self):
        for k in ("Q", "Q_N", "R"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float).reshape(2, 2))
        if self.horizon < 1 or not self.period > 0:
            raise ValueError("MPC needs horizon >= 1 and period > 0")
        for k in ("Q", "Q_N"):
            if np.linalg.eigvalsh(getattr(self, k))[0] < 0:
                raise ValueError(f"{k} must be positive semidefinite")
        if np.linalg.eigvalsh(self.R)[0] <= 0:
            raise ValueError("R must be positive definite")


@dataclass
class MpcResult:
    r_zmp: np.ndarray
    inputs: np.ndarray      # (N, 2)
    predicted: np.ndarray   # (N+1, 2), starting at the current DCM
    status: QpStatus
    iterations: int
    solution: QpSolution


def prediction_matrices(N: int, F: float, G: float) -> tuple[np.ndarray, np.ndarray]:
    """Scalar ``Phi`` (N x N) and ``f`` (N) with ``xi_{1..N} = f xi_0 + Phi r_{0..N-1}``."""
    Phi = np.zeros((N, N))
    powers = F ** np.arange(N)
    for i in range(N):
        Phi[i, : i + 1] = G * powers[i::-1]
    return Phi, F ** np.arange(1, N + 1)


_PRED_CACHE: dict = {}


def _prediction_cached(N: int, F: float):
    key = (N, F)
    if key not in _PRED_CACHE:
        if len(_PRED_CACHE) > 8:
            _PRED_CACHE.clear()
        _PRED_CACHE[key] = prediction_matrices(N, F, 1.0 - F)
    return _PRED_CACHE[key]


def build_qp(xi, xi_ref, r_prev, polygons, settings: MpcSettings, b: float) -> QpProblem:
    N = settings.horizon
    xi_ref = np.asarray(xi_ref, dtype=float)
    if xi_ref.shape != (N + 1, 2):
        raise ValueError(f"reference window must have shape ({N + 1}, 2)")
    if len(polygons) != N:
        raise ValueError(f"need {N} polygons, got {len(polygons)}")
    F = np.exp(settings.period / b)
    Phi1, f1 = _prediction_cached(N, F)
    # cost blocks factor as kron(scalar N x N, 2 x 2 weight)
    P_stage = Phi1[:-1].T @ Phi1[:-1]
    P_term = np.outer(Phi1[-1], Phi1[-1])
    D1 = np.eye(N) - np.eye(N, k=-1)
    H = np.kron(P_stage, settings.Q) + np.kron(P_term, settings.Q_N) + np.kron(D1.T @ D1, settings.R)
    H = 0.5 * (H + H.T)
    err = np.outer(f1, np.asarray(xi, dtype=float)) - xi_ref[1:]  # (N, 2) free-response tracking error
    g = (Phi1[:-1].T @ (err[:-1] @ settings.Q.T)).reshape(-1) + np.kron(Phi1[-1], settings.Q_N @ err[-1])
    g[:2] -= settings.R @ np.asarray(r_prev, dtype=float)
    rows, lo, up = [], [], []
    for k, poly in enumerate(polygons):
        m = poly.A.shape[0]
        blk = np.zeros((m, 2 * N))
        blk[:, 2 * k:2 * k + 2] = poly.A
        rows.append(blk)
        up.append(poly.b)
        lo.append(np.full(m, -np.inf))
    A = np.vstack(rows) if rows else np.zeros((0, 2 * N))
    return QpProblem(H, g, A, np.concatenate(lo) if lo else np.zeros(0),
                     np.concatenate(up) if up else np.zeros(0))


def mpc_dcm(xi, xi_ref, r_prev, polygons: list[Polygon], settings: MpcSettings, b: float,
            warm_start=None) -> MpcResult:
    """Solve one receding-horizon problem and return the first ZMP input."""
    prob = build_qp(xi, xi_ref, r_prev, polygons, settings, b)
    sol = solve(prob, settings.qp, warm_start=warm_start)
    if sol.status is not QpStatus.SOLVED:
        raise MpcInfeasible(sol.status)
    inputs = sol.primal.reshape(-1, 2)
    F = np.exp(settings.period / b)
    pred = np.empty((settings.horizon + 1, 2))
    pred[0] = xi
    for j in range(settings.horizon):
        pred[j + 1] = F * pred[j] + (1 - F) * inputs[j]
    return MpcResult(inputs[0].copy(), inputs, pred, sol.status, sol.iterations, sol)


class MpcDcmController:
    """Re-solves every tick, warm-started from the previous shifted solution.

    On a failed solve the previous command is held and ``last_failed`` is set.
    """

    def __init__(self, settings: MpcSettings, b: float, r_initial=None):
        self.settings, self.b = settings, float(b)
        self.r_prev = None if r_initial is None else np.asarray(r_initial, dtype=float)
        self._prev: MpcResult | None = None
        self._prev_rows: list[int] | None = None
        self.last_failed = False
        self.last_status: QpStatus | None = None
        self.last_iterations = 0

    def _warm(self, polygons):
        if self._prev is None:
            return None
        N = self.settings.horizon
        x = np.empty(2 * N)
        x[:-2] = self._prev.solution.primal[2:]
        x[-2:] = self._prev.solution.primal[-2:]
        y_old = self._prev.solution.dual
        offs = np.concatenate([[0], np.cumsum(self._prev_rows)])
        ys = []
        for k, poly in enumerate(polygons):
            m = poly.A.shape[0]
            j = k + 1
            if j < N and self._prev_rows[j] == m:
                ys.append(y_old[offs[j]:offs[j + 1]])
            else:
                ys.append(np.zeros(m))
        return x, np.concatenate(ys)

    def step(self, xi, xi_ref_window, polygons) -> np.ndarray:
        r_prev = self.r_prev if self.r_prev is not None else np.asarray(xi_ref_window[0], dtype=float)
        try:
            res = mpc_dcm(xi, xi_ref_window, r_prev, polygons, self.settings, self.b, self._warm(polygons))
        except MpcInfeasible as e:
            self.last_failed = True
            self.last_status = e.status
            self._prev = None
            if self.r_prev is None:
                self.r_prev = polygons[0].project(r_prev)
            return self.r_prev.copy()
        self.last_failed = False
        self.last_status = res.status
        self.last_iterations = res.iterations
        self._prev = res
        self._prev_rows = [p.A.shape[0] for p in polygons]
        self.r_prev = res.r_zmp
        return res.r_zmp.copy()
