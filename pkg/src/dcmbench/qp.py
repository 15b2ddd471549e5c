"""Dense convex quadratic programming.

Solves

    minimize    1/2 x' H x + g' x
    subject to  l <= A x <= u

with an operator-splitting (ADMM) iteration on a Ruiz-equilibrated copy of
the problem, followed by an active-set refinement ("polishing") step that
solves the KKT system of the identified active set directly.  The polished
point is accepted only when it satisfies the KKT conditions of the original,
unscaled problem, which is what gives the tight residuals the controllers
rely on.

Sign convention for the multipliers: ``H x + g + A' y = 0`` with ``y_i >= 0``
when the upper bound of row ``i`` is active and ``y_i <= 0`` when the lower
bound is.

Semidefinite Hessians are accepted.  A ``1e-10`` diagonal term is added before
any factorization; the polishing step then runs iterative refinement against
the unregularized KKT matrix so the reported residuals refer to the problem as
given.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

__all__ = [
    "InvalidProblem",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpStatus",
    "solve",
    "dump_problem",
    "load_problem",
]

HESSIAN_REGULARIZATION = 1e-10


class InvalidProblem(ValueError):
    """Raised when a QP violates its structural invariants."""


class QpStatus(enum.Enum):
    SOLVED = "Solved"
    MAX_ITERATIONS = "MaxIterations"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"


@dataclass
class QpProblem:
    hessian: np.ndarray
    gradient: np.ndarray
    constraint_matrix: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray

    def __post_init__(self):
        self.hessian = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        self.gradient = np.asarray(self.gradient, dtype=float).reshape(-1)
        n = self.gradient.size
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        self.constraint_matrix = np.atleast_2d(A) if A.ndim < 2 else A
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).reshape(-1)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float).reshape(-1)

    @property
    def n(self) -> int:
        return self.gradient.size

    @property
    def m(self) -> int:
        return self.lower_bounds.size

    @classmethod
    def unconstrained(cls, hessian, gradient) -> "QpProblem":
        g = np.asarray(gradient, dtype=float).reshape(-1)
        return cls(hessian, g, np.zeros((0, g.size)), np.zeros(0), np.zeros(0))

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ self.hessian @ x) + float(self.gradient @ x)

    def validate(self) -> None:
        H, A = self.hessian, self.constraint_matrix
        n, m = self.n, self.m
        if n < 1:
            raise InvalidProblem("QP needs at least one variable")
        if H.shape != (n, n):
            raise InvalidProblem(f"hessian shape {H.shape} does not match n={n}")
        if A.shape != (m, n):
            raise InvalidProblem(f"constraint matrix shape {A.shape}, expected ({m}, {n})")
        if self.upper_bounds.size != m:
            raise InvalidProblem("lower/upper bound sizes differ")
        for name, arr in (("hessian", H), ("gradient", self.gradient), ("constraint_matrix", A)):
            if not np.all(np.isfinite(arr)):
                raise InvalidProblem(f"{name} contains non-finite entries")
        if np.any(np.isnan(self.lower_bounds)) or np.any(np.isnan(self.upper_bounds)):
            raise InvalidProblem("bounds contain NaN")
        scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * scale:
            raise InvalidProblem("hessian is not symmetric")
        if np.any(self.lower_bounds > self.upper_bounds):
            bad = np.flatnonzero(self.lower_bounds > self.upper_bounds)
            raise InvalidProblem(f"lower bound exceeds upper bound on rows {bad.tolist()}")
        # PSD within tolerance iff H + tol*I admits a Cholesky factor; eigenvalues only for the message
        tol = 1e-9 * max(1.0, float(np.linalg.norm(H)))
        try:
            np.linalg.cholesky(0.5 * (H + H.T) + tol * np.eye(n))
        except np.linalg.LinAlgError:
            eig_min = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
            raise InvalidProblem(f"hessian is not positive semidefinite (min eigenvalue {eig_min:.3e})") from None


@dataclass
class QpSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_infeasible: float = 1e-6
    scaling_iters: int = 10
    adaptive_rho: bool = True
    check_interval: int = 10
    polish: bool = True
    polish_max_iter: int = 30
    refine_iters: int = 8


@dataclass
class QpSolution:
    primal: np.ndarray
    dual: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool = False
    # For PrimalInfeasible: a dual ray y with A'y ~ 0 and support(y) < 0.
    # For DualInfeasible: a primal direction of unbounded descent.
    certificate: Optional[np.ndarray] = None
    active_upper: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    active_lower: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def solved(self) -> bool:
        return self.status is QpStatus.SOLVED

    def infeasible_rows(self, rel_tol: float = 1e-6) -> np.ndarray:
        """Rows carrying weight in the infeasibility certificate."""
        if self.status is not QpStatus.PRIMAL_INFEASIBLE or self.certificate is None:
            return np.zeros(0, dtype=int)
        c = np.abs(self.certificate)
        return np.flatnonzero(c > rel_tol * c.max())


# ---------------------------------------------------------------------------
# residuals / KKT helpers


def _project(v, l, u):
    return np.minimum(np.maximum(v, l), u)


def _residuals(H, g, A, l, u, x, y):
    Ax = A @ x
    rp = float(np.max(np.abs(Ax - _project(Ax, l, u)), initial=0.0))
    Hx = H @ x
    Aty = A.T @ y
    rd = float(np.max(np.abs(Hx + g + Aty)))
    return rp, rd, Ax, Hx, Aty


def _tolerances(settings, Ax, Hx, Aty, g, l, u):
    z = _project(Ax, l, u)
    sp = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0))
    sd = max(np.max(np.abs(Hx)), np.max(np.abs(Aty), initial=0.0), np.max(np.abs(g)))
    return settings.eps_abs + settings.eps_rel * sp, settings.eps_abs + settings.eps_rel * sd


def _kkt_solve(H, g, A_w, b_w, refine_iters):
    """Solve the equality-constrained QP on a working set, with refinement."""
    n = H.shape[0]
    k = A_w.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = A_w.T
    K[n:, :n] = A_w
    delta = HESSIAN_REGULARIZATION * max(1.0, float(np.max(np.abs(H), initial=0.0)))
    K_reg = K.copy()
    K_reg[:n, :n] += delta * np.eye(n)
    K_reg[n:, n:] -= delta * np.eye(k)
    rhs = np.concatenate([-g, b_w])
    try:
        lu = sla.lu_factor(K_reg, check_finite=False)
    except (sla.LinAlgError, ValueError):
        return None
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    best, best_res = sol, np.max(np.abs(rhs - K @ sol))
    for _ in range(refine_iters):
        sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
        res = np.max(np.abs(rhs - K @ sol))
        if not np.isfinite(res):
            break
        if res < best_res:
            best, best_res = sol, res
        else:
            break
    if not np.all(np.isfinite(best)):
        return None
    return best[:n], best[n:]


def _polish(H, g, A, l, u, is_eq, lower, upper, settings):
    """Active-set refinement starting from a guessed active set.

    Returns ``(x, y, lower, upper, iterations)`` on success, ``None`` otherwise.
    """
    m = A.shape[0]
    lower = lower.copy() & ~is_eq
    upper = upper.copy() & ~is_eq
    seen = set()
    for it in range(1, settings.polish_max_iter + 1):
        key = (lower.tobytes(), upper.tobytes())
        if key in seen:
            return None
        seen.add(key)
        work = is_eq | lower | upper
        idx = np.flatnonzero(work)
        b_w = np.where(upper[idx], u[idx], l[idx])
        out = _kkt_solve(H, g, A[idx], b_w, settings.refine_iters)
        if out is None:
            return None
        x, y_w = out
        y = np.zeros(m)
        y[idx] = y_w
        Ax = A @ x
        scale_p = max(1.0, float(np.max(np.abs(Ax), initial=0.0)))
        tol_p = settings.eps_abs + settings.eps_rel * scale_p
        scale_d = max(1.0, float(np.max(np.abs(y), initial=0.0)))
        tol_d = 1e-12 * scale_d
        free = ~work
        viol_up = free & (Ax - u > tol_p)
        viol_lo = free & (l - Ax > tol_p)
        wrong_up = upper & (y < -tol_d)
        wrong_lo = lower & (y > tol_d)
        if not (viol_up.any() or viol_lo.any() or wrong_up.any() or wrong_lo.any()):
            y[upper] = np.maximum(y[upper], 0.0)
            y[lower] = np.minimum(y[lower], 0.0)
            return x, y, lower, upper, it
        upper = (upper & ~wrong_up) | viol_up
        lower = (lower & ~wrong_lo) | viol_lo
    return None


# ---------------------------------------------------------------------------
# scaling


def _ruiz(H, g, A, iters):
    n, m = H.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    c = 1.0
    Hs, gs, As = H.copy(), g.copy(), A.copy()
    for _ in range(iters):
        col = np.max(np.abs(Hs), axis=0)
        if m:
            col = np.maximum(col, np.max(np.abs(As), axis=0))
            row = np.max(np.abs(As), axis=1)
        else:
            row = np.zeros(0)
        col = np.where(col < 1e-4, 1.0, col)
        row = np.where(row < 1e-4, 1.0, row)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Hs = d[:, None] * Hs * d[None, :]
        gs = d * gs
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
        mean_col = float(np.mean(np.max(np.abs(Hs), axis=0)))
        gamma = 1.0 / np.clip(max(mean_col, float(np.max(np.abs(gs)))), 1e-4, 1e4)
        Hs *= gamma
        gs *= gamma
        c *= gamma
    return Hs, gs, As, D, E, c


# ---------------------------------------------------------------------------
# public entry point


def solve(problem: QpProblem, settings: QpSettings | None = None,
          warm_start: tuple[np.ndarray, np.ndarray] | None = None) -> QpSolution:
    """Solve a convex QP.

    ``warm_start`` is an optional ``(x, y)`` pair.  When given, the active set
    implied by the nonzero entries of ``y`` is tried first; ADMM only runs if
    that guess fails to polish into a KKT point.
    """
    settings = settings or QpSettings()
    problem.validate()
    H = 0.5 * (problem.hessian + problem.hessian.T)
    g = problem.gradient
    A = problem.constraint_matrix
    l = problem.lower_bounds
    u = problem.upper_bounds
    n, m = problem.n, problem.m
    is_eq = (u - l) <= 1e-12 * np.maximum(1.0, np.abs(l))
    is_eq &= np.isfinite(l)

    def finish(x, y, status, iters, polished=False, cert=None, lo=None, up=None):
        rp, rd, *_ = _residuals(H, g, A, l, u, x, y)
        return QpSolution(
            primal=x, dual=y, status=status, iterations=iters,
            primal_residual=rp, dual_residual=rd, polished=polished, certificate=cert,
            active_upper=np.zeros(m, dtype=bool) if up is None else up,
            active_lower=np.zeros(m, dtype=bool) if lo is None else lo,
        )

    def accept(x, y):
        rp, rd, Ax, Hx, Aty = _residuals(H, g, A, l, u, x, y)
        tp, td = _tolerances(settings, Ax, Hx, Aty, g, l, u)
        return rp <= tp and rd <= td

    # no inequality rows: a single KKT solve is exact
    if not np.any(~is_eq & (np.isfinite(l) | np.isfinite(u))):
        idx = np.flatnonzero(is_eq)
        out = _kkt_solve(H, g, A[idx], l[idx], settings.refine_iters)
        if out is not None:
            x = out[0]
            y = np.zeros(m)
            y[idx] = out[1]
            if accept(x, y):
                return finish(x, y, QpStatus.SOLVED, 1, polished=True)

    iters_total = 0
    if warm_start is not None and settings.polish:
        x0, y0 = (np.asarray(v, dtype=float) for v in warm_start)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(y0), initial=0.0)))
        res = _polish(H, g, A, l, u, is_eq, y0 < -tol, y0 > tol, settings)
        if res is not None:
            x, y, lo, up, it = res
            iters_total += it
            if accept(x, y):
                return finish(x, y, QpStatus.SOLVED, iters_total, True, lo=lo, up=up)

    # --- ADMM on the scaled problem -------------------------------------
    Hs, gs, As, D, E, c = _ruiz(H + HESSIAN_REGULARIZATION * np.eye(n), g, A,
                                settings.scaling_iters)
    ls = np.where(np.isfinite(l), E * l, -np.inf)
    us = np.where(np.isfinite(u), E * u, np.inf)
    rho_vec = np.full(m, settings.rho)
    rho_vec[is_eq] *= 1e3
    both_inf = ~np.isfinite(l) & ~np.isfinite(u)
    rho_vec[both_inf] = 1e-6
    sigma = settings.sigma

    def factor(rv):
        K = Hs + sigma * np.eye(n) + As.T @ (rv[:, None] * As)
        return sla.cho_factor(K, check_finite=False)

    fac = factor(rho_vec)
    if warm_start is not None:
        xs = warm_start[0] / D
        ys = warm_start[1] * c / E
        zs = _project(As @ xs, ls, us)
    else:
        xs = np.zeros(n)
        ys = np.zeros(m)
        zs = np.zeros(m)
    alpha = settings.alpha
    last_guess = None
    best = None
    for k in range(1, settings.max_iter + 1):
        x_prev, y_prev = xs, ys
        rhs = sigma * xs - gs + As.T @ (rho_vec * zs - ys)
        xt = sla.cho_solve(fac, rhs, check_finite=False)
        zt = As @ xt
        xs = alpha * xt + (1 - alpha) * xs
        zr = alpha * zt + (1 - alpha) * zs
        z_new = _project(zr + ys / rho_vec, ls, us)
        ys = ys + rho_vec * (zr - z_new)
        zs = z_new
        if k % settings.check_interval and k != settings.max_iter:
            continue

        x = D * xs
        y = E * ys / c
        z = zs / E
        Ax = A @ x
        rp = float(np.max(np.abs(Ax - _project(Ax, l, u)), initial=0.0))
        rp_admm = float(np.max(np.abs(Ax - z), initial=0.0)) if m else 0.0
        Hx = H @ x
        Aty = A.T @ y
        rd = float(np.max(np.abs(Hx + g + Aty)))
        tp, td = _tolerances(settings, Ax, Hx, Aty, g, l, u)
        best = (x, y)

        if settings.polish:
            lo_guess = (z - l < -y) & np.isfinite(l)
            up_guess = (u - z < y) & np.isfinite(u)
            guess = (lo_guess.tobytes(), up_guess.tobytes())
            if guess != last_guess:
                last_guess = guess
                res = _polish(H, g, A, l, u, is_eq, lo_guess, up_guess, settings)
                if res is not None:
                    xp, yp, lo, up, it = res
                    iters_total += it
                    if accept(xp, yp):
                        return finish(xp, yp, QpStatus.SOLVED, k + iters_total, True, lo=lo, up=up)
        if max(rp, rp_admm) <= tp and rd <= td:
            return finish(x, y, QpStatus.SOLVED, k + iters_total)

        # infeasibility certificates (unscaled directions)
        dy = E * (ys - y_prev)
        ndy = float(np.max(np.abs(dy), initial=0.0))
        if ndy > 1e-12:
            eps = settings.eps_infeasible
            ub = np.where(dy > 0, u, l)
            finite = np.isfinite(ub) | (np.abs(dy) <= eps * ndy)
            if np.all(finite):
                sig = np.abs(dy) > eps * ndy
                support = float(np.sum(ub[sig] * dy[sig]))
                if np.max(np.abs(A.T @ dy)) <= eps * ndy and support < -eps * ndy:
                    return finish(x, y, QpStatus.PRIMAL_INFEASIBLE, k + iters_total, cert=dy / ndy)
        dx = D * (xs - x_prev)
        ndx = float(np.max(np.abs(dx)))
        if ndx > 1e-12:
            eps = settings.eps_infeasible
            Adx = A @ dx
            ok_rows = np.all(np.where(np.isfinite(u), Adx <= eps * ndx, True)) and \
                np.all(np.where(np.isfinite(l), Adx >= -eps * ndx, True))
            if ok_rows and np.max(np.abs(H @ dx)) <= eps * ndx and g @ dx < -eps * ndx:
                return finish(x, y, QpStatus.DUAL_INFEASIBLE, k + iters_total, cert=dx / ndx)

        if settings.adaptive_rho and m and k % (5 * settings.check_interval) == 0:
            zs_ = zs
            num = np.max(np.abs(As @ xs - zs_)) / max(np.max(np.abs(As @ xs)), np.max(np.abs(zs_)), 1e-12)
            den = np.max(np.abs(Hs @ xs + gs + As.T @ ys)) / max(
                np.max(np.abs(Hs @ xs)), np.max(np.abs(As.T @ ys)), np.max(np.abs(gs)), 1e-12)
            ratio = np.sqrt(num / max(den, 1e-30))
            if ratio > 5.0 or ratio < 0.2:
                rho_vec = np.clip(rho_vec * ratio, 1e-6, 1e6)
                fac = factor(rho_vec)

    x, y = best if best is not None else (D * xs, E * ys / c)
    return finish(x, y, QpStatus.MAX_ITERATIONS, settings.max_iter + iters_total)


# ---------------------------------------------------------------------------
# debug dump


def dump_problem(problem: QpProblem, path: str | Path) -> None:
    """Write a QP as plain text: header ``n m`` then H, g, A, l, u row-major."""
    fmt = lambda v: repr(float(v))  # noqa: E731
    lines = [f"{problem.n} {problem.m}"]
    lines += [" ".join(fmt(v) for v in row) for row in problem.hessian]
    lines.append(" ".join(fmt(v) for v in problem.gradient))
    lines += [" ".join(fmt(v) for v in row) for row in problem.constraint_matrix]
    lines.append(" ".join(fmt(v) for v in problem.lower_bounds))
    lines.append(" ".join(fmt(v) for v in problem.upper_bounds))
    Path(path).write_text("\n".join(lines) + "\n")


def load_problem(path: str | Path) -> QpProblem:
    rows = Path(path).read_text().splitlines()
    n, m = (int(t) for t in rows[0].split())
    vals = lambda s: np.array([float(t) for t in s.split()])  # noqa: E731
    H = np.array([vals(r) for r in rows[1:1 + n]]).reshape(n, n)
    g = vals(rows[1 + n])
    A = np.array([vals(r) for r in rows[2 + n:2 + n + m]]).reshape(m, n)
    l = vals(rows[2 + n + m]) if m else np.zeros(0)
    u = vals(rows[3 + n + m]) if m else np.zeros(0)
    return QpProblem(H, g, A, l, u)
