"""
Dense convex QP solver: minimize 1/2 z'Hz + g'z subject to l <= Gz <= u

Operator splitting (ADMM) on a Ruiz-equilibrated problem with adaptive step
size, followed by an active-set polish that recovers a KKT-exact solution.
A solution is only reported as solved after the KKT conditions are checked
on the original (unscaled) problem.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy import io as sio
from scipy import linalg

from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

STATUS_SOLVED = 'solved'
STATUS_MAX_ITER = 'max-iter'
STATUS_INFEASIBLE = 'infeasible'

# Bound magnitude treated as infinite
INFINITY = 1e20


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    G: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.shape[0]
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.l = np.asarray(self.l, dtype=float).reshape(-1)
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        m = self.G.shape[0]

        if self.H.shape != (n, n):
            raise ConfigurationError(f"H must be {n}x{n}, got {self.H.shape}")
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise ConfigurationError(f"l and u must have length {m}")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.G))):
            raise ConfigurationError("H, g and G must be finite")
        if np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)):
            raise ConfigurationError("bounds must not be NaN")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise ConfigurationError("H is not symmetric")
        if np.any(self.l > self.u):
            raise ConfigurationError(f"lower bound exceeds upper bound in rows {np.flatnonzero(self.l > self.u).tolist()}")
        self.l = np.where(self.l <= -INFINITY, -np.inf, self.l)
        self.u = np.where(self.u >= INFINITY, np.inf, self.u)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def dump(self, directory: Union[str, Path], prefix: str = 'qp') -> Path:
        """Write H and G as matrix-market files, vectors as JSON"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        sio.mmwrite(str(directory / f"{prefix}_H.mtx"), self.H)
        sio.mmwrite(str(directory / f"{prefix}_G.mtx"), self.G if self.m else np.zeros((0, self.n)))
        vectors = {'g': self.g.tolist(), 'l': self.l.tolist(), 'u': self.u.tolist()}
        # json writes Infinity/-Infinity for open bounds
        (directory / f"{prefix}_vectors.json").write_text(json.dumps(vectors) + '\n')
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path], prefix: str = 'qp') -> 'QpProblem':
        directory = Path(directory)
        vectors = json.loads((directory / f"{prefix}_vectors.json").read_text())
        H = np.asarray(sio.mmread(str(directory / f"{prefix}_H.mtx")), dtype=float)
        G = np.asarray(sio.mmread(str(directory / f"{prefix}_G.mtx")), dtype=float)
        return cls(H, vectors['g'], G, vectors['l'], vectors['u'])


@dataclass
class QpSettings:
    tol: float = 1e-6
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho_interval: int = 25
    scaling_iters: int = 10
    polish: bool = True
    polish_max_iter: int = 30
    infeasibility_tol: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (self.rho > 0 and self.sigma > 0):
            raise ConfigurationError("rho and sigma must be > 0")
        if not 0 < self.alpha < 2:
            raise ConfigurationError(f"alpha must lie in (0, 2), got {self.alpha}")


@dataclass
class QpSolution:
    z: np.ndarray
    y: np.ndarray
    status: str
    objective: float
    primal_residual: float
    dual_residual: float
    complementarity: float
    iterations: int
    polished: bool = False
    info: Dict[str, float] = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status == STATUS_SOLVED


def kkt_residuals(problem: QpProblem, z: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """
    Stationarity, primal feasibility and complementarity residuals (inf-norms)

    Positive multipliers belong to upper bounds, negative ones to lower bounds.
    Multipliers on an infinite side count fully against complementarity.
    """
    Gz = problem.G @ z
    stationarity = np.max(np.abs(problem.H @ z + problem.g + problem.G.T @ y), initial=0.0)
    primal = np.max(np.maximum(Gz - problem.u, 0.0) + np.maximum(problem.l - Gz, 0.0), initial=0.0)
    y_up = np.maximum(y, 0.0)
    y_low = np.minimum(y, 0.0)
    with np.errstate(invalid='ignore'):
        gap_up = np.where(np.isfinite(problem.u), np.abs(y_up * (problem.u - Gz)), np.where(y_up > 0, y_up, 0.0))
        gap_low = np.where(np.isfinite(problem.l), np.abs(y_low * (Gz - problem.l)), np.where(y_low < 0, -y_low, 0.0))
    complementarity = np.max(np.maximum(gap_up, gap_low), initial=0.0)
    return float(stationarity), float(primal), float(complementarity)


def _limit(values: np.ndarray, low: float = 1e-4, high: float = 1e4) -> np.ndarray:
    values = np.where(values < low, 1.0, values)
    return np.minimum(values, high)


class QpSolver:
    """
    ADMM QP solver with Ruiz equilibration and active-set polish

    One instance can solve many problems in sequence; it is not shareable
    while a solve is running.
    """

    def __init__(self, settings: Optional[QpSettings] = None):
        self.settings = settings or QpSettings()

    def _scale(self, problem: QpProblem):
        """Ruiz equilibration of the KKT matrix plus a cost scale"""
        n, m = problem.n, problem.m
        Hs, Gs, gs = problem.H.copy(), problem.G.copy(), problem.g.copy()
        D, E = np.ones(n), np.ones(m)
        for _ in range(self.settings.scaling_iters):
            col_h = np.max(np.abs(Hs), axis=0)
            col_g = np.max(np.abs(Gs), axis=0) if m else np.zeros(n)
            dn = 1.0 / np.sqrt(_limit(np.maximum(col_h, col_g)))
            dm = 1.0 / np.sqrt(_limit(np.max(np.abs(Gs), axis=1))) if m else np.ones(0)
            Hs = dn[:, None] * Hs * dn[None, :]
            Gs = dm[:, None] * Gs * dn[None, :]
            gs = dn * gs
            D *= dn
            E *= dm
        c = 1.0 / float(_limit(np.array([max(np.mean(np.max(np.abs(Hs), axis=0)), np.max(np.abs(gs), initial=0.0))]))[0])
        return c * Hs, Gs, c * gs, E * problem.l, E * problem.u, D, E, c

    def _rho_vector(self, rho: float, ls: np.ndarray, us: np.ndarray) -> np.ndarray:
        rho_vec = np.full(ls.shape, rho)
        rho_vec[(ls == -np.inf) & (us == np.inf)] = 1e-6
        rho_vec[ls == us] = 1e3 * rho
        return rho_vec

    def _polish(self, problem: QpProblem, Hs, Gs, gs, ls, us, x, y) -> Tuple[np.ndarray, np.ndarray, int]:
        """Primal-dual active-set refinement in scaled space starting from the ADMM iterate"""
        n, m = problem.n, problem.m
        eq = ls == us
        Gx = Gs @ x
        upper = eq | (y + (Gx - us) > 0)
        lower = ~upper & (y + (Gx - ls) < 0)
        iterations = 0
        for iterations in range(1, self.settings.polish_max_iter + 1):
            active = np.flatnonzero(upper | lower)
            target = np.where(upper, us, ls)[active]
            k = len(active)
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = Hs
            kkt[:n, n:] = Gs[active].T
            kkt[n:, :n] = Gs[active]
            rhs = np.concatenate([-gs, target])
            sol = linalg.lstsq(kkt, rhs)[0]
            x = sol[:n]
            y = np.zeros(m)
            y[active] = sol[n:]
            Gx = Gs @ x
            new_upper = eq | (y + (Gx - us) > 0)
            new_lower = ~new_upper & (y + (Gx - ls) < 0)
            if np.array_equal(new_upper, upper) and np.array_equal(new_lower, lower):
                break
            upper, lower = new_upper, new_lower
        return x, y, iterations

    def _finish(self, problem, x, y, D, E, c, iterations, polished, status_if_ok=STATUS_SOLVED) -> QpSolution:
        z = D * x
        y_orig = E * y / c
        stationarity, primal, complementarity = kkt_residuals(problem, z, y_orig)
        return QpSolution(
            z=z, y=y_orig, status=status_if_ok, objective=problem.objective(z),
            primal_residual=primal, dual_residual=stationarity, complementarity=complementarity,
            iterations=iterations, polished=polished
        )

    def _acceptable(self, solution: QpSolution) -> bool:
        """Absolute KKT check on the original problem"""
        tol = self.settings.tol
        return (solution.dual_residual <= tol
                and solution.primal_residual <= tol
                and solution.complementarity <= tol)

    def _infeasibility_certificate(self, problem: QpProblem, delta_y: np.ndarray) -> bool:
        norm = np.max(np.abs(delta_y), initial=0.0)
        if norm <= 0:
            return False
        eps = self.settings.infeasibility_tol
        if np.max(np.abs(problem.G.T @ delta_y), initial=0.0) > eps * norm:
            return False
        up, low = np.maximum(delta_y, 0.0), np.minimum(delta_y, 0.0)
        if np.any((up > eps * norm) & ~np.isfinite(problem.u)) or np.any((low < -eps * norm) & ~np.isfinite(problem.l)):
            return False
        support = np.sum(np.where(np.isfinite(problem.u), problem.u, 0.0) * up) + \
            np.sum(np.where(np.isfinite(problem.l), problem.l, 0.0) * low)
        return support < -eps * norm

    def solve(self, problem: QpProblem, warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> QpSolution:
        """
        Solve a QP

        Args:
            problem: Problem data
            warm_start: Optional (z, y) from a previous, similar problem

        Returns:
            QpSolution; status is 'solved' only if the KKT check passes,
            otherwise the best iterate with 'max-iter' or 'infeasible'
        """
        settings = self.settings
        Hs, Gs, gs, ls, us, D, E, c = self._scale(problem)
        n, m = problem.n, problem.m

        if warm_start is not None and len(warm_start[0]) == n and len(warm_start[1]) == m:
            x = np.asarray(warm_start[0], dtype=float) / D
            y = np.asarray(warm_start[1], dtype=float) * c / E
        else:
            x, y = np.zeros(n), np.zeros(m)
        zv = np.clip(Gs @ x, ls, us)

        rho = settings.rho
        rho_vec = self._rho_vector(rho, ls, us)
        factor = linalg.cho_factor(Hs + settings.sigma * np.eye(n) + Gs.T @ (rho_vec[:, None] * Gs))

        best: Optional[QpSolution] = None
        iteration = 0
        for iteration in range(1, settings.max_iter + 1):
            y_prev = y
            rhs = settings.sigma * x - gs + Gs.T @ (rho_vec * zv - y)
            x_tilde = linalg.cho_solve(factor, rhs)
            z_tilde = Gs @ x_tilde
            x = settings.alpha * x_tilde + (1 - settings.alpha) * x
            z_relaxed = settings.alpha * z_tilde + (1 - settings.alpha) * zv
            zv = np.clip(z_relaxed + y / rho_vec, ls, us)
            y = y + rho_vec * (z_relaxed - zv)

            if iteration % settings.adaptive_rho_interval and iteration != settings.max_iter:
                continue

            candidate = self._finish(problem, x, y, D, E, c, iteration, polished=False)
            if settings.polish:
                xp, yp, _ = self._polish(problem, Hs, Gs, gs, ls, us, x, y)
                polished = self._finish(problem, xp, yp, D, E, c, iteration, polished=True)
                if self._acceptable(polished):
                    best = polished
            if best is None and self._acceptable(candidate):
                best = candidate
            if best is not None:
                break

            if m and self._infeasibility_certificate(problem, E * (y - y_prev)):
                logger.error("QP primal infeasibility detected after %d iterations", iteration)
                return self._finish(problem, x, y, D, E, c, iteration, polished=False, status_if_ok=STATUS_INFEASIBLE)

            # Adaptive step size from the scaled residual balance
            prim = np.max(np.abs(Gs @ x - zv), initial=0.0) / max(np.max(np.abs(Gs @ x), initial=0.0),
                                                                     np.max(np.abs(zv), initial=0.0), 1e-12)
            dual = np.max(np.abs(Hs @ x + gs + Gs.T @ y), initial=0.0) / max(
                np.max(np.abs(Hs @ x), initial=0.0), np.max(np.abs(Gs.T @ y), initial=0.0),
                np.max(np.abs(gs), initial=0.0), 1e-12)
            ratio = np.sqrt(prim / max(dual, 1e-12)) if m else 1.0
            if ratio > 5.0 or ratio < 0.2:
                rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                rho_vec = self._rho_vector(rho, ls, us)
                factor = linalg.cho_factor(Hs + settings.sigma * np.eye(n) + Gs.T @ (rho_vec[:, None] * Gs))

        if best is not None:
            return best

        final = self._finish(problem, x, y, D, E, c, iteration, polished=False, status_if_ok=STATUS_MAX_ITER)
        logger.warning("QP not solved within %d iterations (primal %.2e, dual %.2e)",
                       settings.max_iter, final.primal_residual, final.dual_residual)
        return final


def solve(problem: QpProblem, tol: float = 1e-6, max_iter: int = 4000,
          warm_start: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> QpSolution:
    """Solve with a fresh solver instance"""
    return QpSolver(QpSettings(tol=tol, max_iter=max_iter)).solve(problem, warm_start)
