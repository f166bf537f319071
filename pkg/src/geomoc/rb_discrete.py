"""Discrete rigid body: symmetric pair updates and the classical
velocity/momentum algorithms, tied together by one implicit solve.

The single nonlinear kernel is inverting the discrete inertia map

    J_D(U) = U Lam - Lam U^T,   U in SO(n),

for U given a skew right-hand side. It is solved by Newton over the
Lie-algebra chart U = exp(Omega): the first step is preconditioned by
the classical inertia J (the derivative of J_D at the identity), later
steps use a finite-difference Jacobian in so(n) coordinates, reused
chord-style while it still contracts. The branch returned is the one
continuously connected to the identity.

The symmetric update (Q, P) -> (Q U, P U) conjugates Q^T P - P^T Q by
U, so the momentum's spectrum and operator norm are step invariants;
the velocity-form algorithms reuse the same solver through a transposed
convention (Omega^T Lam - Lam Omega = M  iff  Omega = solve(M)^T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .matlie import (
    Rotation,
    SkewMatrix,
    _exp_taylor,
    as_matrix,
    mat_exp,
    skew_dim,
)
from .rb_smooth import InertiaSpec, inertia_solve, momentum_from_pair

__all__ = [
    "DiscreteRBState",
    "MVState",
    "jd_apply",
    "jd_solve",
    "JdSolver",
    "mv2_solve",
    "sdrb_step",
    "sdrb_trajectory",
    "mv_step_alg1",
    "mv_step_alg2",
    "mv_trajectory",
    "sdrb_to_mv",
    "discrete_action",
    "mv_residuals",
]


@dataclass(frozen=True)
class DiscreteRBState:
    Q: Rotation
    P: Rotation
    k: int = 0


@dataclass(frozen=True)
class MVState:
    Q: Rotation
    M: SkewMatrix
    k: int = 0


def _lam_of(lam) -> InertiaSpec:
    return lam if isinstance(lam, InertiaSpec) else InertiaSpec(lam)


def jd_apply(u, lam):
    """Discrete inertia J_D(U) = U Lam - Lam U^T (always skew)."""
    spec = _lam_of(lam)
    typed = isinstance(u, Rotation)
    ua = as_matrix(u)
    if ua.shape[0] != spec.n:
        raise DomainError("inertia and matrix dimensions differ")
    m = ua * spec.lam[None, :] - spec.lam[:, None] * ua.T
    return SkewMatrix(m, tol=1e-6) if typed else m


class JdSolver:
    """Newton solver for J_D(U) = M with warm starts and a reusable Jacobian.

    One instance per trajectory: it caches the last two Lie-algebra
    solutions (for an extrapolated warm start) and the last
    finite-difference Jacobian. State is local to the instance, so
    independent trajectories can run in parallel with their own solvers.
    """

    def __init__(self, lam, *, tol: float = 1e-12, max_iter: int = 100, fd_step: float = 1e-7):
        self.spec = _lam_of(lam)
        self.tol = tol
        self.max_iter = max_iter
        self.fd_step = fd_step
        n = self.spec.n
        self._d = skew_dim(n)
        self._iu = np.triu_indices(n, 1)
        self._lam_row = self.spec.lam[None, :]
        self._lam_col = self.spec.lam[:, None]
        self._jac: np.ndarray | None = None
        self._jac_at: np.ndarray | None = None
        self._hist: list[np.ndarray] = []  # recent solutions, newest last

    # -- small helpers on raw arrays ------------------------------------

    def _coords(self, a: np.ndarray) -> np.ndarray:
        return a[self._iu]

    def _from_coords(self, c: np.ndarray) -> np.ndarray:
        n = self.spec.n
        a = np.zeros((n, n))
        a[self._iu] = c
        return a - a.T

    def _exp(self, omega: np.ndarray) -> np.ndarray:
        # hot path: moderate skew arguments take a plain truncated series
        nrm = np.abs(omega).sum(axis=0).max()
        if nrm <= 0.17:
            return _exp_taylor(omega, 10)
        if nrm <= 0.78:
            return _exp_taylor(omega, 16)
        return mat_exp(omega)

    def _jd(self, u: np.ndarray) -> np.ndarray:
        return u * self._lam_row - self._lam_col * u.T

    def _fd_jacobian(self, omega: np.ndarray) -> np.ndarray:
        """Forward differences of coords(J_D(exp .)) in the E_ij basis."""
        d = self._d
        jac = np.empty((d, d))
        h = self.fd_step * max(1.0, float(np.linalg.norm(omega)))
        base = self._coords(self._jd(self._exp(omega)))
        c0 = self._coords(omega)
        for col in range(d):
            c = c0.copy()
            c[col] += h
            val = self._coords(self._jd(self._exp(self._from_coords(c))))
            jac[:, col] = (val - base) / h
        return jac

    def _start(self, ma: np.ndarray) -> np.ndarray:
        # extrapolate from recent solutions; order grows with history
        h = self._hist
        if not h:
            return inertia_solve(self.spec, ma)
        if len(h) == 1:
            return h[-1].copy()
        if len(h) == 2:
            return 2.0 * h[-1] - h[-2]
        return 3.0 * h[-1] - 3.0 * h[-2] + h[-3]

    def solve_raw(self, ma: np.ndarray, omega0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Like ``solve`` but on raw arrays, skipping wrapper validation."""
        omega = omega0.copy() if omega0 is not None else self._start(ma)
        u = self._exp(omega)
        r = self._jd(u) - ma
        res = float(np.linalg.norm(r))
        prev_res = np.inf
        for it in range(self.max_iter):
            if res <= self.tol:
                self._hist.append(omega.copy())
                if len(self._hist) > 3:
                    self._hist.pop(0)
                return u, omega
            if it == 0 and self._jac is None:
                # J is the derivative of J_D at the identity: diagonal in E_ij
                delta = inertia_solve(self.spec, r)
            else:
                drift = (
                    np.inf
                    if self._jac_at is None
                    else float(np.linalg.norm(omega - self._jac_at))
                )
                if self._jac is None or drift > 0.05 or res > 0.3 * prev_res:
                    self._jac = self._fd_jacobian(omega)
                    self._jac_at = omega.copy()
                try:
                    step = np.linalg.solve(self._jac, self._coords(r))
                except np.linalg.LinAlgError as exc:
                    raise ConvergenceError("singular Jacobian in J_D solve", residual=res) from exc
                delta = self._from_coords(step)
            prev_res = res
            omega = omega - delta
            u = self._exp(omega)
            r = self._jd(u) - ma
            res = float(np.linalg.norm(r))
        raise ConvergenceError(
            "J_D solve did not converge: momentum may lie outside the invertibility neighborhood",
            residual=res,
        )

    def solve(self, m, *, omega0=None) -> tuple[Rotation, np.ndarray]:
        """Return (U, Omega) with ||J_D(U) - M||_F <= tol and U = exp(Omega)."""
        ma = as_matrix(m)
        if ma.shape[0] != self.spec.n:
            raise DomainError("inertia and matrix dimensions differ")
        start = None if omega0 is None else np.asarray(omega0, dtype=float)
        u, omega = self.solve_raw(ma, start)
        return Rotation(u, tol=1e-9), omega


def jd_solve(m, lam, *, omega0=None, tol: float = 1e-12, max_iter: int = 100) -> Rotation:
    """One-shot inverse of ``jd_apply``; see ``JdSolver`` for trajectories."""
    u, _ = JdSolver(lam, tol=tol, max_iter=max_iter).solve(m, omega0=omega0)
    return u


def mv2_solve(m, lam, *, solver: JdSolver | None = None) -> Rotation:
    """Solve Omega^T Lam - Lam Omega = M: the transposed-convention twin of ``jd_solve``."""
    if solver is None:
        u = jd_solve(m, lam)
    else:
        u, _ = solver.solve(m)
    return Rotation(u.array.T)


# ---------------------------------------------------------------------------
# symmetric discrete rigid body


def sdrb_step(state: DiscreteRBState, lam, *, solver: JdSolver | None = None) -> DiscreteRBState:
    """One update (Q, P) -> (Q U, P U) with J_D(U) = Q^T P - P^T Q.

    Both factors use the same U, so the solve happens once and the two
    products are applied in parallel.
    """
    qa, pa = state.Q.array, state.P.array
    m = momentum_from_pair(qa, pa)
    if solver is None:
        solver = JdSolver(lam)
    u, _ = solver.solve(m)
    ua = u.array
    return DiscreteRBState(Q=Rotation(qa @ ua, tol=1e-6), P=Rotation(pa @ ua, tol=1e-6), k=state.k + 1)


def sdrb_trajectory(state: DiscreteRBState, lam, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays of shape (steps+1, n, n) for Q and P along the symmetric update.

    Runs on raw arrays with one warm-started solver; wrap rows in
    ``Rotation`` on demand.
    """
    solver = JdSolver(lam)
    qa, pa = state.Q.array.copy(), state.P.array.copy()
    n = qa.shape[0]
    qs = np.empty((steps + 1, n, n))
    ps = np.empty((steps + 1, n, n))
    qs[0], ps[0] = qa, pa
    for k in range(steps):
        a = qa.T @ pa
        ua, _ = solver.solve_raw(a - a.T)
        qa = qa @ ua
        pa = pa @ ua
        qs[k + 1], ps[k + 1] = qa, pa
    return qs, ps


# ---------------------------------------------------------------------------
# classical velocity/momentum algorithms


def mv_step_alg2(state: MVState, lam, *, solver: JdSolver | None = None) -> MVState:
    """(Q_k, M_k) -> (Q_{k+1}, M_{k+1}).

    Omega_k from the transposed solve, M_{k+1} = Omega_k M_k Omega_k^T,
    Omega_{k+1} from the same solve, then Q_{k+1} = Q_k Omega_{k+1}^T.
    """
    if solver is None:
        solver = JdSolver(lam)
    ma = state.M.array
    omega_k = mv2_solve(ma, lam, solver=solver).array
    m_next = omega_k @ ma @ omega_k.T
    omega_next = mv2_solve(m_next, lam, solver=solver).array
    q_next = state.Q.array @ omega_next.T
    return MVState(Q=Rotation(q_next, tol=1e-6), M=SkewMatrix(m_next, tol=1e-6), k=state.k + 1)


def mv_trajectory(state: MVState, lam, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (steps+1, n, n) of Q and M under the momentum algorithm.

    The velocity solved at the end of step k is the one step k+1 starts
    from, so each momentum is inverted once.
    """
    solver = JdSolver(lam)
    qa, ma = state.Q.array.copy(), state.M.array.copy()
    n = qa.shape[0]
    qs = np.empty((steps + 1, n, n))
    ms = np.empty((steps + 1, n, n))
    qs[0], ms[0] = qa, ma
    omega = solver.solve_raw(ma)[0].T
    for k in range(steps):
        ma = omega @ ma @ omega.T
        omega = solver.solve_raw(ma)[0].T
        qa = qa @ omega.T
        qs[k + 1], ms[k + 1] = qa, ma
    return qs, ms


def mv_step_alg1(q_pair, lam, *, solver: JdSolver | None = None):
    """Step-ahead map (Q_k, Q_{k+1}) -> (Q_{k+1}, Q_{k+2}).

    Sequence: Omega_{k+1} = Q_{k+1}^T Q_k, then M_{k+1} from the
    velocity relation, M_{k+2} by conjugation, Omega_{k+2} from the
    implicit solve, and Q_{k+2} = Q_{k+1} Omega_{k+2}^T.
    """
    q_k, q_next = as_matrix(q_pair[0]), as_matrix(q_pair[1])
    if solver is None:
        solver = JdSolver(lam)
    spec = solver.spec
    omega_next = q_next.T @ q_k
    m_next = omega_next.T * spec.lam[None, :] - spec.lam[:, None] * omega_next
    m_after = omega_next @ m_next @ omega_next.T
    omega_after = solver.solve(m_after)[0].array.T
    q_after = q_next @ omega_after.T
    return Rotation(q_next, tol=1e-6), Rotation(q_after, tol=1e-6)


def sdrb_to_mv(state: DiscreteRBState, lam, *, solver: JdSolver | None = None) -> MVState:
    """Map a symmetric-pair state to the momentum form.

    M_{k+1} = Q_k^T P_k - P_k^T Q_k together with Q_{k+1} = Q_k U_k
    gives one step of a momentum-form solution; applied along a
    symmetric trajectory it reproduces the classical discrete equations.
    """
    m = momentum_from_pair(state.Q.array, state.P.array)
    if solver is None:
        solver = JdSolver(lam)
    u, _ = solver.solve(m)
    return MVState(Q=Rotation(state.Q.array @ u.array, tol=1e-6), M=SkewMatrix(m, tol=1e-6), k=state.k + 1)


def discrete_action(q_seq, lam) -> float:
    """Action sum_k trace(Q_k Lam Q_{k+1}^T) over a configuration sequence."""
    spec = _lam_of(lam)
    qs = [as_matrix(q) for q in q_seq]
    if len(qs) < 2:
        raise DomainError("discrete_action needs at least 2 configurations")
    lam_m = spec.matrix
    return float(sum(np.trace(qs[k] @ lam_m @ qs[k + 1].T) for k in range(len(qs) - 1)))


def mv_residuals(qs, ms, lam) -> np.ndarray:
    """Per-step defects of the momentum-form relations along (Q_k, M_k).

    With Omega_k = Q_k^T Q_{k-1} read off the configurations, row k-1
    holds the Frobenius norms of M_k - (Omega_k^T Lam - Lam Omega_k)
    and of M_{k+1} - Omega_k M_k Omega_k^T (zero in the last row).
    """
    spec = _lam_of(lam)
    steps = len(qs) - 1
    out = np.zeros((steps, 2))
    for k in range(1, steps + 1):
        omega = qs[k].T @ qs[k - 1]
        vel = omega.T * spec.lam[None, :] - spec.lam[:, None] * omega
        out[k - 1, 0] = np.linalg.norm(ms[k] - vel)
        if k < steps:
            out[k - 1, 1] = np.linalg.norm(ms[k + 1] - omega @ ms[k] @ omega.T)
    return out
