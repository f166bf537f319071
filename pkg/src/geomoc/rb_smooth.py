"""Smooth n-dimensional rigid body and its symmetric representation.

The classical left-invariant equations evolve (Q, M) on SO(n) x so(n):

    Qdot = Q Omega,   Mdot = [M, Omega],   M = J(Omega) = Lam Omega + Omega Lam.

The symmetric representation evolves a pair (Q, P) on SO(n) x SO(n):

    Qdot = Q U,   Pdot = P U,   U = J^-1(Q^T P - P^T Q),

and the two are exchanged by M = Q^T P - P^T Q one way and by
P = Q exp(asinh(M/2)) the other (valid while the operator norm of M
stays below 2). Conserved diagnostics: the Lax-pencil trace
coefficients of (M + lambda Lam^2)^k, the operator-norm Casimir, and
the kinetic energy 1/4 <J^-1 M, M>.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DomainError, NonFiniteError
from .matlie import (
    Rotation,
    SkewMatrix,
    as_matrix,
    commutator,
    killing_pair,
    mat_asinh,
    mat_exp,
    op_norm,
)

__all__ = [
    "InertiaSpec",
    "RBState",
    "SRBState",
    "inertia_apply",
    "inertia_solve",
    "rb_field",
    "srb_field",
    "srb_learning_field",
    "mcls_field",
    "srb_to_rb",
    "rb_to_srb",
    "momentum_from_pair",
    "manakov_integrals",
    "manakov_labels",
    "casimir_opnorm",
    "kinetic_energy",
    "gln_hamiltonian",
    "Trajectory",
    "rk4_integrate",
]


@dataclass(frozen=True)
class InertiaSpec:
    """Diagonal Lam defining J(Omega) = Lam Omega + Omega Lam.

    Entries may be individually nonpositive; what positivity of J needs
    is lam_i + lam_j > 0 for every i != j.
    """

    lam: np.ndarray

    def __init__(self, lam):
        arr = np.atleast_1d(np.asarray(lam, dtype=float))
        if arr.ndim != 1 or arr.size < 2:
            raise DomainError("InertiaSpec expects a vector of at least 2 diagonal entries")
        pair = arr[:, None] + arr[None, :]
        off = pair[~np.eye(arr.size, dtype=bool)]
        if np.any(off <= 0.0):
            raise DomainError("inertia entries must satisfy lam_i + lam_j > 0 for i != j")
        arr.setflags(write=False)
        object.__setattr__(self, "lam", arr)

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.lam)

    def pair_sums(self) -> np.ndarray:
        return self.lam[:, None] + self.lam[None, :]


@dataclass(frozen=True)
class RBState:
    """Classical state: attitude Q and body momentum M."""

    Q: Rotation
    M: SkewMatrix


@dataclass(frozen=True)
class SRBState:
    """Symmetric-representation state: the pair (Q, P) on SO(n) x SO(n)."""

    Q: Rotation
    P: Rotation


def _lam_of(lam) -> InertiaSpec:
    return lam if isinstance(lam, InertiaSpec) else InertiaSpec(lam)


def inertia_apply(lam, omega):
    """J(Omega) = Lam Omega + Omega Lam; entrywise (lam_i + lam_j) Omega_ij."""
    spec = _lam_of(lam)
    typed = isinstance(omega, SkewMatrix)
    w = as_matrix(omega)
    if w.shape[0] != spec.n:
        raise DomainError("inertia and matrix dimensions differ")
    m = spec.pair_sums() * w
    return SkewMatrix(m) if typed else m


def inertia_solve(lam, m):
    """Inverse of ``inertia_apply``: Omega_ij = M_ij / (lam_i + lam_j)."""
    spec = _lam_of(lam)
    typed = isinstance(m, SkewMatrix)
    arr = as_matrix(m)
    if arr.shape[0] != spec.n:
        raise DomainError("inertia and matrix dimensions differ")
    denom = spec.pair_sums().copy()
    np.fill_diagonal(denom, 1.0)  # skew input has zero diagonal
    w = arr / denom
    return SkewMatrix(w) if typed else w


def momentum_from_pair(q, p) -> np.ndarray:
    """M = Q^T P - P^T Q."""
    qa, pa = as_matrix(q), as_matrix(p)
    return qa.T @ pa - pa.T @ qa


def rb_field(state, lam):
    """Right-hand side (Q Omega, [M, Omega]) of the classical equations."""
    q, m = (state.Q, state.M) if isinstance(state, RBState) else state
    qa, ma = as_matrix(q), as_matrix(m)
    omega = inertia_solve(lam, ma)
    return qa @ omega, commutator(ma, omega)


def srb_field(state, lam):
    """Right-hand side (Q U, P U) with U = J^-1(Q^T P - P^T Q)."""
    q, p = (state.Q, state.P) if isinstance(state, SRBState) else state
    qa, pa = as_matrix(q), as_matrix(p)
    u = inertia_solve(lam, momentum_from_pair(qa, pa))
    return qa @ u, pa @ u


def srb_learning_field(pairs, lam):
    """Multi-sample pair flow with one shared control.

    Every sample moves by the same U = J^-1(sum_a Q_a^T P_a - P_a^T Q_a),
    so the aggregated momentum itself satisfies Mdot = [M, U]: the sum
    behaves like a single rigid body. Reduces to ``srb_field`` for one
    sample.
    """
    arrs = [(as_matrix(q), as_matrix(p)) for q, p in pairs]
    total = sum(momentum_from_pair(q, p) for q, p in arrs)
    u = inertia_solve(lam, total)
    return [(q @ u, p @ u) for q, p in arrs]


def mcls_field(q, b, lam, *, tol: float = 1e-8):
    """McLachlan-Scovel field (Q J^-1(Q^T B), B J^-1(Q^T B)).

    Requires Q^T B skew (the invariant submanifold the equations live on).
    """
    qa, ba = as_matrix(q), as_matrix(b)
    qtb = qa.T @ ba
    defect = np.linalg.norm(qtb + qtb.T)
    if defect > tol * max(1.0, np.linalg.norm(qtb)):
        raise DomainError(f"Q^T B is not skew (defect {defect:.3e})")
    w = inertia_solve(lam, (qtb - qtb.T) / 2.0)
    return qa @ w, ba @ w


def srb_to_rb(state) -> RBState:
    """(Q, P) -> (Q, M = Q^T P - P^T Q)."""
    q, p = (state.Q, state.P) if isinstance(state, SRBState) else state
    m = momentum_from_pair(q, p)
    return RBState(Q=Rotation(as_matrix(q)), M=SkewMatrix(m))


def rb_to_srb(state, *, margin: float = 1e-6) -> SRBState:
    """(Q, M) -> (Q, P = Q exp(asinh(M/2))); needs op_norm(M) < 2."""
    q, m = (state.Q, state.M) if isinstance(state, RBState) else state
    ma = as_matrix(m)
    if op_norm(ma) >= 2.0 * (1.0 - margin):
        raise DomainError("momentum operator norm >= 2: pair (Q, P) does not exist")
    xi = mat_asinh(ma / 2.0)
    p = as_matrix(q) @ mat_exp(xi).array
    return SRBState(Q=Rotation(as_matrix(q)), P=Rotation(p))


# ---------------------------------------------------------------------------
# conserved diagnostics


def manakov_labels(n: int) -> list[tuple[int, int]]:
    """(power k, lambda-degree j) pairs reported by ``manakov_integrals``."""
    return [(k, j) for k in range(2, n + 1) for j in range(k)]


def manakov_integrals(m, lam) -> np.ndarray:
    """Coefficients of lambda^j in trace (M + lambda Lam^2)^k, k = 2..n.

    Expanded literally as a sum over words in the two non-commuting
    factors; the pure-Lam coefficient (j = k) is dropped since it does
    not depend on M. Everything returned is constant along ``rb_field``.
    """
    spec = _lam_of(lam)
    ma = as_matrix(m)
    if ma.shape[0] != spec.n:
        raise DomainError("inertia and matrix dimensions differ")
    lam2 = np.diag(spec.lam**2)
    values = {label: 0.0 for label in manakov_labels(spec.n)}
    for k in range(2, spec.n + 1):
        for word in product((0, 1), repeat=k):
            j = sum(word)
            if j == k:
                continue
            acc = np.eye(spec.n)
            for letter in word:
                acc = acc @ (lam2 if letter else ma)
            values[(k, j)] += float(np.trace(acc))
    return np.array([values[label] for label in manakov_labels(spec.n)])


def casimir_opnorm(m) -> float:
    """Operator norm of the momentum: a Casimir of the coadjoint dynamics."""
    return op_norm(m)


def kinetic_energy(m, lam) -> float:
    """Rigid-body Hamiltonian 1/4 <J^-1 M, M> in the so(n) pairing."""
    ma = as_matrix(m)
    return 0.25 * killing_pair(inertia_solve(lam, ma), ma)


def gln_hamiltonian(xi, eta, lam) -> float:
    """H(xi, eta) = -1/8 trace[(J^-1(xi^T eta - eta^T xi)) (xi^T eta - eta^T xi)].

    On SO(n) x SO(n) this generates the symmetric-representation flow
    for the symplectic form (1/2) trace(eta_2^T xi_1 - eta_1^T xi_2).
    """
    a, b = as_matrix(xi), as_matrix(eta)
    m = a.T @ b - b.T @ a
    return -0.125 * float(np.tensordot(inertia_solve(lam, m), m.T, axes=2))


# ---------------------------------------------------------------------------
# reference integrator


@dataclass
class Trajectory:
    """Recorded integrator output: times and a tuple of component arrays."""

    ts: np.ndarray
    ys: list[tuple[np.ndarray, ...]]

    def component(self, idx: int) -> np.ndarray:
        return np.array([y[idx] for y in self.ys])

    @property
    def final(self) -> tuple[np.ndarray, ...]:
        return self.ys[-1]


def rk4_integrate(field, y0, h: float, t_final: float, *, project=None, record_every: int = 1) -> Trajectory:
    """Classical RK4 over a tuple-of-arrays state.

    ``field(y) -> tuple`` must return tangents matching the state
    layout. ``project``, if given, maps the state after each step
    (off by default so structural drift stays measurable). Aborts on
    non-finite states.
    """
    if h <= 0.0 or t_final < 0.0:
        raise DomainError("need h > 0 and t_final >= 0")
    y = tuple(np.array(c, dtype=float) for c in y0)
    steps = int(round(t_final / h))
    ts = [0.0]
    ys = [y]
    for k in range(steps):
        k1 = field(y)
        k2 = field(tuple(c + 0.5 * h * d for c, d in zip(y, k1)))
        k3 = field(tuple(c + 0.5 * h * d for c, d in zip(y, k2)))
        k4 = field(tuple(c + h * d for c, d in zip(y, k3)))
        y = tuple(
            c + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
            for c, d1, d2, d3, d4 in zip(y, k1, k2, k3, k4)
        )
        if project is not None:
            y = project(y)
        if not all(np.all(np.isfinite(c)) for c in y):
            raise NonFiniteError(f"state became non-finite at step {k + 1}")
        if (k + 1) % record_every == 0 or k + 1 == steps:
            ts.append((k + 1) * h)
            ys.append(y)
    return Trajectory(ts=np.array(ts), ys=ys)
