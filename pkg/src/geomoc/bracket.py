"""Extremal flows on adjoint orbits of so(n) and the double-bracket limit.

The drift-free control system xdot = [x, u] with energy-plus-potential
objective has maximum-principle extremals

    xdot = [x, [p, x]],    pdot = [p, [p, x]] - V_x,

with optimal control u* = [p, x] and conserved Hamiltonian
H*(p, x) = 1/2 <[p, x], [p, x]> + V(x) (all gradients with respect to
the pairing <xi, eta> = -1/2 trace(xi eta), so the gradient of
<x, n_mat> is literally n_mat). The quadratic potential
V(x) = -1/2 ||[x, n]||^2 has V_x = [n, [n, x]].

``double_bracket_flow`` integrates the ascent flow xdot = [x, [n, x]],
which increases <x, n> at the rate ||[x, n]||^2 and drives [x, n] to
zero; with terminal cost phi(x) = <x, n> the costate ends at p(T) = n,
so late-time extremals follow exactly this flow. Everything is
isospectral: x moves on its adjoint orbit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .matlie import (
    SkewMatrix,
    as_matrix,
    commutator,
    coords_to_skew,
    killing_pair,
    skew_dim,
    skew_to_coords,
)
from .rb_smooth import Trajectory, rk4_integrate

__all__ = [
    "OrbitState",
    "OrbitProblem",
    "extremal_field",
    "brockett_potential_grad",
    "brockett_field",
    "hamiltonian_star",
    "double_bracket_field",
    "double_bracket_flow",
    "orbit_learning_solve",
    "spectrum_invariants",
]


@dataclass(frozen=True)
class OrbitState:
    x: SkewMatrix
    p: SkewMatrix


@dataclass(frozen=True)
class OrbitProblem:
    """Orbit problem data: fixed matrix ``n_mat``, a potential ``v`` with
    gradient ``v_grad`` (both None for the drift-only problem), horizon,
    per-sample starts, and a terminal cost phi with gradient phi_x.

    ``OrbitProblem.brockett`` wires in the quadratic potential
    V(x) = -1/2 ||[x, n]||^2.
    """

    n_mat: np.ndarray
    t_final: float
    x0s: list
    phi: callable
    phi_x: callable
    v: callable = None
    v_grad: callable = None
    h: float = 1e-3

    def __post_init__(self):
        nm = SkewMatrix(self.n_mat).array
        object.__setattr__(self, "n_mat", nm)
        object.__setattr__(self, "x0s", [SkewMatrix(x).array for x in self.x0s])
        if self.t_final <= 0.0 or self.h <= 0.0:
            raise DomainError("need positive horizon and step")

    @classmethod
    def brockett(cls, n_mat, t_final, x0s, phi, phi_x, *, h: float = 1e-3) -> "OrbitProblem":
        nm = SkewMatrix(n_mat).array

        def v(x):
            c = commutator(as_matrix(x), nm)
            return -0.5 * killing_pair(c, c)

        return cls(
            n_mat=nm,
            t_final=t_final,
            x0s=x0s,
            phi=phi,
            phi_x=phi_x,
            v=v,
            v_grad=lambda x: brockett_potential_grad(x, nm),
            h=h,
        )


def _xp(state):
    if isinstance(state, OrbitState):
        return state.x.array, state.p.array
    x, p = state
    return as_matrix(x), as_matrix(p)


def extremal_field(state, v_grad=None):
    """(xdot, pdot) = ([x,[p,x]], [p,[p,x]] - V_x) with u* = [p, x]."""
    x, p = _xp(state)
    u = commutator(p, x)
    xdot = commutator(x, u)
    pdot = commutator(p, u)
    if v_grad is not None:
        pdot = pdot - as_matrix(v_grad(x))
    return xdot, pdot


def brockett_potential_grad(x, n_mat):
    """Gradient of V(x) = -1/2 ||[x, n]||^2 in the so(n) pairing: [n, [n, x]]."""
    xa = as_matrix(x)
    nm = as_matrix(n_mat)
    return commutator(nm, commutator(nm, xa))


def brockett_field(state, n_mat):
    """Extremal field specialized to the quadratic potential."""
    nm = as_matrix(n_mat)
    return extremal_field(state, v_grad=lambda x: brockett_potential_grad(x, nm))


def hamiltonian_star(state, v=None) -> float:
    """H* = 1/2 ||[p, x]||^2 + V(x); constant along the extremal flow."""
    x, p = _xp(state)
    u = commutator(p, x)
    val = 0.5 * killing_pair(u, u)
    if v is not None:
        val += float(v(x))
    return val


def double_bracket_field(x, n_mat):
    """Ascent double bracket xdot = [x, [n, x]]; d/dt <x, n> = ||[x, n]||^2."""
    xa = as_matrix(x)
    nm = as_matrix(n_mat)
    return commutator(xa, commutator(nm, xa))


def double_bracket_flow(x0, n_mat, t_final: float, h: float, *, record_every: int = 1) -> Trajectory:
    """RK4 trajectory of the ascent double-bracket flow."""
    xa = SkewMatrix(x0).array
    nm = SkewMatrix(n_mat).array
    field = lambda y: (double_bracket_field(y[0], nm),)
    return rk4_integrate(field, (xa,), h, t_final, record_every=record_every)


def spectrum_invariants(x) -> np.ndarray:
    """Characteristic-polynomial coefficients of x, the orbit invariants."""
    return np.poly(as_matrix(x))


@dataclass
class OrbitSolution:
    """One sample's extremal: trajectory, initial costate, terminal defect."""

    trajectory: Trajectory
    p0: np.ndarray
    terminal_residual: float
    iterations: int


def orbit_learning_solve(prob: OrbitProblem, *, p0_guesses=None, tol: float = 1e-8, max_iter: int = 40) -> list[OrbitSolution]:
    """Per-sample shooting on p(0) against the terminal condition
    p(T) = phi_x(x(T)).

    Samples decouple (each has its own extremal pair), so they are
    solved independently: damped Newton over so(n) coordinates of p(0)
    with a finite-difference Jacobian.
    """
    nm = prob.n_mat
    n = nm.shape[0]
    d = skew_dim(n)
    field = lambda y: extremal_field(y, v_grad=prob.v_grad)

    def integrate(x0, p0):
        return rk4_integrate(field, (x0, p0), prob.h, prob.t_final, record_every=max(1, int(round(prob.t_final / prob.h)) // 64))

    def residual(x0, p0_coords):
        traj = integrate(x0, coords_to_skew(n, p0_coords))
        x_t, p_t = traj.final
        return skew_to_coords(p_t - prob.phi_x(x_t)), traj

    out = []
    for idx, x0 in enumerate(prob.x0s):
        if p0_guesses is not None:
            p0 = skew_to_coords(as_matrix(p0_guesses[idx]))
        else:
            p0 = skew_to_coords(prob.phi_x(x0))  # terminal condition as initial guess
        r, traj = residual(x0, p0)
        err = float(np.linalg.norm(r))
        it = 0
        while err > tol:
            if it >= max_iter:
                raise ConvergenceError(f"orbit shooting failed on sample {idx}", residual=err)
            jac = np.empty((d, d))
            for col in range(d):
                h_fd = 1e-6 * max(1.0, abs(p0[col]))
                pp = p0.copy()
                pp[col] += h_fd
                r_c, _ = residual(x0, pp)
                jac[:, col] = (r_c - r) / h_fd
            delta, *_ = np.linalg.lstsq(jac, r, rcond=None)
            alpha = 1.0
            for _ in range(12):
                p_try = p0 - alpha * delta
                r_t, traj_t = residual(x0, p_try)
                err_t = float(np.linalg.norm(r_t))
                if err_t < err:
                    break
                alpha *= 0.5
            else:
                raise ConvergenceError(f"orbit shooting line search failed on sample {idx}", residual=err)
            p0, r, traj, err = p_try, r_t, traj_t, err_t
            it += 1
        out.append(
            OrbitSolution(
                trajectory=traj,
                p0=coords_to_skew(n, p0),
                terminal_residual=err,
                iterations=it,
            )
        )
    return out
