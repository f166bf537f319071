"""Generic discrete optimal control on flat vectors.

A problem is N steps of dynamics x_{k+1} = f(x_k, u_k) joining fixed
endpoints x_0 and x_N, a running cost g, and an optional control
constraint h(u) = 0 (h a submersion). Extremals satisfy

    p_k = dH/dx(p_{k+1}, x_k, u_k),      H = <p, f> - g,
    dH/du + (dh/du)^T sigma = 0,  h(u) = 0,

with the convention p_{N+1} = 0. Reading the costate equation as an
implicit update gives a map (x_k, p_k) -> (x_{k+1}, p_{k+1}) that is
symplectic; ``symplectic_check`` measures its defect through
finite-difference Jacobians, and ``shoot`` solves the two-point
boundary problem by damped Newton on the unknown initial costate.

Manifold-valued instances embed their states in flat vectors and chart
their controls; ``rigid_ocp`` does this for SO(n), where the extremals
are the symmetric discrete rigid-body equations (the covector of that
formulation is minus the one produced here, a sign the original
derivation also flips).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .matlie import coords_to_skew, mat_exp_directional, skew_dim
from .rb_smooth import InertiaSpec

__all__ = [
    "DiscreteOCP",
    "ExtremalTrajectory",
    "ResidualBundle",
    "hamiltonian",
    "hamiltonian_aug",
    "extremal_residuals",
    "step_map",
    "symplectic_check",
    "forward_extremal",
    "shoot",
    "rigid_ocp",
    "result_to_dict",
]


def _fd_jacobian(func, x, step):
    """Central-difference Jacobian of a vector function, per-coordinate scaled step."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x))
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return jac


@dataclass
class DiscreteOCP:
    """Problem data plus (optional) analytic first derivatives.

    Derivative callables default to central differences of the maps
    themselves; supply them for speed or when finite-difference noise
    matters downstream.
    """

    n: int
    m: int
    N: int
    f: callable
    g: callable
    x0: np.ndarray
    xN: np.ndarray
    l: int = 0
    h: callable = None
    f_x: callable = None
    f_u: callable = None
    g_x: callable = None
    g_u: callable = None
    h_u: callable = None
    fd_step: float = 1e-6

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.xN = np.asarray(self.xN, dtype=float)
        if self.N < 1:
            raise DomainError("horizon N must be at least 1")
        if self.x0.shape != (self.n,) or self.xN.shape != (self.n,):
            raise DomainError("endpoint states must have length n")
        if self.l > 0 and self.h is None:
            raise DomainError("constraint dimension l > 0 needs a map h")

    # -- derivatives with finite-difference fallbacks --------------------

    def jac_f_x(self, x, u):
        if self.f_x is not None:
            return np.asarray(self.f_x(x, u))
        return _fd_jacobian(lambda z: self.f(z, u), x, self.fd_step)

    def jac_f_u(self, x, u):
        if self.f_u is not None:
            return np.asarray(self.f_u(x, u))
        if self.m == 0:
            return np.zeros((self.n, 0))
        return _fd_jacobian(lambda w: self.f(x, w), u, self.fd_step)

    def grad_g_x(self, x, u):
        if self.g_x is not None:
            return np.asarray(self.g_x(x, u))
        return _fd_jacobian(lambda z: np.atleast_1d(self.g(z, u)), x, self.fd_step)[0]

    def grad_g_u(self, x, u):
        if self.g_u is not None:
            return np.asarray(self.g_u(x, u))
        if self.m == 0:
            return np.zeros(0)
        return _fd_jacobian(lambda w: np.atleast_1d(self.g(x, w)), u, self.fd_step)[0]

    def jac_h_u(self, u):
        if self.l == 0:
            return np.zeros((0, self.m))
        if self.h_u is not None:
            return np.asarray(self.h_u(u))
        return _fd_jacobian(self.h, u, self.fd_step)

    def constraint(self, u):
        return np.zeros(0) if self.h is None else np.asarray(self.h(u), dtype=float)


@dataclass
class ExtremalTrajectory:
    """States x_0..x_N, costates p_0..p_N, controls and multipliers per step.

    p_0 doubles as the shooting parameter; the recursion links p_k to
    p_{k+1} for k = 0..N-1.
    """

    xs: np.ndarray
    ps: np.ndarray
    us: np.ndarray
    sigmas: np.ndarray
    endpoint_error: float = np.nan
    iterations: int = -1

    def running_cost(self, prob: DiscreteOCP) -> float:
        return float(sum(prob.g(self.xs[k], self.us[k]) for k in range(prob.N)))


@dataclass
class ResidualBundle:
    """Defects of the extremal equations, one row per step."""

    dynamics: np.ndarray
    costate: np.ndarray
    stationarity: np.ndarray
    constraint: np.ndarray
    sigmas: np.ndarray

    def max_abs(self) -> float:
        parts = [self.dynamics, self.costate, self.stationarity, self.constraint]
        return float(max((np.abs(p).max() if p.size else 0.0) for p in parts))


def hamiltonian(p_next, x, u, prob: DiscreteOCP) -> float:
    """H(p_{k+1}, x_k, u_k) = <p_{k+1}, f(x_k, u_k)> - g(x_k, u_k)."""
    return float(np.dot(p_next, prob.f(x, u)) - prob.g(x, u))


def hamiltonian_aug(p_next, x, u, sigma, prob: DiscreteOCP) -> float:
    """Augmented H plus <sigma, h(u)> enforcing the control constraint."""
    extra = float(np.dot(sigma, prob.constraint(u))) if prob.l else 0.0
    return hamiltonian(p_next, x, u, prob) + extra


def _h_x(prob, p_next, x, u):
    return prob.jac_f_x(x, u).T @ p_next - prob.grad_g_x(x, u)


def _h_u(prob, p_next, x, u):
    return prob.jac_f_u(x, u).T @ p_next - prob.grad_g_u(x, u)


def _lsq_sigma(prob, hu, u):
    """Multiplier minimizing ||dH/du + (dh/du)^T sigma||.

    h is assumed a submersion; the Jacobian rank is verified at the
    evaluated point so a silent loss of rank cannot fake stationarity.
    """
    if prob.l == 0:
        return np.zeros(0)
    a = prob.jac_h_u(u)
    if np.linalg.matrix_rank(a) < prob.l:
        raise DomainError("constraint Jacobian loses rank at the evaluated control")
    sigma, *_ = np.linalg.lstsq(a.T, -hu, rcond=None)
    return sigma


def extremal_residuals(traj: ExtremalTrajectory, prob: DiscreteOCP) -> ResidualBundle:
    """Per-step defects of dynamics, costate recursion, stationarity, constraint.

    All zero exactly when the trajectory is an extremal; the multiplier
    is recomputed per step by least squares, which is unambiguous since
    h is a submersion.
    """
    N = prob.N
    dyn = np.zeros((N, prob.n))
    cos = np.zeros((N, prob.n))
    sta = np.zeros((N, prob.m))
    con = np.zeros((N, prob.l))
    sig = np.zeros((N, prob.l))
    for k in range(N):
        x, u, p_next = traj.xs[k], traj.us[k], traj.ps[k + 1]
        dyn[k] = traj.xs[k + 1] - prob.f(x, u)
        cos[k] = traj.ps[k] - _h_x(prob, p_next, x, u)
        hu = _h_u(prob, p_next, x, u)
        sigma = _lsq_sigma(prob, hu, u)
        sig[k] = sigma
        sta[k] = hu + prob.jac_h_u(u).T @ sigma if prob.l else hu
        con[k] = prob.constraint(u)
    return ResidualBundle(dynamics=dyn, costate=cos, stationarity=sta, constraint=con, sigmas=sig)


def step_map(x, p, prob: DiscreteOCP, k: int = 0, *, u0=None, tol: float = 1e-12, max_iter: int = 60, return_info: bool = False):
    """Advance (x_k, p_k) -> (x_{k+1}, p_{k+1}) through the implicit extremal system.

    Newton on z = (p_{k+1}, u, sigma) for

        dH/dx(p_{k+1}, x, u) = p_k,
        dH/du + (dh/du)^T sigma = 0,
        h(u) = 0,

    then x_{k+1} = f(x, u). Requires the cross second derivative
    d2H/dp dx = (df/dx)^T to be invertible near the solution; its
    condition number is reported in the info dict.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n, m, l = prob.n, prob.m, prob.l
    u_start = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float)
    if l:
        # least-squares multiplier at the start: sigma = 0 can make the
        # Newton system singular when the cost is linear in the control
        sigma_start = _lsq_sigma(prob, _h_u(prob, p, x, u_start), u_start)
    else:
        sigma_start = np.zeros(0)
    z = np.concatenate([p, u_start, sigma_start])

    def residual(zv):
        p_next, u, sigma = zv[:n], zv[n : n + m], zv[n + m :]
        r1 = _h_x(prob, p_next, x, u) - p
        if m == 0:
            return r1
        r2 = _h_u(prob, p_next, x, u)
        if l:
            r2 = r2 + prob.jac_h_u(u).T @ sigma
            return np.concatenate([r1, r2, prob.constraint(u)])
        return np.concatenate([r1, r2])

    scale = max(1.0, float(np.linalg.norm(p)))
    r = residual(z)
    res = np.linalg.norm(r)
    it = 0
    while res > tol * scale:
        if it >= max_iter:
            raise ConvergenceError("step_map Newton did not converge", residual=float(res))
        jac = _fd_jacobian(residual, z, prob.fd_step)
        try:
            delta = np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "singular Jacobian in step_map (cross-Hessian condition violated?)",
                residual=float(res),
            ) from exc
        # backtrack if the full step overshoots
        alpha = 1.0
        for _ in range(12):
            z_try = z - alpha * delta
            r_try = residual(z_try)
            if np.linalg.norm(r_try) < res:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("step_map Newton stalled", residual=float(res))
        z, r = z_try, r_try
        res = np.linalg.norm(r)
        it += 1
    p_next, u, sigma = z[:n], z[n : n + m], z[n + m :]
    x_next = np.asarray(prob.f(x, u), dtype=float)
    if not return_info:
        return x_next, p_next
    info = {
        "iterations": it,
        "residual": float(res),
        "u": u,
        "sigma": sigma,
        "cross_hessian_cond": float(np.linalg.cond(prob.jac_f_x(x, u))),
    }
    return x_next, p_next, info


_SYMPLECTIC_FD = 1e-6


def symplectic_check(prob: DiscreteOCP, x, p, k: int = 0, *, fd_step: float = _SYMPLECTIC_FD) -> float:
    """|| DPhi^T J DPhi - J ||_F for the extremal step at (x, p).

    DPhi comes from central differences with per-coordinate scaled
    steps; the inner solves run to tight tolerance so the measured
    defect reflects the map, not solver noise.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = prob.n
    _, _, info = step_map(x, p, prob, k, tol=1e-13, return_info=True)
    u_warm = info["u"]

    def phi(z):
        xn, pn = step_map(z[:n], z[n:], prob, k, u0=u_warm, tol=1e-13)
        return np.concatenate([xn, pn])

    z0 = np.concatenate([x, p])
    dphi = np.empty((2 * n, 2 * n))
    for i in range(2 * n):
        h = fd_step * max(1.0, abs(z0[i]))
        zp, zm = z0.copy(), z0.copy()
        zp[i] += h
        zm[i] -= h
        dphi[:, i] = (phi(zp) - phi(zm)) / (2.0 * h)
    jmat = np.zeros((2 * n, 2 * n))
    jmat[:n, n:] = np.eye(n)
    jmat[n:, :n] = -np.eye(n)
    return float(np.linalg.norm(dphi.T @ jmat @ dphi - jmat))


def _rollout(prob: DiscreteOCP, p0, us_warm=None, *, tol=1e-12):
    xs = np.zeros((prob.N + 1, prob.n))
    ps = np.zeros((prob.N + 1, prob.n))
    us = np.zeros((prob.N, prob.m))
    sigmas = np.zeros((prob.N, prob.l))
    xs[0], ps[0] = prob.x0, np.asarray(p0, dtype=float)
    for k in range(prob.N):
        warm = None if us_warm is None else us_warm[k]
        xs[k + 1], ps[k + 1], info = step_map(xs[k], ps[k], prob, k, u0=warm, tol=tol, return_info=True)
        us[k] = info["u"]
        sigmas[k] = info["sigma"]
    return xs, ps, us, sigmas


def forward_extremal(prob: DiscreteOCP, p0) -> ExtremalTrajectory:
    """Roll the extremal step map forward from (x0, p0); no boundary matching."""
    xs, ps, us, sigmas = _rollout(prob, p0)
    err = float(np.linalg.norm(xs[-1] - prob.xN))
    return ExtremalTrajectory(xs=xs, ps=ps, us=us, sigmas=sigmas, endpoint_error=err, iterations=0)


def shoot(prob: DiscreteOCP, p0_guess, *, tol: float = 1e-8, max_iter: int = 40) -> ExtremalTrajectory:
    """Damped Newton on p_0 -> x_N(p_0) - xN with finite-difference Jacobian.

    Backtracks by halving (12 halvings max) and stops when the endpoint
    error drops below ``tol``; raises with the best residual otherwise.
    """
    p0 = np.asarray(p0_guess, dtype=float).copy()
    xs, ps, us, sigmas = _rollout(prob, p0)
    r = xs[-1] - prob.xN
    err = float(np.linalg.norm(r))
    it = 0
    while err > tol:
        if it >= max_iter:
            raise ConvergenceError("shooting ran out of iterations", residual=err)
        jac = np.empty((prob.n, prob.n))
        for i in range(prob.n):
            h = 1e-6 * max(1.0, abs(p0[i]))
            pp = p0.copy()
            pp[i] += h
            xs_i, *_ = _rollout(prob, pp, us)
            jac[:, i] = ((xs_i[-1] - prob.xN) - r) / h
        # least squares with a noise-aware cutoff: manifold-valued
        # instances make the endpoint map rank-deficient in the flat
        # chart (gauge directions), and finite-difference noise must not
        # masquerade as signal in those directions
        delta, *_ = np.linalg.lstsq(jac, r, rcond=1e-6)
        alpha = 1.0
        for _ in range(12):
            p_try = p0 - alpha * delta
            try:
                xs_t, ps_t, us_t, sig_t = _rollout(prob, p_try, us)
            except ConvergenceError:
                alpha *= 0.5  # trial left the solvable region; shorten
                continue
            err_t = float(np.linalg.norm(xs_t[-1] - prob.xN))
            if err_t < err:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("shooting line search failed", residual=err)
        p0, xs, ps, us, sigmas, err = p_try, xs_t, ps_t, us_t, sig_t, err_t
        r = xs[-1] - prob.xN
        it += 1
    return ExtremalTrajectory(xs=xs, ps=ps, us=us, sigmas=sigmas, endpoint_error=err, iterations=it)


# ---------------------------------------------------------------------------
# rigid-body instance on SO(n)


def _vec(a):
    return np.asarray(a, dtype=float).ravel()


def _unvec(x):
    n = int(round(np.sqrt(x.size)))
    return np.asarray(x, dtype=float).reshape(n, n)


class _ChartCache:
    """Memoize exp(hat(u)) and its directional derivatives per control."""

    def __init__(self, n):
        self.n = n
        self.d = skew_dim(n)
        self._store = {}

    def get(self, u):
        key = u.tobytes()
        hit = self._store.get(key)
        if hit is not None:
            return hit
        omega = coords_to_skew(self.n, u)
        exp_u = None
        dirs = []
        basis = np.eye(self.d)
        for j in range(self.d):
            e, de = mat_exp_directional(omega, coords_to_skew(self.n, basis[j]))
            exp_u = e
            dirs.append(de)
        if self.d == 0:
            from .matlie import mat_exp

            exp_u = np.asarray(mat_exp(omega))
        val = (exp_u, dirs)
        if len(self._store) > 16:
            self._store.clear()
        self._store[key] = val
        return val


def rigid_ocp(lam, q0, qn, N: int) -> DiscreteOCP:
    """Fixed-endpoint SO(n) transfer whose extremals are the symmetric
    discrete rigid-body equations.

    States are rotations flattened row-major to length n^2; controls are
    so(n) coordinates u with U = exp(hat(u)), so the running cost is
    trace(Lam exp(hat(u))) and the discrete Hamiltonian takes the form
    trace((P_{k+1}^T Q_k - Lam) U_k).
    """
    spec = lam if isinstance(lam, InertiaSpec) else InertiaSpec(lam)
    n = spec.n
    q0a = np.asarray(q0, dtype=float)
    qna = np.asarray(qn, dtype=float)
    lam_m = spec.matrix
    cache = _ChartCache(n)
    eye = np.eye(n)

    def f(x, u):
        exp_u, _ = cache.get(np.asarray(u, float))
        return _vec(_unvec(x) @ exp_u)

    def g(x, u):
        exp_u, _ = cache.get(np.asarray(u, float))
        return float(np.trace(lam_m @ exp_u))

    def f_x(x, u):
        exp_u, _ = cache.get(np.asarray(u, float))
        return np.kron(eye, exp_u.T)

    def f_u(x, u):
        _, dirs = cache.get(np.asarray(u, float))
        q = _unvec(x)
        return np.column_stack([_vec(q @ d) for d in dirs])

    def g_x(x, u):
        return np.zeros(n * n)

    def g_u(x, u):
        _, dirs = cache.get(np.asarray(u, float))
        return np.array([float(np.trace(lam_m @ d)) for d in dirs])

    return DiscreteOCP(
        n=n * n,
        m=skew_dim(n),
        N=N,
        f=f,
        g=g,
        x0=_vec(q0a),
        xN=_vec(qna),
        f_x=f_x,
        f_u=f_u,
        g_x=g_x,
        g_u=g_u,
    )


def result_to_dict(prob: DiscreteOCP, traj: ExtremalTrajectory) -> dict:
    """JSON-ready record: problem dimensions, endpoints, trajectory, residuals."""
    bundle = extremal_residuals(traj, prob)
    return {
        "n": prob.n,
        "m": prob.m,
        "l": prob.l,
        "N": prob.N,
        "x0": prob.x0.tolist(),
        "xN": prob.xN.tolist(),
        "trajectory": {
            "x": traj.xs.tolist(),
            "p": traj.ps.tolist(),
            "u": traj.us.tolist(),
            "sigma": traj.sigmas.tolist(),
        },
        "residuals": {
            "dynamics": float(np.abs(bundle.dynamics).max() if bundle.dynamics.size else 0.0),
            "costate": float(np.abs(bundle.costate).max() if bundle.costate.size else 0.0),
            "stationarity": float(np.abs(bundle.stationarity).max() if bundle.stationarity.size else 0.0),
            "constraint": float(np.abs(bundle.constraint).max() if bundle.constraint.size else 0.0),
            "endpoint": traj.endpoint_error,
        },
    }
