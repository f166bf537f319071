"""Terminal-cost, multi-sample discrete optimal control: the learning form.

M trajectories share one control sequence u_0..u_{N-1} (the weights);
each sample a starts at its own x^a_0 (the data) and pays a terminal
cost phi at layer N. The forward sweep propagates states, the backward
sweep is back-propagation: it seeds the costate with the terminal-cost
gradient,

    p^a_N = dphi/dx(x^a_N)       (exactly, by assignment),

and recurses p^a_k = (df/dx)^T p^a_{k+1} + dg/dx, in the adjoint sign
convention that makes the aggregated control derivative literally the
descent gradient of the total objective. (The maximum-principle form of
these equations differs by the sign flip p -> -p, the same flip the
rigid-body derivation applies to its covector; fixed points are
identical.)

Controls live in a chart: flat vectors retract by addition, rotation
controls by U exp(hat(delta)) with a step clip at the injectivity
radius. The canonical trainer is gradient descent with Armijo
backtracking, whose stationary points are exactly the first-order
extremals.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LineSearchError, NonFiniteError
from .matlie import coords_to_skew, mat_exp, skew_dim, skew_to_coords
from .rb_smooth import InertiaSpec

__all__ = [
    "LearningProblem",
    "SweepBundle",
    "forward_sweep",
    "backward_sweep",
    "control_gradient",
    "TrainSchedule",
    "TrainHistory",
    "train",
    "ResnetLayer",
    "resnet_layer",
    "resnet_problem",
    "rigid_learning_problem",
    "procrustes_terminal_cost",
    "ukdef2_residual",
]


def _flat_retract(u, delta):
    return u + delta


@dataclass
class LearningProblem:
    """Shared-control, multi-sample problem with chart-valued controls.

    ``f(x, u)`` advances one sample; ``f_x_vjp(x, u, w)`` applies the
    transposed state Jacobian to w; ``f_u_grad(x, u, w)`` returns the
    gradient of <w, f(x, retract(u, d))> with respect to the chart
    coordinates d at d = 0. ``phi(x, a)``/``phi_x(x, a)`` may use the
    sample index (per-sample targets); ``g`` is a per-sample running
    cost and ``layer_cost`` a control-only one (paid once per layer,
    not per sample).
    """

    x0s: list
    N: int
    control_dim: int
    f: callable
    f_x_vjp: callable
    f_u_grad: callable
    phi: callable
    phi_x: callable
    g: callable = None
    g_x: callable = None
    g_u: callable = None
    layer_cost: callable = None
    layer_cost_grad: callable = None
    h_u: callable = None
    retract: callable = _flat_retract
    max_step: float = np.inf

    def __post_init__(self):
        self.x0s = [np.asarray(x, dtype=float) for x in self.x0s]
        if len(self.x0s) < 1:
            raise DomainError("need at least one sample")
        if self.N < 0:
            raise DomainError("layer count must be nonnegative")

    @property
    def samples(self) -> int:
        return len(self.x0s)


@dataclass
class SweepBundle:
    """States x^a_k, costates p^a_k (filled by the backward sweep),
    shared controls, and the total objective value."""

    states: list
    costates: list
    controls: list
    cost: float


def _map_samples(func, count, threads):
    if threads <= 1:
        return [func(a) for a in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(count)))


def forward_sweep(prob: LearningProblem, controls, *, threads: int = 1) -> SweepBundle:
    """Propagate every sample through the shared controls; fills cost."""
    controls = list(controls)
    if len(controls) != prob.N:
        raise DomainError(f"expected {prob.N} controls, got {len(controls)}")

    def one(a):
        xs = [prob.x0s[a]]
        for k in range(prob.N):
            x_next = np.asarray(prob.f(xs[-1], controls[k]), dtype=float)
            if not np.all(np.isfinite(x_next)):
                raise NonFiniteError(f"sample {a} left finite range at layer {k}")
            xs.append(x_next)
        return np.array(xs)

    states = _map_samples(one, prob.samples, threads)
    cost = 0.0
    for k in range(prob.N):
        if prob.layer_cost is not None:
            cost += float(prob.layer_cost(controls[k]))
        if prob.g is not None:
            cost += float(sum(prob.g(states[a][k], controls[k]) for a in range(prob.samples)))
    cost += float(sum(prob.phi(states[a][prob.N], a) for a in range(prob.samples)))
    return SweepBundle(states=states, costates=None, controls=controls, cost=cost)


def backward_sweep(prob: LearningProblem, bundle: SweepBundle, *, threads: int = 1) -> SweepBundle:
    """Fill the costates: terminal-cost gradient at layer N, then the
    transposed-Jacobian recursion (back-propagation)."""
    if bundle.states is None:
        raise DomainError("run forward_sweep first")

    def one(a):
        xs = bundle.states[a]
        ps = [None] * (prob.N + 1)
        ps[prob.N] = np.asarray(prob.phi_x(xs[prob.N], a), dtype=float)
        for k in range(prob.N - 1, -1, -1):
            p = prob.f_x_vjp(xs[k], bundle.controls[k], ps[k + 1])
            if prob.g_x is not None:
                p = p + prob.g_x(xs[k], bundle.controls[k])
            ps[k] = np.asarray(p, dtype=float)
        return np.array(ps)

    bundle.costates = _map_samples(one, prob.samples, threads)
    return bundle


def control_gradient(prob: LearningProblem, bundle: SweepBundle) -> np.ndarray:
    """Descent gradient of the total objective per layer, aggregated
    over samples in fixed order; shape (N, control_dim).

    When the problem carries a control constraint (``h_u`` given), each
    layer gradient is projected onto the tangent of {h(u) = 0}.
    """
    if bundle.costates is None:
        raise DomainError("run backward_sweep first")
    grads = np.zeros((prob.N, prob.control_dim))
    for k in range(prob.N):
        u = bundle.controls[k]
        g = np.zeros(prob.control_dim)
        if prob.layer_cost_grad is not None:
            g += np.asarray(prob.layer_cost_grad(u), dtype=float)
        for a in range(prob.samples):
            g += np.asarray(prob.f_u_grad(bundle.states[a][k], u, bundle.costates[a][k + 1]), dtype=float)
            if prob.g_u is not None:
                g += np.asarray(prob.g_u(bundle.states[a][k], u), dtype=float)
        if prob.h_u is not None:
            jac = np.atleast_2d(np.asarray(prob.h_u(u), dtype=float))
            coeff = np.linalg.lstsq(jac.T, g, rcond=None)[0]
            g = g - jac.T @ coeff
        grads[k] = g
    return grads


# ---------------------------------------------------------------------------
# trainer


@dataclass
class TrainSchedule:
    step: float = 0.25
    tol: float = 1e-8
    max_iter: int = 500
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    grow: float = 1.5
    max_backtracks: int = 40
    min_step: float = 1e-14


@dataclass
class TrainHistory:
    iteration: np.ndarray
    cost: np.ndarray
    grad_norm: np.ndarray
    step_size: np.ndarray

    def to_csv(self) -> str:
        lines = ["iteration,cost,grad_norm,step_size"]
        for i, c, g, s in zip(self.iteration, self.cost, self.grad_norm, self.step_size):
            lines.append(f"{int(i)},{c:.17g},{g:.17g},{s:.17g}")
        return "\n".join(lines) + "\n"


def _clipped_update(prob, controls, grads, s):
    new = []
    for k in range(prob.N):
        delta = -s * grads[k]
        nrm = float(np.linalg.norm(delta))
        if nrm > prob.max_step:
            delta = delta * (prob.max_step / nrm)
        new.append(prob.retract(controls[k], delta))
    return new


def train(prob: LearningProblem, u_init, schedule: TrainSchedule | None = None, *, threads: int = 1):
    """Gradient descent with Armijo backtracking on the total objective.

    Stops when the per-layer gradient sup-norm drops below
    ``schedule.tol`` (checked before stepping, so a trajectory that is
    already extremal trains for zero iterations) or at the iteration
    cap. The cost history is monotone nonincreasing; a step that cannot
    produce a decrease raises ``LineSearchError``.
    """
    sched = schedule or TrainSchedule()
    controls = list(u_init)
    bundle = backward_sweep(prob, forward_sweep(prob, controls, threads=threads), threads=threads)
    grads = control_gradient(prob, bundle)
    gnorm = float(max((np.linalg.norm(g) for g in grads), default=0.0))
    gsq = float(sum(np.dot(g, g) for g in grads))
    rows = [(0, bundle.cost, gnorm, 0.0)]
    trial = sched.step
    for it in range(1, sched.max_iter + 1):
        if gnorm <= sched.tol:
            break
        s = trial
        accepted = False
        backtracks = 0
        while s >= sched.min_step and backtracks <= sched.max_backtracks:
            candidate = _clipped_update(prob, controls, grads, s)
            nb = forward_sweep(prob, candidate, threads=threads)
            if nb.cost <= bundle.cost - sched.armijo_c * s * gsq:
                accepted = True
                break
            s *= sched.backtrack
            backtracks += 1
        if not accepted:
            raise LineSearchError("training line search found no decrease", smallest_step=s)
        controls = candidate
        bundle = backward_sweep(prob, nb, threads=threads)
        grads = control_gradient(prob, bundle)
        gnorm = float(max((np.linalg.norm(g) for g in grads), default=0.0))
        gsq = float(sum(np.dot(g, g) for g in grads))
        rows.append((it, bundle.cost, gnorm, s))
        trial = s * sched.grow if backtracks == 0 else s
    arr = np.array(rows, dtype=float)
    history = TrainHistory(
        iteration=arr[:, 0], cost=arr[:, 1], grad_norm=arr[:, 2], step_size=arr[:, 3]
    )
    return bundle, history


# ---------------------------------------------------------------------------
# ResNet-style layer dynamics


class ResnetLayer:
    """Layer map f(x) = sigma(K x + beta) with exact first derivatives.

    sigma is the logistic sigmoid by default ("tanh" is available for
    zero-centered variants).
    """

    def __init__(self, K, beta, activation: str = "logistic"):
        self.K = np.asarray(K, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        if self.K.ndim != 2 or self.K.shape[0] != self.beta.size:
            raise DomainError("weight matrix rows must match bias length")
        if activation not in ("logistic", "tanh"):
            raise DomainError(f"unknown activation {activation!r}")
        self.activation = activation

    def _sigma(self, z):
        if self.activation == "logistic":
            return 1.0 / (1.0 + np.exp(-z))
        return np.tanh(z)

    def _sigma_prime_from_value(self, s):
        if self.activation == "logistic":
            return s * (1.0 - s)
        return 1.0 - s * s

    def apply(self, x):
        return self._sigma(self.K @ x + self.beta)

    __call__ = apply

    def jac_x(self, x):
        s = self.apply(x)
        return self._sigma_prime_from_value(s)[:, None] * self.K

    def vjp_x(self, x, w):
        s = self.apply(x)
        return self.K.T @ (w * self._sigma_prime_from_value(s))

    def grad_weights(self, x, w):
        """Gradients of <w, f(x)> with respect to (K, beta)."""
        s = self.apply(x)
        ws = w * self._sigma_prime_from_value(s)
        return np.outer(ws, x), ws


def resnet_layer(K, beta, activation: str = "logistic") -> ResnetLayer:
    """Dynamics instance for fixed weights; see ``ResnetLayer``."""
    return ResnetLayer(K, beta, activation)


def resnet_problem(x0s, targets, N: int, *, activation: str = "logistic") -> LearningProblem:
    """Training problem for sigma(K x + beta) layers with shared weights.

    Control vector u packs K row-major followed by beta; terminal cost
    is half the squared distance to the per-sample target.
    """
    x0s = [np.asarray(x, dtype=float) for x in x0s]
    targets = [np.asarray(t, dtype=float) for t in targets]
    if len(targets) != len(x0s):
        raise DomainError("one target per sample required")
    n = x0s[0].size

    def unpack(u):
        return ResnetLayer(u[: n * n].reshape(n, n), u[n * n :], activation)

    def f(x, u):
        return unpack(u).apply(x)

    def f_x_vjp(x, u, w):
        return unpack(u).vjp_x(x, w)

    def f_u_grad(x, u, w):
        dk, db = unpack(u).grad_weights(x, w)
        return np.concatenate([dk.ravel(), db])

    def phi(x, a):
        d = x - targets[a]
        return 0.5 * float(d @ d)

    def phi_x(x, a):
        return x - targets[a]

    return LearningProblem(
        x0s=x0s,
        N=N,
        control_dim=n * n + n,
        f=f,
        f_x_vjp=f_x_vjp,
        f_u_grad=f_u_grad,
        phi=phi,
        phi_x=phi_x,
    )


# ---------------------------------------------------------------------------
# rigid-body network on SO(n)


def procrustes_terminal_cost(target):
    """phi(Q) = -trace(target^T Q); minimized (value -n) exactly at Q = target."""
    t = np.asarray(target, dtype=float)

    def phi(q, a):
        return -float(np.tensordot(t, q, axes=2))

    def phi_x(q, a):
        return -t

    return phi, phi_x


def rigid_learning_problem(lam, q0s, phi, phi_x, N: int, *, running_weight: float = 1.0) -> LearningProblem:
    """SO(n) network: layers rotate every sample by a shared U_k.

    Controls are rotation matrices charted by U exp(hat(delta)) with
    the update clipped at ||delta|| = pi/2; the running cost is
    ``running_weight * trace(Lam U)`` per layer (set the weight to zero
    for pure terminal-cost training). At a stationary point the
    aggregated condition

        running_weight * (U_k Lam - Lam U_k^T)
            = sum_a (Q^a_k)^T P^a_k - (P^a_k)^T Q^a_k

    holds; ``ukdef2_residual`` measures its defect.
    """
    spec = lam if isinstance(lam, InertiaSpec) else InertiaSpec(lam)
    n = spec.n
    d = skew_dim(n)
    lam_m = spec.matrix
    gamma = float(running_weight)

    def f(q, u):
        return q @ u

    def f_x_vjp(q, u, w):
        return w @ u.T

    def f_u_grad(q, u, w):
        qu = q @ u
        a = qu.T @ w
        return skew_to_coords(a - a.T)

    def layer_cost(u):
        return gamma * float(np.trace(lam_m @ u))

    def layer_cost_grad(u):
        a = lam_m @ u
        return gamma * skew_to_coords(a.T - a)

    def retract(u, delta):
        return u @ np.asarray(mat_exp(coords_to_skew(n, delta)))

    return LearningProblem(
        x0s=[np.asarray(q, dtype=float) for q in q0s],
        N=N,
        control_dim=d,
        f=f,
        f_x_vjp=f_x_vjp,
        f_u_grad=f_u_grad,
        phi=phi,
        phi_x=phi_x,
        layer_cost=layer_cost if gamma != 0.0 else None,
        layer_cost_grad=layer_cost_grad if gamma != 0.0 else None,
        retract=retract,
        max_step=np.pi / 2.0,
    )


def ukdef2_residual(bundle: SweepBundle, lam, *, running_weight: float = 1.0) -> float:
    """Defect of the aggregated rigid stationarity condition, max over layers."""
    spec = lam if isinstance(lam, InertiaSpec) else InertiaSpec(lam)
    if bundle.costates is None:
        raise DomainError("run backward_sweep first")
    worst = 0.0
    for k, u in enumerate(bundle.controls):
        jd = u * spec.lam[None, :] - spec.lam[:, None] * u.T
        agg = np.zeros_like(jd)
        for xs, ps in zip(bundle.states, bundle.costates):
            q, p = xs[k], ps[k]
            agg += q.T @ p - p.T @ q
        worst = max(worst, float(np.linalg.norm(running_weight * jd - agg)))
    return worst
