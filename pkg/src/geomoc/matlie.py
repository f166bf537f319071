"""Dense kernel for small matrix Lie-group/algebra computations.

Everything here operates on plain square numpy arrays of dimension
2 <= n <= 12 (desk scale; no sparse paths, no external linear-algebra
backend beyond numpy). Two thin wrapper types carry structural
guarantees:

* ``SkewMatrix`` stores the strict upper triangle and mirrors it on
  read, so A + A^T = 0 holds exactly, not just to roundoff.
* ``Rotation`` checks the orthogonality defect ||R^T R - I||_F and the
  sign of the determinant at construction and offers
  re-orthonormalization through ``project_so``.

Most functions accept either wrapper or a bare array; bare arrays come
back out unless the contract promises structure (e.g. ``mat_exp`` of a
``SkewMatrix`` is a ``Rotation``).
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, DomainError

DIM_MAX = 12

__all__ = [
    "DIM_MAX",
    "SkewMatrix",
    "Rotation",
    "as_matrix",
    "commutator",
    "killing_pair",
    "mat_exp",
    "mat_exp_directional",
    "mat_asinh",
    "op_norm",
    "project_so",
    "hat",
    "skew_basis",
    "skew_to_coords",
    "coords_to_skew",
    "skew_dim",
    "random_skew",
    "random_rotation",
    "matrix_to_text",
    "matrix_from_text",
]


def as_matrix(a) -> np.ndarray:
    """Unwrap ``SkewMatrix``/``Rotation`` or coerce array-like to a square float array."""
    if isinstance(a, (SkewMatrix, Rotation)):
        return a.array
    arr = np.asarray(a, dtype=float)
    _check_square(arr)
    return arr


def _check_square(arr: np.ndarray) -> None:
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {arr.shape}")
    n = arr.shape[0]
    if not 2 <= n <= DIM_MAX:
        raise DomainError(f"dimension {n} outside supported range 2..{DIM_MAX}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has non-finite entries")


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")


class SkewMatrix:
    """Element of so(n), exactly skew by storage.

    Construction keeps only the strict upper triangle of the skew part
    of the input (complaining if the input is not skew to ``tol``), so
    the mirrored full array satisfies A = -A^T bit-exactly.
    """

    __slots__ = ("_a",)

    def __init__(self, a, *, tol: float = 1e-8):
        arr = a.array if isinstance(a, SkewMatrix) else np.asarray(a, dtype=float)
        _check_square(arr)
        defect = np.linalg.norm(arr + arr.T)
        scale = max(1.0, np.linalg.norm(arr))
        if defect > tol * scale:
            raise DomainError(f"input is not skew-symmetric (defect {defect:.3e})")
        upper = np.triu((arr - arr.T) / 2.0, 1)
        full = upper - upper.T
        full.setflags(write=False)
        self._a = full

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def n(self) -> int:
        return self._a.shape[0]

    def coords(self) -> np.ndarray:
        """Strict-upper-triangle entries, row-major."""
        return skew_to_coords(self._a)

    @classmethod
    def zero(cls, n: int) -> "SkewMatrix":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_coords(cls, n: int, coords) -> "SkewMatrix":
        return cls(coords_to_skew(n, coords))

    def __array__(self, dtype=None, copy=None):
        return np.array(self._a, dtype=dtype)

    def __add__(self, other):
        return SkewMatrix(self._a + as_matrix(other)) if isinstance(other, SkewMatrix) else self._a + as_matrix(other)

    def __sub__(self, other):
        return SkewMatrix(self._a - as_matrix(other)) if isinstance(other, SkewMatrix) else self._a - as_matrix(other)

    def __neg__(self):
        return SkewMatrix(-self._a)

    def __mul__(self, c):
        return SkewMatrix(self._a * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"SkewMatrix(n={self.n})\n{self._a!r}"


class Rotation:
    """Element of SO(n): orthogonal to ``tol`` with positive determinant."""

    __slots__ = ("_a",)

    def __init__(self, a, *, tol: float = 1e-8):
        arr = a.array if isinstance(a, Rotation) else np.asarray(a, dtype=float)
        _check_square(arr)
        defect = np.linalg.norm(arr.T @ arr - np.eye(arr.shape[0]))
        if defect > tol:
            raise DomainError(f"matrix is not orthogonal (defect {defect:.3e})")
        if np.linalg.det(arr) <= 0.0:
            raise DomainError("orthogonal matrix has negative determinant")
        arr = arr.copy()
        arr.setflags(write=False)
        self._a = arr

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def n(self) -> int:
        return self._a.shape[0]

    def defect(self) -> float:
        """Orthogonality defect ||R^T R - I||_F."""
        return float(np.linalg.norm(self._a.T @ self._a - np.eye(self.n)))

    def reorthonormalized(self) -> "Rotation":
        return project_so(self._a)

    @classmethod
    def identity(cls, n: int) -> "Rotation":
        return cls(np.eye(n))

    def __array__(self, dtype=None, copy=None):
        return np.array(self._a, dtype=dtype)

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self._a @ other.array, tol=1e-6)
        return self._a @ as_matrix(other)

    def __repr__(self):
        return f"Rotation(n={self.n})\n{self._a!r}"


# ---------------------------------------------------------------------------
# basis / coordinate helpers for so(n)


def skew_dim(n: int) -> int:
    return n * (n - 1) // 2


def skew_basis(n: int) -> list[np.ndarray]:
    """Basis E_ij = e_i e_j^T - e_j e_i^T for i < j, row-major pair order."""
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            e[j, i] = -1.0
            basis.append(e)
    return basis


def skew_to_coords(a) -> np.ndarray:
    arr = as_matrix(a)
    n = arr.shape[0]
    iu = np.triu_indices(n, 1)
    return arr[iu].copy()


def coords_to_skew(n: int, coords) -> np.ndarray:
    c = np.asarray(coords, dtype=float)
    if c.shape != (skew_dim(n),):
        raise DomainError(f"expected {skew_dim(n)} coordinates for so({n}), got {c.shape}")
    a = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    a[iu] = c
    return a - a.T


def hat(v) -> SkewMatrix:
    """R^3 -> so(3) hat map: hat(u) w = u x w."""
    u = np.asarray(v, dtype=float)
    if u.shape != (3,):
        raise DomainError("hat expects a 3-vector")
    return SkewMatrix(
        np.array(
            [
                [0.0, -u[2], u[1]],
                [u[2], 0.0, -u[0]],
                [-u[1], u[0], 0.0],
            ]
        )
    )


def random_skew(n: int, rng: np.random.Generator, scale: float = 1.0) -> SkewMatrix:
    return SkewMatrix.from_coords(n, scale * rng.standard_normal(skew_dim(n)))


def random_rotation(n: int, rng: np.random.Generator, scale: float = 1.0) -> Rotation:
    return mat_exp(random_skew(n, rng, scale))


# ---------------------------------------------------------------------------
# core operations


def commutator(a, b):
    """Matrix commutator AB - BA; SkewMatrix inputs give a SkewMatrix."""
    typed = isinstance(a, SkewMatrix) and isinstance(b, SkewMatrix)
    aa, bb = as_matrix(a), as_matrix(b)
    _check_same_dim(aa, bb)
    c = aa @ bb - bb @ aa
    return SkewMatrix(c) if typed else c


def killing_pair(xi, eta) -> float:
    """Inner product <xi, eta> = -1/2 trace(xi eta) on so(n)."""
    a, b = as_matrix(xi), as_matrix(eta)
    _check_same_dim(a, b)
    return -0.5 * float(np.tensordot(a, b.T, axes=2))


# Taylor degree chosen so the series tail is below double roundoff for
# matrices with 1-norm below the threshold; larger norms get squared down.
_EXP_STEPS = ((0.015, 6), (0.17, 10), (0.78, 16), (2.1, 24))


def _exp_taylor(a: np.ndarray, degree: int) -> np.ndarray:
    eye = np.eye(a.shape[0])
    p = eye + a / degree
    for j in range(degree - 1, 0, -1):
        p = a @ p
        p /= j
        p += eye
    return p


def mat_exp(a):
    """Matrix exponential by scaling-and-squaring of a truncated series.

    A ``SkewMatrix`` argument returns a ``Rotation``.
    """
    skew_in = isinstance(a, SkewMatrix)
    arr = as_matrix(a)
    nrm = np.linalg.norm(arr, 1)
    squarings = 0
    degree = _EXP_STEPS[-1][1]
    if nrm > _EXP_STEPS[-1][0]:
        squarings = int(np.ceil(np.log2(nrm / _EXP_STEPS[-1][0])))
        arr = arr / (2.0**squarings)
    else:
        for theta, deg in _EXP_STEPS:
            if nrm <= theta:
                degree = deg
                break
    e = _exp_taylor(arr, degree)
    for _ in range(squarings):
        e = e @ e
    return Rotation(e, tol=1e-9) if skew_in else e


def op_norm(a, *, rel_tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Largest singular value via power iteration on A^T A.

    Deterministic start; restarts from coordinate vectors if the start
    happens to sit in the numerical null space.
    """
    arr = as_matrix(a)
    n = arr.shape[0]
    fro = np.linalg.norm(arr)
    if fro == 0.0:
        return 0.0
    b = arr.T @ arr
    v = np.full(n, 1.0 / np.sqrt(n))
    restarts = 0
    lam_prev = -1.0
    stable = 0
    for _ in range(max_iter):
        w = b @ v
        nw = np.linalg.norm(w)
        if nw <= fro * fro * 1e-18:
            # start vector annihilated; try coordinate directions
            v = np.zeros(n)
            v[restarts % n] = 1.0
            restarts += 1
            continue
        v = w / nw
        lam = float(v @ (b @ v))
        if lam_prev >= 0.0 and abs(lam - lam_prev) <= rel_tol * max(lam, 1e-300):
            stable += 1
            if stable >= 3:
                return float(np.sqrt(lam))
        else:
            stable = 0
        lam_prev = lam
    return float(np.sqrt(max(lam_prev, 0.0)))


def mat_asinh(u, *, margin: float = 1e-6, tol: float = 1e-12, max_terms: int = 400) -> SkewMatrix:
    """Inverse of sinh on so(n), valid for operator norm below 1.

    Series: integrate 1/sqrt(1+u^2) term by term, i.e.
    asinh(u) = sum_m (-1)^m (2m)! / (4^m (m!)^2 (2m+1)) u^(2m+1),
    then polish by Newton on the residual sinh(xi) - u (all iterates
    commute with u, so the Frechet derivative acts as cosh(xi)).
    """
    arr = as_matrix(u)
    arr = SkewMatrix(arr).array  # enforce exact skewness of the input
    s = op_norm(arr)
    if s >= 1.0 - margin:
        raise DomainError(f"mat_asinh needs operator norm < 1 - {margin:g}, got {s:.6f}")
    u2 = arr @ arr
    power = arr.copy()
    xi = arr.copy()
    coef = 1.0
    target = max(np.linalg.norm(arr), 1e-300)
    for m in range(1, max_terms):
        power = power @ u2
        coef *= -((2 * m - 1) ** 2) / (2 * m * (2 * m + 1))
        term = coef * power
        xi += term
        if np.linalg.norm(term) <= 1e-17 * target:
            break
    # Newton polish
    residual = np.inf
    for _ in range(20):
        e = mat_exp(SkewMatrix(xi, tol=1e-6)).array
        sinh = (e - e.T) / 2.0
        cosh = (e + e.T) / 2.0
        r = sinh - arr
        residual = np.linalg.norm(r)
        if residual <= tol * 0.1:
            break
        delta = np.linalg.solve(cosh, r)
        delta = (delta - delta.T) / 2.0
        xi = xi - delta
    if residual > tol:
        raise ConvergenceError("mat_asinh Newton polish stalled", residual=float(residual))
    return SkewMatrix(xi, tol=1e-6)


def mat_exp_directional(a, e) -> tuple[np.ndarray, np.ndarray]:
    """Return (exp(A), d/dt exp(A + tE) at t=0).

    The derivative is exp(A) applied to the series
    sum_k (-ad_A)^k(E) / (k+1)!; large arguments are halved recursively
    via exp(A) = exp(A/2)^2 and the product rule.
    """
    aa, ee = as_matrix(a), as_matrix(e)
    _check_same_dim(aa, ee)
    if np.linalg.norm(aa, 1) > 0.9:
        half, dhalf = mat_exp_directional(aa / 2.0, ee / 2.0)
        return half @ half, dhalf @ half + half @ dhalf
    term = ee.copy()
    w = ee.copy()
    scale = max(np.linalg.norm(ee), 1e-300)
    for k in range(1, 40):
        term = (term @ aa - aa @ term) / (k + 1)
        w += term
        if np.linalg.norm(term) <= 1e-17 * scale:
            break
    ea = _exp_taylor(aa, 16)
    return ea, ea @ w


def project_so(a, *, tol: float = 1e-14, max_iter: int = 50) -> Rotation:
    """Nearest special-orthogonal matrix via the Newton iteration X <- (X + X^-T)/2."""
    x = as_matrix(a).copy()
    n = x.shape[0]
    eye = np.eye(n)
    defect = np.inf
    for _ in range(max_iter):
        defect = np.linalg.norm(x.T @ x - eye)
        if defect <= tol:
            break
        x = 0.5 * (x + np.linalg.inv(x).T)
    else:
        raise ConvergenceError("project_so did not converge", residual=float(defect))
    if np.linalg.det(x) <= 0.0:
        raise DomainError("projection landed on the negative-determinant component")
    return Rotation(x, tol=max(tol * 10, 1e-12))


# ---------------------------------------------------------------------------
# text serialization: first token is n, then row-major entries


def matrix_to_text(a) -> str:
    arr = as_matrix(a)
    n = arr.shape[0]
    return " ".join([str(n)] + [format(x, ".17g") for x in arr.ravel()])


def matrix_from_text(text: str) -> np.ndarray:
    parts = text.split()
    if not parts:
        raise DomainError("empty matrix text")
    n = int(parts[0])
    if len(parts) != 1 + n * n:
        raise DomainError(f"matrix text promises {n}x{n} but carries {len(parts) - 1} entries")
    return np.array([float(p) for p in parts[1:]], dtype=float).reshape(n, n)
