"""Dense matrix primitives: symmetric eigensolver, definiteness, expm, spectral radius.

All routines work on small dense ``numpy`` arrays (n up to a few dozen) and
never mutate their inputs.
"""
from __future__ import annotations

import functools
import math
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NoConvergenceError, NonFiniteError

SYM_TOL = 1e-12
PD_REL_TOL = 1e-9


class EigenResult(NamedTuple):
    values: np.ndarray  # ascending
    vectors: np.ndarray  # column k pairs with values[k]


def _check_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("matrix contains NaN or Inf entries")


def maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def as_square(a) -> np.ndarray:
    """Validate and return ``a`` as a finite float (n, n) array."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    _check_finite(a)
    return a


def as_sym(s, check: bool = True) -> np.ndarray:
    """Return the symmetric part (S + S^T)/2 of a square matrix.

    With ``check`` the input must already be symmetric up to
    ``1e-12 * max(1, maxabs(S))``; symmetrization only removes rounding noise.
    """
    s = as_square(s)
    if check and maxabs(s - s.T) > SYM_TOL * max(1.0, maxabs(s)):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (s + s.T)


def _rotation(app: float, aqq: float, apq: float) -> tuple[float, float]:
    # Rutishauser's stable choice of the smaller rotation angle.
    d = aqq - app
    if abs(apq) < 1e-150 * abs(d):
        t = apq / d  # tan of the angle to full precision; theta itself would overflow
    else:
        theta = d / (2.0 * apq)
        t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
    c = 1.0 / math.hypot(t, 1.0)
    return c, t * c


def _eig2(s: np.ndarray) -> EigenResult:
    a, b, d = s[0, 0], s[0, 1], s[1, 1]
    if b == 0.0:
        vals = np.array([a, d])
        vecs = np.eye(2)
    else:
        c, sn = _rotation(a, d, b)
        t = sn / c
        vals = np.array([a - t * b, d + t * b])
        vecs = np.array([[c, sn], [-sn, c]])
    order = np.argsort(vals, kind="stable")
    return EigenResult(vals[order], vecs[:, order])


def _jacobi(s: np.ndarray, max_sweeps: int) -> EigenResult:
    a = s.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= np.finfo(float).eps * scale * 0.5 or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                c, sn = _rotation(a[p, p], a[q, q], apq)
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - sn * cq
                a[:, q] = sn * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise NoConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    return EigenResult(vals[order], v[:, order])


def sym_eig(s, max_sweeps: int | None = None) -> EigenResult:
    """Eigendecomposition of a real symmetric matrix.

    Uses an exact single rotation for n = 2 and cyclic Jacobi otherwise.
    Eigenvalues are returned in ascending order with orthonormal eigenvectors
    as columns.

    Raises
    ------
    NonFiniteError
        If ``s`` has NaN/Inf entries.
    NoConvergenceError
        If the sweep budget (default ``100 * n``) is exhausted.
    """
    s = as_sym(s)
    n = s.shape[0]
    if n == 1:
        return EigenResult(s[0].copy(), np.ones((1, 1)))
    if n == 2:
        return _eig2(s)
    return _jacobi(s, 100 * n if max_sweeps is None else max_sweeps)


def min_eigenvalue(s) -> float:
    return float(sym_eig(s).values[0])


def max_eigenvalue(s) -> float:
    return float(sym_eig(s).values[-1])


def pd_tolerance(s) -> float:
    return PD_REL_TOL * max(1.0, maxabs(s))


def is_pd(s, eps: float | None = None) -> bool:
    """Strict positive definiteness test ``min_eigenvalue(S) > eps``.

    The default ``eps`` is ``1e-9 * max(1, maxabs(S))``.
    """
    if eps is None:
        eps = pd_tolerance(s)
    return min_eigenvalue(s) > eps


# Pade approximant orders and the 1-norm bounds below which each one is
# accurate to unit roundoff (Higham 2005).
_PADE_THETA = ((3, 1.495585217958292e-2), (5, 2.539398330063230e-1),
               (7, 9.504178996162932e-1), (9, 2.097847961257068e0),
               (13, 5.371920351148152e0))


@functools.lru_cache(maxsize=None)
def _pade_coefficients(m: int) -> tuple[float, ...]:
    f = math.factorial
    return tuple(f(2 * m - k) * f(m) / (f(2 * m) * f(k) * f(m - k)) for k in range(m + 1))


def _pade(a: np.ndarray, m: int) -> np.ndarray:
    b = _pade_coefficients(m)
    n = a.shape[0]
    ident = np.eye(n)
    a2 = a @ a
    powers = [ident]
    for _ in range(m // 2):
        powers.append(powers[-1] @ a2)
    u = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)) if 2 * k + 1 <= m)
    u = a @ u
    v = sum(b[2 * k] * powers[k] for k in range(len(powers)) if 2 * k <= m)
    return np.linalg.solve(v - u, v + u)


def expm(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(A t)`` by Pade scaling and squaring.

    ``t`` may be zero or negative; the result is the flow map of
    ``xdot = A x`` over time ``t``.
    """
    a = as_square(a)
    if not math.isfinite(t):
        raise NonFiniteError("time argument must be finite")
    at = a * t
    norm = float(np.max(np.sum(np.abs(at), axis=0)))
    if norm == 0.0:
        return np.eye(a.shape[0])
    for m, theta in _PADE_THETA[:-1]:
        if norm <= theta:
            return _pade(at, m)
    theta13 = _PADE_THETA[-1][1]
    s = max(0, int(math.ceil(math.log2(norm / theta13))))
    x = _pade(at / 2.0 ** s, 13)
    for _ in range(s):
        x = x @ x
    _check_finite(x)
    return x


@functools.lru_cache(maxsize=4096)
def _expm_cached(key: bytes, n: int, t: float) -> np.ndarray:
    out = expm(np.frombuffer(key, dtype=float).reshape(n, n), t)
    out.setflags(write=False)
    return out


def expm_cached(a: np.ndarray, t: float) -> np.ndarray:
    """Memoized :func:`expm` keyed by the exact bytes of ``A`` and ``t``.

    Returns a read-only array; copy before mutating.
    """
    a = np.ascontiguousarray(a, dtype=float)
    return _expm_cached(a.tobytes(), a.shape[0], float(t))


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a (possibly nonsymmetric) real matrix."""
    m = as_square(m)
    n = m.shape[0]
    if n == 1:
        return abs(float(m[0, 0]))
    if n == 2:
        half_tr = 0.5 * (m[0, 0] + m[1, 1])
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        disc = half_tr * half_tr - det
        if disc < 0.0:
            return math.sqrt(det)
        root = math.sqrt(disc)
        lam1 = half_tr + math.copysign(root, half_tr)
        lam2 = det / lam1 if lam1 != 0.0 else 0.0
        return max(abs(lam1), abs(lam2))
    try:
        vals = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(str(exc)) from exc
    return float(np.max(np.abs(vals)))
