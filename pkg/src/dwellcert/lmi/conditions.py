"""Assembly of the piecewise-quadratic dwell-time conditions as LMIs.

For modes ``i`` and pieces ``r`` the conditions on ``P[i, r]`` are

* positivity: ``P[i, r] > 0``;
* decay: ``sum_{s != r} alpha[i, r, s] (P[i, s] - P[i, r]) - A_i^T P[i, r] - P[i, r] A_i > 0``;
* jump (``i != j``, all ``q``):
  ``P[i, r] + sum_{s != r} gamma[j, q, i, r, s] (P[i, s] - P[i, r]) - E_i^T P[j, q] E_i > 0``
  with ``E_i = exp(A_i tau)``.

The products of multipliers and matrices are bilinear; fixing either side
leaves an LMI, and :func:`assemble_delta` gives the first-order expansion
around a current iterate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IndexMismatch
from ..linalg import expm_cached
from ..system import SwitchedSystem
from .problem import AffineMatrix, Feasibility, LmiProblem, strict_margin

GAMMA_SUM_SLACK = 1e-6
EPS_NORM = 1.0
KAPPA = 1e7


def off_pairs(m: int):
    return [(r, s) for r in range(m) for s in range(m) if s != r]


@dataclass
class ScalarMultipliers:
    """S-procedure multipliers.

    ``alpha[i, r, s]`` has shape ``(N, m, m)`` and ``gamma[j, q, i, r, s]``
    has shape ``(N, m, N, m, m)``. Entries with ``s == r`` or ``i == j`` are
    unused and kept at zero.
    """

    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.alpha = np.array(self.alpha, dtype=float)
        self.gamma = np.array(self.gamma, dtype=float)
        if self.alpha.ndim != 3 or self.gamma.ndim != 5:
            raise IndexMismatch("alpha must be (N, m, m) and gamma (N, m, N, m, m)")
        N, m, _ = self.alpha.shape
        if self.alpha.shape != (N, m, m) or self.gamma.shape != (N, m, N, m, m):
            raise IndexMismatch(f"inconsistent multiplier shapes {self.alpha.shape}, {self.gamma.shape}")

    @classmethod
    def zeros(cls, N: int, m: int) -> "ScalarMultipliers":
        return cls(np.zeros((N, m, m)), np.zeros((N, m, N, m, m)))

    @property
    def N(self) -> int:
        return self.alpha.shape[0]

    @property
    def m(self) -> int:
        return self.alpha.shape[1]

    def copy(self) -> "ScalarMultipliers":
        return ScalarMultipliers(self.alpha.copy(), self.gamma.copy())

    def gamma_sums(self) -> np.ndarray:
        """``sum_{s != r} gamma[j, q, i, r, s]`` for every ``(j, q, i, r)``."""
        g = self.gamma.copy()
        m = self.m
        g[..., np.arange(m), np.arange(m)] = 0.0
        return g.sum(axis=-1)

    def projected(self, slack: float = GAMMA_SUM_SLACK) -> "ScalarMultipliers":
        """Clip into ``alpha >= 0``, ``gamma >= 0``, ``sum gamma <= 1 - slack``."""
        m, N = self.m, self.N
        alpha = np.maximum(self.alpha, 0.0)
        gamma = np.maximum(self.gamma, 0.0)
        alpha[:, np.arange(m), np.arange(m)] = 0.0
        gamma[..., np.arange(m), np.arange(m)] = 0.0
        for i in range(N):
            gamma[i, :, i] = 0.0
        sums = gamma.sum(axis=-1, keepdims=True)
        cap = 1.0 - slack
        gamma = np.where(sums > cap, gamma * (cap / np.maximum(sums, cap)), gamma)
        return ScalarMultipliers(alpha, gamma)

    def duplicate_last(self) -> "ScalarMultipliers":
        """Multipliers for ``m + 1`` pieces where piece ``m + 1`` copies piece ``m``.

        The new piece inherits the rows (and, as a target mode piece, the
        ``q`` slices) of the last piece; all couplings *to* the new piece
        are zero.
        """
        N, m = self.N, self.m
        alpha = np.zeros((N, m + 1, m + 1))
        alpha[:, :m, :m] = self.alpha
        alpha[:, m, :m] = self.alpha[:, m - 1, :m]
        alpha[:, m, m - 1] = 0.0
        gamma = np.zeros((N, m + 1, N, m + 1, m + 1))
        gamma[:, :m, :, :m, :m] = self.gamma
        gamma[:, m, :, :m, :m] = self.gamma[:, m - 1, :, :m, :m]
        gamma[:, :, :, m, :m] = gamma[:, :, :, m - 1, :m]
        gamma[:, :, :, m, m - 1] = 0.0
        return ScalarMultipliers(alpha, gamma)


def _check_shapes(sys: SwitchedSystem, m: int, mult: ScalarMultipliers | None, pieces=None):
    if m < 1:
        raise IndexMismatch("m must be at least 1")
    if mult is not None and (mult.N, mult.m) != (sys.N, m):
        raise IndexMismatch(f"multipliers are for (N, m) = ({mult.N}, {mult.m}), expected ({sys.N}, {m})")
    if pieces is not None and np.shape(pieces) != (sys.N, m, sys.n, sys.n):
        raise IndexMismatch(f"pieces have shape {np.shape(pieces)}, expected {(sys.N, m, sys.n, sys.n)}")


def transition_maps(sys: SwitchedSystem, tau: float) -> list[np.ndarray]:
    return [expm_cached(a, tau) for a in sys.modes]


def condition_matrices(sys: SwitchedSystem, tau: float, pieces, mult: ScalarMultipliers):
    """Evaluate every condition block at concrete values.

    Yields ``(kind, index, matrix)`` with kind in ``pd``/``decay``/``jump``;
    each matrix is required to be positive definite.
    """
    pieces = np.asarray(pieces, dtype=float)
    N, m = pieces.shape[:2]
    _check_shapes(sys, m, mult, pieces)
    maps = transition_maps(sys, tau)
    for i in range(N):
        a = sys.modes[i]
        for r in range(m):
            p = pieces[i, r]
            yield "pd", (i, r), p
            dec = -(a.T @ p + p @ a)
            for s in range(m):
                if s != r:
                    dec = dec + mult.alpha[i, r, s] * (pieces[i, s] - p)
            yield "decay", (i, r), dec
    for i in range(N):
        e = maps[i]
        for j in range(N):
            if j == i:
                continue
            for r in range(m):
                for q in range(m):
                    jm = pieces[i, r] - e.T @ pieces[j, q] @ e
                    for s in range(m):
                        if s != r:
                            jm = jm + mult.gamma[j, q, i, r, s] * (pieces[i, s] - pieces[i, r])
                    yield "jump", (j, q, i, r), jm


def _normalization(prob: LmiProblem, p: AffineMatrix, n: int, label: str,
                   eps_norm: float, kappa: float) -> None:
    ident = np.eye(n)
    prob.add_block(p - eps_norm * ident, "pd", 0.0, "pd", f"pd {label}")
    prob.add_block(kappa * ident - p, "pd", 0.0, "norm", f"norm {label}")


def assemble_fixed_scalars(sys: SwitchedSystem, tau: float, m: int,
                           mult: ScalarMultipliers | None = None, *,
                           eps_norm: float = EPS_NORM, kappa: float = KAPPA) -> LmiProblem:
    """LMI in the matrices ``P[i, r]`` with all multipliers held fixed."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if mult is None:
        mult = ScalarMultipliers.zeros(sys.N, m)
    _check_shapes(sys, m, mult)
    N, n = sys.N, sys.n
    prob = LmiProblem()
    P = {(i, r): prob.sym_variable(f"P[{i},{r}]", n) for i in range(N) for r in range(m)}
    maps = transition_maps(sys, tau)
    for i in range(N):
        for r in range(m):
            _normalization(prob, P[i, r], n, f"i={i + 1} r={r + 1}", eps_norm, kappa)
    for i in range(N):
        for r in range(m):
            expr = -P[i, r].lyap(sys.modes[i])
            for s in range(m):
                if s != r and mult.alpha[i, r, s] != 0.0:
                    expr = expr + (P[i, s] - P[i, r]) * mult.alpha[i, r, s]
            prob.add_block(expr, "pd", strict_margin(expr.const), "decay",
                           f"decay i={i + 1} r={r + 1}")
    for i in range(N):
        for j in range(N):
            if j == i:
                continue
            for r in range(m):
                for q in range(m):
                    expr = P[i, r] - P[j, q].congruence(maps[i])
                    for s in range(m):
                        g = mult.gamma[j, q, i, r, s]
                        if s != r and g != 0.0:
                            expr = expr + (P[i, s] - P[i, r]) * g
                    prob.add_block(expr, "pd", strict_margin(expr.const), "jump",
                                   f"jump j={j + 1} q={q + 1} i={i + 1} r={r + 1}")
    return prob


def _add_multipliers(prob: LmiProblem, N: int, m: int, *, prefix: str = "",
                     base: ScalarMultipliers | None = None, rho_s: float | None = None,
                     slack: float = GAMMA_SUM_SLACK):
    """Declare alpha/gamma unknowns (or increments when ``base`` is given)."""
    alpha, gamma = {}, {}

    def declare(name, cur):
        if base is None:
            return prob.scalar_variable(name, lower=0.0)
        lim = rho_s * max(1.0, abs(cur))
        return prob.scalar_variable(name, lower=max(-cur, -lim), upper=lim)

    for i in range(N):
        for r, s in off_pairs(m):
            cur = 0.0 if base is None else base.alpha[i, r, s]
            alpha[i, r, s] = declare(f"{prefix}alpha[{i},{r},{s}]", cur)
    for j in range(N):
        for q in range(m):
            for i in range(N):
                if i == j:
                    continue
                for r in range(m):
                    const = 1.0 - slack
                    coeffs = {}
                    for s in range(m):
                        if s == r:
                            continue
                        cur = 0.0 if base is None else base.gamma[j, q, i, r, s]
                        k = declare(f"{prefix}gamma[{j},{q},{i},{r},{s}]", cur)
                        gamma[j, q, i, r, s] = k
                        coeffs[k] = -1.0
                        const -= cur
                    if coeffs:
                        prob.add_linear(coeffs, const, f"gamma sum j={j + 1} q={q + 1} i={i + 1} r={r + 1}")
    return alpha, gamma


def assemble_fixed_P(sys: SwitchedSystem, tau: float, pieces) -> LmiProblem:
    """LMI in the multipliers with the matrices ``P[i, r]`` held fixed."""
    pieces = np.asarray(pieces, dtype=float)
    N, m = pieces.shape[:2]
    _check_shapes(sys, m, None, pieces)
    prob = LmiProblem()
    al, ga = _add_multipliers(prob, N, m)
    maps = transition_maps(sys, tau)
    for i in range(N):
        a = sys.modes[i]
        for r in range(m):
            p = pieces[i, r]
            prob.add_block(AffineMatrix(p), "pd", 0.0, "pd", f"pd i={i + 1} r={r + 1}")
            expr = AffineMatrix(-(a.T @ p + p @ a))
            for s in range(m):
                if s != r:
                    expr = expr + AffineMatrix.scaled(al[i, r, s], pieces[i, s] - p)
            prob.add_block(expr, "pd", strict_margin(expr.const), "decay", f"decay i={i + 1} r={r + 1}")
    for i in range(N):
        for j in range(N):
            if j == i:
                continue
            for r in range(m):
                for q in range(m):
                    expr = AffineMatrix(pieces[i, r] - maps[i].T @ pieces[j, q] @ maps[i])
                    for s in range(m):
                        if s != r:
                            expr = expr + AffineMatrix.scaled(ga[j, q, i, r, s], pieces[i, s] - pieces[i, r])
                    prob.add_block(expr, "pd", strict_margin(expr.const), "jump",
                                   f"jump j={j + 1} q={q + 1} i={i + 1} r={r + 1}")
    return prob


def assemble_delta(sys: SwitchedSystem, tau: float, m: int, pieces, mult: ScalarMultipliers, *,
                   rho: float = 0.2, rho_s: float = 0.5, eps_norm: float = EPS_NORM,
                   kappa: float = KAPPA) -> LmiProblem:
    """First-order expansion of the conditions around ``(pieces, mult)``.

    Unknowns are the increments ``dP[i, r]``, ``dalpha`` and ``dgamma``;
    products of two increments are dropped. Trust region:
    ``||dP[i, r]||_F <= rho ||P[i, r]||_F`` and
    ``|d| <= rho_s * max(1, |current|)`` for each multiplier.
    """
    pieces = np.asarray(pieces, dtype=float)
    _check_shapes(sys, m, mult, pieces)
    N, n = sys.N, sys.n
    prob = LmiProblem()
    P = {}
    for i in range(N):
        for r in range(m):
            d = prob.sym_variable(f"dP[{i},{r}]", n)
            weights = {}
            for k, e in d.coeffs.items():
                weights[k] = 1.0 if np.count_nonzero(e) == 1 else np.sqrt(2.0)
            prob.add_norm_bound(weights, rho * float(np.linalg.norm(pieces[i, r])),
                                f"trust i={i + 1} r={r + 1}")
            P[i, r] = d + pieces[i, r]
    dal, dga = _add_multipliers(prob, N, m, prefix="d", base=mult, rho_s=rho_s)
    maps = transition_maps(sys, tau)
    for i in range(N):
        for r in range(m):
            _normalization(prob, P[i, r], n, f"i={i + 1} r={r + 1}", eps_norm, kappa)
    for i in range(N):
        for r in range(m):
            expr = -P[i, r].lyap(sys.modes[i])
            for s in range(m):
                if s != r:
                    diff = pieces[i, s] - pieces[i, r]
                    expr = expr + (P[i, s] - P[i, r]) * mult.alpha[i, r, s]
                    expr = expr + AffineMatrix.scaled(dal[i, r, s], diff)
            prob.add_block(expr, "pd", strict_margin(expr.const), "decay", f"decay i={i + 1} r={r + 1}")
    for i in range(N):
        for j in range(N):
            if j == i:
                continue
            for r in range(m):
                for q in range(m):
                    expr = P[i, r] - P[j, q].congruence(maps[i])
                    for s in range(m):
                        if s != r:
                            diff = pieces[i, s] - pieces[i, r]
                            expr = expr + (P[i, s] - P[i, r]) * mult.gamma[j, q, i, r, s]
                            expr = expr + AffineMatrix.scaled(dga[j, q, i, r, s], diff)
                    prob.add_block(expr, "pd", strict_margin(expr.const), "jump",
                                   f"jump j={j + 1} q={q + 1} i={i + 1} r={r + 1}")
    return prob


def pieces_from(feas: Feasibility, N: int, m: int, prefix: str = "") -> np.ndarray:
    return np.array([[feas.assignment[f"{prefix}P[{i},{r}]"] for r in range(m)] for i in range(N)])


def multipliers_from(feas: Feasibility, N: int, m: int, prefix: str = "",
                     base: ScalarMultipliers | None = None) -> ScalarMultipliers:
    """Read multipliers (or ``base`` plus increments) out of an assignment."""
    out = ScalarMultipliers.zeros(N, m) if base is None else base.copy()
    for i in range(N):
        for r, s in off_pairs(m):
            out.alpha[i, r, s] += feas.assignment[f"{prefix}alpha[{i},{r},{s}]"]
    for j in range(N):
        for q in range(m):
            for i in range(N):
                if i == j:
                    continue
                for r, s in off_pairs(m):
                    out.gamma[j, q, i, r, s] += feas.assignment[f"{prefix}gamma[{j},{q},{i},{r},{s}]"]
    return out
