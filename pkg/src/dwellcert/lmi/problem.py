"""Affine matrix expressions, LMI feasibility problems and the conic oracle.

An :class:`LmiProblem` collects symmetric-matrix and scalar decision
variables and a list of blocks ``B(x) >= margin`` (after sign normalization).
:func:`solve_feasibility` minimizes the uniform slack ``t`` with every block
``B(x) + t I >= 0`` and then re-validates the returned point eigenvalue by
eigenvalue with :func:`dwellcert.linalg.sym_eig`, independently of the solver.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from cvxopt import matrix as cvx_matrix, solvers as cvx_solvers, spmatrix

from ..linalg import sym_eig

log = logging.getLogger(__name__)

STRICT_REL = 1e-7
LINEAR_TOL = 1e-9


class AffineMatrix:
    """``const + sum_k x_k * coeffs[k]`` for a vector ``x`` of scalar unknowns."""

    __array_ufunc__ = None  # keep numpy from broadcasting over us

    def __init__(self, const, coeffs=None):
        self.const = np.array(const, dtype=float)
        self.coeffs = dict(coeffs or {})

    @classmethod
    def scaled(cls, index: int, m) -> "AffineMatrix":
        m = np.asarray(m, dtype=float)
        return cls(np.zeros_like(m), {index: m})

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    def _lift(self, other) -> "AffineMatrix":
        return other if isinstance(other, AffineMatrix) else AffineMatrix(other)

    def __add__(self, other):
        other = self._lift(other)
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        return AffineMatrix(self.const + other.const, coeffs)

    __radd__ = __add__

    def __neg__(self):
        return AffineMatrix(-self.const, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, c: float):
        c = float(c)
        return AffineMatrix(self.const * c, {k: v * c for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def congruence(self, m) -> "AffineMatrix":
        """``M^T X M``."""
        m = np.asarray(m, dtype=float)
        return AffineMatrix(m.T @ self.const @ m, {k: m.T @ v @ m for k, v in self.coeffs.items()})

    def lyap(self, a) -> "AffineMatrix":
        """``A^T X + X A``."""
        a = np.asarray(a, dtype=float)
        return AffineMatrix(a.T @ self.const + self.const @ a,
                            {k: a.T @ v + v @ a for k, v in self.coeffs.items()})

    def value(self, x) -> np.ndarray:
        out = self.const.copy()
        for k, v in self.coeffs.items():
            out += x[k] * v
        return 0.5 * (out + out.T)


@dataclass
class Variable:
    name: str
    kind: Literal["sym", "scalar"]
    indices: tuple
    n: int = 1

    def value(self, x) -> np.ndarray | float:
        if self.kind == "scalar":
            return float(x[self.indices[0]])
        out = np.zeros((self.n, self.n))
        k = 0
        for i in range(self.n):
            for j in range(i, self.n):
                out[i, j] = out[j, i] = x[self.indices[k]]
                k += 1
        return out


@dataclass
class Block:
    expr: AffineMatrix  # required: expr >= margin (PD sense)
    margin: float
    kind: str = ""
    label: str = ""


@dataclass
class LinearConstraint:
    coeffs: dict
    const: float
    label: str = ""

    def value(self, x) -> float:
        return self.const + sum(a * x[k] for k, a in self.coeffs.items())


@dataclass
class NormBound:
    """``||(w_k x_k)_k||_2 <= radius``."""

    weights: dict
    radius: float
    label: str = ""

    def value(self, x) -> float:
        return self.radius - math.sqrt(sum((w * x[k]) ** 2 for k, w in self.weights.items()))


def strict_margin(const) -> float:
    """Margin used for a strict matrix inequality with the given constant term."""
    return STRICT_REL * max(1.0, float(np.linalg.norm(const)))


class LmiProblem:
    def __init__(self):
        self.variables: dict[str, Variable] = {}
        self.blocks: list[Block] = []
        self.linear: list[LinearConstraint] = []
        self.norm_bounds: list[NormBound] = []
        self.num_scalars = 0
        self.t_floor = 1e8  # keeps min t bounded when the blocks alone do not

    def _new_indices(self, count: int) -> tuple:
        idx = tuple(range(self.num_scalars, self.num_scalars + count))
        self.num_scalars += count
        return idx

    def _register(self, var: Variable) -> None:
        if var.name in self.variables:
            raise ValueError(f"duplicate variable {var.name!r}")
        self.variables[var.name] = var

    def sym_variable(self, name: str, n: int) -> AffineMatrix:
        idx = self._new_indices(n * (n + 1) // 2)
        self._register(Variable(name, "sym", idx, n))
        coeffs = {}
        k = 0
        for i in range(n):
            for j in range(i, n):
                e = np.zeros((n, n))
                e[i, j] = e[j, i] = 1.0
                coeffs[idx[k]] = e
                k += 1
        return AffineMatrix(np.zeros((n, n)), coeffs)

    def scalar_variable(self, name: str, lower: float | None = None,
                        upper: float | None = None) -> int:
        (k,) = self._new_indices(1)
        self._register(Variable(name, "scalar", (k,)))
        if lower is not None:
            self.add_linear({k: 1.0}, -lower, f"{name} >= {lower:g}")
        if upper is not None:
            self.add_linear({k: -1.0}, upper, f"{name} <= {upper:g}")
        return k

    def add_block(self, expr: AffineMatrix, sense: Literal["pd", "nd"] = "pd",
                  margin: float = 0.0, kind: str = "", label: str = "") -> None:
        if sense not in ("pd", "nd"):
            raise ValueError(f"unknown sense {sense!r}")
        for k in expr.coeffs:
            if not 0 <= k < self.num_scalars:
                raise ValueError(f"block {label!r} references undeclared unknown {k}")
        if np.max(np.abs(expr.const - expr.const.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(expr.const))):
            raise ValueError(f"block {label!r} has a non-symmetric constant term")
        self.blocks.append(Block(expr if sense == "pd" else -expr, margin, kind, label))

    def add_linear(self, coeffs: dict, const: float, label: str = "") -> None:
        self.linear.append(LinearConstraint(dict(coeffs), float(const), label))

    def add_norm_bound(self, weights: dict, radius: float, label: str = "") -> None:
        self.norm_bounds.append(NormBound(dict(weights), float(radius), label))

    def assignment(self, x) -> dict:
        return {name: var.value(x) for name, var in self.variables.items()}

    def block_margins(self, x) -> np.ndarray:
        return np.array([sym_eig(b.expr.value(x)).values[0] for b in self.blocks])


@dataclass
class Feasibility:
    status: Literal["feasible", "infeasible", "inconclusive"]
    assignment: dict = field(default_factory=dict)
    objective: float = math.inf
    x: np.ndarray | None = None
    block_margins: np.ndarray | None = None
    solver_status: str = ""
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _conic_data(prob: LmiProblem):
    nv = prob.num_scalars + 1  # slack t is last
    t = nv - 1
    vals, rows, cols, h = [], [], [], []

    def put(row, coeffs):
        for k, a in coeffs.items():
            if a != 0.0:
                vals.append(float(a))
                rows.append(row)
                cols.append(k)

    # Linear cone: G x + s = h, s >= 0  <=>  const + sum a x >= 0
    row = 0
    for lc in prob.linear:
        put(row, {k: -a for k, a in lc.coeffs.items()})
        h.append(lc.const)
        row += 1
    put(row, {t: -1.0})
    h.append(prob.t_floor)
    row += 1
    n_lin = row
    q_dims = []
    for nb in prob.norm_bounds:
        h.append(nb.radius)
        row += 1
        for k, w in nb.weights.items():
            put(row, {k: -w})
            h.append(0.0)
            row += 1
        q_dims.append(len(nb.weights) + 1)
    s_dims = []
    for b in prob.blocks:
        k = b.expr.dim
        base = row
        for idx, coef in b.expr.coeffs.items():
            flat = coef.flatten(order="F")
            nz = np.flatnonzero(flat)
            vals.extend((-flat[nz]).tolist())
            rows.extend((base + nz).tolist())
            cols.extend([idx] * len(nz))
        ident = np.eye(k).flatten(order="F")
        nz = np.flatnonzero(ident)
        vals.extend([-1.0] * len(nz))
        rows.extend((base + nz).tolist())
        cols.extend([t] * len(nz))
        h.extend(b.expr.const.flatten(order="F").tolist())
        row += k * k
        s_dims.append(k)
    c = np.zeros(nv)
    c[t] = 1.0
    g = spmatrix(vals, rows, cols, (row, nv))
    dims = {"l": n_lin, "q": q_dims, "s": s_dims}
    return cvx_matrix(c), g, cvx_matrix(np.array(h, dtype=float)), dims


def recheck(prob: LmiProblem, x, eps: float) -> tuple[bool, np.ndarray]:
    """Solver-independent validation of an assignment.

    Every block must have minimum eigenvalue ``>= max(eps, block.margin)``;
    linear and norm constraints may be violated by at most rounding noise.
    """
    margins = prob.block_margins(x)
    ok = all(mg >= max(eps, b.margin) for mg, b in zip(margins, prob.blocks))
    for lc in prob.linear:
        ok = ok and lc.value(x) >= -LINEAR_TOL * max(1.0, abs(lc.const))
    for nb in prob.norm_bounds:
        ok = ok and nb.value(x) >= -LINEAR_TOL * max(1.0, nb.radius)
    return bool(ok), margins


def solve_feasibility(prob: LmiProblem, eps: float = 1e-7, *, max_iters: int = 100) -> Feasibility:
    """Minimize the uniform slack ``t`` and classify the problem.

    The result is ``feasible`` only if the optimal ``t <= -eps`` *and* the
    returned point passes :func:`recheck`. Numerical breakdown of the conic
    solver yields ``inconclusive``, never ``feasible``.
    """
    c, g, h, dims = _conic_data(prob)
    opts = {"show_progress": False, "maxiters": max_iters,
            "abstol": 1e-7, "reltol": 1e-7, "feastol": 1e-8}
    try:
        sol = cvx_solvers.conelp(c, g, h, dims, options=opts)
    except (ValueError, ArithmeticError) as exc:
        log.debug("conic solver failure: %s", exc)
        return Feasibility("inconclusive", solver_status=f"error: {exc}")
    status = sol["status"]
    iters = int(sol.get("iterations", 0) or 0)
    if sol["x"] is None or status in ("primal infeasible", "dual infeasible"):
        st = "infeasible" if status == "primal infeasible" else "inconclusive"
        return Feasibility(st, solver_status=status, iterations=iters)
    xfull = np.array(sol["x"]).ravel()
    x = xfull[:-1]
    t = float(xfull[-1])
    ok, margins = recheck(prob, x, eps)
    if ok:
        out = "feasible"
    elif status == "optimal" and t > -eps:
        out = "infeasible"
    else:
        out = "inconclusive"
    return Feasibility(out, prob.assignment(x), t, x, margins, status, iters)
