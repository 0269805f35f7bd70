"""Piecewise-quadratic Lyapunov functions ``V(x) = max_r x^T P_r x``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, UnsupportedDimension
from .linalg import as_sym, min_eigenvalue, pd_tolerance

TIE_TOL = 1e-9


def _stack_pieces(pieces) -> np.ndarray:
    arr = np.array(pieces, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] != arr.shape[2]:
        raise DimensionMismatch(f"pieces must have shape (m, n, n), got {arr.shape}")
    return np.stack([as_sym(p) for p in arr])


@dataclass(frozen=True, eq=False)
class PiecewiseQuadratic:
    """Pointwise maximum of ``m`` positive-definite quadratic forms.

    ``pieces`` has shape ``(m, n, n)``. Its 1-level set is the intersection of
    the ellipsoids ``{x : x^T P_r x <= 1}``.
    """

    pieces: np.ndarray

    def __post_init__(self):
        arr = _stack_pieces(self.pieces)
        for r, p in enumerate(arr):
            if min_eigenvalue(p) <= pd_tolerance(p):
                raise ValueError(f"piece {r} is not positive definite")
        arr.setflags(write=False)
        object.__setattr__(self, "pieces", arr)

    @property
    def n(self) -> int:
        return self.pieces.shape[1]

    @property
    def m(self) -> int:
        return self.pieces.shape[0]

    def __call__(self, x) -> float:
        return eval_vmax(self, x)

    def with_piece(self, p) -> "PiecewiseQuadratic":
        return PiecewiseQuadratic(np.concatenate([self.pieces, as_sym(p)[None]]))


@dataclass(frozen=True, eq=False)
class LyapunovFamily:
    """One piecewise-quadratic function per mode, all with the same n and m."""

    modes: tuple

    def __post_init__(self):
        modes = tuple(v if isinstance(v, PiecewiseQuadratic) else PiecewiseQuadratic(v)
                      for v in self.modes)
        if not modes:
            raise ValueError("a Lyapunov family needs at least one mode")
        if len({(v.n, v.m) for v in modes}) != 1:
            raise DimensionMismatch("all modes must share the same n and m")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_array(cls, pieces) -> "LyapunovFamily":
        return cls(tuple(np.asarray(pieces, dtype=float)))

    @property
    def pieces(self) -> np.ndarray:
        """Array of shape ``(N, m, n, n)``."""
        return np.stack([v.pieces for v in self.modes])

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return self.modes[0].m

    def __getitem__(self, i: int) -> PiecewiseQuadratic:
        return self.modes[i]

    def __len__(self) -> int:
        return len(self.modes)


def _state(v: PiecewiseQuadratic, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (v.n,):
        raise DimensionMismatch(f"state has shape {x.shape}, expected ({v.n},)")
    return x


def piece_values(v: PiecewiseQuadratic, x) -> np.ndarray:
    """All quadratic forms ``x^T P_r x`` as a length-m array."""
    x = _state(v, x)
    return np.einsum("i,rij,j->r", x, v.pieces, x)


def eval_vmax(v: PiecewiseQuadratic, x) -> float:
    return float(np.max(piece_values(v, x)))


def active_set(v: PiecewiseQuadratic, x, tie_tol: float = TIE_TOL) -> list[int]:
    """Indices (0-based) of the pieces attaining the maximum at ``x``.

    A piece counts as active when it is within ``tie_tol * max(1, V(x))`` of
    the maximum.
    """
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    vals = piece_values(v, x)
    top = float(np.max(vals))
    return [int(r) for r in np.flatnonzero(vals >= top - tie_tol * max(1.0, top))]


def directional_derivative(v: PiecewiseQuadratic, a, x, tie_tol: float = TIE_TOL) -> float:
    """One-sided derivative of ``V`` at ``x`` along the flow ``xdot = A x``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (v.n, v.n):
        raise DimensionMismatch(f"A has shape {a.shape}, expected ({v.n}, {v.n})")
    x = _state(v, x)
    ax = a @ x
    # d/dt x^T P x = 2 x^T P A x
    return max(2.0 * float(x @ v.pieces[s] @ ax) for s in active_set(v, x, tie_tol))


def level_set_boundary(v: PiecewiseQuadratic, num_dirs: int = 720) -> np.ndarray:
    """Radial samples of the boundary of ``{x : V(x) <= 1}`` for n = 2.

    Returns an array of shape ``(num_dirs, 2)``; point k lies in direction
    ``2 pi k / num_dirs``. Uses degree-2 homogeneity of ``V``.
    """
    if v.n != 2:
        raise UnsupportedDimension(f"level-set boundary needs n = 2, got n = {v.n}")
    if num_dirs < 8:
        raise ValueError("num_dirs must be at least 8")
    theta = 2.0 * np.pi * np.arange(num_dirs) / num_dirs
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    vals = np.max(np.einsum("ki,rij,kj->kr", dirs, v.pieces, dirs), axis=1)
    return dirs / np.sqrt(vals)[:, None]
