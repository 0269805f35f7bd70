"""The switched linear system ``xdot = A_sigma(t) x``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonHurwitzError
from .linalg import as_square


def is_hurwitz(a) -> bool:
    return bool(np.all(np.linalg.eigvals(np.asarray(a, dtype=float)).real < 0))


@dataclass(frozen=True, eq=False)
class SwitchedSystem:
    """N Hurwitz mode matrices of a common dimension n.

    Modes are indexed from 0 internally; ``labels`` default to ``A1..AN``.
    """

    modes: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        modes = tuple(as_square(a) for a in self.modes)
        if not modes:
            raise DimensionMismatch("a switched system needs at least one mode")
        n = modes[0].shape[0]
        for i, a in enumerate(modes):
            if a.shape != (n, n):
                raise DimensionMismatch(f"mode {i + 1} has shape {a.shape}, expected ({n}, {n})")
            eig = np.linalg.eigvals(a)
            if not np.all(eig.real < 0):
                raise NonHurwitzError(
                    f"mode {i + 1} is not Hurwitz; eigenvalues: "
                    + ", ".join(f"{z.real:.6g}{z.imag:+.6g}j" for z in eig),
                    eigenvalues=eig,
                )
            a.setflags(write=False)
        labels = tuple(self.labels) or tuple(f"A{i + 1}" for i in range(len(modes)))
        if len(labels) != len(modes) or len(set(labels)) != len(labels):
            raise ValueError("labels must be unique and one per mode")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.modes[0].shape[0]

    @property
    def N(self) -> int:
        return len(self.modes)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.modes[i]


def benchmark_system() -> SwitchedSystem:
    """Two-mode benchmark with minimum dwell time near 2.7078: ``A1 = [[0,1],[-10,-1]]``, ``A2 = [[0,1],[-0.1,-0.5]]``."""
    return SwitchedSystem(([[0.0, 1.0], [-10.0, -1.0]], [[0.0, 1.0], [-0.1, -0.5]]))
