"""Certificates and their solver-independent verification."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ShapeMismatch
from ..linalg import sym_eig
from ..lyapunov import TIE_TOL
from ..system import SwitchedSystem
from .conditions import ScalarMultipliers, condition_matrices, transition_maps

CONDITION_KINDS = ("pd", "decay", "jump")
MC_SAMPLES = 10_000


@dataclass
class Certificate:
    """Witness that the system is stable for every switching signal with dwell >= ``tau``.

    ``pieces`` has shape ``(N, m, n, n)``; ``margins`` holds the worst minimum
    eigenvalue per condition kind as computed by :func:`verify_certificate`.
    """

    tau: float
    pieces: np.ndarray
    multipliers: ScalarMultipliers
    labels: tuple = ()
    margins: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = float(self.tau)
        self.pieces = np.array(self.pieces, dtype=float)
        if self.pieces.ndim != 4 or self.pieces.shape[2] != self.pieces.shape[3]:
            raise ShapeMismatch(f"pieces must be (N, m, n, n), got {self.pieces.shape}")
        if (self.multipliers.N, self.multipliers.m) != self.pieces.shape[:2]:
            raise ShapeMismatch("multipliers do not match the piece array")
        if not self.labels:
            self.labels = tuple(f"A{i + 1}" for i in range(self.N))
        self.labels = tuple(self.labels)

    @property
    def N(self) -> int:
        return self.pieces.shape[0]

    @property
    def m(self) -> int:
        return self.pieces.shape[1]

    @property
    def n(self) -> int:
        return self.pieces.shape[2]

    @property
    def family(self):
        from ..lyapunov import LyapunovFamily

        return LyapunovFamily.from_array(self.pieces)

    def scaled(self, c: float) -> "Certificate":
        return replace(self, pieces=self.pieces * c, multipliers=self.multipliers.copy(), margins={})

    def with_tau(self, tau: float) -> "Certificate":
        return replace(self, tau=tau, margins={})


def duplicate_last_piece(cert: Certificate) -> Certificate:
    """Lift an ``m``-piece certificate to ``m + 1`` pieces by repeating the last piece."""
    pieces = np.concatenate([cert.pieces, cert.pieces[:, -1:]], axis=1)
    return replace(cert, pieces=pieces, multipliers=cert.multipliers.duplicate_last(), margins={})


@dataclass
class VerificationReport:
    passed: bool
    eps: float
    margins: dict  # kind -> worst min eigenvalue
    worst: dict  # kind -> index of the worst block
    multiplier_violations: list
    sample_violations: dict  # condition -> number of failing samples
    failed: list  # human-readable failure descriptions

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "eps": self.eps,
            "margins": {k: float(v) if np.isfinite(v) else None for k, v in self.margins.items()},
            "worst": {k: [int(t) + 1 for t in v] for k, v in self.worst.items()},
            "multiplier_violations": self.multiplier_violations,
            "sample_violations": self.sample_violations,
            "failed": self.failed,
        }


def _check_compatible(sys: SwitchedSystem, cert: Certificate) -> None:
    if (cert.N, cert.n) != (sys.N, sys.n):
        raise ShapeMismatch(f"certificate is for (N, n) = ({cert.N}, {cert.n}), "
                            f"system has ({sys.N}, {sys.n})")


def condition_margins(sys: SwitchedSystem, tau: float, pieces, mult: ScalarMultipliers,
                      kinds=CONDITION_KINDS):
    """Worst minimum eigenvalue (and its block index) per condition kind."""
    margins = {k: np.inf for k in kinds}
    worst = {k: () for k in kinds}
    for kind, idx, mat in condition_matrices(sys, tau, pieces, mult):
        if kind not in margins:
            continue
        lam = sym_eig(mat).values[0]
        if lam < margins[kind]:
            margins[kind], worst[kind] = float(lam), idx
    return margins, worst


def jump_margin(sys: SwitchedSystem, cert: Certificate, tau: float | None = None) -> float:
    """Worst jump-condition margin of ``cert`` re-evaluated at dwell ``tau``."""
    tau = cert.tau if tau is None else tau
    margins, _ = condition_margins(sys, tau, cert.pieces, cert.multipliers, kinds=("jump",))
    return margins["jump"]


def _multiplier_violations(mult: ScalarMultipliers) -> list:
    out = []
    if np.any(mult.alpha < 0):
        out.append("alpha has negative entries")
    if np.any(mult.gamma < 0):
        out.append("gamma has negative entries")
    sums = mult.gamma_sums()
    mask = np.ones(sums.shape, dtype=bool)
    for i in range(mult.N):
        mask[i, :, i] = False
    if np.any(sums[mask] >= 1.0):
        out.append(f"gamma row sums reach {float(np.max(sums[mask])):.6g} (must be < 1)")
    return out


def sample_check(sys: SwitchedSystem, cert: Certificate, samples: int = MC_SAMPLES,
                 slack: float = 0.0, seed: int = 0) -> dict:
    """Monte-Carlo check of the mode-wise Lyapunov conditions on the unit sphere.

    Counts sample points violating ``V_i(x) > 0``, ``D V_i(x; A_i x) < 0`` and
    ``V_j(exp(A_i tau) x) < V_i(x)``, each relaxed by ``slack * |x|^2``
    (``slack <= 0``).
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, sys.n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    pieces = cert.pieces
    maps = transition_maps(sys, cert.tau)
    # quad[i][k, r] = x_k^T P[i, r] x_k
    quad = np.einsum("ka,irab,kb->ikr", x, pieces, x)
    vmax = quad.max(axis=2)
    counts = {"positive": int(np.sum(vmax <= slack))}
    bad_decay = 0
    for i, a in enumerate(sys.modes):
        ax = x @ a.T
        deriv = 2.0 * np.einsum("ka,rab,kb->kr", x, pieces[i], ax)
        active = quad[i] >= vmax[i][:, None] - TIE_TOL * np.maximum(1.0, vmax[i])[:, None]
        d = np.where(active, deriv, -np.inf).max(axis=1)
        bad_decay += int(np.sum(d >= -slack))
    counts["decay"] = bad_decay
    bad_jump = 0
    for i in range(sys.N):
        y = x @ maps[i].T
        for j in range(sys.N):
            if j == i:
                continue
            vj = np.einsum("ka,rab,kb->kr", y, pieces[j], y).max(axis=1)
            bad_jump += int(np.sum(vj - vmax[i] >= -slack))
    counts["jump"] = bad_jump
    return counts


def verify_certificate(sys: SwitchedSystem, cert: Certificate, eps: float = 1e-8, *,
                       samples: int = MC_SAMPLES, seed: int = 0) -> VerificationReport:
    """Check a certificate without any solver.

    Passes iff every condition block has minimum eigenvalue ``>= eps``, the
    multipliers are admissible, and no Monte-Carlo sample violates the
    mode-wise Lyapunov inequalities. A negative ``eps`` relaxes both the
    eigenvalue threshold and the sample inequalities by the same amount.
    """
    _check_compatible(sys, cert)
    margins, worst = condition_margins(sys, cert.tau, cert.pieces, cert.multipliers)
    failed = []
    for kind in CONDITION_KINDS:
        if margins[kind] < eps:
            where = ", ".join(str(t + 1) for t in worst[kind])
            failed.append(f"{kind} condition violated: margin {margins[kind]:.6g} < {eps:g} at ({where})")
    mviol = _multiplier_violations(cert.multipliers)
    failed.extend(mviol)
    counts = {}
    if margins["pd"] > 0:
        counts = sample_check(sys, cert, samples, slack=min(eps, 0.0), seed=seed)
        for k, c in counts.items():
            if c:
                failed.append(f"{k} condition violated at {c} of {samples} samples")
    return VerificationReport(not failed, eps, margins, worst, mviol, counts, failed)
