"""Synthesis loop: m = 1 LMI baseline, path-following refinement, bisection on
the dwell time and escalation of the number of pieces per mode.

A failed check at some ``tau`` means the heuristic found nothing there, not
that no certificate exists; bisection treats it as the lower bracket end.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

from .linalg import expm, min_eigenvalue, spectral_radius
from .lmi.certificate import Certificate, duplicate_last_piece, verify_certificate
from .lmi.conditions import (ScalarMultipliers, assemble_delta, assemble_fixed_scalars,
                             multipliers_from, pieces_from)
from .lmi.problem import Feasibility, solve_feasibility
from .system import SwitchedSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CertifierConfig:
    tau_tol: float = 1e-4
    m_max: int = 8
    pf_max_iters: int = 50
    pf_stall: float = 1e-4
    pf_patience: int = 3
    trust_region: float = 0.2
    trust_region_scalar: float = 0.5
    max_halvings: int = 5
    rng_seed: int = 0
    eps: float = 1e-7
    eps_norm: float = 1.0
    kappa: float = 1e7
    perturbation: float = 1e-3
    tau_cap: float = 2.0 ** 10
    verify_samples: int = 10_000

    def __post_init__(self):
        for name in ("tau_tol", "m_max", "pf_max_iters", "pf_stall", "trust_region",
                     "trust_region_scalar", "eps", "eps_norm", "kappa", "tau_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_tol >= 1:
            raise ValueError("tau_tol must be below 1")

    def tolerances(self) -> dict:
        return {"eps": self.eps, "eps_norm": self.eps_norm, "kappa": self.kappa,
                "tau_tol": self.tau_tol, "gamma_sum_slack": 1e-6}


def _fixed(sys, tau, m, mult, cfg) -> Feasibility:
    prob = assemble_fixed_scalars(sys, tau, m, mult, eps_norm=cfg.eps_norm, kappa=cfg.kappa)
    return solve_feasibility(prob, cfg.eps)


def _certificate(sys, tau, pieces, mult, cfg, provenance) -> Certificate | None:
    """Normalize to ``min eig P = 1`` and return the certificate only if it verifies."""
    scale = min(min_eigenvalue(p) for p in pieces.reshape(-1, sys.n, sys.n))
    if scale <= 0:
        return None
    cert = Certificate(tau, pieces / scale, mult.projected(), sys.labels,
                       tolerances=cfg.tolerances(), provenance=provenance)
    report = verify_certificate(sys, cert, cfg.eps, samples=cfg.verify_samples)
    if not report.passed:
        log.debug("tau=%.6g m=%d: candidate rejected: %s", tau, cert.m, report.failed)
        return None
    cert.margins = dict(report.margins)
    return cert


def solve_m1(sys: SwitchedSystem, tau: float, cfg: CertifierConfig | None = None) -> Feasibility:
    """Single quadratic function per mode: a pure LMI with no multipliers."""
    return _fixed(sys, tau, 1, None, cfg or CertifierConfig())


def _m1_certificate(sys, tau, cfg) -> Certificate | None:
    feas = solve_m1(sys, tau, cfg)
    if not feas.feasible:
        return None
    prov = {"method": "lmi", "iterations": 0, "solves": 1}
    return _certificate(sys, tau, pieces_from(feas, sys.N, 1), ScalarMultipliers.zeros(sys.N, 1),
                        cfg, prov)


def lift(cert: Certificate, m: int, perturbation: float = 0.0, seed: int = 0) -> Certificate:
    """Duplicate pieces up to ``m`` per mode; perturb the copies multiplicatively."""
    if cert.m > m:
        raise ValueError(f"cannot lift an {cert.m}-piece certificate to {m} pieces")
    m0 = cert.m
    while cert.m < m:
        cert = duplicate_last_piece(cert)
    if perturbation and m > m0:
        rng = np.random.default_rng([seed, m0, m])
        pieces = cert.pieces.copy()
        for i in range(cert.N):
            for r in range(m0, m):
                p = pieces[i, r] * (1.0 + perturbation * rng.standard_normal(pieces[i, r].shape))
                pieces[i, r] = 0.5 * (p + p.T)
        cert = replace(cert, pieces=pieces)
    return cert


def _cold_start(sys, tau, cfg) -> Certificate | None:
    t = max(tau, 1.0)
    while t <= cfg.tau_cap:
        cert = _m1_certificate(sys, t, cfg)
        if cert is not None:
            return cert
        t *= 2.0
    return None


CONTINUATION_RETRIES = 3


def _multiplier_change(old: ScalarMultipliers, new: ScalarMultipliers) -> float:
    """Largest relative change of any multiplier entry."""
    diffs = [np.abs(b - a) / np.maximum(1.0, np.abs(a))
             for a, b in ((old.alpha, new.alpha), (old.gamma, new.gamma)) if a.size]
    return float(max((d.max() for d in diffs), default=0.0))


def check_tau_feasible(sys: SwitchedSystem, tau: float, m: int, warm: Certificate | None = None,
                       cfg: CertifierConfig | None = None) -> Certificate | None:
    """Try to certify dwell ``tau`` with ``m`` pieces per mode.

    Alternates a linearized step in (P, alpha, gamma) with a fresh LMI solve in
    P for the updated multipliers, until a verified certificate appears or the
    iteration stalls.
    """
    cfg = cfg or CertifierConfig()
    if m == 1:
        return _m1_certificate(sys, tau, cfg)
    start = warm if warm is not None else _cold_start(sys, tau, cfg)
    if start is None:
        return None
    return _continuation(sys, tau, m, start, cfg)


def _continuation(sys, tau, m, start, cfg) -> Certificate | None:
    """Walk the dwell time from ``start.tau`` down to ``tau``, one path-following run per stage.

    A longer dwell is never harder to certify, so a certificate from the previous
    stage is a good starting point for the next; a failed stage halves the step.
    """
    cur, failures = start, 0
    step = max(start.tau - tau, 0.0)
    while True:
        target = max(tau, cur.tau - step)
        cert = _path_follow(sys, target, m, cur, cfg)
        if cert is not None:
            if target <= tau:
                return cert
            cur = cert
            continue
        failures += 1
        step *= 0.5
        if failures > CONTINUATION_RETRIES or step < cfg.tau_tol:
            return None
        log.debug("tau=%.6g m=%d: stage at %.6g failed, step now %.3g", tau, m, target, step)


def _path_follow(sys, tau, m, start, cfg) -> Certificate | None:
    start = lift(start, m, cfg.perturbation, cfg.rng_seed)
    mult = start.multipliers.projected()
    pieces = start.pieces
    solves = 1
    feas = _fixed(sys, tau, m, mult, cfg)

    def prov(it):
        # no timings here: certificates must be reproducible byte for byte
        return {"method": "path-following", "iterations": it, "solves": solves}

    if feas.feasible:
        cert = _certificate(sys, tau, pieces_from(feas, sys.N, m), mult, cfg, prov(0))
        if cert is not None:
            return cert
    if feas.x is not None:
        pieces = pieces_from(feas, sys.N, m)
    t = feas.objective if feas.x is not None else math.inf
    stalls = 0
    for it in range(1, cfg.pf_max_iters + 1):
        rho, rho_s = cfg.trust_region, cfg.trust_region_scalar
        step = None
        for _ in range(cfg.max_halvings + 1):
            dprob = assemble_delta(sys, tau, m, pieces, mult, rho=rho, rho_s=rho_s,
                                   eps_norm=cfg.eps_norm, kappa=cfg.kappa)
            dfeas = solve_feasibility(dprob, cfg.eps)
            solves += 1
            if dfeas.x is not None:
                new_mult = multipliers_from(dfeas, sys.N, m, prefix="d", base=mult).projected()
                nfeas = _fixed(sys, tau, m, new_mult, cfg)
                solves += 1
                if nfeas.x is not None and (nfeas.objective <= t + cfg.pf_stall * max(1.0, abs(t))
                                            or not math.isfinite(t)):
                    step = new_mult, nfeas
                    break
            rho, rho_s = rho / 2.0, rho_s / 2.0
        if step is None:
            log.debug("tau=%.6g m=%d: no acceptable step at iteration %d", tau, m, it)
            return None
        moved = _multiplier_change(mult, step[0])
        mult, nfeas = step
        pieces = pieces_from(nfeas, sys.N, m)
        gain = (t - nfeas.objective) / abs(t) if math.isfinite(t) and t != 0 else math.inf
        t = nfeas.objective
        if nfeas.feasible:
            cert = _certificate(sys, tau, pieces, mult, cfg, prov(it))
            if cert is not None:
                return cert
        # the slack often plateaus while the multipliers are still travelling
        stalls = stalls + 1 if gain < cfg.pf_stall and moved < cfg.pf_stall else 0
        if stalls >= cfg.pf_patience:
            log.debug("tau=%.6g m=%d: stalled at t=%.6g after %d iterations", tau, m, t, it)
            return None
    return None


@dataclass
class BisectionResult:
    m: int
    tau: float | None
    certificate: Certificate | None
    status: str  # "ok" | "no_upper_bound"
    evaluations: list = field(default_factory=list)  # (tau, succeeded) in call order
    tau_lo: float = 0.0


def bisect_tau(sys: SwitchedSystem, m: int, cfg: CertifierConfig | None = None, *,
               warm: Certificate | None = None, warm_chain: bool = True,
               tau_lo: float = 0.0) -> BisectionResult:
    """Smallest certifiable dwell time for ``m`` pieces, within ``cfg.tau_tol``.

    ``tau_lo`` is a dwell time known not to be certifiable (e.g. a lower bound
    on the minimum dwell time); the bracket never goes below it.
    """
    cfg = cfg or CertifierConfig()
    evals = []

    def check(tau, w):
        cert = check_tau_feasible(sys, tau, m, w, cfg)
        evals.append((tau, cert is not None))
        log.info("m=%d tau=%.6f -> %s", m, tau, "certified" if cert is not None else "no certificate")
        return cert

    lo = max(0.0, tau_lo)
    if lo == 0.0:
        best = check(0.0, warm)
        if best is not None:
            return BisectionResult(m, 0.0, best, "ok", evals, 0.0)
    best = None
    if warm is not None and warm.tau > lo:
        hi = warm.tau
        best = check(hi, warm)
    if best is None:
        hi = 1.0
        while hi <= lo:
            hi *= 2.0
        while True:
            best = check(hi, warm)
            if best is not None:
                break
            lo = hi
            hi *= 2.0
            if hi > cfg.tau_cap:
                return BisectionResult(m, None, None, "no_upper_bound", evals, lo)
    while hi - lo > cfg.tau_tol:
        mid = 0.5 * (lo + hi)
        cert = check(mid, best if warm_chain else warm)
        if cert is not None:
            hi, best = mid, cert
        else:
            lo = mid
    return BisectionResult(m, hi, best, "ok", evals, lo)


def cyclic_orders(N: int, max_len: int = 4) -> list[tuple]:
    """Cycles of distinct modes, one representative per rotation class."""
    out = []
    for length in range(2, min(N, max_len) + 1):
        for perm in itertools.permutations(range(N), length):
            if perm[0] == min(perm):
                out.append(perm)
    return out


def cycle_spectral_radius(sys: SwitchedSystem, order, tau: float) -> float:
    prod = np.eye(sys.n)
    for i in order:
        prod = expm(sys.modes[i], tau) @ prod
    return spectral_radius(prod)


def _batched_radius(mats: np.ndarray) -> np.ndarray:
    if mats.shape[-1] == 2:
        half_tr = 0.5 * (mats[..., 0, 0] + mats[..., 1, 1])
        det = mats[..., 0, 0] * mats[..., 1, 1] - mats[..., 0, 1] * mats[..., 1, 0]
        disc = half_tr ** 2 - det
        root = np.sqrt(np.abs(disc))
        real_case = np.maximum(np.abs(half_tr + root), np.abs(half_tr - root))
        return np.where(disc >= 0, real_case, np.sqrt(np.abs(det)))
    return np.max(np.abs(np.linalg.eigvals(mats)), axis=-1)


class _CycleRadius:
    """``max rho(E_k(d_k) ... E_1(d_1))`` over durations ``d_i`` in ``[tau, tau + horizon]``.

    The feasible durations shrink as ``tau`` grows, so the value is
    non-increasing in ``tau``.
    """

    def __init__(self, sys: SwitchedSystem, order, horizon: float, budget: int = 40_000):
        self.sys, self.order, self.horizon = sys, tuple(order), horizon
        pts = max(6, int(round(budget ** (1.0 / len(order)))))
        self.offsets = np.linspace(0.0, horizon, pts)
        self.tables = {i: np.stack([expm(sys.modes[i], d) for d in self.offsets]) for i in set(order)}

    def _product(self, durations) -> np.ndarray:
        prod = np.eye(self.sys.n)
        for i, d in zip(self.order, durations):
            prod = expm(self.sys.modes[i], d) @ prod
        return prod

    def __call__(self, tau: float) -> float:
        n = self.sys.n
        prod = np.eye(n)[None]
        for i in self.order:
            step = np.einsum("ab,kbc->kac", expm(self.sys.modes[i], tau), self.tables[i])
            prod = np.einsum("kab,lbc->klac", step, prod).reshape(-1, n, n)
        radii = _batched_radius(prod)
        flat = int(np.argmax(radii))
        idx = np.unravel_index(flat, (len(self.offsets),) * len(self.order))
        start = tau + self.offsets[list(reversed(idx))]
        bounds = [(tau, tau + self.horizon)] * len(self.order)
        res = optimize.minimize(lambda d: -spectral_radius(self._product(np.clip(d, tau, tau + self.horizon))),
                                start, method="Powell", bounds=bounds,
                                options={"xtol": 1e-9, "ftol": 1e-13})
        return max(float(radii[flat]), -float(res.fun))


def dwell_lower_bound(sys: SwitchedSystem, tau_tol: float = 1e-7, *, horizon: float = 5.0,
                      cap: float = 2.0 ** 10) -> float:
    """Lower bound on the minimum dwell time from periodic switching.

    A periodic signal that visits a cycle of distinct modes, staying at least
    ``tau`` in each, is admissible for dwell ``tau``; if its one-period
    transition matrix has spectral radius ``>= 1`` for some durations, the
    system is not stable at that dwell. The bound is the largest such ``tau``
    over all cycles (durations searched up to ``tau + horizon``).
    """
    if sys.N == 1:
        return 0.0
    best = 0.0
    for order in cyclic_orders(sys.N):
        f = _CycleRadius(sys, order, horizon)
        lo, hi = 0.0, 1.0
        while f(hi) >= 1.0:
            lo, hi = hi, 2.0 * hi
            if hi > cap:
                return cap
        while hi - lo > tau_tol:
            mid = 0.5 * (lo + hi)
            if f(mid) >= 1.0:
                lo = mid
            else:
                hi = mid
        best = max(best, lo)
    return best


@dataclass
class EscalationEntry:
    m: int
    tau_raw: float | None  # this m's own bisection result
    tau: float  # min over m' <= m
    certificate: Certificate | None
    evaluations: list
    wall_time: float


@dataclass
class EscalationReport:
    entries: list
    stop_reason: str  # "converged" | "m_max" | "infeasible"
    lower_bound: float
    config: CertifierConfig

    @property
    def tau_bar(self) -> float | None:
        return self.entries[-1].tau if self.entries else None

    @property
    def taus(self) -> list:
        return [e.tau for e in self.entries]

    @property
    def best(self) -> Certificate | None:
        certs = [e.certificate for e in self.entries if e.certificate is not None]
        return min(certs, key=lambda c: (c.tau, c.m)) if certs else None

    def to_dict(self) -> dict:
        return {
            "entries": [{"m": e.m, "tau_raw": e.tau_raw, "tau": e.tau if math.isfinite(e.tau) else None,
                         "certified": e.certificate is not None,
                         "evaluations": [[t, ok] for t, ok in e.evaluations]} for e in self.entries],
            "stop_reason": self.stop_reason,
            "tau_bar": self.tau_bar,
            "lower_bound": self.lower_bound,
            "config": asdict(self.config),
        }


def escalate_m(sys: SwitchedSystem, cfg: CertifierConfig | None = None, *,
               stop_early: bool = True) -> EscalationReport:
    """Run the bisection for m = 1, 2, ... with warm starts from the best certificate so far.

    Stops when two consecutive reported bounds agree within ``tau_tol``
    (unless ``stop_early`` is false) or at ``m_max``.
    """
    cfg = cfg or CertifierConfig()
    lower = dwell_lower_bound(sys)
    tau_lo = max(0.0, lower - cfg.tau_tol)
    entries: list[EscalationEntry] = []
    best: Certificate | None = None
    stop = "m_max"
    for m in range(1, cfg.m_max + 1):
        t0 = time.perf_counter()
        res = bisect_tau(sys, m, cfg, warm=best, tau_lo=tau_lo)
        if res.certificate is not None and (best is None or res.tau < best.tau):
            best = res.certificate
        if best is None:
            entries.append(EscalationEntry(m, None, math.inf, None, res.evaluations,
                                           time.perf_counter() - t0))
            stop = "infeasible"
            break
        entries.append(EscalationEntry(m, res.tau, best.tau, res.certificate, res.evaluations,
                                       time.perf_counter() - t0))
        log.info("m=%d: tau_raw=%s tau=%.6f", m, res.tau, best.tau)
        if best.tau == 0.0:
            stop = "converged"
            break
        if stop_early and len(entries) > 1 and abs(entries[-1].tau - entries[-2].tau) <= cfg.tau_tol:
            stop = "converged"
            break
    taus = [e.tau for e in entries]
    assert all(a >= b for a, b in zip(taus, taus[1:])), "reported bounds must be non-increasing"
    return EscalationReport(entries, stop, lower, cfg)
