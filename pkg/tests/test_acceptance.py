"""Acceptance gate: each test checks one criterion at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary (see
conftest.py) and also to stdout (visible with ``-s``).
"""
import math
import time

import numpy as np
import pytest

import dwellcert.certifier as certifier
from dwellcert import io as dio
from dwellcert.certifier import CertifierConfig, dwell_lower_bound, escalate_m
from dwellcert.cli import main
from dwellcert.linalg import expm, sym_eig
from dwellcert.lmi import Certificate, duplicate_last_piece, verify_certificate
from dwellcert.lmi.certificate import jump_margin
from dwellcert.lmi.problem import LINEAR_TOL
from dwellcert.lyapunov import PiecewiseQuadratic, directional_derivative, eval_vmax
from dwellcert.simulator import monitor_lyapunov, periodic_schedule, simulate
from dwellcert.system import SwitchedSystem

from conftest import common_lyapunov_pair, random_spd

RESULTS = {}


def record(k, ok, detail):
    RESULTS[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


class SolverAudit:
    """Wraps the feasibility oracle and re-checks every feasible answer it returns."""

    def __init__(self, inner):
        self.inner = inner
        self.feasible = 0
        self.total = 0
        self.discrepancies = []

    def __call__(self, prob, *args, **kwargs):
        res = self.inner(prob, *args, **kwargs)
        self.total += 1
        if res.feasible:
            self.feasible += 1
            eps = args[0] if args else kwargs.get("eps", 1e-7)
            for b in prob.blocks:
                mat = b.expr.value(res.x)
                need = max(eps, b.margin)
                lam = sym_eig(mat).values[0]
                lam_np = np.linalg.eigvalsh(mat)[0]
                if lam < need or lam_np < need - 1e-12 * max(1.0, np.abs(mat).max()):
                    self.discrepancies.append((b.label, lam, lam_np, need))
            for lc in prob.linear:
                if lc.value(res.x) < -LINEAR_TOL * max(1.0, abs(lc.const)):
                    self.discrepancies.append((lc.label, lc.value(res.x)))
        return res


@pytest.fixture(scope="module")
def run(bench):
    audit = SolverAudit(certifier.solve_feasibility)
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(certifier, "solve_feasibility", audit)
        t0 = time.perf_counter()
        report = escalate_m(bench, CertifierConfig(m_max=4), stop_early=False)
        elapsed = time.perf_counter() - t0
    return report, audit, elapsed


def cumulative_time(report, m):
    return sum(e.wall_time for e in report.entries if e.m <= m)


def test_criterion_1_single_quadratic(run):
    report, _, _ = run
    e = report.entries[0]
    ok = e.m == 1 and abs(e.tau_raw - 2.75090) <= 5e-3 and e.wall_time <= 30
    record(1, ok, f"tau_[1] = {e.tau_raw:.6f} (target 2.75090 +- 5e-3), {e.wall_time:.1f} s")


def test_criterion_2_two_pieces(run):
    report, _, _ = run
    e = report.entries[1]
    t = cumulative_time(report, 2)
    ok = e.m == 2 and e.tau <= 2.715 and t <= 300
    record(2, ok, f"tau_[2] = {e.tau:.6f} (<= 2.715), {t:.1f} s")


def test_criterion_3_four_pieces_and_cli_verify(run, bench, tmp_path, capsys):
    report, _, _ = run
    e = report.entries[3]
    t = cumulative_time(report, 4)
    best = report.best
    sysf, certf = tmp_path / "sys.json", tmp_path / "cert.json"
    dio.save_system(bench, sysf)
    dio.save_certificate(best, certf)
    code = main(["verify", "--system", str(sysf), "--cert", str(certf), "--eps", "1e-8"])
    capsys.readouterr()
    ok = e.m == 4 and e.tau <= 2.710 and best.tau == e.tau and code == 0 and t <= 900
    record(3, ok, f"min tau over m <= 4 = {e.tau:.6f} (<= 2.710), verify exit {code}, {t:.1f} s")


def test_criterion_4_lower_bound(run, bench):
    report, _, _ = run
    lb = dwell_lower_bound(bench)
    taus = [e.tau for e in report.entries]
    ok = abs(lb - 2.7078) <= 1e-3 and all(t >= lb - 1e-3 for t in taus) and report.lower_bound == lb
    record(4, ok, f"lower bound {lb:.6f} (2.7078 +- 1e-3), bounds {[round(t, 6) for t in taus]}")


def test_criterion_5_trajectory(run, bench):
    report, _, _ = run
    cert = report.entries[3].certificate or report.best
    tau = report.entries[3].tau
    sched = periodic_schedule(tau, (0, 1), 14 * tau)
    traj = simulate(bench, sched, [0.0689, 0.0119], 0.01, tau=tau)
    mon = monitor_lyapunov(cert, traj)
    run_len = mon.longest_decreasing_run()
    ok = run_len >= 10 and mon.interval_monotone
    record(5, ok, f"{run_len} consecutive decreasing switch values over {len(mon.switch_values) - 1} switches")


def test_criterion_6_longer_dwell_recheck(run, bench):
    report, _, _ = run
    rows = []
    for e in report.entries:
        c = e.certificate
        if c is None:
            continue
        rows.append((e.m, [jump_margin(bench, c, c.tau + d) for d in (0.01, 0.1, 1.0)]))
    worst = min(min(v) for _, v in rows)
    detail = "; ".join(f"m={m}: " + ", ".join(f"{x:.3g}" for x in v) for m, v in rows)
    record(6, worst >= 0.0, f"jump margins at tau + (0.01, 0.1, 1.0): {detail}")


def test_criterion_7_duplicate_piece(run, bench):
    report, _, _ = run
    certs = [e.certificate for e in report.entries if e.certificate is not None]
    outcomes = []
    for c in certs:
        assert verify_certificate(bench, c, 1e-8).passed
        up = duplicate_last_piece(c)
        outcomes.append((c.m, verify_certificate(bench, up, 1e-8).passed))
    record(7, all(ok for _, ok in outcomes) and len(outcomes) == 4,
           "lifted m -> m+1: " + ", ".join(f"{m}->{m + 1} {'ok' if ok else 'fails'}" for m, ok in outcomes))


def test_criterion_8_trivial_gates():
    cfg = CertifierConfig()
    single = escalate_m(SwitchedSystem((np.array([[-0.5, 4.0], [-1.0, -0.5]]),)), cfg)
    s_ok = single.best is not None and single.best.tau == 0.0 and single.best.m == 1
    pair_taus = []
    for seed in range(3):
        sys, _ = common_lyapunov_pair(np.random.default_rng(100 + seed))
        rep = escalate_m(sys, cfg)
        pair_taus.append(rep.best.tau if rep.best is not None else math.inf)
    p_ok = all(t <= cfg.tau_tol for t in pair_taus)
    record(8, s_ok and p_ok, f"single mode tau = {single.best.tau if single.best else None}, "
                             f"common-Lyapunov pairs tau = {pair_taus}")


def test_criterion_9_oracle_independence(run):
    _, audit, _ = run
    ok = audit.feasible > 0 and not audit.discrepancies
    record(9, ok, f"{audit.feasible} feasible of {audit.total} solver results re-checked, "
                  f"{len(audit.discrepancies)} discrepancies")


def test_criterion_10_numerical_kernels():
    rng = np.random.default_rng(10)
    worst = {"semigroup": 0.0, "inverse": 0.0, "eig": 0.0}
    for _ in range(200):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal((n, n))
        s, t = rng.uniform(0, 3, 2)
        es, et, emt = expm(a, s), expm(a, t), expm(a, -t)
        worst["semigroup"] = max(worst["semigroup"], np.abs(es @ et - expm(a, s + t)).max()
                                 / (np.linalg.norm(es, 2) * np.linalg.norm(et, 2)))
        worst["inverse"] = max(worst["inverse"], np.abs(et @ emt - np.eye(n)).max()
                               / (np.linalg.norm(et, 2) * np.linalg.norm(emt, 2)))
        m = rng.standard_normal((n, n)) * rng.uniform(0.1, 100)
        m = (m + m.T) / 2
        vals, vecs = sym_eig(m)
        worst["eig"] = max(worst["eig"], np.abs(vecs @ np.diag(vals) @ vecs.T - m).max() / max(1.0, np.abs(m).max()))
    fd_ok = 0
    for _ in range(100):
        n, k = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        v = PiecewiseQuadratic(np.array([random_spd(rng, n) for _ in range(k)]))
        a = rng.standard_normal((n, n))
        x = rng.standard_normal(n)
        d = directional_derivative(v, a, x)
        errs = [abs((eval_vmax(v, expm(a, h) @ x) - eval_vmax(v, x)) / h - d) for h in (1e-4, 5e-5)]
        scale = max(1.0, abs(d), eval_vmax(v, x) * np.linalg.norm(a) ** 2)
        fd_ok += errs[0] <= 50 * 1e-4 * scale and errs[1] <= 0.75 * errs[0] + 1e-9 * scale
    ok = max(worst.values()) <= 1e-9 and fd_ok == 100
    record(10, ok, "expm semigroup {semigroup:.1e}, inverse {inverse:.1e}, sym_eig reconstruction {eig:.1e}; "
                   .format(**worst) + f"finite differences {fd_ok}/100")
