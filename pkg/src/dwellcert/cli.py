"""Command-line interface: ``dwellcert {certify,verify,simulate,plot}``.

Exit codes: 0 success, 1 input error, 2 no certificate found,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys as _sys

import numpy as np

from . import io as dio
from .certifier import CertifierConfig, dwell_lower_bound, escalate_m
from .errors import DwellCertError
from .lmi import assemble_fixed_P, multipliers_from, solve_feasibility, verify_certificate
from .lmi.certificate import Certificate
from .lyapunov import PiecewiseQuadratic, eval_vmax, level_set_boundary
from .simulator import monitor_lyapunov, periodic_schedule, simulate
from .svg import render

EXIT_OK, EXIT_INPUT, EXIT_NO_CERT, EXIT_VERIFY = 0, 1, 2, 3
log = logging.getLogger("dwellcert")


class InputError(Exception):
    pass


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        _sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _reals(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def _load_system(path):
    try:
        return dio.load_system(path)
    except OSError as exc:
        raise InputError(f"cannot read system file: {exc}") from exc


def _load_cert(path, system) -> Certificate:
    try:
        cert = dio.load_certificate(path)
    except OSError as exc:
        raise InputError(f"cannot read certificate file: {exc}") from exc
    if (cert.N, cert.n) != (system.N, system.n):
        raise InputError(f"certificate is for N={cert.N}, n={cert.n}; system has N={system.N}, n={system.n}")
    if tuple(cert.labels) != tuple(system.labels):
        raise InputError(f"certificate modes {list(cert.labels)} do not match system modes {list(system.labels)}")
    return cert


def cmd_certify(args) -> int:
    system = _load_system(args.system)
    cfg = CertifierConfig(tau_tol=args.tau_tol, m_max=args.m_max, rng_seed=args.seed,
                          pf_max_iters=args.pf_max_iters)
    report = escalate_m(system, cfg, stop_early=not args.no_early_stop)
    doc = report.to_dict()
    best = report.best
    if best is not None:
        doc["certificate"] = {"tau": best.tau, "m": best.m}
    if args.report:
        _write(json.dumps(doc, indent=2) + "\n", args.report)
    for e in report.entries:
        log.info("m=%d tau_raw=%s tau=%s", e.m, e.tau_raw, e.tau)
    print(f"lower bound {report.lower_bound:.6f}; bounds "
          + ", ".join(f"m={e.m}: {e.tau:.6f}" for e in report.entries)
          + f"; stop: {report.stop_reason}", file=_sys.stderr)
    if best is None:
        return EXIT_NO_CERT
    _write(dio.dumps_certificate(best), args.out)
    return EXIT_OK


def _find_scalars(system, cert: Certificate) -> Certificate:
    feas = solve_feasibility(assemble_fixed_P(system, cert.tau, cert.pieces))
    if feas.x is None:
        raise InputError(f"multiplier search failed ({feas.solver_status})")
    mult = multipliers_from(feas, cert.N, cert.m).projected()
    return Certificate(cert.tau, cert.pieces, mult, cert.labels, {}, cert.tolerances,
                       dict(cert.provenance, multipliers="fixed-P search"))


def cmd_verify(args) -> int:
    system = _load_system(args.system)
    cert = _load_cert(args.cert, system)
    if args.find_scalars:
        cert = _find_scalars(system, cert)
    report = verify_certificate(system, cert, args.eps)
    doc = report.to_dict()
    doc["tau"] = cert.tau
    doc["m"] = cert.m
    _write(json.dumps(doc, indent=2) + "\n", args.report)
    for line in report.failed:
        print(line, file=_sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_simulate(args) -> int:
    system = _load_system(args.system)
    cert = _load_cert(args.cert, system) if args.cert else None
    x0 = np.array(_reals(args.x0, "--x0"))
    if x0.shape != (system.n,):
        raise InputError(f"--x0 has {x0.size} entries, system dimension is {system.n}")
    tau = args.tau if args.tau is not None else (cert.tau if cert is not None else None)
    if tau is None:
        raise InputError("--tau is required without --cert")
    order = [int(v) - 1 for v in _reals(args.order, "--order")]
    if any(not 0 <= i < system.N for i in order):
        raise InputError(f"--order entries must lie in 1..{system.N}")
    if args.horizon == 0:
        sched = periodic_schedule(max(tau, 1.0), order[:1], 0.0)
    else:
        sched = periodic_schedule(tau, order, args.horizon)
    traj = simulate(system, sched, x0, args.dt)
    trace = monitor_lyapunov(cert, traj).trace if cert is not None else None
    _write(dio.trajectory_csv(traj, trace), args.csv)
    return EXIT_OK


def cmd_plot(args) -> int:
    system = _load_system(args.system)
    if system.n != 2:
        raise InputError(f"level-set plots need n = 2, system has n = {system.n}")
    cert = _load_cert(args.cert, system)
    traj = dio.read_trajectory_csv(args.traj) if args.traj else None
    funcs = [PiecewiseQuadratic(p) for p in cert.pieces]
    level = 1.0
    if traj is not None and len(traj["t"]):
        # draw the level set through the trajectory's initial point
        level = eval_vmax(funcs[int(traj["mode"][0])], traj["x"][0])
    sets = [(lab, np.sqrt(level) * level_set_boundary(v, args.dirs)) for lab, v in zip(cert.labels, funcs)]
    trace = None
    if traj is not None and traj["V"] is not None:
        switches = [t for t, a, b in zip(traj["t"][1:], traj["mode"][:-1], traj["mode"][1:]) if a != b]
        trace = (traj["t"], traj["V"], switches)
    _write(render(sets, None if traj is None else traj["x"], trace), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dwellcert", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="synthesize a certificate and the sequence of dwell bounds")
    c.add_argument("--system", required=True)
    c.add_argument("--m-max", type=int, default=8)
    c.add_argument("--tau-tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--pf-max-iters", type=int, default=50)
    c.add_argument("--no-early-stop", action="store_true",
                   help="run every m up to --m-max even after the bounds settle")
    c.add_argument("--out")
    c.add_argument("--report")
    c.set_defaults(func=cmd_certify)

    v = sub.add_parser("verify", help="check a certificate against a system")
    v.add_argument("--system", required=True)
    v.add_argument("--cert", required=True)
    v.add_argument("--eps", type=float, default=1e-8)
    v.add_argument("--find-scalars", action="store_true",
                   help="ignore stored multipliers and search for them with P fixed")
    v.add_argument("--report")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="simulate under periodic switching and write CSV")
    s.add_argument("--system", required=True)
    s.add_argument("--cert")
    s.add_argument("--x0", required=True)
    s.add_argument("--tau", type=float)
    s.add_argument("--order", default="1,2")
    s.add_argument("--horizon", type=float, default=30.0)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("plot", help="render level sets (and a trajectory) to SVG")
    g.add_argument("--system", required=True)
    g.add_argument("--cert", required=True)
    g.add_argument("--traj")
    g.add_argument("--out")
    g.add_argument("--dirs", type=int, default=720)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=_sys.stderr)
    threads = os.environ.get("DWELLCERT_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return args.func(args)
        return args.func(args)
    except (InputError, DwellCertError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
