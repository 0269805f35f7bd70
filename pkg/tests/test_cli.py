import json
import math
import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dwellcert import io as dio
from dwellcert.cli import main
from dwellcert.lmi import Certificate, ScalarMultipliers

from conftest import PRINTED_P, write_system

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def bench_file(tmp_path, bench):
    path = tmp_path / "bench.json"
    dio.save_system(bench, path)
    return str(path)


@pytest.fixture(scope="module")
def certified(tmp_path_factory, bench):
    d = tmp_path_factory.mktemp("certify")
    sysf = d / "bench.json"
    dio.save_system(bench, sysf)
    code = main(["certify", "--system", str(sysf), "--m-max", "1",
                 "--out", str(d / "cert.json"), "--report", str(d / "report.json")])
    return code, d


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def parse_points(text):
    return np.array([[float(v) for v in p.split(",")] for p in text.split()])


def path_points(d):
    return np.array([[float(a), float(b)] for a, b in re.findall(r"[ML]([-\d.e+]+),([-\d.e+]+)", d)])


class TestCertify:
    def test_writes_certificate_and_report(self, certified):
        code, d = certified
        assert code == 0
        rep = json.loads((d / "report.json").read_text())
        assert rep["lower_bound"] == pytest.approx(2.7078, abs=1e-3)
        assert rep["entries"][0]["m"] == 1
        assert rep["entries"][0]["tau"] == pytest.approx(2.75090, abs=5e-3)
        cert = dio.load_certificate(d / "cert.json")
        assert cert.m == 1 and cert.tau == rep["entries"][0]["tau"]

    def test_single_mode(self, tmp_path, capsys):
        sysf = tmp_path / "one.json"
        write_system(sysf, [[[-1.0, 2.0], [0.0, -3.0]]])
        code, out, _ = run(["certify", "--system", str(sysf)], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["tau"] == 0.0 and doc["m"] == 1

    def test_malformed_input(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 2, "modes": [{"A": [[0, 1], [-1, -1]], "B": 0}]}')
        code, _, err = run(["certify", "--system", str(bad)], capsys)
        assert code == 1 and "'B'" in err
        bad.write_text('{"n": 2,\n "modes": [}')
        code, _, err = run(["certify", "--system", str(bad)], capsys)
        assert code == 1 and "line 2" in err
        code, _, err = run(["certify", "--system", str(tmp_path / "missing.json")], capsys)
        assert code == 1

    def test_non_hurwitz_reports_eigenvalues(self, tmp_path, capsys):
        bad = tmp_path / "unstable.json"
        bad.write_text('{"n": 1, "modes": [{"name": "up", "A": [[0.5]]}]}')
        code, _, err = run(["certify", "--system", str(bad)], capsys)
        assert code == 1 and "0.5" in err

    def test_no_certificate(self, tmp_path, capsys, monkeypatch):
        import dwellcert.certifier as certifier

        sysf = tmp_path / "pair.json"
        write_system(sysf, [[[-0.01, 1.0], [-100.0, -0.01]], [[-0.01, 100.0], [-1.0, -0.01]]])
        original = certifier.CertifierConfig
        monkeypatch.setattr("dwellcert.cli.CertifierConfig",
                            lambda **kw: original(**kw, tau_cap=2.0))
        monkeypatch.setattr("dwellcert.cli.escalate_m",
                            lambda s, c, stop_early: certifier.escalate_m(s, c, stop_early=stop_early))
        monkeypatch.setattr(certifier, "dwell_lower_bound", lambda s: 0.5)
        code, out, err = run(["certify", "--system", str(sysf), "--report", str(tmp_path / "r.json")],
                             capsys)
        assert code == 2 and out == ""
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["stop_reason"] == "infeasible" and "lower_bound" in rep


class TestVerify:
    def test_roundtrip_passes(self, certified, capsys):
        _, d = certified
        code, out, _ = run(["verify", "--system", str(d / "bench.json"), "--cert", str(d / "cert.json")], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["passed"] and set(rep["margins"]) == {"pd", "decay", "jump"}

    def test_reduced_tau_names_jump(self, certified, tmp_path, capsys):
        _, d = certified
        cert = dio.load_certificate(d / "cert.json")
        dio.save_certificate(cert.with_tau(cert.tau - 0.5), tmp_path / "short.json")
        code, out, err = run(["verify", "--system", str(d / "bench.json"),
                              "--cert", str(tmp_path / "short.json")], capsys)
        assert code == 3
        assert "jump condition violated" in err
        assert json.loads(out)["margins"]["jump"] < 0

    def test_mode_mismatch_is_input_error(self, certified, tmp_path, capsys):
        _, d = certified
        sysf = tmp_path / "other.json"
        write_system(sysf, [[[-1.0, 0.0], [0.0, -1.0]], [[-2.0, 0.0], [0.0, -2.0]]], names=["p", "q"])
        code, _, err = run(["verify", "--system", str(sysf), "--cert", str(d / "cert.json")], capsys)
        assert code == 1 and "modes" in err

    def _printed(self, tmp_path, tau):
        cert = Certificate(tau, PRINTED_P, ScalarMultipliers.zeros(2, 4))
        path = tmp_path / f"printed-{tau}.json"
        dio.save_certificate(cert, path)
        return str(path)

    def test_printed_matrices_with_searched_multipliers(self, bench_file, tmp_path, capsys):
        cert = self._printed(tmp_path, 2.70801)
        code, out, _ = run(["verify", "--system", bench_file, "--cert", cert, "--find-scalars",
                            "--eps=-1e-2"], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["margins"]["jump"] > -1e-3

    def test_printed_matrices_at_table_value(self, bench_file, tmp_path, capsys):
        # the three-decimal matrices leave a margin near -0.02 at this dwell
        cert = self._printed(tmp_path, 2.70781)
        code, out, err = run(["verify", "--system", bench_file, "--cert", cert, "--find-scalars",
                              "--eps=-1e-2"], capsys)
        rep = json.loads(out)
        assert code == 3 and "jump" in err
        assert rep["margins"]["jump"] == pytest.approx(-0.0205, abs=1e-3)


class TestSimulate:
    def test_reference_trajectory(self, certified, capsys, bench):
        _, d = certified
        code, out, _ = run(["simulate", "--system", str(d / "bench.json"), "--cert", str(d / "cert.json"),
                            "--x0", "0.0689,0.0119", "--tau", "2.70781", "--order", "1,2",
                            "--horizon", "30", "--dt", "0.01"], capsys)
        assert code == 0
        rows = out.splitlines()
        assert rows[0] == "t,x1,x2,mode,V"
        first = rows[1].split(",")
        assert first[:4] == ["0.0", "0.0689", "0.0119", "1"]
        t = np.array([float(r.split(",")[0]) for r in rows[1:]])
        modes = [int(r.split(",")[3]) for r in rows[1:]]
        switch = t[1:][np.diff(modes) != 0]
        assert np.allclose(switch, 2.70781 * np.arange(1, len(switch) + 1), atol=1e-12)
        assert len(switch) == math.floor(30 / 2.70781)

    def test_horizon_zero(self, bench_file, capsys):
        code, out, _ = run(["simulate", "--system", bench_file, "--x0", "1,2", "--tau", "1",
                            "--horizon", "0"], capsys)
        assert code == 0 and len(out.splitlines()) == 2

    def test_decay_rate(self, tmp_path, capsys):
        sysf = tmp_path / "neg.json"
        write_system(sysf, [[[-1.0, 0.0], [0.0, -1.0]]])
        cert = tmp_path / "id.json"
        dio.save_certificate(Certificate(0.0, np.eye(2)[None, None], ScalarMultipliers.zeros(1, 1)), cert)
        h = math.log(2) / 2
        code, out, _ = run(["simulate", "--system", str(sysf), "--cert", str(cert), "--x0", "0.6,0.8",
                            "--tau", "1", "--order", "1", "--horizon", str(6 * h), "--dt", str(h)], capsys)
        assert code == 0
        v = np.array([float(r.split(",")[-1]) for r in out.splitlines()[1:]])
        assert np.allclose(v[1:] / v[:-1], 0.5, rtol=1e-12)

    def test_dimension_mismatch(self, bench_file, capsys):
        code, _, err = run(["simulate", "--system", bench_file, "--x0", "1,2,3", "--tau", "1"], capsys)
        assert code == 1 and "dimension" in err
        code, _, err = run(["simulate", "--system", bench_file, "--x0", "1,x", "--tau", "1"], capsys)
        assert code == 1
        code, _, err = run(["simulate", "--system", bench_file, "--x0", "1,2", "--tau", "1",
                            "--order", "1,3"], capsys)
        assert code == 1


class TestPlot:
    def test_identity_gives_unit_circle(self, tmp_path, capsys):
        sysf = tmp_path / "neg.json"
        write_system(sysf, [[[-1.0, 0.0], [0.0, -1.0]]])
        cert = tmp_path / "id.json"
        dio.save_certificate(Certificate(0.0, np.eye(2)[None, None], ScalarMultipliers.zeros(1, 1)), cert)
        code, out, _ = run(["plot", "--system", str(sysf), "--cert", str(cert)], capsys)
        assert code == 0
        root = ET.fromstring(out.encode())
        paths = [p for p in root.iter(SVG + "path") if p.get("class") == "level-set"]
        assert len(paths) == 1
        d = paths[0].get("d")
        assert d.endswith("Z")
        pts = path_points(d)
        assert len(pts) == 720
        assert np.abs(np.hypot(pts[:, 0], pts[:, 1]) - 1.0).max() <= 1e-6

    def test_benchmark_with_trajectory(self, certified, tmp_path, capsys):
        _, d = certified
        args = ["--system", str(d / "bench.json"), "--cert", str(d / "cert.json")]
        csv_path = tmp_path / "traj.csv"
        assert main(["simulate", *args, "--x0", "0.0689,0.0119", "--horizon", "20", "--dt", "0.05",
                     "--csv", str(csv_path)]) == 0
        code, out, _ = run(["plot", *args, "--traj", str(csv_path), "--dirs", "180"], capsys)
        assert code == 0
        root = ET.fromstring(out.encode())
        paths = [p for p in root.iter(SVG + "path") if p.get("class") == "level-set"]
        assert [p.get("data-mode") for p in paths] == ["A1", "A2"]
        assert all(len(path_points(p.get("d"))) == 180 for p in paths)
        group = next(g for g in root.iter(SVG + "g") if g.get("id") == "state-plane")
        tx, ty, sx, sy = map(float, re.findall(r"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?", group.get("transform")))
        line = next(p for p in group.iter(SVG + "polyline") if p.get("class") == "trajectory")
        pts = parse_points(line.get("points"))
        px, py = tx + sx * pts[:, 0], ty + sy * pts[:, 1]
        assert px.min() >= 40 and px.max() <= 440 and py.min() >= 40 and py.max() <= 440
        # the trajectory starts on the drawn level set of the initial mode
        first = path_points(paths[0].get("d"))
        r0 = np.hypot(*pts[0])
        ang = math.atan2(pts[0][1], pts[0][0]) % (2 * math.pi)
        k = int(round(ang / (2 * math.pi) * 180)) % 180
        assert np.hypot(*first[k]) == pytest.approx(r0, rel=2e-2)
        assert sum(1 for ln in root.iter(SVG + "line") if ln.get("class") == "switch") == 7
        assert any(p.get("class") == "lyapunov-trace" for p in root.iter(SVG + "polyline"))

    def test_requires_planar_system(self, tmp_path, capsys):
        sysf = tmp_path / "three.json"
        write_system(sysf, [-np.eye(3)])
        cert = tmp_path / "c.json"
        dio.save_certificate(Certificate(0.0, np.eye(3)[None, None], ScalarMultipliers.zeros(1, 1)), cert)
        code, _, err = run(["plot", "--system", str(sysf), "--cert", str(cert)], capsys)
        assert code == 1 and "n = 2" in err


def test_outputs_are_byte_identical(certified, tmp_path):
    _, d = certified
    args = ["--system", str(d / "bench.json")]
    outs = []
    for k in range(2):
        sub = tmp_path / str(k)
        sub.mkdir()
        assert main(["certify", *args, "--m-max", "2", "--tau-tol", "1e-3", "--seed", "7",
                     "--out", str(sub / "c.json"), "--report", str(sub / "r.json")]) == 0
        assert main(["simulate", *args, "--cert", str(sub / "c.json"), "--x0", "1,0", "--horizon", "10",
                     "--csv", str(sub / "t.csv")]) == 0
        assert main(["plot", *args, "--cert", str(sub / "c.json"), "--traj", str(sub / "t.csv"),
                     "--out", str(sub / "p.svg")]) == 0
        outs.append([(sub / f).read_bytes() for f in ("c.json", "r.json", "t.csv", "p.svg")])
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    sysf = tmp_path / "one.json"
    write_system(sysf, [[[-2.0]]])
    proc = subprocess.run([sys.executable, "-m", "dwellcert", "certify", "--system", str(sysf)],
                          capture_output=True, text=True, env={"DWELLCERT_THREADS": "1", "PATH": ""})
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["tau"] == 0.0
