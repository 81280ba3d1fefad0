import json
import subprocess
import sys

import numpy as np
import pytest

from subflow.cli import EXIT_FIT, EXIT_OK, EXIT_OVERFLOW, EXIT_VALIDATION, main, read_csv_meta, resolve_config
from synth import BASE_CASE, synthetic

SMALL_FD = ["--nx", "200", "--dx", str(0.3 / 199), "--dt", "1e-4", "--t-end", "0.02", "--times", "0.01,0.015,0.02"]


def run(*args):
    return main([str(a) for a in args])


def profile_csv(tmp_path, prof, name="data.csv"):
    lines = [f"# time={prof.time!r}", f"# amplitude={prof.amplitude!r}", f"# bc={prof.bc.value}", "x,u"]
    lines += [f"{float(x)!r},{float(u)!r}" for x, u in zip(prof.x, prof.u)]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


class TestSelfsim:
    def test_classical_sqrt(self, tmp_path):
        assert run("selfsim", "--alpha", 1, "--m", 2, "--N", 1, "--out", tmp_path) == EXIT_OK
        meta, header, rows = read_csv_meta(tmp_path / "profile.csv")
        assert header == ["eta", "U"] and meta["command"] == "selfsim" and meta["alpha"] == 1.0
        np.testing.assert_allclose(rows[:, 1], np.sqrt(1 - rows[:, 0]), rtol=1e-7, atol=1e-7)
        doc = json.loads((tmp_path / "solution.json").read_text())
        assert doc["eta_star"] == pytest.approx(1.0, rel=1e-13)
        assert doc["config"]["N"] == 1

    def test_moisture_exponent(self, tmp_path):
        assert run("selfsim", "--alpha", 0.5, "--m", 1, "--t-min", 1, "--t-max", 16, "--t-points", 3, "--out", tmp_path) == 0
        _, _, rows = read_csv_meta(tmp_path / "moisture.csv")
        # concentration: I ~ t^(alpha/2)
        assert rows[2, 1] / rows[0, 1] == pytest.approx(16**0.25, rel=1e-12)

    @pytest.mark.parametrize(
        "args",
        [
            ("--alpha", 0.5, "--m", 1, "--N", 0),
            ("--alpha", 1.5, "--m", 1),
            ("--alpha", 0.5),
            ("--alpha", 0.5, "--m", 1, "--t-min", 2, "--t-max", 1),
            ("--alpha", "half", "--m", 1),
        ],
    )
    def test_validation(self, tmp_path, args):
        assert run("selfsim", *args, "--out", tmp_path) == EXIT_VALIDATION


class TestFD:
    def test_outputs(self, tmp_path):
        assert run("fd", "--alpha", 0.95, "--m", 2, *SMALL_FD, "--out", tmp_path) == EXIT_OK
        meta, header, rows = read_csv_meta(tmp_path / "history.csv")
        assert header == ["t", "x", "u", "u_approx"]
        assert len(np.unique(rows[:, 0])) == 3 and meta["nx"] == 200
        _, h, front = read_csv_meta(tmp_path / "front.csv")
        assert h == ["t", "x_front", "x_front_approx"] and np.all(np.diff(front[1:, 1]) >= 0)
        _, h, inf = read_csv_meta(tmp_path / "infiltration.csv")
        assert h == ["t", "I", "I_approx"]
        report = (tmp_path / "collapse.txt").read_text()
        assert "collapse_relative=" in report and "approximant_relative=" in report

    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert run("fd", "--alpha", 0.8, "--m", 1, *SMALL_FD, "--out", tmp_path / d) == 0
        for f in ("history.csv", "front.csv", "infiltration.csv", "collapse.txt"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_heat_has_no_approximant(self, tmp_path):
        assert run("fd", "--alpha", 1, "--m", 0, "--bc", "concentration", *SMALL_FD, "--dx", 0.01, "--out", tmp_path) == 0
        _, _, rows = read_csv_meta(tmp_path / "history.csv")
        assert np.all(np.isnan(rows[:, 3]))
        assert "unavailable" in (tmp_path / "collapse.txt").read_text()

    def test_overflow(self, tmp_path):
        code = run("fd", "--alpha", 1, "--m", 0, "--nx", 20, "--dx", 0.01, "--dt", 1e-3, "--t-end", 0.5, "--out", tmp_path)
        assert code == EXIT_OVERFLOW

    @pytest.mark.parametrize(
        "extra",
        [("--dt", 0), ("--nx", 4), ("--times", "0.5"), ("--times", "0.01234567"), ("--theta", 3), ("--N", 0)],
    )
    def test_validation(self, tmp_path, extra):
        args = ["fd", "--alpha", 0.9, "--m", 1, *SMALL_FD, *extra, "--out", tmp_path]
        assert run(*args) == EXIT_VALIDATION


class TestEKError:
    def test_exp_decay(self, tmp_path):
        assert run("ek-error", "--beta", 1, "--gamma", 0.1, "--delta", 1, "--N", "1,3", "--eta-points", 20, "--out", tmp_path) == 0
        _, header, rows = read_csv_meta(tmp_path / "ek_error.csv")
        col = {h: rows[:, i] for i, h in enumerate(header)}
        assert np.all(col["rel_err_3"] < col["rel_err_1"])
        assert np.all(col["abs_err_1"] <= col["bound_1"])
        assert col["eta"][-1] == pytest.approx(2.0)

    def test_sqrt_support_has_no_bound(self, tmp_path):
        args = ["ek-error", "--beta", 0, "--gamma", 0.1, "--delta", -2 / 0.9, "--function", "sqrt-support"]
        assert run(*args, "--eta-points", 10, "--out", tmp_path) == 0
        _, header, rows = read_csv_meta(tmp_path / "ek_error.csv")
        assert np.all(np.isnan(rows[:, header.index("bound_1")]))
        assert rows[-1, 0] == pytest.approx(0.99)

    @pytest.mark.parametrize(
        "extra",
        [("--N", "0"), ("--N", ""), ("--N", "1.5"), ("--function", "tophat"), ("--gamma", -1), ("--delta", 0)],
    )
    def test_validation(self, tmp_path, extra):
        base = {"--beta": 1, "--gamma": 0.1, "--delta": 1}
        base.update(dict([extra]))
        args = [a for kv in base.items() for a in kv]
        assert run("ek-error", *args, "--out", tmp_path) == EXIT_VALIDATION


class TestFit:
    def test_round_trip(self, tmp_path, capsys):
        path = profile_csv(tmp_path, synthetic(**BASE_CASE))
        assert run("fit", "--input", path, "--fix-m", 1, "--out", tmp_path) == EXIT_OK
        doc = json.loads((tmp_path / "fit.json").read_text())
        assert doc["alpha"] == pytest.approx(0.36, abs=1e-5)
        assert doc["D0"] == pytest.approx(0.4568, rel=1e-4)
        assert "alpha=" in capsys.readouterr().out
        _, header, rows = read_csv_meta(tmp_path / "fit_overlay.csv")
        assert header == ["x", "u_data", "u_model"]
        np.testing.assert_allclose(rows[:, 1], rows[:, 2], atol=1e-6)

    def test_zero_profile(self, tmp_path):
        path = tmp_path / "zero.csv"
        path.write_text("# time=1\nx,u\n" + "".join(f"{i},0\n" for i in range(10)))
        assert run("fit", "--input", path, "--out", tmp_path) == EXIT_FIT

    @pytest.mark.parametrize("body", ["x,u\n0,1\n1,-1\n", "x,u\n0,1\n1,x\n"])
    def test_bad_input(self, tmp_path, body):
        path = tmp_path / "bad.csv"
        path.write_text("# time=1\n" + body)
        assert run("fit", "--input", path, "--out", tmp_path) == EXIT_VALIDATION

    def test_missing_file(self, tmp_path):
        assert run("fit", "--input", tmp_path / "nope.csv", "--out", tmp_path) == EXIT_VALIDATION


class TestCollapse:
    def test_from_history(self, tmp_path, capsys):
        assert run("fd", "--alpha", 0.95, "--m", 2, *SMALL_FD, "--out", tmp_path) == 0
        fd_report = (tmp_path / "collapse.txt").read_text()
        capsys.readouterr()
        assert run("collapse", "--history", tmp_path / "history.csv", "--out", tmp_path / "c") == 0
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("collapse_sup="))
        assert line in fd_report

    def test_unknown_time(self, tmp_path):
        assert run("fd", "--alpha", 0.95, "--m", 2, *SMALL_FD, "--out", tmp_path) == 0
        code = run("collapse", "--history", tmp_path / "history.csv", "--times", "0.01,0.0123", "--out", tmp_path)
        assert code == EXIT_VALIDATION


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"alpha": 0.4, "m": 3.0, "N": 5}))
        cfg = resolve_config("selfsim", {"alpha": 0.7, "m": None}, str(cfg_file), str(tmp_path))
        assert cfg.parameters["alpha"] == 0.7  # flag beats file
        assert cfg.parameters["m"] == 3.0 and cfg.parameters["N"] == 5
        assert cfg.parameters["eta_points"] == 201  # default survives

    @pytest.mark.parametrize("doc", ['{"alpha": 0.5, "colour": 1}', "[1, 2]", "{not json"])
    def test_bad_file(self, tmp_path, doc):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(doc)
        assert run("selfsim", "--config", cfg_file, "--m", 1, "--out", tmp_path) == EXIT_VALIDATION

    def test_missing_config(self, tmp_path):
        assert run("selfsim", "--config", tmp_path / "none.json", "--out", tmp_path) == EXIT_VALIDATION

    def test_metadata_round_trip(self, tmp_path):
        assert run("selfsim", "--alpha", 0.6, "--m", 1.5, "--bc", "flux", "--out", tmp_path) == 0
        meta, _, _ = read_csv_meta(tmp_path / "profile.csv")
        assert run("selfsim", "--alpha", meta["alpha"], "--m", meta["m"], "--bc", meta["bc"], "--out", tmp_path / "again") == 0
        assert (tmp_path / "profile.csv").read_bytes() == (tmp_path / "again" / "profile.csv").read_bytes()

    def test_usage_errors(self, tmp_path):
        assert main([]) == EXIT_VALIDATION
        assert main(["nonsense"]) == EXIT_VALIDATION


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "subflow.cli", "selfsim", "--alpha", "1", "--m", "2", "--N", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "solution.json").is_file()
