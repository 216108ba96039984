import io as stdio

import numpy as np
import pytest

from sketchattn import cli, io, sketch
from sketchattn.evalbench import ApproxReport
from sketchattn.kernels import KernelKind


def run(argv):
    out, err = stdio.StringIO(), stdio.StringIO()
    code = cli.main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


class TestMatrixFiles:
    def test_parse_plain(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(io.load_matrix(p), [[1, 2], [3, 4]])

    def test_round_trip_bit_exact(self, tmp_path, rng):
        m = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-300, 300, (7, 3))
        p = tmp_path / "m.txt"
        io.save_matrix(m, p)
        assert np.array_equal(io.load_matrix(p), m)
        io.save_matrix(m, p, header=False)
        assert np.array_equal(io.load_matrix(p), m)

    def test_ragged(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("1,2\n3\n")
        with pytest.raises(io.MatrixParseError) as exc:
            io.load_matrix(p)
        assert exc.value.line == 2

    def test_header_mismatch(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("# 3 2\n1,2\n3,4\n")
        with pytest.raises(io.MatrixParseError, match="header"):
            io.load_matrix(p)

    @pytest.mark.parametrize("text,line", [("1,nan\n", 1), ("1,2\n3,inf\n", 2), ("1,x\n", 1), ("\n", 1)])
    def test_bad_entries(self, tmp_path, text, line):
        p = tmp_path / "m.txt"
        p.write_text(text)
        with pytest.raises(io.MatrixParseError) as exc:
            io.load_matrix(p)
        assert exc.value.line == line


class TestCsv:
    def rep(self, seed=0, value=0.1):
        return ApproxReport("spectral", 8, 2, 4, seed, "Exact", "gaussian", "rel_spectral_error", value)

    def test_empty_is_header_only(self, tmp_path):
        p = tmp_path / "r.csv"
        io.emit_csv([], p)
        assert p.read_text() == "experiment,n,p,d,seed,method,kernel,metric,value\n"

    def test_one_report(self, tmp_path):
        p = tmp_path / "r.csv"
        io.emit_csv([self.rep()], p)
        lines = p.read_text().splitlines()
        assert len(lines) == 2
        assert lines[1] == "spectral,8,2,4,0,Exact,gaussian,rel_spectral_error,0.10000000000000001"

    def test_sorted_and_round_trip(self, tmp_path):
        p = tmp_path / "r.csv"
        vals = [1 / 3, 2 / 7, np.pi]
        io.emit_csv([self.rep(2, vals[2]), self.rep(0, vals[0]), self.rep(1, vals[1])], p)
        rows = io.read_csv(p)
        assert [int(r["seed"]) for r in rows] == [0, 1, 2]
        assert [float(r["value"]) for r in rows] == vals

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            io.emit_csv([], tmp_path / "missing" / "r.csv")


class TestParseConfig:
    def test_example(self):
        cfg = cli.parse_config("bench-spectral --n 512 --p 8 --d 16,32,64 --seeds 10 --kernel gaussian".split())
        assert cfg.n == [512] and cfg.p == 8 and cfg.d == [16, 32, 64]
        assert cfg.seeds == list(range(10)) and cfg.kernel is KernelKind.GAUSSIAN

    def test_seed_list(self):
        assert cli.parse_config(["spectrum", "--seeds", "3,5,0"]).seeds == [3, 5, 0]

    def test_precedence(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# sweep\nn = 256\np = 4  # trailing comment\n")
        cfg = cli.parse_config(["bench-spectral", "--n", "512"], config_file=p)
        assert cfg.n == [512] and cfg.p == 4
        cfg = cli.parse_config(["bench-spectral", "--config", str(p)])
        assert cfg.n == [256]

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("bandwidth = 3\n")
        with pytest.raises(cli.UsageError, match="bandwidth"):
            cli.parse_config(["bench-spectral"], config_file=p)

    @pytest.mark.parametrize("argv,token", [
        (["bench-spectral", "--d", "0"], "--d"),
        (["bench-spectral", "--p", "x"], "'x'"),
        (["bench-spectral", "--kernel", "laplace"], "laplace"),
        (["bench-spectral", "--method", "performer"], "performer"),
        (["bench-spectral", "--bogus", "1"], "--bogus"),
        (["frobnicate"], "frobnicate"),
        (["bench-spectral", "--q", "a.txt"], "--q"),
        (["bench-spectral", "--n", "64,128"], "--n"),
    ])
    def test_usage_errors(self, argv, token):
        with pytest.raises(cli.UsageError) as exc:
            cli.parse_config(argv)
        assert token in str(exc.value)

    def test_runtime_accepts_size_list(self):
        assert cli.parse_config(["bench-runtime", "--n", "64,128"]).n == [64, 128]


class TestMain:
    def test_usage_exit_code(self):
        code, _, err = run(["bench-spectral", "--d", "0"])
        assert code == 1 and "--d" in err

    def test_runtime_failure_exit_code(self):
        code, _, err = run(["bench-spectral", "--n", "2000", "--p", "2", "--d", "4", "--seeds", "1"])
        assert code == 2 and "oracle" in err

    def test_bench_spectral_stdout(self):
        code, out, _ = run(["bench-spectral", "--n", "32", "--p", "4", "--d", "4,8", "--seeds", "2"])
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == ",".join(io.CSV_HEADER)
        assert len(lines) == 1 + 2 * 2 * 2

    def test_every_command_runs(self, tmp_path):
        small = ["--n", "24", "--p", "4", "--d", "4", "--seeds", "2"]
        for cmd in ("loewner-audit", "spectrum", "sensitivity"):
            path = tmp_path / f"{cmd}.csv"
            code, _, err = run([cmd, *small, "--out", str(path)])
            assert code == 0, err
            assert len(io.read_csv(path)) > 0
        code, out, _ = run(["bench-runtime", "--n", "32,64", "--d", "8", "--p", "4", "--repeats", "1"])
        assert code == 0 and len(out.splitlines()) == 1 + 8
        code, out, _ = run(["spectrum", *small, "--kernel", "sm"])
        assert code == 0

    def test_file_inputs(self, tmp_path, rng):
        paths = {}
        for name, shape in (("q", (20, 3)), ("k", (20, 3)), ("v", (20, 2))):
            paths[name] = tmp_path / f"{name}.txt"
            io.save_matrix(rng.standard_normal(shape), paths[name])
        code, out, err = run(["bench-spectral", "--d", "8", "--seeds", "2", "--method", "skyformer,exact",
                              "--q", str(paths["q"]), "--k", str(paths["k"]), "--v", str(paths["v"])])
        assert code == 0, err
        rows = out.splitlines()[1:]
        assert all(r.startswith("spectral,20,3,8,") for r in rows)

    def test_bad_matrix_file(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1,2\n3\n")
        code, _, err = run(["bench-spectral", "--q", str(bad), "--k", str(bad), "--v", str(bad)])
        assert code == 2 and ":2:" in err

    def test_check_invariants_pass(self):
        code, out, _ = run(["check-invariants", "--n", "16", "--p", "4", "--d", "4,8", "--seeds", "2"])
        assert code == 0 and "hold" in out

    def test_check_invariants_failure(self, monkeypatch):
        monkeypatch.setattr(sketch, "precondition_spectrum_check", lambda m, g: (0.1, 1.5))
        code, _, err = run(["check-invariants", "--n", "16", "--p", "4", "--d", "4", "--seeds", "3,7"])
        assert code == 3
        assert "preconditioner-spectrum" in err and "seed=3" in err and "p=4" in err

    def test_determinism(self, tmp_path):
        argv = ["bench-spectral", "--n", "48", "--p", "4", "--d", "4,16", "--seeds", "3",
                "--method", "skyformer,naive,tsvd"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run([*argv, "--out", str(a)])[0] == 0
        assert run([*argv, "--out", str(b)])[0] == 0
        assert a.read_bytes() == b.read_bytes()
