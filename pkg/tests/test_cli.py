import csv
import io

import numpy as np
import pytest

from pelk import tensor_io
from pelk.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def usage_exit(*argv):
    with pytest.raises(SystemExit) as exc:
        main(list(argv))
    return exc.value.code


class TestGrid:
    def test_default(self, capsys):
        code, out = run(capsys, "grid", "--k", "51", "--central", "5")
        assert code == 0
        (r,) = rows(out)
        assert r["half"] == "9,8,4,2,1,1,1" and r["k_prime"] == "13"
        assert float(r["param_ratio"]) == pytest.approx(169 / 2601, rel=1e-5)

    def test_custom(self, capsys):
        code, out = run(capsys, "grid", "--custom", "8,4,2,1,1,1")
        (r,) = rows(out)
        assert code == 0 and r["k"] == "33"
        assert round(float(r["param_ratio"]), 2) == 0.11

    def test_json(self, capsys):
        from pelk.grid import SharingGrid, build_grid
        code, out = run(capsys, "grid", "--k", "101", "--central", "7", "--json")
        assert code == 0
        assert SharingGrid.from_json(out) == build_grid(101, 3, 2)

    def test_pretty(self, capsys):
        code, out = run(capsys, "grid", "--k", "33", "--pretty")
        assert code == 0 and "param ratio" in out

    @pytest.mark.parametrize("argv", [["--k", "4"], ["--k", "51", "--central", "4"], [],
                                      ["--custom", "8,x"], ["--k", "-3"]])
    def test_usage_errors(self, capsys, argv):
        assert usage_exit("grid", *argv) == 2


class TestParams:
    def test_stage_rows_sum(self, capsys):
        code, out = run(capsys, "params", "--preset", "pelk-t")
        assert code == 0
        rs = rows(out)
        stages = [r for r in rs if r["stage"].isdigit()]
        total = next(r for r in rs if r["stage"] == "total")
        extra = next(r for r in rs if r["stage"] == "stem_head")
        assert len(stages) == 4
        for key in ("conv_params", "posembed_params", "total_params"):
            assert sum(int(r[key]) for r in stages) + int(extra[key]) == int(total[key])

    def test_flops_columns(self, capsys):
        code, out = run(capsys, "params", "--preset", "pelk-t", "--input", "2048x512")
        total = rows(out)[-1]
        fl = {k: int(v) for k, v in total.items() if k.startswith("flops_")}
        assert fl["flops_posembed"] / sum(fl.values()) < 0.005

    def test_form_override(self, capsys):
        _, out = run(capsys, "params", "--preset", "convnext-t", "--form", "dense")
        assert int(rows(out)[-1]["conv_params"]) == 324_576

    def test_101(self, capsys):
        code, out = run(capsys, "params", "--preset", "pelk-b-101")
        assert code == 0 and rows(out)[0]["K"] == "101"

    def test_config_file(self, capsys, tmp_path):
        import json
        from pelk.arch import preset
        path = tmp_path / "c.json"
        path.write_text(json.dumps(preset("pelk-s").to_dict()))
        _, a = run(capsys, "params", "--config", str(path))
        _, b = run(capsys, "params", "--preset", "pelk-s")
        assert a == b

    @pytest.mark.parametrize("argv", [["--preset", "resnet-50"], [],
                                      ["--preset", "pelk-t", "--input", "225x224"]])
    def test_usage_errors(self, argv):
        assert usage_exit("params", *argv) == 2

    def test_missing_config(self, capsys, tmp_path):
        assert main(["params", "--config", str(tmp_path / "none.json")]) == 1


class TestCurve:
    def test_dense_growth(self, capsys):
        code, out = run(capsys, "curve", "--arch", "convnext-t", "--kernels", "7,31,51,101,151")
        rs = rows(out)
        dense = {int(r["K"]): int(r["conv_params"]) for r in rs if r["form"] == "dense"}
        peri = [int(r["conv_params"]) for r in rs if r["form"] == "peripheral"]
        assert code == 0 and dense[151] >= 100 * dense[7]
        assert peri == sorted(peri)

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "curve.csv"
        code, out = run(capsys, "curve", "--kernels", "7,13", "--forms", "dense", "--out", str(path))
        assert code == 0 and out == ""
        assert len(rows(path.read_text())) == 2

    @pytest.mark.parametrize("argv", [["--kernels", ""], ["--kernels", "8"], ["--forms", "sparse"],
                                      ["--arch", "nope"]])
    def test_usage_errors(self, argv):
        assert usage_exit("curve", *argv) == 2


class TestGradcheck:
    def test_defaults(self, capsys):
        code, out = run(capsys, "gradcheck")
        assert code == 0 and "FAIL" not in out

    @pytest.mark.parametrize("form", ["dense", "stripe", "peripheral"])
    def test_forms(self, capsys, form):
        code, _ = run(capsys, "gradcheck", "--form", form, "--k", "7", "--size", "10")
        assert code == 0

    def test_zero_tol_fails(self, capsys):
        code, out = run(capsys, "gradcheck", "--tol", "0")
        assert code == 1 and "FAIL" in out

    @pytest.mark.parametrize("argv", [["--k", "8"], ["--tol", "-1"], ["--form", "sparse"]])
    def test_usage_errors(self, argv):
        assert usage_exit("gradcheck", *argv) == 2


class TestEquiv:
    @pytest.mark.parametrize("check", ["sharing", "posembed", "reparam", "partial"])
    @pytest.mark.parametrize("seed", range(10))
    def test_seeds(self, capsys, check, seed):
        code, out = run(capsys, "equiv", "--check", check, "--seed", str(seed))
        assert code == 0
        (r,) = rows(out)
        assert r["status"] == "PASS" and float(r["rel_err"]) <= float(r["tol"])

    def test_partial_reports_bit_exact(self, capsys):
        _, out = run(capsys, "equiv", "--check", "partial")
        assert "identity_channels=bit-exact" in rows(out)[0]["detail"]

    def test_unknown(self):
        assert usage_exit("equiv", "--check", "magic") == 2


class TestBench:
    def test_runs(self, capsys):
        code, out = run(capsys, "bench", "--form", "peripheral", "--k", "13", "--c", "2",
                        "--hw", "16x16", "--iters", "1", "--warmup", "0")
        (r,) = rows(out)
        assert code == 0 and r["form"] == "peripheral" and float(r["mean_ms"]) > 0

    def test_dense_large_slower(self, capsys):
        def mean(k):
            _, out = run(capsys, "bench", "--form", "dense", "--k", str(k), "--c", "4",
                         "--hw", "48x48", "--iters", "3")
            return float(rows(out)[0]["mean_ms"])
        assert mean(51) > mean(7)

    @pytest.mark.parametrize("argv", [["--hw", "0x4"], ["--hw", "ax4"], ["--iters", "0"], ["--k", "6"]])
    def test_usage_errors(self, argv):
        assert usage_exit("bench", *argv) == 2


class TestErf:
    def test_uniform_map(self, capsys, tmp_path):
        path = tmp_path / "u.ptns"
        tensor_io.save(path, np.ones((128, 128), dtype=np.float32))
        code, out = run(capsys, "erf", "--map", str(path), "--thresholds", "0.2,0.3,0.5")
        assert code == 0
        for r in rows(out):
            R = int(r["R"])
            assert abs(float(r["r"]) - float(r["t"])) <= (4 * R) / 128 ** 2

    def test_delta_csv(self, capsys, tmp_path):
        s = np.zeros((32, 32), dtype=np.float32)
        s[16, 16] = 1
        path = tmp_path / "d.csv"
        tensor_io.save_csv(path, s)
        _, out = run(capsys, "erf", "--map", str(path))
        assert all(r["R"] == "1" for r in rows(out))

    def test_preset(self, capsys, tmp_path):
        saved = tmp_path / "m.ptns"
        code, out = run(capsys, "erf", "--preset", "pelk-t", "--side", "64", "--samples", "1",
                        "--channels", "2", "--save-map", str(saved))
        assert code == 0 and len(rows(out)) == 3
        assert tensor_io.load(saved).shape == (64, 64)

    @pytest.mark.parametrize("argv", [["--preset", "pelk-t", "--thresholds", "0"],
                                      ["--preset", "pelk-t", "--thresholds", "1.2"],
                                      ["--preset", "pelk-t", "--side", "30"], []])
    def test_usage_errors(self, argv):
        assert usage_exit("erf", *argv) == 2

    def test_bad_map(self, tmp_path):
        path = tmp_path / "bad.ptns"
        path.write_bytes(b"garbage")
        assert usage_exit("erf", "--map", str(path)) == 2
