import json
import math
import textwrap

import pytest

from twentyq.cli import main
from twentyq.config import OUTPUT_ENV, ConfigError, load_config
from twentyq.csvio import format_value, read_csv, render_csv
from twentyq.harness import recompute_aggregate_csv, simulate, sweep, sweep_cells

NOISELESS = """\
[channel]
kind = "bsc"
h = {type = "constant", q = 0.0}

[procedure]
L = 2
M = 16
eps_prime = 0.05
thresholds = "manual"
lambda1 = 8.0
lambda2 = 20.0
a_A = 5.0
a_R = 5.0
eps0 = 0.0

[run]
trials = 200
seed = 5
"""

NOISY = """\
[channel]
kind = "bsc"
h = {type = "affine", c0 = 0.1, c1 = 0.3}

[procedure]
L = 2
M = 16
eps_prime = 0.05

[run]
trials = 300
seed = 12
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


class TestConfig:
    def test_unknown_key_line(self, tmp_path):
        p = write(tmp_path, NOISELESS.replace("eps0 = 0.0", "eps0 = 0.0\nlambda3 = 1.0"))
        with pytest.raises(ConfigError) as e:
            load_config(p)
        assert e.value.line == 15 and "lambda3" in str(e.value)

    def test_unknown_section(self, tmp_path):
        p = write(tmp_path, NOISELESS + "\n[extra]\nx = 1\n")
        with pytest.raises(ConfigError) as e:
            load_config(p)
        assert e.value.line == 20

    def test_syntax_error_line(self, tmp_path):
        p = write(tmp_path, NOISELESS.replace("M = 16", "M = = 16"))
        with pytest.raises(ConfigError) as e:
            load_config(p)
        assert e.value.line == 7

    def test_bad_values(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, NOISELESS.replace("M = 16", "M = 15")))
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, NOISELESS.replace("q = 0.0", "q = 0.7")))
        with pytest.raises(ConfigError) as e:
            load_config(write(tmp_path, NOISELESS.replace("q = 0.0}", "q = 0.0, c1 = 1}")))
        assert e.value.line == 3
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, NOISELESS.replace("seed = 5", "seed = 5\nadversaries = [\"oracle\"]")))

    def test_eps0_auto(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY.replace("eps_prime = 0.05", "eps_prime = 0.01\neps = 0.2\neps0 = \"auto\"")))
        assert 0 < exp.procedure.eps0 < 0.2
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, NOISY + "\n".join(["", "[bounds]", "eps = 0.1"]).replace("[bounds]", "[procedure2]")))

    def test_hash_ignores_workers(self, tmp_path):
        a = load_config(write(tmp_path, NOISELESS))
        b = load_config(write(tmp_path, NOISELESS.replace("seed = 5", "seed = 5\nworkers = 4"), "b.toml"))
        c = load_config(write(tmp_path, NOISELESS.replace("seed = 5", "seed = 6"), "c.toml"))
        assert a.config_hash == b.config_hash != c.config_hash


class TestCsv:
    def test_format(self):
        assert format_value(0.1) == "0.1"
        assert format_value(True) == "1"
        assert format_value(1 / 3) == repr(1 / 3)
        assert format_value(float("nan")) == "nan"

    def test_roundtrip_and_metadata(self, tmp_path):
        text = render_csv(["a", "b"], [[1, 0.25]], {"config_sha256": "x"})
        (tmp_path / "t.csv").write_text(text)
        header, rows, meta = read_csv(tmp_path / "t.csv")
        assert header == ["a", "b"] and rows == [{"a": "1", "b": "0.25"}]
        assert meta["config_sha256"] == "x"


class TestSimulate:
    def test_noiseless_zero_excess(self, tmp_path):
        exp = load_config(write(tmp_path, NOISELESS))
        out = simulate(exp, tmp_path / "out")
        assert out.aggregate["excess_prob"] == 0.0
        _, rows, meta = read_csv(out.paths["trials"])
        assert len(rows) == 200 and "config_sha256" in meta

    def test_eps0_one(self, tmp_path):
        exp = load_config(write(tmp_path, NOISELESS.replace("eps0 = 0.0", "eps0 = 1.0")))
        out = simulate(exp, tmp_path / "out")
        assert out.aggregate["excess_prob"] == 1.0 and out.aggregate["mean_tau_total"] == 0.0

    def test_workers_byte_identical(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY))
        a = simulate(exp, tmp_path / "w1", workers=1)
        b = simulate(exp, tmp_path / "w3", workers=3)
        for key in ("trials", "aggregate", "privacy"):
            assert a.paths[key].read_bytes() == b.paths[key].read_bytes()

    def test_aggregate_roundtrip(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY))
        out = simulate(exp, tmp_path / "out")
        assert recompute_aggregate_csv(out.paths["trials"], exp) == out.paths["aggregate"].read_text()

    def test_privacy_csv(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY))
        out = simulate(exp, tmp_path / "out")
        header, rows, _ = read_csv(out.paths["privacy"])
        assert header[:8] == ["L", "k", "strategy", "empirical", "ci_lo", "ci_hi", "bound", "pass"]
        assert {r["strategy"] for r in rows} == {"uniform_random", "offset_heuristic"}
        assert all(r["low_power"] == "1" for r in rows)  # 300 < 1000 samples

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        exp = load_config(write(tmp_path, NOISELESS))
        out = simulate(exp)
        assert out.paths["trials"].parent == tmp_path / "env"


class TestSweep:
    def test_axis_major_order(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY + '\n[sweep]\n"procedure.L" = [2, 4]\n"run.seed" = [1, 2]\n'))
        assert sweep_cells(exp) == [
            {"procedure.L": 2, "run.seed": 1}, {"procedure.L": 2, "run.seed": 2},
            {"procedure.L": 4, "run.seed": 1}, {"procedure.L": 4, "run.seed": 2},
        ]

    def test_two_by_two(self, tmp_path):
        text = NOISELESS.replace("trials = 200", "trials = 50") + '\n[sweep]\n"procedure.L" = [2, 4]\n"run.seed" = [1, 2]\n'
        exp = load_config(write(tmp_path, text))
        path = sweep(exp, tmp_path / "sw")
        header, rows, meta = read_csv(path)
        assert [(r["axis:procedure.L"], r["axis:run.seed"]) for r in rows] == [("2", "1"), ("2", "2"), ("4", "1"), ("4", "2")]
        assert meta["completed"] == "4"

    def test_empty_sweep_matches_simulate(self, tmp_path):
        exp = load_config(write(tmp_path, NOISY))
        agg = simulate(exp, tmp_path / "sim").paths["aggregate"]
        sw = sweep(exp, tmp_path / "sw")
        _, a_rows, _ = read_csv(agg)
        _, s_rows, _ = read_csv(sw)
        assert a_rows == s_rows

    def test_resume_skips_done_cells(self, tmp_path, monkeypatch):
        text = NOISELESS.replace("trials = 200", "trials = 30") + '\n[sweep]\n"run.seed" = [1, 2, 3]\n'
        exp = load_config(write(tmp_path, text))
        full = sweep(exp, tmp_path / "a").read_bytes()

        import twentyq.harness as h

        real = h.run_campaign
        calls = {"n": 0}

        def flaky(e, workers=None):
            calls["n"] += 1
            if calls["n"] == 2:
                raise KeyboardInterrupt
            return real(e, workers)

        monkeypatch.setattr(h, "run_campaign", flaky)
        with pytest.raises(KeyboardInterrupt):
            sweep(exp, tmp_path / "b")
        manifest = json.loads((tmp_path / "b" / "sweep_manifest.json").read_text())
        assert list(manifest["cells"]) == ["0"]
        _, partial, _ = read_csv(tmp_path / "b" / "sweep.csv")
        assert len(partial) == 1

        calls["n"] = 10
        sweep(exp, tmp_path / "b", resume=True)
        assert calls["n"] == 12  # only the two missing cells ran
        assert (tmp_path / "b" / "sweep.csv").read_bytes() == full


class TestCli:
    def test_simulate_and_exit_codes(self, tmp_path, capsys):
        p = write(tmp_path, NOISELESS)
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o"), "--trials", "20", "--plot"]) == 0
        assert (tmp_path / "o" / "trials.csv").exists() and (tmp_path / "o" / "trials.png").exists()
        bad = write(tmp_path, NOISELESS.replace("L = 2", "L = 2\nLL = 3"), "bad.toml")
        assert main(["simulate", "--config", str(bad)]) == 2
        assert f"{bad}:7" in capsys.readouterr().err

    @pytest.mark.parametrize("fig,name", [(3, "curve_t2.csv"), (4, "noisy_vs_noiseless.csv"), (5, "noiseless.csv")])
    def test_bounds_figures(self, tmp_path, fig, name):
        p = write(tmp_path, NOISY)
        assert main(["bounds", "--config", str(p), "--figure", str(fig), "--out", str(tmp_path / "b")]) == 0
        header, rows, _ = read_csv(tmp_path / "b" / name)
        if fig == 3:
            assert header[:8] == ["N", "L", "eps", "eps_prime", "N1", "Ndagger", "neg_log_delta", "rate"]
            assert {r["L"] for r in rows} == {"2", "4", "8", "16"}
            assert {r["eps"] for r in rows} == {"0.1"}
        else:
            assert [r["L"] for r in rows] == [str(L) for L in range(2, 11)]
            assert {r["N"] for r in rows} == {"100"}

    def test_bounds_t1(self, tmp_path):
        p = write(tmp_path, NOISY)
        assert main(["bounds", "--config", str(p), "--out", str(tmp_path / "b")]) == 0
        header, rows, _ = read_csv(tmp_path / "b" / "bounds_t1.csv")
        for col in ("stage1_first", "stage1_second", "sprt_accept", "sprt_reject", "stage2_mean", "stage2_cap",
                    "N_bar", "eps_bar", "N", "eps"):
            assert col in header
        terms = [float(rows[0][c]) for c in header[17:23]]
        assert math.isclose(sum(terms), float(rows[0]["N_bar"]), rel_tol=1e-12)

    def test_sweep_cli(self, tmp_path):
        text = NOISELESS.replace("trials = 200", "trials = 20") + '\n[sweep]\n"procedure.M" = [16, 32]\n'
        p = write(tmp_path, text)
        assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "s")]) == 0
        assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "s"), "--resume"]) == 0
        _, rows, _ = read_csv(tmp_path / "s" / "sweep.csv")
        assert [r["M"] for r in rows] == ["16", "32"]
