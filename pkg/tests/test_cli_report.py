from __future__ import annotations

import json
import math

import numpy as np
import pytest

from gammaruin.asymptotics import AsymptoticReport
from gammaruin.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from gammaruin.config import ConfigError, dump_config, parse_config
from gammaruin.mc_estimators import RuinEstimate
from gammaruin.report import body_hash, compare, report_passage

BM_CONFIG = """\
[model]
family = "brownian"
rate = 1.0

[process]
c = 1.0
gamma = [0.3, 0.6]
u = [1.0, 1.5]
horizon = 1.0

[grid]
delta = 0.0009765625

[mc]
n = 400
seed = 3
"""

PASSAGES = """
[passages]
u = 0.8
n_target = 200
"""

INFINITE = """\
[model]
family = "power"
alpha = 0.7

[process]
c = 1.0
gamma = 0.5
u = [3.0]
horizon = "inf"

[grid]
delta_rel = {delta_rel}

[mc]
n = 200
seed = 1
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def theory(u, gamma, log_psi, T=1.0):
    return AsymptoticReport(u, 1.0, gamma, "test", math.exp(log_psi), log_psi, T=T)


def ruin(hits, n, u, gamma, T=1.0):
    return RuinEstimate(hits, n, u, 1.0, gamma, T, 1e-3, 0)


class TestConfig:
    def test_round_trip(self):
        cfg = parse_config(BM_CONFIG + PASSAGES)
        assert parse_config(dump_config(cfg)) == cfg

    def test_infinite_round_trip(self):
        cfg = parse_config(INFINITE.format(delta_rel=0.01))
        assert cfg.infinite and parse_config(dump_config(cfg)) == cfg

    def test_scalar_gamma_becomes_list(self):
        assert parse_config(INFINITE.format(delta_rel=0.01)).gammas == [0.5]

    @pytest.mark.parametrize("old, new, key", [
        ("u = [1.0, 1.5]", "u = []", "process.u"),
        ("u = [1.0, 1.5]", "u = [1.5, 1.0]", "process.u"),
        ("gamma = [0.3, 0.6]", "gamma = [0.0]", "process.gamma"),
        ("delta = 0.0009765625", "delta = 0.01", "grid.delta"),
        ("n = 400", "n = 50", "mc.n"),
        ('family = "brownian"', 'family = "levy"', "model.family"),
    ])
    def test_errors_name_key_and_line(self, old, new, key):
        text = BM_CONFIG.replace(old, new)
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        err = info.value
        assert err.key == key
        assert text.splitlines()[err.line - 1].startswith(key.split(".")[1])

    def test_unknown_table(self):
        with pytest.raises(ConfigError, match="unknown table"):
            parse_config(BM_CONFIG + "\n[extra]\nx = 1\n")

    def test_syntax_error_has_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config(BM_CONFIG + "\n[mc\n")
        assert info.value.line is not None

    def test_literal_constants_need_note(self):
        with pytest.raises(ConfigError, match="provenance"):
            parse_config(BM_CONFIG + '\n[constants]\nsource = "literal"\npickands = 1.0\n')


class TestCompare:
    def test_exact_theory_gives_ratio_one(self):
        rows = compare([ruin(100, 1000, 2.0, 0.5)], [theory(2.0, 0.5, math.log(0.1))])
        assert rows[0].ratio == pytest.approx(1.0)
        assert rows[0].ratio_lo < 1.0 < rows[0].ratio_hi

    def test_zero_hits_gives_one_sided_interval(self):
        row = compare([ruin(0, 1000, 2.0, 0.5)], [theory(2.0, 0.5, -5.0)])[0]
        assert row.ratio == 0.0 and row.ratio_lo == 0.0 and row.ratio_hi > 0.0
        assert row.ci_method == "wilson"

    def test_underflowing_theory_gives_infinite_ratio(self):
        row = compare([ruin(3, 1000, 9.0, 0.5)], [theory(9.0, 0.5, -800.0)])[0]
        assert math.isinf(row.ratio) and math.isinf(row.ratio_hi)

    def test_non_monotone_trend_is_flagged(self):
        ests = [ruin(h, 1000, u, 0.5) for h, u in ((100, 1.0), (10, 2.0), (50, 3.0))]
        reps = [theory(u, 0.5, math.log(0.05)) for u in (1.0, 2.0, 3.0)]
        assert {r.trend for r in compare(ests, reps)} == {"non-monotone"}

    def test_infinite_horizon_keys_match(self):
        row = compare([ruin(10, 1000, 2.0, 0.5, T=math.inf)], [theory(2.0, 0.5, math.log(0.01), T=None)])[0]
        assert row.ratio == pytest.approx(1.0)

    def test_missing_theory_is_an_error(self):
        with pytest.raises(KeyError):
            compare([ruin(1, 100, 2.0, 0.5)], [theory(3.0, 0.5, -1.0)])


class TestReportPassage:
    def test_exponential_reference_header(self):
        x = -np.log1p(-(np.arange(1000) + 0.5) / 1000)
        s = report_passage(x, "Exp1")
        ref = {q: r for q, _, r in s.quantiles}
        assert ref[0.5] == pytest.approx(math.log(2.0))
        assert f"{math.log(2.0):.4f}" in s.table()
        assert s.ks < 0.01 and not s.flags

    def test_normal_reference_header(self):
        s = report_passage(np.linspace(-2, 2, 50), "StdNormal")
        assert dict((q, r) for q, _, r in s.quantiles)[0.95] == pytest.approx(1.6449, abs=1e-4)
        assert "1.6449" in s.table()

    def test_histogram_density_integrates_to_one(self):
        s = report_passage(np.random.default_rng(0).normal(size=500), "StdNormal", bins=20)
        assert np.sum(np.asarray(s.hist_density) * np.diff(s.hist_edges)) == pytest.approx(1.0)

    def test_degenerate_sample_is_flagged(self):
        s = report_passage(np.full(40, 2.0), "StdNormal")
        assert s.ks >= 0.5
        assert any("degenerate" in f for f in s.flags)

    def test_rejects_empty_and_unknown(self):
        with pytest.raises(ValueError):
            report_passage([], "Exp1")
        with pytest.raises(ValueError):
            report_passage([1.0] * 30, "Cauchy")


class TestCli:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--config", write(tmp_path, BM_CONFIG)]) == EXIT_OK
        assert "configuration valid" in capsys.readouterr().out

    def test_all_writes_results(self, tmp_path):
        out = tmp_path / "out"
        assert main(["all", "--config", write(tmp_path, BM_CONFIG + PASSAGES), "--out", str(out)]) == EXIT_OK
        names = {p.name for p in out.iterdir()}
        assert {"ruin.jsonl", "theory.jsonl", "comparison.csv", "manifest.json", "passages.jsonl",
                "passage_summary.json", "ratio_gamma0.3.dat", "phat_gamma0.6.dat"} <= names
        man = json.loads((out / "manifest.json").read_text())
        assert man["body_hash"] == body_hash(out)[0]
        rows = [json.loads(line) for line in (out / "ruin.jsonl").read_text().splitlines()]
        assert len(rows) == 4 and all(r["n_paths"] == 400 for r in rows)

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write(tmp_path, BM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["compare", "--config", cfg, "--out", str(a)]) == EXIT_OK
        assert main(["compare", "--config", cfg, "--out", str(b), "--workers", "3"]) == EXIT_OK
        assert body_hash(a) == body_hash(b)
        assert (a / "comparison.csv").read_bytes() == (b / "comparison.csv").read_bytes()

    def test_seed_override_changes_results(self, tmp_path):
        cfg = write(tmp_path, BM_CONFIG)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["ruin", "--config", cfg, "--out", str(a)])
        main(["ruin", "--config", cfg, "--out", str(b), "--seed-override", "4"])
        assert body_hash(a)[0] != body_hash(b)[0]

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, BM_CONFIG.replace("u = [1.0, 1.5]", "u = []"))
        assert main(["ruin", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "line 8" in capsys.readouterr().err

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG

    def test_numerical_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, INFINITE.format(delta_rel=1e-9))
        assert main(["ruin", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
        assert "InfeasibleGrid" in capsys.readouterr().err

    def test_budget_exit(self, tmp_path):
        text = BM_CONFIG + PASSAGES.replace("u = 0.8", "u = 4.0") + "budget = 1000\n"
        out = tmp_path / "o"
        assert main(["passages", "--config", write(tmp_path, text), "--out", str(out)]) == EXIT_BUDGET
        assert (out / "manifest.json").exists()
