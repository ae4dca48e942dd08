import json

import pytest

from growthseg.cli import main
from growthseg.io import read_panel_csv
from growthseg.series import LOG_CUMULATIVE


def write_spec(tmp_path, **overrides):
    doc = {
        "model": "segmented",
        "t0": 1700,
        "t_end": 1890,
        "intercept": 2.0,
        "slopes": [0.03, 0.06],
        "breakpoints": [1800],
        "noise_sd": 0.0,
        "seed": 5,
        "sources": [{"source_id": "a"}, {"source_id": "b", "first_year": 1760}],
    }
    doc.update(overrides)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    return path


class TestSimulateFitRoundtrip:
    def test_noiseless_recovery_through_files(self, tmp_path):
        spec = write_spec(tmp_path)
        panel_csv = tmp_path / "panel.csv"
        truth_json = tmp_path / "truth.json"
        assert main([
            "simulate", "--spec", str(spec),
            "--out-panel", str(panel_csv), "--out-truth", str(truth_json),
        ]) == 0
        report_json = tmp_path / "report.json"
        assert main([
            "fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
            "--model", "segmented", "--segments", "2",
            "--out", str(report_json),
        ]) == 0
        report = json.loads(report_json.read_text())
        assert report["breakpoints"][0] == pytest.approx(1800.0, abs=0.01)
        slopes = [s["slope"] for s in report["segments"]]
        assert slopes == pytest.approx([0.03, 0.06], abs=1e-6)

    def test_report_renders_plot_csv(self, tmp_path):
        spec = write_spec(tmp_path)
        panel_csv = tmp_path / "panel.csv"
        report_json = tmp_path / "report.json"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        main(["fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
              "--model", "exp", "--out", str(report_json)])
        plot_csv = tmp_path / "plot.csv"
        assert main(["report", str(report_json), "--out", str(plot_csv)]) == 0
        lines = plot_csv.read_text().strip().split("\n")
        n_years = 1890 - 1700 + 1
        assert len(lines) == 1 + 2 * n_years

    def test_rerun_is_bitwise_identical(self, tmp_path):
        spec = write_spec(tmp_path, noise_sd=0.15)
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
                "--model", "segmented", "--segments", "2", "--mixed",
                "--impute", "3", "--seed", "42"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
        ra["config"].pop("out")
        rb["config"].pop("out")
        assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)

    def test_seed_env_var(self, tmp_path, monkeypatch):
        spec = write_spec(tmp_path, noise_sd=0.15)
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        out = tmp_path / "r.json"
        monkeypatch.setenv("GROWTHSEG_SEED", "777")
        main(["fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
              "--model", "exp", "--out", str(out)])
        assert json.loads(out.read_text())["seed"] == 777


class TestCompare:
    def test_segment_sweep_table(self, tmp_path):
        spec = write_spec(tmp_path, noise_sd=0.08)
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        prefix = tmp_path / "scores"
        assert main([
            "compare", str(panel_csv), "--kind", "log", "--t0-trim", "0",
            "--segments", "1..4", "--out-prefix", str(prefix),
        ]) == 0
        doc = json.loads((tmp_path / "scores.json").read_text())
        assert doc["best_segments"] == 2
        assert len(doc["table"]) == 4
        csv_lines = (tmp_path / "scores.csv").read_text().strip().split("\n")
        assert len(csv_lines) == 5


class TestImputeCommand:
    def test_writes_complete_panels(self, tmp_path):
        spec = write_spec(tmp_path, noise_sd=0.1)
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        prefix = tmp_path / "imp"
        assert main([
            "impute", str(panel_csv), "--kind", "log", "--t0-trim", "0",
            "-m", "3", "--seed", "9", "--burnin", "20", "--gap", "10",
            "--out-prefix", str(prefix),
        ]) == 0
        for i in (1, 2, 3):
            panel = read_panel_csv(tmp_path / f"imp_{i}.csv", LOG_CUMULATIVE)
            assert panel.is_complete()


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert main(["fit"]) == 1  # missing input/out
        assert main(["frobnicate"]) == 1

    def test_missing_file_is_1(self, tmp_path):
        assert main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "r.json")]) == 1

    def test_fit_failure_is_2(self, tmp_path):
        # 8 usable years cannot host a 2-segment fit at minimum length 5
        spec = write_spec(
            tmp_path, model="exponential", slopes=[0.05], breakpoints=[],
            t0=1700, t_end=1707, sources=[{"source_id": "a"}],
        )
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        code = main(["fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
                     "--model", "segmented", "--segments", "2",
                     "--out", str(tmp_path / "r.json")])
        assert code == 2


class TestMenu:
    def test_menu_ranks_standard_models(self, tmp_path):
        spec = write_spec(
            tmp_path, noise_sd=0.12, t_end=1870,
            random_effects={"sd_intercept": 1.5, "sd_slopes": [0.005, 0.005],
                            "corr_intercept_slope1": -0.5},
        )
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        prefix = tmp_path / "menu"
        assert main([
            "compare", str(panel_csv), "--kind", "log", "--t0-trim", "0",
            "--menu", "--out-prefix", str(prefix),
        ]) == 0
        doc = json.loads((tmp_path / "menu.json").read_text())
        ids = [row["model_id"] for row in doc["table"] if "bic" in row]
        assert len(ids) >= 8
        # two-segment data: some segmented mixed model must beat the
        # single-segment ones, and the table is BIC-ascending
        bics = [row["bic"] for row in doc["table"] if "bic" in row]
        assert bics == sorted(bics)
        assert doc["best"].startswith(("m5", "m6", "m7", "m8", "m9"))


class TestSevenSegmentReportShape:
    def test_report_lists_all_slopes_and_knots(self, tmp_path):
        # economy-style single series, seven segments through the CLI
        spec = write_spec(
            tmp_path,
            t0=1770, t_end=2016, intercept=4.245,
            slopes=[0.008, 0.042, 0.005, 0.023, 0.068, 0.135, 0.043],
            breakpoints=[1779.8, 1810.3, 1843.0, 1934.8, 1968.5, 1987.3],
            noise_sd=0.107, seed=0,
            sources=[{"source_id": "gdp"}],
        )
        panel_csv = tmp_path / "panel.csv"
        main(["simulate", "--spec", str(spec), "--out-panel", str(panel_csv),
              "--out-truth", str(tmp_path / "t.json")])
        out = tmp_path / "r.json"
        assert main([
            "fit", str(panel_csv), "--kind", "log", "--t0-trim", "0",
            "--model", "segmented", "--segments", "7", "--out", str(out),
        ]) == 0
        report = json.loads(out.read_text())
        assert len(report["segments"]) == 7
        assert len(report["breakpoints"]) == 6
        # both doubling conventions present and genuinely different
        import math

        for seg in report["segments"]:
            b = seg["slope"]
            if b > 0.01:
                assert seg["doubling_years"] == pytest.approx(math.log(2) / b, rel=1e-9)
                assert seg["doubling_years_alt"] == pytest.approx(
                    math.log(2) / math.log1p(b), rel=1e-9
                )
                assert seg["doubling_years"] != seg["doubling_years_alt"]


class TestFredFormat:
    def test_level_series_fit_through_cli(self, tmp_path):
        import numpy as np
        from growthseg.segmented import segmented_design

        years = np.arange(1870, 2017)
        knots = [1934.8, 1968.5, 1987.3]
        log_level = 4.6 + segmented_design(years, knots, 1870) @ np.array(
            [0.023, 0.068, 0.135, 0.043]
        )
        rng = np.random.default_rng(1)
        level = np.exp(log_level + rng.normal(0, 0.08, years.size))
        path = tmp_path / "levels.csv"
        with path.open("w") as fh:
            fh.write("DATE,SERIES\n")
            for y, v in zip(years, level):
                fh.write(f"{y}-01-01,{v:.4f}\n")  # nominal levels may dip
        out = tmp_path / "r.json"
        assert main([
            "fit", str(path), "--format", "fred", "--t0-trim", "0",
            "--model", "segmented", "--segments", "4", "--out", str(out),
        ]) == 0
        report = json.loads(out.read_text())
        got = report["breakpoints"]
        assert all(abs(g - k) <= 4.0 for g, k in zip(got, knots))
