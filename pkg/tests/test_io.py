import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthseg.errors import (
    DuplicateYearError,
    EmptyInputError,
    GapInYearsError,
    InteriorMissingError,
    ParseError,
)
from growthseg.io import (
    read_fred_csv,
    read_panel_csv,
    write_panel_csv,
    write_plot_csv,
    write_report_json,
    read_report_json,
)
from growthseg.series import CUMULATIVE, RAW_ANNUAL, Panel


class TestPanelCsv:
    def test_missing_head_cells(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,dim,wos\n1903,10,\n1904,11,\n1905,12,5\n1906,13,6\n")
        panel = read_panel_csv(path)
        assert panel.sources == ("dim", "wos")
        assert np.isnan(panel.column("wos")[:2]).all()
        assert panel.column("wos")[2] == 5.0

    def test_single_source(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2000,1\n2001,2\n")
        panel = read_panel_csv(path)
        assert panel.n_sources == 1 and panel.n_years == 2

    def test_gap_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2000,1\n2002,2\n")
        with pytest.raises(GapInYearsError) as err:
            read_panel_csv(path)
        assert err.value.line == 3

    def test_out_of_order_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2001,1\n2000,2\n")
        with pytest.raises(GapInYearsError):
            read_panel_csv(path)

    def test_duplicate_year(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2000,1\n2000,2\n")
        with pytest.raises(DuplicateYearError):
            read_panel_csv(path)

    def test_bad_number_carries_line(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2000,1\n2001,abc\n")
        with pytest.raises(ParseError) as err:
            read_panel_csv(path)
        assert err.value.line == 3

    def test_negative_rejected_for_counts(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("year,x\n2000,-1\n")
        with pytest.raises(ParseError):
            read_panel_csv(path)

    def test_roundtrip_identity(self, tmp_path):
        values = np.array([[1.5, np.nan], [2.25, 4.125], [3.0, 5.5]])
        panel = Panel(1900, 1902, ("a", "b"), values, RAW_ANNUAL)
        path = tmp_path / "out.csv"
        write_panel_csv(panel, path)
        back = read_panel_csv(path)
        assert back.sources == panel.sources
        assert back.first_year == panel.first_year
        obs = ~np.isnan(panel.values)
        assert np.array_equal(back.values[obs], panel.values[obs])
        assert np.array_equal(np.isnan(back.values), np.isnan(panel.values))

    @settings(max_examples=25)
    @given(
        st.integers(1600, 2100),
        st.lists(
            st.lists(
                st.one_of(st.none(), st.floats(0, 1e9, allow_nan=False)),
                min_size=2,
                max_size=2,
            ),
            min_size=2,
            max_size=12,
        ),
    )
    def test_roundtrip_random_panels(self, start, rows):
        import tempfile
        from pathlib import Path

        rows[0][0] = 1.0
        rows[-1][0] = 2.0
        values = np.array(
            [[math.nan if v is None else v for v in row] for row in rows]
        )
        panel = Panel(start, start + len(rows) - 1, ("a", "b"), values, RAW_ANNUAL)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "p.csv"
            write_panel_csv(panel, path)
            back = read_panel_csv(path)
        obs = ~np.isnan(panel.values)
        assert np.array_equal(back.values[obs], panel.values[obs])
        assert np.array_equal(np.isnan(back.values), np.isnan(panel.values))


class TestFredCsv:
    def test_iso_dates(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("DATE,NGDPMPUKA\n1770-01-01,85.0\n1771-01-01,86.5\n1772-01-01,90.0\n")
        s = read_fred_csv(path)
        assert s.source_id == "NGDPMPUKA"
        assert s.start_year == 1770
        assert s.kind == CUMULATIVE
        assert s.values.tolist() == [85.0, 86.5, 90.0]

    def test_bare_years_parse_identically(self, tmp_path):
        a = tmp_path / "a.csv"
        a.write_text("DATE,X\n1770-01-01,85.0\n1771-01-01,86.5\n")
        b = tmp_path / "b.csv"
        b.write_text("DATE,X\n1770,85.0\n1771,86.5\n")
        sa, sb = read_fred_csv(a), read_fred_csv(b)
        assert sa.start_year == sb.start_year
        assert np.array_equal(sa.values, sb.values)

    def test_head_tail_missing_tolerated(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("DATE,X\n1768,.\n1769,\n1770,85.0\n1771,86.5\n1772,.\n")
        s = read_fred_csv(path)
        assert s.start_year == 1770
        assert len(s) == 2

    def test_interior_missing_rejected(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("DATE,X\n1770,85.0\n1771,.\n1772,90.0\n")
        with pytest.raises(InteriorMissingError):
            read_fred_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("DATE,X\n")
        with pytest.raises(EmptyInputError):
            read_fred_csv(path)


class TestReportJson:
    def test_schema_version_added(self, tmp_path):
        path = tmp_path / "r.json"
        write_report_json({"hello": 1}, path)
        back = read_report_json(path)
        assert back["schema_version"] == 1

    def test_nan_becomes_null(self, tmp_path):
        path = tmp_path / "r.json"
        write_report_json({"x": float("nan"), "arr": np.array([1.0, np.nan])}, path)
        back = read_report_json(path)
        assert back["x"] is None
        assert back["arr"] == [1.0, None]


class TestPlotCsv:
    def test_rows_cover_years_by_sources(self, tmp_path):
        report = {
            "years": [1900, 1901],
            "curves": {
                "a": {
                    "observed": [1.0, None],
                    "fitted": [1.1, 1.2],
                    "lower": [0.9, 1.0],
                    "upper": [1.3, 1.4],
                    "imputed": [0, 1],
                },
                "b": {
                    "observed": [2.0, 2.1],
                    "fitted": [2.0, 2.1],
                    "lower": [1.8, 1.9],
                    "upper": [2.2, 2.3],
                    "imputed": [0, 0],
                },
            },
        }
        path = tmp_path / "plot.csv"
        write_plot_csv(report, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "year,source,observed,fitted,lower,upper,imputed_flag"
        assert len(lines) == 1 + 2 * 2
        years_per_source = {}
        for line in lines[1:]:
            year, source = line.split(",")[:2]
            years_per_source.setdefault(source, []).append(int(year))
        assert years_per_source == {"a": [1900, 1901], "b": [1900, 1901]}
