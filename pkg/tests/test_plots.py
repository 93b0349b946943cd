import xml.etree.ElementTree as ET

import numpy as np
import pytest

from steinuq.plots import plot_file, read_table, render_band, render_line


def write_table(tmp_path, text, name="table.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestReadTable:
    def test_parses_header_and_rows(self, tmp_path):
        path = write_table(tmp_path, "gamma,mean,stdev,w1\n0.0,1.0,0.1,0.2\n0.1,1.5,0.2,0.3\n")
        header, data = read_table(path)
        assert header == ["gamma", "mean", "stdev", "w1"]
        assert data.shape == (2, 4)
        assert data[1, 1] == 1.5

    def test_skips_comment_lines(self, tmp_path):
        path = write_table(tmp_path, "# note\nlambda,r2,active_count\n0.1,0.99,10\n")
        header, data = read_table(path)
        assert header[0] == "lambda"
        assert data.shape == (1, 3)

    def test_empty_file(self, tmp_path):
        with pytest.raises(ValueError, match="no table content"):
            read_table(write_table(tmp_path, ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(ValueError, match="no rows"):
            read_table(write_table(tmp_path, "a,b\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ValueError, match="row width"):
            read_table(write_table(tmp_path, "a,b\n1.0\n"))


class TestRenderers:
    def test_line_is_deterministic(self):
        x, y = [0.0, 1.0, 2.0], [3.0, 1.0, 2.0]
        assert render_line(x, y) == render_line(x, y)

    def test_line_is_wellformed_svg(self):
        svg = render_line([0, 1], [1, 0], xlabel="x", ylabel="y", title="t")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert 'viewBox="0 0 640 400"' in svg
        assert "polyline" in svg

    def test_line_rejects_empty_and_mismatched(self):
        with pytest.raises(ValueError):
            render_line([], [])
        with pytest.raises(ValueError):
            render_line([1, 2], [1])

    def test_line_constant_values_render(self):
        svg = render_line([0, 1, 2], [5.0, 5.0, 5.0])
        ET.fromstring(svg)

    def test_band_contains_polygon_and_mean_line(self):
        svg = render_band([0, 1, 2], [1, 2, 3], [0.1, 0.2, 0.1])
        ET.fromstring(svg)
        assert "polygon" in svg and "polyline" in svg

    def test_band_is_deterministic(self):
        args = ([0, 1, 2], [1, 2, 3], [0.1, 0.2, 0.1])
        assert render_band(*args) == render_band(*args)

    def test_band_rejects_mismatched(self):
        with pytest.raises(ValueError):
            render_band([1, 2], [1, 2], [0.1])

    def test_band_span_covers_two_sigma(self):
        # with std 1 around mean 0 the y-range must reach +/- 2
        svg = render_band([0.0, 1.0], [0.0, 0.0], [1.0, 1.0])
        assert ">2<" in svg and ">-2<" in svg


class TestPlotFile:
    def test_auto_band_for_run_tables(self, tmp_path):
        path = write_table(tmp_path, "gamma,mean,stdev,w1\n0.0,1.0,0.1,0.2\n0.1,1.5,0.2,0.3\n")
        out = tmp_path / "out.svg"
        assert plot_file(path, out) == "band"
        ET.fromstring(out.read_text())

    def test_auto_line_for_sweeps(self, tmp_path):
        path = write_table(tmp_path, "lambda,r2,active_count\n0.1,0.91,40\n1.0,0.95,12\n")
        out = tmp_path / "out.svg"
        assert plot_file(path, out) == "line"

    def test_explicit_kind_overrides(self, tmp_path):
        path = write_table(tmp_path, "gamma,mean,stdev,w1\n0.0,1.0,0.1,0.2\n0.1,1.5,0.2,0.3\n")
        assert plot_file(path, tmp_path / "o.svg", kind="line") == "line"

    def test_band_without_columns_fails(self, tmp_path):
        path = write_table(tmp_path, "lambda,r2\n0.1,0.9\n")
        with pytest.raises(ValueError, match="mean"):
            plot_file(path, tmp_path / "o.svg", kind="band")

    def test_unknown_kind(self, tmp_path):
        path = write_table(tmp_path, "a,b\n1,2\n")
        with pytest.raises(ValueError, match="unknown plot kind"):
            plot_file(path, tmp_path / "o.svg", kind="scatter")

    def test_output_bytes_stable_across_calls(self, tmp_path):
        path = write_table(tmp_path, "gamma,mean,stdev,w1\n0.0,1.0,0.1,0.2\n0.1,1.5,0.2,0.3\n")
        plot_file(path, tmp_path / "a.svg")
        plot_file(path, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
