import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from wbaryc import io
from wbaryc.charts import chart_from_report, line_chart_svg

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6), elements=finite))
def test_histogram_round_trip(tmp_path_factory, H):
    path = tmp_path_factory.mktemp("h") / "m.csv"
    io.write_histograms_csv(path, H)
    np.testing.assert_array_equal(io.read_histograms_csv(path), H)


row = st.builds(
    io.TraceRow,
    k=st.integers(0, 10**9),
    obj_estimate=st.floats(allow_infinity=False, width=64),
    w2_to_truth=st.floats(allow_infinity=False, width=64),
    regret_partial=st.floats(allow_infinity=False, width=64),
    wall_ms=st.integers(0, 10**9),
)


@given(st.lists(row, max_size=8))
def test_trace_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("t") / "trace.csv"
    io.write_trace_csv(path, rows)
    back = io.read_trace_csv(path)
    assert len(back) == len(rows)
    assert all(a.same_values(b) for a, b in zip(rows, back))


def test_report_round_trip(tmp_path):
    rows = [("psgd", 1, 0.5), ("psgd", 10, 0.1), ("smd", 1, math.pi)]
    io.write_report_csv(tmp_path / "r.csv", rows)
    assert io.read_report_csv(tmp_path / "r.csv") == rows


def test_wrong_header_rejected(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        io.read_trace_csv(tmp_path / "t.csv")
    with pytest.raises(ValueError):
        io.read_report_csv(tmp_path / "t.csv")


def test_json_non_finite_becomes_null(tmp_path):
    io.write_json(tmp_path / "x.json", {"a": math.nan, "b": [np.float64(1.5), np.inf], "c": np.arange(2)})
    assert io.read_json(tmp_path / "x.json") == {"a": None, "b": [1.5, None], "c": [0, 1]}


def test_seventeen_digits():
    x = 0.1 + 0.2
    assert float(io.fmt(x)) == x and io.fmt(3) == "3"


def test_svg_is_well_formed():
    svg = line_chart_svg({"a <b>": ([1, 10, 100], [1.0, 0.1, 0.0]), "c": ([1, 2], [math.nan, 2.0])},
                         title="t & u", logx=True, logy=True)
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2


def test_chart_splits_repeated_solvers():
    rows = [("smd", 1, 1.0), ("smd", 2, 0.5), ("smd", 1, 1.0), ("smd", 2, 0.5)]
    root = ET.fromstring(chart_from_report(rows))
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2
