import hashlib
import re

import pytest

from deeprx.charts import FLOOR, emit_chart


def _points(svg):
    return [(float(x), float(y)) for x, y in re.findall(r'<circle cx="([\d.]+)" cy="([\d.]+)"', svg)]


def test_flat_series_is_horizontal(tmp_path):
    svg = emit_chart({"a": ([9, 10, 11], [1e-3, 1e-3, 1e-3])}, tmp_path / "c.svg")
    ys = {y for _, y in _points(svg)}
    assert len(ys) == 1


def test_monotone_ber_rises_on_page(tmp_path):
    svg = emit_chart({"a": ([9, 10, 11], [1e-1, 1e-2, 1e-3])}, tmp_path / "c.svg")
    ys = [y for _, y in sorted(_points(svg))]
    assert ys[0] < ys[1] < ys[2]
    # equal decades are equal distances on a log axis
    assert ys[1] - ys[0] == pytest.approx(ys[2] - ys[1], abs=0.02)


def test_output_is_byte_identical(tmp_path):
    series = {"regular": ([9, 10, 11], [3e-2, 1e-2, 4e-3]), "combined": ([9, 10, 11], [2e-2, 6e-3, 0.0])}
    emit_chart(series, tmp_path / "a.svg", title="t")
    emit_chart(series, tmp_path / "b.svg", title="t")
    h = [hashlib.sha256((tmp_path / n).read_bytes()).hexdigest() for n in ("a.svg", "b.svg")]
    assert h[0] == h[1]


def test_zero_ber_drawn_at_floor_with_marker(tmp_path):
    svg = emit_chart({"a": ([9, 10], [1e-3, 0.0])}, tmp_path / "c.svg")
    assert f"&lt;={FLOOR:g}" in svg
    floor_tick = re.search(r'y="([\d.]+)" text-anchor="end">1e-6<', svg)
    assert floor_tick is not None
    zero_y = _points(svg)[1][1]
    assert zero_y == pytest.approx(float(floor_tick.group(1)) - 4, abs=0.01)


def test_names_are_escaped(tmp_path):
    svg = emit_chart({"a<b>&c": ([1], [0.1])}, tmp_path / "c.svg")
    assert "a&lt;b&gt;&amp;c" in svg


def test_empty_input_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_chart({}, tmp_path / "c.svg")
    with pytest.raises(ValueError):
        emit_chart({"a": ([], [])}, tmp_path / "c.svg")
