from __future__ import annotations

from phasekey.plots import render_skyplot


def test_writes_svg_with_markers(tmp_path):
    rows = [(0.0, 90.0, 0.8), (120.0, 30.0, -0.2), (315.0, 5.0, 0.0)]
    path = tmp_path / "sky.svg"
    render_skyplot(rows, path, value_label="r_sk (bits)", title="session")
    text = path.read_text()
    assert text.lstrip().startswith("<?xml")
    assert "svg" in text
    # compass labels from the polar frame
    for label in ("N", "NE", "SW"):
        assert f">{label}<" in text or label in text


def test_empty_rows_still_render(tmp_path):
    path = tmp_path / "empty.svg"
    render_skyplot([], path)
    assert path.stat().st_size > 0
    assert "<svg" in path.read_text()


def test_repeated_renders_are_byte_identical(tmp_path):
    rows = [(10.0, 45.0, 0.3), (200.0, 60.0, -0.1)]
    first = tmp_path / "a.svg"
    second = tmp_path / "b.svg"
    render_skyplot(rows, first)
    render_skyplot(rows, second)
    assert first.read_bytes() == second.read_bytes()
