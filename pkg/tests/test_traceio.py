"""JSON-lines traces and CSV/JSON summaries."""

import json

import pytest

from pnas.traceio import (
    TraceWriter,
    eval_accuracies,
    read_trace,
    write_json,
    write_summary_csv,
)


def test_writer_round_trip(tmp_path):
    path = tmp_path / "trace.jsonl"
    events = [
        {"event": "eval", "level": 1, "cell_key": "1|0,4,1,4", "value": 0.5, "seed": 3},
        {"event": "fit", "level": 1, "cell_key": None, "value": "abc", "seed": 9},
    ]
    with TraceWriter(str(path)) as writer:
        for ev in events:
            writer.emit(ev)
    assert read_trace(str(path)) == events


def test_writer_is_canonical_and_flushed(tmp_path):
    path = tmp_path / "trace.jsonl"
    writer = TraceWriter(str(path))
    writer.emit({"b": 2, "a": 1})
    # visible on disk before close, keys sorted, compact separators
    assert path.read_text() == '{"a":1,"b":2}\n'
    writer.close()


def test_read_trace_rejects_bad_line(tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_text('{"ok":1}\nnot json\n')
    with pytest.raises(ValueError, match="trace.jsonl:2: not valid JSON"):
        read_trace(str(path))


def test_read_trace_skips_blank_lines(tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_text('\n{"ok":1}\n\n')
    assert read_trace(str(path)) == [{"ok": 1}]


def test_eval_accuracies_filters_failures():
    events = [
        {"event": "eval", "value": 0.5},
        {"event": "fit", "value": "snapshot"},
        {"event": "eval", "value": None, "error": "diverged"},
        {"event": "eval", "value": 0.7},
        {"event": "select", "value": 1},
    ]
    assert eval_accuracies(events) == [0.5, 0.7]


def test_summary_csv_unions_late_columns(tmp_path):
    path = tmp_path / "summary.csv"
    rows = [
        {"models": 1, "top1": 0.5},
        {"models": 2, "top1": 0.6, "top2": 0.55},
    ]
    write_summary_csv(str(path), rows)
    assert path.read_text() == "models,top1,top2\n1,0.5,\n2,0.6,0.55\n"


def test_summary_csv_explicit_field_order(tmp_path):
    path = tmp_path / "summary.csv"
    write_summary_csv(str(path), [{"a": 1, "b": 2}], field_order=["b", "a"])
    assert path.read_text() == "b,a\n2,1\n"


def test_summary_csv_floats_round_trip(tmp_path):
    path = tmp_path / "summary.csv"
    value = 0.1 + 0.2  # 0.30000000000000004
    write_summary_csv(str(path), [{"x": value}])
    text = path.read_text().splitlines()[1]
    assert float(text) == value


def test_summary_csv_needs_rows(tmp_path):
    with pytest.raises(ValueError, match="at least one row"):
        write_summary_csv(str(tmp_path / "s.csv"), [])


def test_write_json_stable(tmp_path):
    path = tmp_path / "doc.json"
    write_json(str(path), {"b": 1, "a": [1, 2]})
    text = path.read_text()
    assert text.endswith("\n")
    assert json.loads(text) == {"a": [1, 2], "b": 1}
    assert text.index('"a"') < text.index('"b"')
