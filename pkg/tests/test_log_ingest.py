import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from topicast import log_ingest as LI
from topicast.log_ingest import LogEntry


def test_jsonl_line_maps_fields():
    out = LI.parse_log(['{"entity":"e1","ts":0,"content":"ssh login"}'])
    assert out.entries == [LogEntry("e1", 0, "ssh login")]
    assert out.skipped == 0


def test_empty_stream():
    out = LI.parse_log([])
    assert out.entries == [] and out.skipped == 0


def test_one_malformed_of_four_is_skipped():
    lines = [json.dumps({"entity": f"e{i}", "ts": i, "content": "x"}) for i in range(3)] + ["{not json"]
    out = LI.parse_log(lines)
    assert len(out.entries) == 3
    assert out.skipped == 1


def test_majority_malformed_is_fatal():
    lines = ['{"entity":"e","ts":1,"content":"a"}', "garbage", "{}"]
    with pytest.raises(LI.LogFormatError):
        LI.parse_log(lines)


def test_exactly_half_malformed_is_tolerated():
    out = LI.parse_log(['{"entity":"e","ts":1,"content":"a"}', "garbage"])
    assert out.skipped == 1


@pytest.mark.parametrize("rec", [
    {"entity": "", "ts": 1, "content": "a"},
    {"entity": "e", "ts": -1, "content": "a"},
    {"entity": "e", "ts": 1.5, "content": "a"},
    {"entity": "e", "ts": True, "content": "a"},
    {"entity": "e", "ts": 1},
    {"entity": "e", "ts": 1, "content": None},
])
def test_invalid_records_are_skipped(rec):
    good = [json.dumps({"entity": "e", "ts": i, "content": "ok"}) for i in range(3)]
    assert LI.parse_log(good + [json.dumps(rec)]).skipped == 1


def test_empty_content_is_kept():
    out = LI.parse_log(['{"entity":"e","ts":3,"content":""}'])
    assert out.entries[0].content == ""


def test_csv_with_quoting(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text('entity,ts,content\ne1,5,"a, ""quoted"" doc"\ne2,6,plain\n', encoding="utf-8")
    out = LI.read_log(p)
    assert out.entries == [LogEntry("e1", 5, 'a, "quoted" doc'), LogEntry("e2", 6, "plain")]


def test_csv_multiline_field(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text('ts,content,entity\n7,"two\nlines",e9\n', encoding="utf-8")
    assert LI.read_log(p).entries == [LogEntry("e9", 7, "two\nlines")]


def test_csv_missing_column_is_format_error():
    with pytest.raises(LI.LogFormatError):
        LI.parse_log(io.StringIO("entity,content\ne,x\n"), "csv")


def test_unknown_format():
    with pytest.raises(ValueError):
        LI.parse_log([], "xml")


def test_unreadable_stream_propagates():
    def broken():
        yield '{"entity":"e","ts":1,"content":"a"}'
        raise OSError("disk gone")

    with pytest.raises(OSError):
        LI.parse_log(broken())


def test_jsonl_round_trip(tmp_path):
    entries = [LogEntry("a", 1, "x y"), LogEntry("b", 2, "ünïcode")]
    p = tmp_path / "l.jsonl"
    with open(p, "w", encoding="utf-8") as fh:
        LI.write_jsonl(entries, fh)
    assert LI.read_log(p).entries == entries


# bucketing ------------------------------------------------------------------


def test_same_day_bucket():
    b = LI.bucket([LogEntry("e", 0, "a"), LogEntry("e", 86399, "b")], 0, 86400)
    assert list(b.sets) == [("e", 0)]
    assert len(b[("e", 0)]) == 2


def test_duplicate_content_collapses():
    b = LI.bucket([LogEntry("e", 10, "same"), LogEntry("e", 20, "same")], 0, 86400)
    assert b[("e", 0)].docs == ("same",)
    assert b.entry_counts[("e", 0)] == 2


def test_half_open_boundary():
    b = LI.bucket([LogEntry("e", 100 + 50, "a")], epoch_start=100, period_length=50)
    assert ("e", 1) in b


def test_old_entries_dropped():
    b = LI.bucket([LogEntry("e", 5, "a"), LogEntry("e", 50, "b")], epoch_start=10, period_length=100)
    assert b.dropped == 1
    assert b.total_entries == 1


def test_dedupe_is_exact_bytes():
    b = LI.bucket([LogEntry("e", 0, "abc"), LogEntry("e", 1, "abd"), LogEntry("e", 2, "abc ")], 0, 10)
    assert len(b[("e", 0)]) == 3


def test_dedupe_scope_is_per_entity():
    b = LI.bucket([LogEntry("e", 0, "x"), LogEntry("f", 0, "x")], 0, 10)
    assert len(b[("e", 0)]) == 1 and len(b[("f", 0)]) == 1


def test_nonpositive_period_length():
    with pytest.raises(ValueError):
        LI.bucket([], 0, 0)


def test_calendar_months():
    jan1 = 1704067200  # 2024-01-01T00:00:00Z
    feb1 = 1706745600
    mar1 = 1709251200
    b = LI.bucket([LogEntry("e", jan1, "a"), LogEntry("e", feb1 - 1, "b"), LogEntry("e", feb1, "c"),
                   LogEntry("e", mar1 + 5, "d")], epoch_start=jan1, calendar_months=True)
    assert {p: len(s) for (_, p), s in b.sets.items()} == {0: 2, 1: 1, 2: 1}


@given(st.integers(0, 10**9), st.integers(0, 10**6), st.integers(1, 10**6))
def test_period_index_monotone(start, dt, length):
    t = start + dt
    assert LI.period_index(t, start, length) <= LI.period_index(t + 1, start, length)


entries_strategy = st.lists(
    st.builds(LogEntry, st.sampled_from(["a", "b", "c"]), st.integers(0, 500), st.sampled_from(["x", "y", "z w", ""])),
    max_size=60,
)


@given(entries_strategy, st.integers(0, 100), st.integers(1, 200))
def test_accounting_invariant(entries, start, length):
    lines = [json.dumps({"entity": e.entity_id, "ts": e.timestamp, "content": e.content}) for e in entries]
    parsed = LI.parse_log(lines + ["oops"] if entries else lines)
    b = LI.bucket(parsed.entries, start, length)
    assert b.total_entries + b.dropped + parsed.skipped == parsed.line_count


@given(entries_strategy, st.integers(1, 200))
def test_bucket_idempotent(entries, length):
    b = LI.bucket(entries, 0, length)
    again = LI.bucket(LI.unbucket(b, 0, length), 0, length)
    assert again.same_sets(b)


@given(entries_strategy, st.integers(1, 200), st.randoms(use_true_random=False))
def test_shard_merge_matches_serial(entries, length, rnd):
    shuffled = list(entries)
    rnd.shuffle(shuffled)
    cut = len(shuffled) // 2
    merged = LI.merge_buckets([LI.bucket(shuffled[cut:], 0, length), LI.bucket(shuffled[:cut], 0, length)])
    serial = LI.bucket(entries, 0, length)
    assert merged.same_sets(serial)
    assert merged.entry_counts == serial.entry_counts


def test_buckets_json_round_trip():
    b = LI.bucket([LogEntry("e", 0, "a"), LogEntry("e", 200, "b"), LogEntry("f", 3, "c")], 0, 100)
    back = LI.buckets_from_json(json.loads(json.dumps(LI.buckets_to_json(b))))
    assert back.same_sets(b) and back.entry_counts == b.entry_counts
