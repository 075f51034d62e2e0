from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proarchiver import store as store_mod
from proarchiver.client import Accepted, ConnectionFailed, RateLimited, ServerError
from proarchiver.store import (
    CorruptStore,
    IoFailure,
    LedgerTotals,
    RunLedgerEntry,
    StoreSnapshot,
    UnknownUrl,
    UrlRecord,
    aggregate_stats,
    dumps,
    format_timestamp,
    load,
    loads,
    mean_daily_hours,
    record_submission,
    redundancy_bucket,
    save,
)
from proarchiver.urls import LinkClass

T0 = datetime(2026, 1, 15, tzinfo=timezone.utc)


def run_entry(i, hours=4.31, start=T0, kind="run"):
    return RunLedgerEntry(i, start + timedelta(hours=4 * i), hours * 3600, min(hours, 3 + 55 / 60) * 3600, entry_kind=kind)


def test_empty_round_trip(tmp_path):
    path = tmp_path / "state.jsonl"
    save(StoreSnapshot(), path)
    assert path.read_text() == '{"kind": "header", "schema_version": 1}\n'
    assert load(path) == StoreSnapshot()


def test_missing_file_is_empty(tmp_path):
    assert load(tmp_path / "absent.jsonl") == StoreSnapshot()


def sample_store():
    s = StoreSnapshot()
    s.upsert("https://school.example/", LinkClass.PAGE, T0)
    s.upsert("https://school.example/about", LinkClass.PAGE, T0)
    s.upsert("https://school.example/wp-content/uploads/a.jpg", LinkClass.MEDIA, T0)
    record_submission(s, "https://school.example/", Accepted(), T0 + timedelta(minutes=1))
    record_submission(s, "https://school.example/about", ConnectionFailed("reset"), T0)
    s.append_run(run_entry(1))
    s.append_run(run_entry(2))
    return s


def test_round_trip_with_records(tmp_path):
    path = tmp_path / "state.jsonl"
    s = sample_store()
    save(s, path)
    assert load(path) == s
    lines = path.read_text().splitlines()
    assert len(lines) == 6
    assert '"Z"' not in lines[1] and lines[1].count("Z") >= 1


def test_truncated_final_line(tmp_path):
    path = tmp_path / "state.jsonl"
    save(sample_store(), path)
    data = path.read_bytes()
    path.write_bytes(data[:-20])
    with pytest.raises(CorruptStore) as err:
        load(path)
    assert err.value.line == 6
    assert "line 6" in str(err.value)
    assert err.value.offset == len(b"".join(data.splitlines(keepends=True)[:5]))


@pytest.mark.parametrize(
    "text",
    [
        '{"kind": "record"}\n',
        '{"kind": "header", "schema_version": 99}\n',
        '{"kind": "header", "schema_version": 1}\n[1]\n',
        '{"kind": "header", "schema_version": 1}\n{"kind": "mystery"}\n',
        '{"kind": "header", "schema_version": 1}\nnot json\n',
    ],
)
def test_corrupt_variants(text):
    with pytest.raises(CorruptStore):
        loads(text)


def test_duplicate_record_is_corrupt():
    s = sample_store()
    text = dumps(s)
    lines = text.splitlines(keepends=True)
    with pytest.raises(CorruptStore) as err:
        loads("".join(lines[:2] + lines[1:]))
    assert err.value.line == 3


def test_crash_during_rename_keeps_prior_store(tmp_path, monkeypatch):
    path = tmp_path / "state.jsonl"
    save(sample_store(), path)
    before = path.read_bytes()
    bigger = sample_store()
    bigger.upsert("https://school.example/news", LinkClass.PAGE, T0)

    def crash(src, dst):
        raise OSError("simulated power loss")

    monkeypatch.setattr(store_mod, "_replace", crash)
    with pytest.raises(IoFailure):
        save(bigger, path)
    assert path.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["state.jsonl"]


def test_record_submission_counts():
    s = StoreSnapshot()
    url = "https://school.example/"
    s.upsert(url, LinkClass.PAGE, T0)
    for i in range(52):
        record_submission(s, url, Accepted(), T0 + timedelta(hours=i))
    record_submission(s, url, RateLimited(5), T0)
    record_submission(s, url, ServerError(503), T0)
    rec = s.get(url)
    assert rec.submit_count == 52
    assert rec.last_submitted == T0 + timedelta(hours=51)
    assert rec.error_counts == {"rate_limited": 1, "server_error": 1}
    stats = aggregate_stats(s)
    assert stats["over_fifty"] == [url]
    assert stats["redundancy_histogram"]["50+"] == 1


def test_record_submission_unknown_url():
    with pytest.raises(UnknownUrl):
        record_submission(StoreSnapshot(), "https://x.org/", Accepted(), T0)


def test_record_invariant():
    with pytest.raises(ValueError):
        UrlRecord("https://x.org/", LinkClass.PAGE, T0, submit_count=1)
    with pytest.raises(ValueError):
        UrlRecord("https://x.org/", LinkClass.PAGE, T0, last_submitted=T0)


def test_run_ids_must_increase():
    s = StoreSnapshot()
    s.append_run(run_entry(3))
    with pytest.raises(ValueError):
        s.append_run(run_entry(3))


@pytest.mark.parametrize("count,bucket", [(0, "0"), (1, "1-9"), (9, "1-9"), (10, "10-49"), (49, "10-49"), (50, "50+"), (500, "50+")])
def test_redundancy_buckets(count, bucket):
    assert redundancy_bucket(count) == bucket


def test_aggregate_long_deployment():
    s = StoreSnapshot(ledger=[run_entry(i) for i in range(1, 581)])
    stats = aggregate_stats(s)
    assert stats["total_runs"] == 580
    assert f"{stats['total_wall_hours']:.1f}" == "2499.8"
    assert stats["mean_run_hours"] == pytest.approx(4.31)


def test_aggregate_two_runs():
    s = StoreSnapshot(ledger=[run_entry(1, 3.917), run_entry(2, 3.917)])
    assert aggregate_stats(s)["total_wall_hours"] == pytest.approx(7.834)


def test_aggregate_empty():
    stats = aggregate_stats(StoreSnapshot())
    assert stats["total_runs"] == 0 and stats["total_wall_hours"] == 0 and stats["mean_run_hours"] == 0
    assert stats["over_fifty"] == []


def test_heartbeats_are_not_runs():
    s = StoreSnapshot(ledger=[run_entry(1), run_entry(2, 0, kind="heartbeat")])
    stats = aggregate_stats(s)
    assert stats["total_runs"] == 1 and stats["heartbeats"] == 1


def test_mean_daily_hours_six_runs_a_day():
    cutoff_hours = 3 + 55 / 60
    ledger = [
        RunLedgerEntry(i + 1, T0 + timedelta(days=i // 6, hours=4 * (i % 6)), cutoff_hours * 3600, cutoff_hours * 3600)
        for i in range(6 * 10)
    ]
    assert mean_daily_hours(ledger) == pytest.approx(23.5)


# property tests

stamps = st.datetimes(
    min_value=datetime(2020, 1, 1), max_value=datetime(2035, 1, 1), timezones=st.just(timezone.utc)
)
url_text = st.lists(st.sampled_from("abz09/é%-\x85"), max_size=20).map(lambda cs: "https://school.example/" + "".join(cs))


@st.composite
def records(draw):
    count = draw(st.integers(0, 200))
    return UrlRecord(
        url=draw(url_text),
        link_class=draw(st.sampled_from([LinkClass.PAGE, LinkClass.MEDIA])),
        first_seen=draw(stamps),
        last_submitted=draw(stamps) if count else None,
        submit_count=count,
        last_digest=draw(st.none() | st.text("0123456789abcdef", min_size=64, max_size=64)),
        media_validator=draw(st.none() | st.text(max_size=12)),
        error_counts=draw(st.dictionaries(st.sampled_from(["connection_error", "rate_limited"]), st.integers(1, 9))),
    )


@st.composite
def snapshots(draw):
    recs = draw(st.lists(records(), max_size=8, unique_by=lambda r: r.url))
    n = draw(st.integers(0, 6))
    ids = sorted(draw(st.sets(st.integers(1, 10_000), min_size=n, max_size=n)))
    ledger = [
        RunLedgerEntry(
            i,
            draw(stamps),
            draw(st.floats(0, 21600)),
            draw(st.floats(0, 14100)),
            draw(st.integers(0, 500)),
            draw(st.integers(0, 500)),
            draw(st.integers(0, 50)),
            draw(st.sampled_from(["", "BudgetExhausted", "ListExhausted"])),
            draw(st.sampled_from(["run", "heartbeat"])),
        )
        for i in ids
    ]
    return StoreSnapshot({r.url: r for r in recs}, ledger)


@settings(max_examples=1000)
@given(snapshots())
def test_round_trip_property(snap):
    assert loads(dumps(snap)) == snap


@given(snapshots(), st.integers(1, 10_000))
def test_any_truncation_is_detected(snap, cut):
    text = dumps(snap).encode()
    cut = cut % len(text)
    if text[cut - 1 : cut] == b"\n" or cut == 0:
        return
    with pytest.raises(CorruptStore):
        loads(text[:cut].decode("utf-8", errors="ignore") or "x")


@given(st.lists(st.tuples(st.floats(0, 21600), st.integers(0, 100)), max_size=30), st.integers(0, 30))
def test_totals_are_additive(parts, split):
    ledger = [RunLedgerEntry(i + 1, T0, w, 0, a) for i, (w, a) in enumerate(parts)]
    whole = LedgerTotals.of(ledger)
    combined = LedgerTotals.of(ledger[:split]) + LedgerTotals.of(ledger[split:])
    assert combined.runs == whole.runs and combined.attempted == whole.attempted
    assert combined.wall_seconds == pytest.approx(whole.wall_seconds)


@given(st.lists(st.floats(0, 21600), min_size=1, max_size=30), st.floats(0, 21600))
def test_totals_monotone(durations, extra):
    ledger = [RunLedgerEntry(i + 1, T0, d, 0) for i, d in enumerate(durations)]
    more = ledger + [RunLedgerEntry(len(ledger) + 1, T0, extra, 0)]
    assert LedgerTotals.of(more).wall_seconds >= LedgerTotals.of(ledger).wall_seconds


def test_timestamps_end_in_z():
    assert format_timestamp(T0) == "2026-01-15T00:00:00Z"
    with pytest.raises(ValueError):
        format_timestamp(datetime(2026, 1, 1))
