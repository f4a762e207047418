import numpy as np
import pytest

from flowcast.errors import (EmptyFlow, InsufficientGroup, IoError,
                             MalformedEvent, ParseError)
from flowcast.trace_io import (FlowKey, FlowTrace, Protocol, bin_packets,
                               leave_one_out_splits, load_traces, write_binned)

KEY = FlowKey("10.0.0.1", 5001, "10.0.0.2", 80, Protocol.TCP)
KEY2 = FlowKey("10.0.0.3", 5002, "10.0.0.2", 80, Protocol.UDP)


def test_bin_packets_two_events_one_bin():
    trace = bin_packets([(0.000, 125), (0.005, 125)], KEY, 0.01)
    assert trace.samples.tolist() == [2.0]  # 250 bytes = 2 kbit


def test_bin_packets_empty_is_error():
    with pytest.raises(EmptyFlow):
        bin_packets([], KEY, 0.01)


def test_bin_packets_negative_bytes():
    with pytest.raises(MalformedEvent):
        bin_packets([(0.0, -1)], KEY, 0.01)


def test_bin_packets_uniform_rate_oracle():
    # 10 s of events at 1250 bytes per 0.01 s -> 1000 bins of 10 kbit.
    # Oracle: direct summation over the event list.
    events = [(round(i * 0.01, 6), 1250) for i in range(1000)]
    trace = bin_packets(events, KEY, 0.01)
    assert trace.samples.size == 1000
    expected = np.zeros(1000)
    for ts, nbytes in events:
        expected[int(ts / 0.01 + 1e-9)] += nbytes * 8 / 1000
    np.testing.assert_array_equal(trace.samples, expected)


def test_bin_packets_trailing_partial_interval_kept():
    trace = bin_packets([(0.0, 100), (0.095, 100)], KEY, 0.01)
    assert trace.samples.size == 10
    assert trace.samples[9] == pytest.approx(0.8)


def test_byte_total_preserved_exactly():
    # every bin's byte count is recoverable by rounding kbit * 125
    rng = np.random.default_rng(3)
    events = [(float(i) * 0.01, int(rng.integers(0, 10_000))) for i in range(500)]
    trace = bin_packets(events, KEY, 0.01)
    recovered = int(np.rint(np.sum(np.rint(trace.samples * 125))))
    assert recovered == sum(b for _, b in events)


def test_bin_packets_order_within_bin_irrelevant():
    a = bin_packets([(0.001, 10), (0.002, 20), (0.003, 30)], KEY, 0.01,
                    start_time=0.0)
    b = bin_packets([(0.003, 30), (0.001, 10), (0.002, 20)], KEY, 0.01,
                    start_time=0.0)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_flow_trace_validation():
    with pytest.raises(ValueError):
        FlowTrace(KEY, 0.0, -0.01, np.ones(3))
    with pytest.raises(ValueError):
        FlowTrace(KEY, 0.0, 0.01, np.array([1.0, -2.0]))
    trace = FlowTrace(KEY, 0.0, 0.01, np.ones(250))
    assert trace.duration_s == pytest.approx(2.5)


class TestLeaveOneOut:
    def test_group_of_four(self):
        group = [FlowTrace(KEY, float(i), 0.01, np.ones(5)) for i in range(4)]
        splits = leave_one_out_splits(group)
        assert len(splits) == 4
        assert all(len(train) == 3 for train, _ in splits)

    def test_minimal_group(self):
        group = [FlowTrace(KEY, float(i), 0.01, np.ones(5)) for i in range(2)]
        splits = leave_one_out_splits(group)
        assert len(splits) == 2
        assert all(len(train) == 1 for train, _ in splits)

    def test_group_of_eight(self):
        group = [FlowTrace(KEY, float(i), 0.01, np.ones(5)) for i in range(8)]
        assert len(leave_one_out_splits(group)) == 8

    def test_each_flow_tested_exactly_once(self):
        group = [FlowTrace(KEY, float(i), 0.01, np.ones(5)) for i in range(5)]
        splits = leave_one_out_splits(group)
        tested = [id(test) for _, test in splits]
        assert sorted(tested) == sorted(id(f) for f in group)
        for train, test in splits:
            assert all(id(t) != id(test) for t in train)

    def test_too_small(self):
        with pytest.raises(InsufficientGroup):
            leave_one_out_splits([FlowTrace(KEY, 0.0, 0.01, np.ones(5))])


class TestEventsCsv:
    HEADER = "src,src_port,dst,dst_port,proto,ts_s,bytes\n"

    def test_two_flows(self, tmp_path):
        path = tmp_path / "events.csv"
        rows = [self.HEADER]
        for i in range(1000):
            rows.append(f"10.0.0.1,5001,10.0.0.2,80,TCP,{i * 0.01:.3f},100\n")
            rows.append(f"10.0.0.3,5002,10.0.0.2,80,UDP,{i * 0.01:.3f},200\n")
        path.write_text("".join(rows))
        traces = load_traces(path, "csv_events")
        assert len(traces) == 2
        assert all(t.samples.size == 1000 for t in traces)

    def test_duplicate_timestamp_rows_summed(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text(self.HEADER
                        + "10.0.0.1,5001,10.0.0.2,80,TCP,0.000,100\n"
                        + "10.0.0.1,5001,10.0.0.2,80,TCP,0.000,150\n")
        (trace,) = load_traces(path, "csv_events")
        # oracle: grouped sum, 250 bytes -> 2 kbit
        assert trace.samples.tolist() == [pytest.approx(2.0)]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("")
        assert load_traces(path, "csv_events") == []

    def test_header_only(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text(self.HEADER)
        assert load_traces(path, "csv_events") == []

    def test_schema_violation_reports_line(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text(self.HEADER
                        + "10.0.0.1,5001,10.0.0.2,80,TCP,0.000,100\n"
                        + "10.0.0.1,5001,10.0.0.2,80,TCP,not_a_number,100\n")
        with pytest.raises(ParseError) as err:
            load_traces(path, "csv_events")
        assert err.value.line == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ParseError):
            load_traces(path, "csv_events")

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            load_traces(tmp_path / "nope.csv", "csv_events")

    def test_deterministic_ordering(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text(self.HEADER
                        + "10.0.0.9,5009,10.0.0.2,80,TCP,0.000,100\n"
                        + "10.0.0.1,5001,10.0.0.2,80,TCP,0.000,100\n")
        traces = load_traces(path, "csv_events")
        assert [t.key.src_addr for t in traces] == ["10.0.0.1", "10.0.0.9"]


class TestBinnedRoundtrip:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        traces = [
            FlowTrace(KEY, 0.0, 0.01, rng.uniform(0, 50, size=300)),
            FlowTrace(KEY2, 1.5, 0.02, rng.uniform(0, 10, size=100)),
        ]
        path = tmp_path / "store.csv"
        write_binned(traces, path)
        loaded = load_traces(path, "csv_binned")
        assert len(loaded) == 2
        by_key = {t.key: t for t in loaded}
        for orig in traces:
            got = by_key[orig.key]
            assert got.sample_interval_s == orig.sample_interval_s
            assert got.start_time == orig.start_time
            np.testing.assert_array_equal(got.samples, orig.samples)

    def test_empty_binned_file(self, tmp_path):
        path = tmp_path / "store.csv"
        path.write_text("")
        assert load_traces(path, "csv_binned") == []

    def test_row_before_metadata(self, tmp_path):
        path = tmp_path / "store.csv"
        path.write_text("flow_id,t_index,kbit\n0,0,1.0\n")
        with pytest.raises(ParseError):
            load_traces(path, "csv_binned")


def test_flow_key_equality_fieldwise():
    a = FlowKey("h1", 1, "h2", 2, Protocol.TCP)
    b = FlowKey("h1", 1, "h2", 2, Protocol.TCP)
    c = FlowKey("h1", 1, "h2", 2, Protocol.UDP)
    assert a == b and a != c
    with pytest.raises(ValueError):
        FlowKey("h1", 70000, "h2", 2, Protocol.TCP)
