import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mganet.config import EvalConfig
from mganet.events import (
    DataError,
    Event,
    binarize_and_filter,
    decode_events,
    median_filter_1d,
    rasterize,
    read_annotations,
    read_weak_labels,
    write_annotations,
    write_weak_labels,
)
from mganet.metric_fixtures import CASES
from mganet.metrics import ClassScore, event_based_f1, match_events
from mganet.verify import fixture_paths

HOP = 10 / 124


# -- post-processing -------------------------------------------------------
def test_constant_probabilities_stay_on():
    assert binarize_and_filter(np.full((124, 10), 0.9)).all()


def test_isolated_frame_is_removed():
    p = np.zeros((30, 1))
    p[15] = 0.9
    assert not binarize_and_filter(p).any()


def test_threshold_is_strict():
    assert not binarize_and_filter(np.full((10, 1), 0.5)).any()


@pytest.mark.parametrize("step", [0, 3, 10, 20, 27, 30])
def test_monotone_step_moves_at_most_half_a_window(step):
    x = np.zeros((30, 1))
    x[step:] = 1.0
    out = median_filter_1d(x, 7)
    changed = np.flatnonzero(out[:, 0] != x[:, 0])
    assert all(abs(i - step) <= 3 for i in changed)


def test_median_of_a_step_is_the_step():
    x = np.zeros((20, 1))
    x[8:] = 1.0
    np.testing.assert_array_equal(median_filter_1d(x, 7), x)


def test_decode_nothing():
    assert decode_events(np.zeros((124, 10), bool), "c", [str(k) for k in range(10)]) == []


def test_decode_single_run():
    active = np.zeros((124, 10), bool)
    active[12:25, 3] = True
    (ev,) = decode_events(active, "c", [f"k{k}" for k in range(10)])
    assert ev == Event("c", 12 * HOP, 25 * HOP, "k3")


def test_decode_two_runs_split_by_one_frame():
    active = np.zeros((20, 1), bool)
    active[2:6, 0] = True
    active[7:9, 0] = True
    events = decode_events(active, "c", ["a"])
    assert [(round(e.onset / HOP), round(e.offset / HOP)) for e in events] == [(2, 6), (7, 9)]


def test_decode_runs_touching_the_edges():
    active = np.ones((124, 1), bool)
    (ev,) = decode_events(active, "c", ["a"])
    assert ev.onset == 0.0 and abs(ev.offset - 10.0) < 1e-12


def test_rasterize_half_overlap_rule():
    frames = rasterize([Event("c", 0.5 * HOP, 2.49 * HOP, "a")], ["a"], 5, HOP)
    assert frames[:, 0].tolist() == [1, 1, 0, 0, 0]
    with pytest.raises(DataError):
        rasterize([Event("c", 0.0, 1.0, "zzz")], ["a"], 5, HOP)


def test_rasterize_then_decode_round_trips_on_the_grid():
    events = [Event("c", 3 * HOP, 20 * HOP, "a"), Event("c", 40 * HOP, 41 * HOP, "b")]
    frames = rasterize(events, ["a", "b"], 124, HOP)
    decoded = decode_events(frames > 0.5, "c", ["a", "b"])
    assert [(e.label, round(e.onset / HOP), round(e.offset / HOP)) for e in decoded] == [("a", 3, 20), ("b", 40, 41)]


def test_event_invariants():
    with pytest.raises(DataError):
        Event("c", 2.0, 2.0, "a")
    with pytest.raises(DataError):
        Event("c", -0.1, 1.0, "a")


# -- TSV formats -----------------------------------------------------------
def test_annotation_round_trip(tmp_path):
    events = [Event("b", 0.25, 1.5, "dog"), Event("a", 1.0, 2.125, "cat")]
    write_annotations(tmp_path / "s.tsv", events)
    text = (tmp_path / "s.tsv").read_text().splitlines()
    assert text[0] == "filename\tonset\toffset\tevent_label"
    assert text[1] == "a.wav\t1.000\t2.125\tcat"
    assert sorted(read_annotations(tmp_path / "s.tsv")) == sorted(events)


def test_annotation_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("filename\tonset\toffset\tevent_label\na.wav\t1.0\t2.0\tdog\na.wav\t1.0\tdog\n")
    with pytest.raises(DataError, match=":3:"):
        read_annotations(p)
    p.write_text("filename\tonset\toffset\tevent_label\na.wav\tx\t2.0\tdog\n")
    with pytest.raises(DataError, match=":2:"):
        read_annotations(p)
    p.write_text("filename\tonset\toffset\tevent_label\na.wav\t3.0\t2.0\tdog\n")
    with pytest.raises(DataError, match=":2:"):
        read_annotations(p)
    p.write_text("file\tstart\n")
    with pytest.raises(DataError, match=":1:"):
        read_annotations(p)
    p.write_text("filename\tonset\toffset\tevent_label\na.wav\t1.0\t2.0\tdog\n")
    with pytest.raises(DataError, match="unknown class"):
        read_annotations(p, classes=["cat"])


def test_weak_label_round_trip_and_errors(tmp_path):
    write_weak_labels(tmp_path / "w.tsv", {"a": ["x", "y"], "b": []})
    assert (tmp_path / "w.tsv").read_text().splitlines()[:2] == ["filename\tevent_labels", "a.wav\tx,y"]
    assert read_weak_labels(tmp_path / "w.tsv") == {"a": ["x", "y"], "b": []}
    with pytest.raises(DataError, match=":2:"):
        read_weak_labels(tmp_path / "w.tsv", classes=["x"])


# -- metric ----------------------------------------------------------------
def test_collar_example_matches():
    report = event_based_f1([Event("c", 1.0, 2.0, "Dog")], [Event("c", 1.1, 2.05, "Dog")])
    assert report.per_class["Dog"].f1 == 1.0


def test_collar_example_misses():
    report = event_based_f1([Event("c", 1.0, 2.0, "Dog")], [Event("c", 1.3, 2.05, "Dog")])
    s = report.per_class["Dog"]
    assert (s.tp, s.fp, s.fn) == (0, 1, 1) and s.f1 == 0.0


@pytest.mark.parametrize("case", CASES, ids=[c.name for c in CASES])
def test_hand_scored_cases(case):
    report = event_based_f1(case.refs, case.preds, EvalConfig(), case.classes)
    assert {c: (s.tp, s.fp, s.fn) for c, s in report.per_class.items()} == case.counts
    assert report.macro_f1 == pytest.approx(case.macro_f1, abs=1e-12)


def test_there_are_at_least_ten_hand_cases():
    assert len(CASES) >= 10


def test_shipped_fixture_report():
    refs, preds, expected = fixture_paths()
    report = event_based_f1(read_annotations(refs), read_annotations(preds))
    assert report.lines() == [
        "alarm\t1\t1\t0\t0.6667",
        "dog\t1\t0\t1\t0.6667",
        "speech\t0\t2\t1\t0.0000",
        "macro\t-\t-\t-\t0.4444",
    ]
    assert report.lines() == expected.read_text().splitlines()


def test_class_score_arithmetic():
    s = ClassScore(3, 1, 2)
    assert s.precision == 0.75 and s.recall == 0.6 and s.f1 == pytest.approx(6 / 9)
    assert ClassScore().f1 == 0.0


def test_report_table_mentions_every_class():
    report = event_based_f1([Event("c", 0.0, 1.0, "a")], [Event("c", 0.0, 1.0, "b")])
    table = report.table()
    assert "a" in table and "b" in table and "macro" in table


def _events(draw_list, label="a", duration=None):
    out = []
    for clip, onset, length in draw_list:
        length = duration if duration is not None else length
        out.append(Event(f"c{clip}", onset, round(onset + length, 3), label))
    return out


event_lists = st.lists(
    st.tuples(st.integers(0, 2), st.integers(0, 9000).map(lambda v: v / 1000), st.integers(50, 3000).map(lambda v: v / 1000)),
    max_size=8,
)


@settings(max_examples=100, deadline=None)
@given(event_lists, event_lists)
def test_identical_lists_score_one(refs, _):
    events = _events(refs)
    if events:
        assert event_based_f1(events, list(events)).macro_f1 == 1.0


@settings(max_examples=100, deadline=None)
@given(event_lists, event_lists)
def test_matching_is_one_to_one(refs, preds):
    r, p = _events(refs), _events(preds)
    cfg = EvalConfig()
    for clip in {e.clip_id for e in r + p}:
        rc = [e for e in r if e.clip_id == clip]
        pc = [e for e in p if e.clip_id == clip]
        assert match_events(rc, pc, cfg) <= min(len(rc), len(pc))


@settings(max_examples=100, deadline=None)
@given(event_lists, event_lists)
def test_f1_swap_symmetry_for_fixed_length_events(refs, preds):
    # with a common length <= 1 s the offset collar is 0.2 s on both sides, so matching is symmetric
    r, p = _events(refs, duration=0.8), _events(preds, duration=0.8)
    assert event_based_f1(r, p, classes=["a"]).macro_f1 == pytest.approx(event_based_f1(p, r, classes=["a"]).macro_f1)


@settings(max_examples=100, deadline=None)
@given(event_lists, event_lists, st.integers(0, 5000).map(lambda v: v / 1000), st.randoms(use_true_random=False))
def test_shift_and_order_invariance(refs, preds, shift, rnd):
    r, p = _events(refs), _events(preds)
    base = event_based_f1(r, p, classes=["a"]).macro_f1
    moved = lambda evs: [Event(e.clip_id, e.onset + shift, e.offset + shift, e.label) for e in evs]  # noqa: E731
    assert event_based_f1(moved(r), moved(p), classes=["a"]).macro_f1 == pytest.approx(base)
    rnd.shuffle(r)
    rnd.shuffle(p)
    assert event_based_f1(r, p, classes=["a"]).macro_f1 == pytest.approx(base)
