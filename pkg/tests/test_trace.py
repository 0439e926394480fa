import pytest

from gstab.simnet import TimerConfig, WorkloadConfig, run
from gstab.topology import ring_spec
from gstab.trace import Event, Trace, TraceFormatError


def sample():
    return run(ring_spec(3), timers=TimerConfig(hb_hz=50),
               workload=WorkloadConfig(put_rate=100, get_rate=100, duration_ms=200), seed=2).trace


def test_round_trip(tmp_path):
    t = sample()
    path = tmp_path / "run.trace"
    t.write(path)
    back = Trace.load(path)
    assert back.meta == t.meta
    assert back.events == t.events
    assert back.render() == t.render()


def test_total_order():
    t = sample()
    keys = [(e.time, e.seq) for e in t]
    assert keys == sorted(keys)
    assert len({e.seq for e in t}) == len(t)


def test_event_line_shape():
    e = Event(5, 1, "timer", 0, {"b": 1, "a": [1, 2]})
    assert e.render() == '5\t1\ttimer\t0\t{"a":[1,2],"b":1}'
    assert Event.parse(e.render()) == e


@pytest.mark.parametrize("line", [
    "1\t2\tsend\t0",
    "1\t2\tteleport\t0\t{}",
    "x\t2\tsend\t0\t{}",
    "1\t2\tsend\t0\t{not json",
])
def test_malformed_lines(line):
    with pytest.raises(TraceFormatError):
        Trace.parse(line + "\n")


def test_duplicate_seq_rejected():
    text = "1\t1\ttimer\t0\t{}\n2\t1\ttimer\t0\t{}\n"
    with pytest.raises(TraceFormatError):
        Trace.parse(text)


def test_blank_and_comment_lines_skipped():
    t = Trace.parse('#meta\t{"seed":1}\n\n# note\n1\t1\ttimer\t0\t{}\n')
    assert t.meta == {"seed": 1} and len(t) == 1


def test_every_kind_appears():
    kinds = {e.kind for e in sample()}
    assert {"send", "deliver", "timer", "op-start", "op-complete", "version-visible", "snapshot"} <= kinds
