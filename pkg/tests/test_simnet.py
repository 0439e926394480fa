import random

import pytest
from hypothesis import given, settings, strategies as st

from gstab.migration import GroupConfig
from gstab.protocol import Heartbeat, ManualClock, Server
from gstab.simnet import (
    ClockConfig,
    Hold,
    NetConfig,
    Step,
    TimerConfig,
    VisibilitySample,
    WorkloadConfig,
    gentlerain_gst,
    period_ms,
    run,
)
from gstab.topology import TopologySpec, build_graph, compute_O, ring_spec, server_metadata

from helpers import random_spec

PAIR = TopologySpec.from_dict({"servers": [0, 1], "keys": {"x": [0, 1]}, "clients": {"c": [0, 1]}})
IDLE = WorkloadConfig(put_rate=0, duration_ms=1000, drain_ms=0)


def sends(trace, mtype):
    return [e for e in trace if e.kind == "send" and e.data["type"] == mtype]


def test_heartbeat_count_per_direction():
    res = run(PAIR, timers=TimerConfig(hb_hz=10), workload=IDLE)
    hb = sends(res.trace, "Heartbeat")
    assert sorted((e.node, e.data["dst"]) for e in hb).count((0, 1)) == 10
    assert sorted((e.node, e.data["dst"]) for e in hb).count((1, 0)) == 10


def test_fifo_and_no_loss():
    res = run(ring_spec(5), net=NetConfig(delay_ms=3, jitter_ms=20),
              timers=TimerConfig(hb_hz=50), workload=WorkloadConfig(put_rate=300, duration_ms=500), seed=7)
    sent, got = {}, {}
    for e in res.trace:
        if e.kind == "send" and isinstance(e.data["dst"], int) and isinstance(e.node, int):
            sent.setdefault((e.node, e.data["dst"]), []).append(e.data.get("ct", e.data.get("version")))
        elif e.kind == "deliver" and isinstance(e.node, int) and isinstance(e.data["src"], int):
            got.setdefault((e.data["src"], e.node), []).append(e.data.get("ct", e.data.get("version")))
    # the run may stop with heartbeats still in flight; what arrived is a prefix, in order
    for ch, seq in sent.items():
        assert got.get(ch, []) == seq[:len(got.get(ch, []))]
        assert all(not isinstance(x, list) for x in seq[len(got.get(ch, [])):])


def test_same_seed_same_bytes():
    kw = dict(net=NetConfig(delay_ms=5, jitter_ms=4), timers=TimerConfig(hb_hz=20),
              workload=WorkloadConfig(put_rate=200, get_rate=100, duration_ms=300), seed=11)
    assert run(ring_spec(4), **kw).trace.render() == run(ring_spec(4), **kw).trace.render()


def test_different_seed_differs():
    wl = WorkloadConfig(put_rate=200, duration_ms=300)
    assert run(ring_spec(4), workload=wl, seed=1).trace.render() != run(ring_spec(4), workload=wl, seed=2).trace.render()


def test_latency_is_visible_minus_received():
    assert VisibilitySample(0, "k", 90, 1, received=100, visible=103).latency == 3


def test_ring_latencies_present():
    res = run(ring_spec(10), net=NetConfig(delay_ms=100), timers=TimerConfig(hb_hz=10),
              workload=WorkloadConfig(put_rate=100, duration_ms=1000))
    assert res.samples and all(x >= 0 for x in res.latencies)
    assert res.ok


class TestGentleRain:
    def test_min_over_all(self):
        spec = TopologySpec.from_dict({"servers": list(range(5)), "keys": {"x": [0, 1, 2, 3, 4]}, "clients": {"c": [0]}})
        graph = build_graph(spec)
        s = Server(0, graph, server_metadata(graph)[0], clock=ManualClock(), mode="gentlerain")
        for j, v in zip((1, 2, 3, 4), (3, 9, 2, 7)):
            s.handle(j, Heartbeat(v))
        assert gentlerain_gst(s) == 2

    def test_three_server_ring_equal(self):
        # every other server is a ring neighbour here
        graph = build_graph(ring_spec(3))
        a = Server(0, graph, server_metadata(graph)[0], clock=ManualClock())
        a.handle(1, Heartbeat(17))
        a.handle(2, Heartbeat(23))
        assert gentlerain_gst(a) == a.gst("k0_1", frozenset({0}), float("inf")) == 17

    def test_two_server_ring_has_no_cycle(self):
        graph = build_graph(ring_spec(2))
        a = Server(0, graph, server_metadata(graph)[0], clock=ManualClock())
        a.handle(1, Heartbeat(17))
        assert gentlerain_gst(a) == 17
        assert a.gst("k0_1", frozenset({0}), float("inf")) == float("inf")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_never_above_partial(self, seed):
        rng = random.Random(seed)
        spec = random_spec(rng, rng.randint(2, 6), rng.randint(1, 6), rng.randint(1, 3), max_access=1)
        graph = build_graph(spec)
        metas = server_metadata(graph)
        for i in graph.vertices:
            s = Server(i, graph, metas[i], clock=ManualClock())
            for j in graph.vertices:
                if j != i:
                    s.handle(j, Heartbeat(rng.randint(1, 99)))
            for k in graph.keys[i]:
                assert gentlerain_gst(s) <= s.gst(k, frozenset({i}), float("inf"))

    def test_rejects_multi_server_clients(self):
        with pytest.raises(ValueError):
            run(PAIR, GroupConfig.for_mode("gentlerain", PAIR), workload=IDLE)


@pytest.mark.parametrize("mode", ["full", "gentlerain"])
def test_heartbeat_recipients(mode):
    spec = ring_spec(6)
    res = run(spec, GroupConfig.for_mode(mode, spec), timers=TimerConfig(hb_hz=20), workload=IDLE)
    graph = build_graph(spec)
    for i in spec.servers:
        got = {e.data["dst"] for e in sends(res.trace, "Heartbeat") if e.node == i}
        want = set(compute_O(graph, i)) if mode == "full" else set(spec.servers) - {i}
        assert got == want


def test_linear_skew():
    cfg = ClockConfig.linear(5, 100)
    assert [cfg.skew(i) for i in range(5)] == [0, 25, 50, 75, 100]
    assert ClockConfig.linear(3, 0).skews == ()


def test_skewed_clock_reading():
    spec = ring_spec(3)
    res = run(spec, clocks=ClockConfig.linear(3, 40), timers=TimerConfig(hb_hz=10, phase="zero"), workload=IDLE)
    for e in sends(res.trace, "Heartbeat"):
        assert e.data["ct"] - e.time == 20 * e.node


def test_hb_never_regresses_at_receiver():
    res = run(ring_spec(5), net=NetConfig(delay_ms=2, jitter_ms=9), timers=TimerConfig(hb_hz=100),
              workload=WorkloadConfig(put_rate=500, duration_ms=300), seed=4)
    last = {}
    for e in res.trace:
        if e.kind == "deliver" and e.data["type"] == "Heartbeat":
            ch = (e.data["src"], e.node)
            assert e.data["ct"] >= last.get(ch, 0)
            last[ch] = e.data["ct"]


def test_deadlock_reported():
    hold = Hold(0, 1)
    script = (Step(10, "c", "put", 0, "x", "v"), Step(20, "c", "get", 1, "x"))
    res = run(PAIR, net=NetConfig(holds=(hold,)), timers=TimerConfig(hb_hz=100),
              workload=WorkloadConfig(put_rate=0, duration_ms=100, drain_ms=200, script=script))
    assert not res.ok
    assert res.liveness[0]["server"] == 1 and res.liveness[0]["client"] == "c"
    assert res.trace.of_kind("liveness")[0].data["blocked"]


def test_config_validation():
    with pytest.raises(ValueError):
        period_ms(0)
    with pytest.raises(ValueError):
        WorkloadConfig(put_rate=-1)
    with pytest.raises(ValueError):
        WorkloadConfig(duration_ms=0)
    with pytest.raises(ValueError):
        TimerConfig(phase="late")
