import pytest

from gstab.migration import GroupConfig, MigratingClientState, MigratingServer, migrate_basic, migrate_general
from gstab.protocol import (
    INF,
    AccessViolation,
    Heartbeat,
    LocalStableTime,
    ManualClock,
    MigrateReply,
    ProtocolError,
)
from gstab.simnet import NetConfig, TimerConfig, WorkloadConfig, run
from gstab.topology import TopologySpec, build_graph, ring_spec, server_metadata


def triangle():
    return TopologySpec.from_dict({
        "servers": [0, 1, 2],
        "keys": {"x": [0, 1], "y": [1, 2], "z": [0, 2]},
        "clients": {"c": [0, 1, 2]},
    })


def servers(spec, mode, groups=None):
    cfg = GroupConfig.for_mode(mode, spec, groups)
    graph = build_graph(spec)
    meta = server_metadata(graph, () if mode == "basic" else cfg.groups)
    return cfg, {s: MigratingServer(s, graph, meta[s], clock=ManualClock(0), mode=mode) for s in spec.servers}


class TestGroupConfig:
    def test_ours_alias(self):
        assert GroupConfig.for_mode("ours", ring_spec(3)).mode == "full"

    def test_basic_needs_singletons(self):
        with pytest.raises(ValueError):
            GroupConfig("basic", (frozenset({0, 1}),))

    def test_groups_must_cover_access(self):
        cfg = GroupConfig.for_mode("general", triangle(), [[0, 1]])
        with pytest.raises(ValueError):
            MigratingClientState("c", [0, 1, 2], cfg)

    def test_client_starts_in_its_own_access_set(self):
        spec = TopologySpec.from_dict({"servers": [0, 1, 2], "keys": {"x": [0, 1, 2]},
                                       "clients": {"small": [0, 1], "big": [0, 1, 2]}})
        cfg = GroupConfig.for_mode("general", spec)
        big = MigratingClientState("big", [0, 1, 2], cfg)
        assert big.current_group == frozenset({0, 1, 2})
        assert frozenset({0, 1}) in big.groups

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            GroupConfig("fast", ())


class TestBasic:
    def test_zero_dependency_acks_at_once(self):
        cfg, srv = servers(triangle(), "basic")
        c = MigratingClientState("c", [0, 1, 2], cfg)
        i, req = migrate_basic(c, 1)
        (_, rep), = srv[i].handle("c", req)
        assert isinstance(rep, MigrateReply)
        c.on_migrate_reply(rep)
        assert c.current_group == frozenset({1})

    def test_barrier_waits_for_min_ld(self):
        cfg, srv = servers(triangle(), "basic")
        c = MigratingClientState("c", [0, 1, 2], cfg)
        c.PT = 8
        s = srv[1]
        s.handle(0, Heartbeat(5))
        s.handle(2, Heartbeat(5))
        i, req = migrate_basic(c, 1)
        assert s.handle("c", req) == []
        assert s.handle(0, Heartbeat(9)) == []
        (_, rep), = s.handle(2, Heartbeat(8))
        assert isinstance(rep, MigrateReply)

    def test_get_request_carries_only_pt(self):
        cfg, _ = servers(triangle(), "basic")
        c = MigratingClientState("c", [0, 1, 2], cfg)
        req = c.get_request(0, "x")
        assert req.rd == INF and req.group == frozenset({0})

    def test_no_ops_while_migrating(self):
        cfg, _ = servers(triangle(), "basic")
        c = MigratingClientState("c", [0, 1, 2], cfg)
        migrate_basic(c, 2)
        with pytest.raises(ProtocolError):
            c.get_request(2, "y")

    def test_outside_access(self):
        cfg, _ = servers(triangle(), "basic")
        c = MigratingClientState("c", [0, 1], cfg)
        with pytest.raises(AccessViolation):
            migrate_basic(c, 2)

    def test_basic_stable_time_dominates_full(self):
        spec = triangle()
        _, basic = servers(spec, "basic")
        _, full = servers(spec, "full")
        g = frozenset({0, 1, 2})
        for srv in (basic, full):
            srv[0].handle(1, Heartbeat(30))
            srv[0].handle(2, Heartbeat(12))
        full[0].handle(1, LocalStableTime(7, g))
        full[0].handle(2, LocalStableTime(9, g))
        for k in ("x", "z"):
            assert basic[0].gst(k, frozenset({0}), INF) >= full[0].gst(k, g, 0)


class TestGeneral:
    def test_barrier_includes_group_rd(self):
        spec = triangle()
        groups = [[0, 1], [1, 2], [0, 2]]
        cfg, srv = servers(spec, "general", groups)
        c = MigratingClientState("c", [0, 1, 2], cfg)
        c.PT = 10
        s = srv[0]
        g = frozenset({0, 2})
        s.handle(1, Heartbeat(20))
        s.handle(2, Heartbeat(20))
        i, req = migrate_general(c, g)
        assert i == 0
        assert s.handle("c", req) == []
        (_, rep), = s.handle(2, LocalStableTime(11, g))
        c.on_migrate_reply(rep)
        assert c.current_group == g
        assert c.lst_view()[2] == 11

    def test_non_member_is_error(self):
        cfg, srv = servers(triangle(), "general", [[0, 1], [2]])
        c = MigratingClientState("c", [0, 1, 2], cfg)
        _, req = migrate_general(c, [2])
        with pytest.raises(ProtocolError):
            srv[0].handle("c", req)

    def test_unknown_group(self):
        cfg, _ = servers(triangle(), "general", [[0, 1], [2]])
        c = MigratingClientState("c", [0, 1, 2], cfg)
        with pytest.raises(AccessViolation):
            migrate_general(c, [0, 2])

    def test_full_mode_has_no_migration(self):
        cfg, _ = servers(triangle(), "full")
        c = MigratingClientState("c", [0, 1, 2], cfg)
        with pytest.raises(ProtocolError):
            c.migrate_request(0)


def _sim(spec, cfg, seed=3):
    return run(spec, cfg, NetConfig(delay_ms=4, client_delay_ms=1),
               timers=TimerConfig(hb_hz=100, lst_hz=200, stab_hz=1000),
               workload=WorkloadConfig(put_rate=200, get_rate=200, migrate_prob=0.2, duration_ms=400, drain_ms=500),
               seed=seed)


def test_general_singletons_match_basic():
    spec = triangle()
    singles = [[0], [1], [2]]
    a = _sim(spec, GroupConfig.for_mode("basic", spec))
    b = _sim(spec, GroupConfig.for_mode("general", spec, singles))
    assert a.replies and a.replies == b.replies


def test_general_without_migration_matches_full():
    spec = triangle()
    wl = WorkloadConfig(put_rate=200, get_rate=200, duration_ms=400, drain_ms=500)
    kw = dict(net=NetConfig(delay_ms=4, client_delay_ms=1), timers=TimerConfig(hb_hz=100, lst_hz=200), workload=wl, seed=5)
    a = run(spec, GroupConfig.for_mode("full", spec), **kw)
    b = run(spec, GroupConfig.for_mode("general", spec), **kw)
    assert a.replies and a.replies == b.replies


def test_basic_mode_sends_no_lst():
    spec = triangle()
    res = _sim(spec, GroupConfig.for_mode("basic", spec))
    assert res.messages["LocalStableTime"] == 0
    assert res.messages["MigrateReq"] > 0
