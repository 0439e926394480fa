"""Deterministic discrete-event simulator for the protocol.

Virtual time is an integer number of milliseconds. Each server owns a skewed,
strictly increasing clock. Channels are FIFO with a constant base delay,
optional seeded jitter and optional scripted holds. Everything observable is
appended to a :class:`~gstab.trace.Trace`.
"""
from __future__ import annotations

import heapq
import math
import random
from collections import Counter
from dataclasses import dataclass, field, asdict
from typing import Any

from .migration import GroupConfig, MigratingClientState, MigratingServer
from .protocol import (
    INF,
    ErrorReply,
    GetReply,
    MigrateReply,
    PutReply,
    Update,
    message_fields,
)
from .topology import TopologySpec, build_graph, server_metadata
from .trace import Event, Trace

FAR_FUTURE = 10**12


# ---- configuration -------------------------------------------------------

@dataclass(frozen=True)
class Hold:
    """Messages sent on ``src -> dst`` during ``[start, until)`` arrive no earlier than ``until``."""

    src: Any
    dst: Any
    start: int = 0
    until: int = FAR_FUTURE


@dataclass(frozen=True)
class NetConfig:
    delay_ms: int = 0
    client_delay_ms: int = 0
    jitter_ms: int = 0
    holds: tuple[Hold, ...] = ()
    # per-link overrides: {(src, dst): delay}
    link_delays: tuple[tuple[Any, Any, int], ...] = ()


@dataclass(frozen=True)
class ClockConfig:
    skews: tuple[tuple[int, int], ...] = ()

    @classmethod
    def linear(cls, n: int, t: float) -> "ClockConfig":
        """Server i runs ``round(i*t/(n-1))`` ms ahead of global time."""
        if n < 2 or not t:
            return cls()
        return cls(tuple((i, round(i * t / (n - 1))) for i in range(n)))

    @classmethod
    def of(cls, skews: dict) -> "ClockConfig":
        return cls(tuple(sorted(skews.items())))

    def skew(self, server: int) -> int:
        return dict(self.skews).get(server, 0)


def period_ms(hz: float) -> int:
    if hz <= 0:
        raise ValueError("frequencies must be positive")
    return max(1, round(1000 / hz))


@dataclass(frozen=True)
class TimerConfig:
    hb_hz: float = 10.0
    lst_hz: float = 1000.0
    stab_hz: float = 1000.0
    phase: str = "random"  # or "zero": every timer first fires at its period

    def __post_init__(self):
        for hz in (self.hb_hz, self.lst_hz, self.stab_hz):
            period_ms(hz)
        if self.phase not in ("random", "zero"):
            raise ValueError(f"unknown timer phase {self.phase!r}")


@dataclass(frozen=True)
class Step:
    """One scripted client operation. ``target`` is a server id, or a group for general-mode migration."""

    time: int
    client: str
    kind: str  # get | put | migrate
    target: Any
    key: str | None = None
    value: Any = None


@dataclass(frozen=True)
class WorkloadConfig:
    put_rate: float = 100.0  # per server, ops/s
    get_rate: float = 0.0  # per server, ops/s
    key_policy: str = "uniform"  # or "shared"
    migrate_prob: float = 0.0
    duration_ms: int = 1000
    drain_ms: int = 5000
    script: tuple[Step, ...] = ()

    def __post_init__(self):
        if self.put_rate < 0 or self.get_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.duration_ms <= 0:
            raise ValueError("duration must be positive")
        if self.key_policy not in ("uniform", "shared"):
            raise ValueError(f"unknown key policy {self.key_policy!r}")
        if not 0 <= self.migrate_prob <= 1:
            raise ValueError("migrate_prob must be in [0, 1]")


@dataclass(frozen=True)
class ServerOptions:
    mutant: str | None = None
    inflate_ticks: int = 1
    mutant_servers: tuple[int, ...] | None = None
    local_reads: str = "guarded"
    put_guard: bool = True
    lst_cap: bool = True


# ---- runtime pieces ------------------------------------------------------

class SkewedClock:
    """Reads global time plus a fixed offset; successive reads strictly increase."""

    def __init__(self, sim: "Simulation", skew: int):
        self.sim = sim
        self.skew = skew
        self.last = -(10**9)

    def peek(self) -> int:
        return max(self.sim.now + self.skew, self.last + 1)

    def read(self) -> int:
        self.last = self.peek()
        return self.last


@dataclass
class VisibilitySample:
    server: int
    key: str
    ut: int
    origin: int
    received: int
    visible: int

    @property
    def latency(self) -> int:
        return self.visible - self.received


@dataclass
class SimResult:
    trace: Trace
    samples: list[VisibilitySample]
    messages: Counter
    liveness: list[dict]
    replies: list[tuple]
    servers: dict = field(repr=False, default_factory=dict)
    clients: dict = field(repr=False, default_factory=dict)

    @property
    def latencies(self) -> list[int]:
        return [s.latency for s in self.samples]

    @property
    def ok(self) -> bool:
        return not self.liveness


def _node_key(x):
    return (0, x, "") if isinstance(x, int) else (1, 0, str(x))


class Simulation:
    def __init__(
        self,
        topology: TopologySpec,
        groups: GroupConfig | None = None,
        net: NetConfig = NetConfig(),
        clocks: ClockConfig = ClockConfig(),
        timers: TimerConfig = TimerConfig(),
        workload: WorkloadConfig = WorkloadConfig(),
        seed: int = 0,
        options: ServerOptions = ServerOptions(),
    ):
        topology.validate()
        self.spec = topology
        self.cfg = groups if groups is not None else GroupConfig.for_mode("full", topology)
        if self.cfg.mode == "gentlerain":
            multi = sorted(c for c, a in topology.client_access.items() if len(a) > 1)
            if multi:
                raise ValueError(f"gentlerain mode supports single-server clients only; offending: {multi}")
        self.net = net
        self.clocks = clocks
        self.timers = timers
        self.workload = workload
        self.seed = seed
        self.options = options
        self.graph = build_graph(topology)
        mode = self.cfg.mode
        if mode == "basic":
            meta = server_metadata(self.graph, ())
        else:
            meta = server_metadata(self.graph, self.cfg.lst_groups or self.cfg.groups)
        self.now = 0
        self._heap: list = []
        self._hseq = 0
        self._tseq = 0
        self.trace = Trace(meta=self._meta())
        self.servers: dict[int, MigratingServer] = {}
        for s in topology.servers:
            mutated = options.mutant_servers is None or s in options.mutant_servers
            self.servers[s] = MigratingServer(
                s,
                self.graph,
                meta[s],
                clock=SkewedClock(self, clocks.skew(s)),
                mode=mode,
                mutant=options.mutant if mutated else None,
                inflate_ticks=options.inflate_ticks,
                local_reads=options.local_reads,
                put_guard=options.put_guard,
                lst_cap=options.lst_cap,
            )
        self.clients: dict[str, MigratingClientState] = {
            c: MigratingClientState(c, a, self.cfg) for c, a in sorted(topology.client_access.items())
        }
        self._probe_client = {}
        for s in topology.servers:
            owner = [c for c in sorted(self.clients) if s in self.clients[c].access]
            self._probe_client[s] = owner[0] if owner else None
        self._net_rng = random.Random(f"{seed}:net")
        self._timer_rng = random.Random(f"{seed}:timers")
        self._client_rng = {c: random.Random(f"{seed}:client:{c}") for c in self.clients}
        self._last_deliver: dict[tuple, int] = {}
        self._link_delay = {(a, b): d for a, b, d in net.link_delays}
        self._inflight: dict[str, tuple] = {}
        self._script_queue: dict[str, list[Step]] = {c: [] for c in self.clients}
        self._put_count = Counter()
        self._invisible: dict[int, list] = {s: [] for s in self.servers}
        self._wake_at: dict[int, int] = {}
        self._last_snapshot: dict[int, dict] = {}
        self.samples: list[VisibilitySample] = []
        self.messages: Counter = Counter()
        self.replies: list[tuple] = []
        self.liveness: list[dict] = []

    def _meta(self) -> dict:
        spec = self.spec
        return {
            "topology": {
                "servers": list(spec.servers),
                "keys": {k: sorted(v) for k, v in sorted(spec.key_placement.items())},
                "clients": {c: sorted(v) for c, v in sorted(spec.client_access.items())},
            },
            "names": {str(k): v for k, v in sorted(spec.names.items())},
            "mode": self.cfg.mode,
            "groups": [sorted(g) for g in self.cfg.groups],
            "local_reads": self.options.local_reads,
            "put_guard": self.options.put_guard,
            "lst_cap": self.options.lst_cap,
            "mutant": self.options.mutant,
            "seed": self.seed,
            "net": {"delay_ms": self.net.delay_ms, "client_delay_ms": self.net.client_delay_ms,
                    "jitter_ms": self.net.jitter_ms},
            "skews": {str(s): d for s, d in self.clocks.skews},
            "timers": asdict(self.timers),
        }

    # -- scheduling and tracing

    def _schedule(self, at: int, kind: str, payload) -> None:
        self._hseq += 1
        heapq.heappush(self._heap, (at, self._hseq, kind, payload))

    def _emit(self, kind: str, node, data: dict) -> None:
        self._tseq += 1
        self.trace.events.append(Event(self.now, self._tseq, kind, node, data))

    def _delay(self, src, dst) -> int:
        if (src, dst) in self._link_delay:
            d = self._link_delay[(src, dst)]
        elif isinstance(src, int) and isinstance(dst, int):
            d = self.net.delay_ms
            if self.net.jitter_ms:
                d += self._net_rng.randint(0, self.net.jitter_ms)
        else:
            d = self.net.client_delay_ms
        return d

    def _send(self, src, dst, msg) -> None:
        at = self.now + self._delay(src, dst)
        for h in self.net.holds:
            if h.src == src and h.dst == dst and h.start <= self.now < h.until:
                at = max(at, h.until)
        ch = (src, dst)
        at = max(at, self._last_deliver.get(ch, 0))
        self._last_deliver[ch] = at
        self.messages[type(msg).__name__] += 1
        fields = message_fields(msg)
        fields["dst"] = dst
        fields["at"] = at
        self._emit("send", src, fields)
        if at < FAR_FUTURE:
            self._schedule(at, "deliver", (src, dst, msg))

    def _server_out(self, sid: int, out: list) -> None:
        for dst, msg in out:
            self._send(sid, dst, msg)
        server = self.servers[sid]
        w = server.put_wake_local()
        if w is not None:
            at = max(self.now + 1, w - server.clock.skew)
            cur = self._wake_at.get(sid)
            if cur is None or cur > at or cur <= self.now:
                self._wake_at[sid] = at
                self._schedule(at, "wake", sid)

    # -- timers

    def _start_timers(self) -> None:
        t = self.timers
        specs = [("hb", period_ms(t.hb_hz)), ("lst", period_ms(t.lst_hz)), ("probe", period_ms(t.stab_hz))]
        for s in self.servers:
            for name, p in specs:
                if name == "lst" and not self.servers[s].lst_groups():
                    continue
                if name == "hb" and not self.servers[s].targets:
                    continue
                first = p if t.phase == "zero" else self._timer_rng.randint(1, p)
                self._schedule(first, "timer", (name, s, p))

    def _on_timer(self, name: str, sid: int, period: int) -> None:
        server = self.servers[sid]
        if name == "probe":
            self._probe(sid)
        else:
            self._emit("timer", sid, {"timer": name})
            out = server.heartbeat_tick() if name == "hb" else server.lst_tick()
            self._server_out(sid, out)
        self._schedule(self.now + period, "timer", (name, sid, period))

    def probe_params(self, sid: int) -> tuple[frozenset, float]:
        cid = self._probe_client[sid]
        if cid is None:
            return frozenset({sid}), INF
        c = self.clients[cid]
        if c.mode == "general":
            g = c.current_group if sid in c.current_group else next(g for g in c.groups if sid in g)
            vec = c.lst_by_group[g]
            return g, min((v for j, v in vec.items() if j != sid), default=INF)
        if c.mode == "basic":
            return frozenset({sid}), INF
        return c.access, c.rd_for(sid)

    def probe_gst(self, sid: int, key: str) -> float:
        g, rd = self.probe_params(sid)
        return self.servers[sid].gst(key, g, rd)

    def _probe(self, sid: int) -> None:
        pending = self._invisible[sid]
        if not pending:
            return
        self._emit("timer", sid, {"timer": "probe"})
        keep = []
        cache = {}
        for item in pending:
            ut, origin, key, received = item
            bound = cache.get(key)
            if bound is None:
                bound = cache[key] = self.probe_gst(sid, key)
            if ut <= bound:
                self.samples.append(VisibilitySample(sid, key, ut, origin, received, self.now))
                self._emit("version-visible", sid, {
                    "key": key, "ut": ut, "origin": origin, "received": received,
                    "latency": self.now - received,
                })
            else:
                keep.append(item)
        self._invisible[sid] = keep

    # -- clients

    def _client_rate(self) -> tuple[float, float]:
        n, m = len(self.servers), max(1, len(self.clients))
        w = self.workload
        return w.put_rate * n / m, w.get_rate * n / m

    def _think(self, cid: str) -> int | None:
        put, get = self._client_rate()
        lam = (put + get) / 1000.0
        if lam <= 0:
            return None
        return max(1, math.ceil(self._client_rng[cid].expovariate(lam)))

    def _next_random_op(self, cid: str) -> None:
        d = self._think(cid)
        if d is not None and self.now + d < self.workload.duration_ms:
            self._schedule(self.now + d, "client", cid)

    def _random_step(self, cid: str) -> Step:
        c = self.clients[cid]
        rng = self._client_rng[cid]
        w = self.workload
        if c.mode in ("basic", "general") and w.migrate_prob and rng.random() < w.migrate_prob:
            if c.mode == "basic" and len(c.access) > 1:
                here = next(iter(c.current_group))
                return Step(self.now, cid, "migrate", rng.choice(sorted(c.access - {here})))
            if c.mode == "general" and len(c.groups) > 1:
                others = [g for g in c.groups if g != c.current_group]
                return Step(self.now, cid, "migrate", tuple(sorted(rng.choice(others))))
        scope = sorted(c.scope())
        server = rng.choice(scope)
        keys = sorted(self.graph.keys[server])
        if w.key_policy == "shared":
            shared = [k for k in keys if len(self.spec.key_placement[k]) > 1]
            keys = shared or keys
        key = rng.choice(keys)
        put, get = self._client_rate()
        if rng.random() * (put + get) < put:
            self._put_count[cid] += 1
            return Step(self.now, cid, "put", server, key, f"{cid}#{self._put_count[cid]}")
        return Step(self.now, cid, "get", server, key)

    def _issue(self, step: Step) -> None:
        cid = step.client
        c = self.clients[cid]
        if step.kind == "get":
            req = c.get_request(step.target, step.key)
            dst = step.target
            data = {"op": "GET", "server": dst, "key": step.key, "t": req.t,
                    "rd": "inf" if req.rd == INF else req.rd, "group": sorted(req.group)}
        elif step.kind == "put":
            req = c.put_request(step.target, step.key, step.value)
            dst = step.target
            data = {"op": "PUT", "server": dst, "key": step.key, "value": step.value, "t": req.t}
        elif step.kind == "migrate":
            dst, req = c.migrate_request(step.target)
            data = {"op": "MIGRATE", "server": dst, "group": sorted(req.group), "t": req.t}
        else:
            raise ValueError(f"unknown step kind {step.kind!r}")
        data["rid"] = req.rid
        self._inflight[cid] = (step, dst, self.now)
        self._emit("op-start", cid, data)
        self._send(cid, dst, req)

    def _on_client_wake(self, cid: str) -> None:
        if cid in self._inflight:
            return
        self._issue(self._random_step(cid))

    def _on_script(self, step: Step) -> None:
        cid = step.client
        if cid in self._inflight or self._script_queue[cid]:
            self._script_queue[cid].append(step)
        else:
            self._issue(step)

    def _client_receive(self, cid: str, src: int, msg) -> None:
        c = self.clients[cid]
        step, server, started = self._inflight.pop(cid)
        data: dict = {"rid": msg.rid, "server": server, "started": started}
        if isinstance(msg, GetReply):
            c.on_get_reply(msg)
            data.update(op="GET", key=msg.key, value=msg.value, ut=msg.t, origin=msg.origin,
                        lst={str(j): v for j, v in sorted(msg.lst.items())})
            self.replies.append((cid, "GET", msg.key, msg.t, msg.origin, msg.value))
        elif isinstance(msg, PutReply):
            c.on_put_reply(msg)
            data.update(op="PUT", key=msg.key, value=step.value, ut=msg.t, origin=msg.origin)
            self.replies.append((cid, "PUT", msg.key, msg.t, msg.origin, step.value))
        elif isinstance(msg, MigrateReply):
            c.on_migrate_reply(msg)
            data.update(op="MIGRATE", group=sorted(c.current_group),
                        lst={str(j): v for j, v in sorted(msg.lst.items())})
            self.replies.append((cid, "MIGRATE", tuple(sorted(c.current_group))))
        elif isinstance(msg, ErrorReply):
            data.update(op=step.kind.upper(), error=msg.reason)
            self.replies.append((cid, "ERROR", msg.reason))
        else:
            raise TypeError(f"client got {type(msg).__name__}")
        st = c.state()
        data["state"] = {k: ({str(j): ("inf" if x == INF else x) for j, x in v.items()} if isinstance(v, dict) else v)
                         for k, v in st.items()}
        for s in sorted(c.scope() | {server}):
            self._snapshot(s)
        self._emit("op-complete", cid, data)
        if self._script_queue[cid]:
            self._issue(self._script_queue[cid].pop(0))
        elif not self.workload.script:
            self._next_random_op(cid)

    def _snapshot(self, sid: int, force: bool = False) -> None:
        snap = self.servers[sid].snapshot()
        if force or self._last_snapshot.get(sid) != snap:
            self._last_snapshot[sid] = snap
            self._emit("snapshot", sid, snap)

    # -- main loop

    def _deliver(self, src, dst, msg) -> None:
        fields = message_fields(msg)
        fields["src"] = src
        self._emit("deliver", dst, fields)
        if isinstance(dst, str):
            self._client_receive(dst, src, msg)
            return
        server = self.servers[dst]
        if isinstance(msg, Update):
            v = msg.version
            self._invisible[dst].append((v.ut, v.origin, v.key, self.now))
        self._server_out(dst, server.handle(src, msg))

    def _quiet(self) -> bool:
        if self._inflight or any(self._script_queue.values()):
            return False
        return not any(self._invisible.values())

    def run(self) -> SimResult:
        self._start_timers()
        w = self.workload
        if w.script:
            for step in sorted(w.script, key=lambda s: (s.time, s.client)):
                if step.client not in self.clients:
                    raise ValueError(f"script names unknown client {step.client!r}")
                self._schedule(step.time, "script", step)
        else:
            for cid in self.clients:
                self._next_random_op(cid)
        horizon = w.duration_ms + w.drain_ms
        last_script = max((s.time for s in w.script), default=0)
        while self._heap:
            at, _, kind, payload = self._heap[0]
            if at > horizon:
                break
            if at >= w.duration_ms and at > last_script and self._quiet():
                break
            heapq.heappop(self._heap)
            self.now = at
            if kind == "deliver":
                self._deliver(*payload)
            elif kind == "timer":
                self._on_timer(*payload)
            elif kind == "client":
                self._on_client_wake(payload)
            elif kind == "script":
                self._on_script(payload)
            elif kind == "wake":
                self._wake_at.pop(payload, None)
                self._server_out(payload, self.servers[payload].retry())
        self._finish()
        return SimResult(self.trace, self.samples, self.messages, self.liveness, self.replies,
                         self.servers, self.clients)

    def _finish(self) -> None:
        for s in sorted(self.servers):
            for src, req in self.servers[s].blocked_requests():
                self.liveness.append({"server": s, "client": src, "request": message_fields(req)})
        for cid in sorted(self._inflight):
            step, server, started = self._inflight[cid]
            self.liveness.append({"client": cid, "server": server, "op": step.kind, "started": started})
        for cid in sorted(self._script_queue):
            for step in self._script_queue[cid]:
                self.liveness.append({"client": cid, "op": step.kind, "queued": step.time})
        unseen = sum(len(v) for v in self._invisible.values())
        if self.liveness or unseen:
            self._emit("liveness", None, {"blocked": self.liveness, "invisible": unseen})
        for s in sorted(self.servers):
            self._snapshot(s)


def run(
    topology: TopologySpec,
    groups: GroupConfig | None = None,
    net: NetConfig = NetConfig(),
    clocks: ClockConfig = ClockConfig(),
    timers: TimerConfig = TimerConfig(),
    workload: WorkloadConfig = WorkloadConfig(),
    seed: int = 0,
    options: ServerOptions = ServerOptions(),
) -> SimResult:
    return Simulation(topology, groups, net, clocks, timers, workload, seed, options).run()


def gentlerain_gst(server) -> float:
    """Minimum heartbeat over every other server."""
    return min(server.HB.values(), default=INF)
