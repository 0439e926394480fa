"""Trace-level causal consistency oracle.

The checker consumes only a :class:`~gstab.trace.Trace`. It rebuilds the
happened-before relation from client program order and read-from edges,
rebuilds every server's heartbeat/LST/store state from raw delivery events,
and evaluates hypothetical GETs with its own stable-time computation (the
topology's L/R sets are the only shared code). Version identity is the
``(ut, origin)`` stamp; ``(0, -1)`` is the never-written initial version.
"""
from __future__ import annotations

import bisect
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .topology import TopologySpec, build_graph, compute_L, compute_R
from .trace import Trace

INF = math.inf
BOTTOM = (0, -1)


class TraceError(ValueError):
    """Trace is not well formed (dangling read, unmatched response, ...)."""


def _num(x):
    return INF if x == "inf" else x


@dataclass(frozen=True)
class OpRecord:
    client: str
    kind: str
    key: str | None
    version: tuple[int, int] | None
    request_time: int
    response_time: int
    server: int
    rid: int


@dataclass
class Violation:
    check: str
    time: int
    seq: int
    message: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "time": self.time, "seq": self.seq,
                "message": self.message, "detail": self.detail}


@dataclass
class Verdict:
    name: str
    violations: list[Violation] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    @property
    def witness(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def summary(self) -> str:
        if self.ok:
            extra = ", ".join(f"{k}={v}" for k, v in sorted(self.stats.items()))
            return f"{self.name}: PASS" + (f" ({extra})" if extra else "")
        w = self.witness
        return f"{self.name}: FAIL at t={w.time} seq={w.seq}: {w.message}"

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "stats": self.stats,
                "violations": [v.to_dict() for v in self.violations]}


# ---- dependency graph ----------------------------------------------------

class DepGraph:
    """Versions and their transitively closed dependency sets (Python-int bitsets)."""

    def __init__(self):
        self.stamps: list[tuple[int, int]] = []
        self.keys: list[str] = []
        self.writers: list[str] = []
        self.deps: list[int] = []
        self.index: dict[tuple[int, int], int] = {}
        self.key_mask: dict[str, int] = defaultdict(int)
        self.puts: list[OpRecord] = []
        self.ops: list[OpRecord] = []

    def add(self, stamp, key, writer, deps: int) -> int:
        if stamp in self.index:
            raise TraceError(f"version {stamp} created twice")
        idx = len(self.stamps)
        self.stamps.append(tuple(stamp))
        self.keys.append(key)
        self.writers.append(writer)
        self.deps.append(deps)
        self.index[tuple(stamp)] = idx
        self.key_mask[key] |= 1 << idx
        return idx

    def __len__(self):
        return len(self.stamps)

    def dep(self, a, b) -> bool:
        """``a`` dep ``b`` for version stamps."""
        if tuple(b) == BOTTOM:
            return tuple(a) != BOTTOM
        ia, ib = self.index[tuple(a)], self.index[tuple(b)]
        return bool(self.deps[ia] >> ib & 1)

    def edges(self) -> Iterable[tuple[tuple[int, int], tuple[int, int]]]:
        for ia, d in enumerate(self.deps):
            for ib in _bits(d):
                yield self.stamps[ia], self.stamps[ib]

    def is_acyclic(self) -> bool:
        return all(not (self.deps[i] >> i & 1) for i in range(len(self)))


def _bits(mask: int):
    while mask:
        b = mask & -mask
        mask ^= b
        yield b.bit_length() - 1


class _Builder:
    """Incremental happened-before over a trace; shared by every check."""

    def __init__(self):
        self.graph = DepGraph()
        self.past: dict[str, int] = defaultdict(int)
        self.past_max: dict[str, int] = defaultdict(int)
        self.open: dict[str, dict] = {}
        self.created: dict[tuple[str, int], int] = {}

    def op_start(self, ev):
        self.open[ev.node] = {"time": ev.time, **ev.data}

    def put_created(self, client, stamp, key) -> tuple[int, int]:
        """Returns (index, max ut among dependencies)."""
        idx = self.graph.add(stamp, key, client, self.past[client])
        return idx, self.past_max[client]

    def op_complete(self, ev) -> tuple[str, int | None]:
        c = ev.node
        d = ev.data
        start = self.open.pop(c, None)
        if start is None or start.get("rid") != d.get("rid"):
            raise TraceError(f"response without matching request for client {c!r} at seq {ev.seq}")
        op = d["op"]
        if "error" in d:
            return op, None
        idx = None
        if op in ("GET", "PUT"):
            stamp = (d["ut"], d["origin"])
            rec = OpRecord(c, op, d["key"], stamp, start["time"], ev.time, d["server"], d["rid"])
            self.graph.ops.append(rec)
            if op == "PUT":
                self.graph.puts.append(rec)
            if stamp != BOTTOM:
                idx = self.graph.index.get(stamp)
                if idx is None:
                    raise TraceError(f"client {c!r} read version {stamp} of {d['key']!r} that was never created")
                self.past[c] |= (1 << idx) | self.graph.deps[idx]
                self.past_max[c] = max(self.past_max[c], stamp[0])
        return op, idx


def build_dep_graph(trace: Trace) -> DepGraph:
    b = _Builder()
    for ev in trace.events:
        if ev.kind == "op-start":
            b.op_start(ev)
        elif ev.kind == "send" and ev.data.get("type") == "PutReply":
            b.put_created(ev.data["dst"], (ev.data["t"], ev.data["origin"]), ev.data["key"])
        elif ev.kind == "op-complete":
            b.op_complete(ev)
    return b.graph


def brute_force_dep(trace: Trace) -> set[tuple[tuple[int, int], tuple[int, int]]]:
    """Dep pairs from an explicit happened-before closure over operations (test oracle)."""
    ops = []
    starts = {}
    for ev in trace.events:
        if ev.kind == "op-start":
            starts[ev.node] = ev
        elif ev.kind == "op-complete" and ev.data["op"] in ("GET", "PUT") and "error" not in ev.data:
            ops.append((ev.node, ev.data["op"], (ev.data["ut"], ev.data["origin"])))
    n = len(ops)
    hb = [[False] * n for _ in range(n)]
    last = {}
    for x, (c, kind, stamp) in enumerate(ops):
        if c in last:
            hb[last[c]][x] = True
        last[c] = x
    writer_of = {stamp: x for x, (c, kind, stamp) in enumerate(ops) if kind == "PUT"}
    for x, (c, kind, stamp) in enumerate(ops):
        if kind == "GET" and stamp in writer_of:
            hb[writer_of[stamp]][x] = True
    for m in range(n):
        for a in range(n):
            if hb[a][m]:
                row_m = hb[m]
                row_a = hb[a]
                for b in range(n):
                    if row_m[b]:
                        row_a[b] = True
    out = set()
    for a in range(n):
        if ops[a][1] != "PUT":
            continue
        for b in range(n):
            if ops[b][1] == "PUT" and hb[a][b]:
                out.add((ops[b][2], ops[a][2]))
    return out


# ---- state reconstruction ------------------------------------------------

class _ServerView:
    def __init__(self, sid: int):
        self.id = sid
        self.HB: dict[int, int] = {}
        self.LST: dict[tuple[int, frozenset], int] = {}
        self.stamps: dict[str, list[tuple[int, int]]] = defaultdict(list)
        self.own: dict[tuple[str, str], tuple[int, int]] = {}
        self.local: dict[str, list[tuple[int, int]]] = defaultdict(list)

    def insert(self, key, stamp):
        lst = self.stamps[key]
        bisect.insort(lst, tuple(stamp))


class _ClientView:
    def __init__(self, cid, access, mode, groups):
        self.id = cid
        self.access = frozenset(access)
        self.mode = mode
        self.PT = 0
        self.GT = 0
        if mode in ("full", "gentlerain"):
            self.groups = (self.access,)
        else:
            self.groups = tuple(g for g in groups if g <= self.access)
        self.group = self.groups[0]
        self.lst: dict[frozenset, dict[int, float]] = {g: {j: 0 for j in g} for g in self.groups}

    def scope(self) -> frozenset:
        return self.access if self.mode in ("full", "gentlerain") else self.group


class _Model:
    """The checker's own reading of the protocol's stable-time rule."""

    def __init__(self, meta: dict):
        self.spec = TopologySpec.from_dict(meta["topology"])
        self.graph = build_graph(self.spec)
        self.mode = meta.get("mode", "full")
        self.local_reads = meta.get("local_reads", "guarded")
        self.lst_cap = meta.get("lst_cap", True)
        self._R: dict[tuple[int, frozenset], tuple[int, ...]] = {}
        self.groups = tuple(frozenset(g) for g in meta.get("groups", [])) or tuple(
            frozenset(a) for a in self.spec.client_access.values()
        )
        self._L: dict[tuple[int, str], tuple[int, ...]] = {}

    def L_sources(self, i, key):
        hit = self._L.get((i, key))
        if hit is None:
            hit = self._L[(i, key)] = tuple(x for x, _ in compute_L(self.graph, i, key))
        return hit

    def R_sources(self, i, g):
        hit = self._R.get((i, g))
        if hit is None:
            hit = self._R[(i, g)] = tuple(sorted(x for x, y in compute_R(self.graph, g) if y == i))
        return hit

    def parts(self, s: _ServerView, key: str, c: _ClientView) -> tuple[float, float]:
        if self.mode == "gentlerain":
            return min((s.HB.get(j, 0) for j in self.graph.vertices if j != s.id), default=INF), INF
        ld = min((s.HB.get(v, 0) for v in self.L_sources(s.id, key)), default=INF)
        if self.mode == "basic":
            return ld, INF
        g = c.scope()
        rd_group = min((s.LST.get((j, g), 0) for j in g if j != s.id), default=INF)
        vec = c.lst[g]
        rd = min((v for j, v in vec.items() if j != s.id), default=INF)
        remote = max(rd_group, rd)
        if self.lst_cap and len(g) > 1:
            remote = min(remote, min((s.HB.get(z, 0) for z in self.R_sources(s.id, g)), default=INF))
        return ld, remote

    def stable(self, s: _ServerView, key: str, c: _ClientView) -> float:
        return min(self.parts(s, key, c))

    def guarded(self, s: _ServerView, key: str, c: _ClientView) -> bool:
        if self.mode in ("basic", "gentlerain"):
            return False
        return any(j != s.id and key in self.graph.keys[j] for j in c.scope())

    def select(self, s: _ServerView, key: str, bound: float, client: str, remote: float = INF) -> tuple[int, int]:
        stamps = s.stamps.get(key, [])
        if bound == INF:
            best = stamps[-1] if stamps else BOTTOM
        else:
            pos = bisect.bisect_right(stamps, (int(bound), math.inf))
            best = stamps[pos - 1] if pos else BOTTOM
        mine = s.local.get(key, [])
        if self.local_reads == "origin":
            cands = [mine[-1]] if mine else []
        else:
            cands = [s.own.get((key, client))]
            pos = bisect.bisect_right(mine, (remote, math.inf)) if remote != INF else len(mine)
            if pos:
                cands.append(mine[pos - 1])
        for local in cands:
            if local is not None and local > best:
                best = local
        return best


# ---- checks --------------------------------------------------------------

def check_causal_consistency(trace: Trace, topology: TopologySpec | None = None) -> Verdict:
    """Both conditions of causal consistency, reporting the earliest violation only."""
    verdict = Verdict("causal-consistency")
    meta = dict(trace.meta)
    if topology is not None:
        meta["topology"] = {
            "servers": list(topology.servers),
            "keys": {k: sorted(v) for k, v in topology.key_placement.items()},
            "clients": {c: sorted(v) for c, v in topology.client_access.items()},
        }
    if "topology" not in meta:
        if not trace.of_kind("op-start", "op-complete"):
            return verdict
        raise TraceError("trace has no topology metadata")
    model = _Model(meta)
    graph = model.graph
    servers = {s: _ServerView(s) for s in graph.vertices}
    clients = {c: _ClientView(c, a, model.mode, model.groups) for c, a in model.spec.client_access.items()}
    b = _Builder()
    dg = b.graph
    must: dict[str, int] = defaultdict(int)
    stats = defaultdict(int)

    def fail(ev, message, **detail):
        verdict.violations.append(Violation("causal-consistency", ev.time, ev.seq, message, detail))

    def hypothetical(ev, c: _ClientView, trigger: str) -> bool:
        m = must[c.id]
        if not m:
            return True
        for sid in sorted(c.scope()):
            s = servers[sid]
            for key in sorted(graph.keys[sid]):
                needed = m & dg.key_mask.get(key, 0)
                if not needed:
                    continue
                ld, remote = model.parts(s, key, c)
                bound = min(ld, remote)
                if model.guarded(s, key, c) and c.PT > bound:
                    stats["hypothetical_blocked"] += 1
                    continue
                got = model.select(s, key, bound, c.id, remote)
                stats["hypothetical_gets"] += 1
                bad = _older_than(dg, needed, got)
                if bad is not None:
                    fail(ev, f"after {trigger} by {c.id!r}, version {dg.stamps[bad]} of {key!r} "
                             f"is not visible from server {sid} (would return {got})",
                         client=c.id, server=sid, key=key, missing=list(dg.stamps[bad]),
                         returned=list(got), trigger=trigger)
                    return False
        return True

    for ev in trace.events:
        kind = ev.kind
        d = ev.data
        if kind == "deliver" and isinstance(ev.node, int):
            s = servers[ev.node]
            t = d["type"]
            src = d["src"]
            if t == "Update":
                key, _, ut, origin, _ = d["version"]
                s.insert(key, (ut, origin))
                s.HB[src] = ut
            elif t == "Heartbeat":
                s.HB[src] = d["ct"]
            elif t == "LocalStableTime":
                s.LST[(src, frozenset(d["group"]))] = _num(d["lst"])
        elif kind == "send" and d.get("type") == "PutReply":
            s = servers[ev.node]
            stamp = (d["t"], d["origin"])
            cid = d["dst"]
            idx, depmax = b.put_created(cid, stamp, d["key"])
            s.insert(d["key"], stamp)
            s.own[(d["key"], cid)] = stamp
            bisect.insort(s.local[d["key"]], stamp)
        elif kind == "op-start":
            b.op_start(ev)
        elif kind == "op-complete":
            c = clients[ev.node]
            op, idx = b.op_complete(ev)
            if "error" in d:
                continue
            if op == "PUT":
                c.PT = max(c.PT, d["ut"])
                must[c.id] |= 1 << dg.index[(d["ut"], d["origin"])]
                stats["puts"] += 1
                continue
            if op == "MIGRATE":
                c.group = frozenset(d["group"])
                _merge(c.lst.get(c.group), d.get("lst", {}))
                stats["migrations"] += 1
                if not hypothetical(ev, c, "migration"):
                    break
                continue
            stats["gets"] += 1
            key = d["key"]
            got = (d["ut"], d["origin"])
            needed = must[c.id] & dg.key_mask.get(key, 0)
            bad = _older_than(dg, needed, got) if needed else None
            if bad is not None:
                fail(ev, f"client {c.id!r} read {got} of {key!r} from server {d['server']} "
                         f"but version {dg.stamps[bad]} should be visible",
                     client=c.id, server=d["server"], key=key, missing=list(dg.stamps[bad]),
                     returned=list(got), trigger="GET")
                break
            c.GT = max(c.GT, d["ut"])
            if c.mode in ("full", "general"):
                _merge(c.lst.get(c.scope()), d.get("lst", {}))
            if idx is not None:
                must[c.id] |= dg.deps[idx]
            if not hypothetical(ev, c, f"GET {key!r}"):
                break
    verdict.stats = {"versions": len(dg), **dict(stats)}
    return verdict


def _merge(vec, lst):
    if vec is None:
        return
    for j, v in lst.items():
        j = int(j)
        if j in vec:
            vec[j] = max(vec[j], _num(v))


def _older_than(dg: DepGraph, needed: int, got: tuple[int, int]) -> int | None:
    """Index of a needed version that ``got`` falls causally behind, if any."""
    if got == BOTTOM:
        for idx in _bits(needed):
            return idx
        return None
    gi = dg.index.get(got)
    if gi is None:
        raise TraceError(f"hypothetical read of unknown version {got}")
    bit = 1 << gi
    for idx in _bits(needed):
        if idx != gi and dg.deps[idx] & bit:
            return idx
    return None


def check_dep_order(trace: Trace) -> Verdict:
    """Every dependency of a version carries a strictly smaller timestamp."""
    verdict = Verdict("dep-order")
    b = _Builder()
    edges = 0
    for ev in trace.events:
        if ev.kind == "op-start":
            b.op_start(ev)
        elif ev.kind == "send" and ev.data.get("type") == "PutReply":
            stamp = (ev.data["t"], ev.data["origin"])
            idx, depmax = b.put_created(ev.data["dst"], stamp, ev.data["key"])
            edges += bin(b.graph.deps[idx]).count("1")
            if depmax >= stamp[0]:
                worst = max(_bits(b.graph.deps[idx]), key=lambda j: b.graph.stamps[j][0])
                verdict.violations.append(Violation(
                    "dep-order", ev.time, ev.seq,
                    f"version {stamp} of {ev.data['key']!r} depends on {b.graph.stamps[worst]} "
                    f"with ut {b.graph.stamps[worst][0]} >= {stamp[0]}",
                    {"version": list(stamp), "dependency": list(b.graph.stamps[worst])},
                ))
                break
        elif ev.kind == "op-complete":
            b.op_complete(ev)
    verdict.stats = {"versions": len(b.graph), "dep_edges": edges}
    return verdict


def check_dep_order_graph(dg: DepGraph) -> Verdict:
    verdict = Verdict("dep-order")
    for a, c in dg.edges():
        if not c[0] < a[0]:
            verdict.violations.append(Violation("dep-order", 0, 0, f"{a} dep {c} but ut not increasing",
                                                {"version": list(a), "dependency": list(c)}))
            break
    return verdict


def check_monotonicity(trace: Trace) -> Verdict:
    """HB per channel, snapshot entries and client GT/PT/LST never decrease."""
    verdict = Verdict("monotonicity")
    last: dict[tuple, float] = {}
    series = 0

    def see(ev, name, value, label):
        nonlocal series
        prev = last.get(name)
        if prev is None:
            series += 1
        elif value < prev:
            verdict.violations.append(Violation(
                "monotonicity", ev.time, ev.seq, f"{label} regressed {prev} -> {value}",
                {"series": [str(x) for x in name]},
            ))
            return False
        last[name] = value
        return True

    for ev in trace.events:
        d = ev.data
        ok = True
        if ev.kind == "deliver" and isinstance(ev.node, int):
            t = d["type"]
            if t == "Update":
                ok = see(ev, ("HB", d["src"], ev.node), d["version"][2], f"HB on channel {d['src']}->{ev.node}")
            elif t == "Heartbeat":
                ok = see(ev, ("HB", d["src"], ev.node), d["ct"], f"HB on channel {d['src']}->{ev.node}")
            elif t == "LocalStableTime":
                g = tuple(d["group"])
                ok = see(ev, ("LST", d["src"], ev.node, g), _num(d["lst"]), f"LST on channel {d['src']}->{ev.node} group {list(g)}")
        elif ev.kind == "snapshot":
            for j, v in d.get("HB", {}).items():
                ok = ok and see(ev, ("snapHB", ev.node, j), v, f"snapshot HB[{j}] at server {ev.node}")
            for j, g, v in d.get("LST", []):
                ok = ok and see(ev, ("snapLST", ev.node, j, tuple(g)), _num(v), f"snapshot LST[{j},{g}] at server {ev.node}")
        elif ev.kind == "op-complete" and "state" in d:
            st = d["state"]
            for name in ("GT", "PT"):
                ok = ok and see(ev, (name, ev.node), st[name], f"{name} of client {ev.node}")
            group = tuple(st.get("group", ()))
            for j, v in st.get("LST", {}).items():
                ok = ok and see(ev, ("LSTc", ev.node, group, j), _num(v), f"LST[{j}] of client {ev.node}")
        if not ok:
            break
    verdict.stats = {"series": series}
    return verdict


def check_snapshot_agreement(trace: Trace) -> Verdict:
    """Snapshot HB tables match the values rebuilt from deliveries."""
    verdict = Verdict("snapshot-agreement")
    hb: dict[int, dict[int, int]] = defaultdict(dict)
    for ev in trace.events:
        d = ev.data
        if ev.kind == "deliver" and isinstance(ev.node, int):
            if d["type"] == "Update":
                hb[ev.node][d["src"]] = d["version"][2]
            elif d["type"] == "Heartbeat":
                hb[ev.node][d["src"]] = d["ct"]
        elif ev.kind == "snapshot":
            for j, v in d.get("HB", {}).items():
                mine = hb[ev.node].get(int(j), 0)
                if mine != v:
                    verdict.violations.append(Violation(
                        "snapshot-agreement", ev.time, ev.seq,
                        f"server {ev.node} reports HB[{j}]={v}, deliveries give {mine}", {}))
                    return verdict
    return verdict


def check_liveness(trace: Trace) -> Verdict:
    verdict = Verdict("liveness")
    for ev in trace.of_kind("liveness"):
        if ev.data.get("blocked"):
            verdict.violations.append(Violation("liveness", ev.time, ev.seq,
                                                f"{len(ev.data['blocked'])} request(s) never completed",
                                                {"blocked": ev.data["blocked"]}))
    return verdict


@dataclass
class Report:
    verdicts: list[Verdict]

    @property
    def ok(self) -> bool:
        return all(v.ok for v in self.verdicts)

    def __getitem__(self, name) -> Verdict:
        return next(v for v in self.verdicts if v.name == name)

    def summary(self) -> str:
        return "\n".join(v.summary() for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "verdicts": [v.to_dict() for v in self.verdicts]}


def check_trace(trace: Trace, liveness: bool = False) -> Report:
    verdicts = [
        check_causal_consistency(trace),
        check_dep_order(trace),
        check_monotonicity(trace),
        check_snapshot_agreement(trace),
    ]
    if liveness:
        verdicts.append(check_liveness(trace))
    return Report(verdicts)


# ---- scripted adversarial schedules -------------------------------------

@dataclass(frozen=True)
class Schedule:
    """A scripted run that tries to expose a stable time that is too large.

    ``witness`` names the pair (K, K') by value; a run realizes the schedule
    when the trace shows K dep K'. ``probe`` is the final GET(k') as
    (server, key).
    """

    name: str
    case: str
    available: bool
    reason: str = ""
    topology: TopologySpec | None = None
    steps: tuple = ()
    holds: tuple = ()
    reader: str | None = None
    probe: tuple[int, str] | None = None
    witness: tuple[str, str] | None = None
    skews: tuple[tuple[int, int], ...] = ()
    delay_ms: int = 5
    hb_hz: int = 100
    lst_hz: int = 100

    def describe(self) -> str:
        if not self.available:
            return f"{self.name}: unavailable ({self.reason})"
        return f"{self.name}: {len(self.steps)} steps, clients {sorted(set(s.client for s in self.steps))}"


@dataclass
class ScheduleOutcome:
    schedule: Schedule
    report: Report
    realized: bool
    trace: Trace

    @property
    def ok(self) -> bool:
        return self.report["causal-consistency"].ok


def _bfs_path(graph, src: int, dst: int, banned: frozenset) -> list[int] | None:
    if src == dst:
        return [src]
    prev = {src: None}
    frontier = [src]
    while frontier:
        nxt = []
        for a in frontier:
            for b in range(graph.n):
                if graph.adj[a] >> b & 1 and b not in prev and b not in banned:
                    prev[b] = a
                    if b == dst:
                        path = [b]
                        while prev[path[-1]] is not None:
                            path.append(prev[path[-1]])
                        return path[::-1]
                    nxt.append(b)
        frontier = nxt
    return None


class _Script:
    GAP = 60

    def __init__(self, spec: TopologySpec, prefix: str):
        from .simnet import Step
        self.Step = Step
        self.spec = spec
        self.graph = build_graph(spec)
        self.prefix = prefix
        self.extra: dict[str, frozenset] = {}
        self.steps: list = []
        self.t = 100

    def client(self, tag: str, server: int) -> str:
        name = f"{self.prefix}-{tag}"
        self.extra[name] = frozenset({server})
        return name

    def step(self, client, kind, server, key, value=None, wait=True):
        self.steps.append(self.Step(self.t, client, kind, server, key, value))
        if wait:
            self.t += self.GAP

    def covering(self, a: int, b: int) -> str:
        return min(c for c, acc in self.spec.client_access.items() if a in acc and b in acc)

    def propagate(self, path: list[int], key: str, holder: str | None) -> tuple[str, int]:
        """Carry the dependency on ``key`` (resident at path[0]) along ``path``.

        ``holder`` is a single-server client at path[0] that wrote ``key`` and
        may take the first real hop by program order. Returns (key, server)
        where the newest version of the chain now resides.
        """
        for n, (a, b) in enumerate(zip(path, path[1:])):
            shared = sorted(self.graph.shared_keys(a, b))
            if shared:
                nk = shared[0]
                who = holder if (n == 0 and holder is not None) else self.client(f"h{n}", a)
                if who != holder:
                    self.step(who, "get", a, key)
                self.step(who, "put", a, nk, f"hop{n}")
            else:
                nk = sorted(self.graph.keys[b])[0]
                who = self.covering(a, b)
                self.step(who, "get", a, key)
                self.step(who, "put", b, nk, f"hop{n}")
            key = nk
        return key, path[-1]


def _case_one(spec: TopologySpec, i: int, k: str) -> Schedule:
    graph = build_graph(spec)
    label = f"cycle[{spec.label(i)},{k}]"
    firsts = sorted(v for v in graph.real_neighbors(i) if k in graph.keys[v])
    lasts = sorted(graph.real_neighbors(i))
    for v1 in firsts:
        for vm in lasts:
            if vm == v1:
                continue
            path = _bfs_path(graph, v1, vm, frozenset({i}))
            if path is None:
                continue
            shared = sorted(graph.shared_keys(vm, i))
            kp = next((x for x in shared if x != k), shared[0])
            s = _Script(spec, "adv")
            writer = s.client("w", vm)
            hold_from = s.t
            s.step(writer, "put", vm, kp, "K'")
            chain = path[::-1]
            key, at = s.propagate(chain, kp, writer)
            final = s.client("f", v1)
            s.step(final, "get", v1, key)
            s.step(final, "put", v1, k, "K")
            reader = s.client("r", i)
            s.step(reader, "get", i, k, wait=False)
            s.t += 5
            s.step(reader, "get", i, kp)
            from .simnet import Hold
            return Schedule(
                label, "cycle", True, topology=spec.with_clients(s.extra), steps=tuple(s.steps),
                holds=(Hold(vm, i, hold_from),), reader=reader, probe=(i, kp), witness=("K", "K'"),
            )
    return Schedule(label, "cycle", False, reason=f"no cycle through server {spec.label(i)} closing on a second real edge")


def _case_two(spec: TopologySpec, g: frozenset, reader: str, i: int, p: int, q: int) -> Schedule:
    from .simnet import Hold
    graph = build_graph(spec)
    label = f"cross-group[{sorted(spec.label(x) for x in g)},{spec.label(i)},({spec.label(p)},{spec.label(q)})]"
    path = _bfs_path(graph, i, p, frozenset({q}))
    if path is None:
        return Schedule(label, "cross-group", False, reason="no simple path from the reading server to the edge")
    kp = sorted(graph.shared_keys(p, q))[0]
    s = _Script(spec, "adv")
    writer = s.client("w", p)
    hold_from = s.t
    s.step(writer, "put", p, kp, "K'")
    chain = path[::-1]
    if len(chain) == 1:
        local = writer
    else:
        key, at = s.propagate(chain, kp, writer)
        local = s.client("c1", i)
        s.step(local, "get", i, key)
    k = next((x for x in sorted(graph.keys[i]) if x != kp), sorted(graph.keys[i])[0])
    s.step(local, "put", i, k, "K")
    s.step(reader, "get", i, k, wait=False)
    s.t += 5
    s.step(reader, "get", q, kp)
    return Schedule(
        label, "cross-group", True, topology=spec.with_clients(s.extra), steps=tuple(s.steps),
        holds=(Hold(p, q, hold_from),), reader=reader, probe=(q, kp), witness=("K", "K'"),
    )


def adversarial_schedules(topology: TopologySpec, limit: int | None = None) -> list[Schedule]:
    """Scripted runs for both stable-time constructions.

    ``cycle``: a dependency travels around a cycle through server ``i`` while
    the update on the closing edge is held; a single-server reader at ``i``
    GETs ``k`` and then ``k'``. ``cross-group``: the held edge (p, q) feeds a
    group member q other than the reading server; a client spanning the group
    reads a version written at ``i`` by a single-server client and then GETs
    ``k'`` at q. One cycle schedule per (server, key class), one cross-group
    schedule per (group, reading server, edge). Missing structure yields an
    unavailable entry rather than a made-up run.
    """
    graph = build_graph(topology)
    out: list[Schedule] = []
    for i in graph.vertices:
        seen = set()
        for k in sorted(graph.keys[i]):
            L = compute_L(graph, i, k)
            if not L or L in seen:
                continue
            seen.add(L)
            out.append(_case_one(topology, i, k))
    if not any(s.case == "cycle" for s in out):
        out.append(Schedule("cycle", "cycle", False, reason="no key has a non-empty dependency edge set"))
    groups = sorted({a for a in topology.client_access.values() if len(a) > 1}, key=sorted)
    if not groups:
        out.append(Schedule("cross-group", "cross-group", False, reason="no client spans two or more servers"))
    for g in groups:
        reader = min(c for c, a in topology.client_access.items() if a == g)
        R = compute_R(graph, g)
        for i in sorted(g):
            for p, q in sorted(e for e in R if e[1] != i):
                out.append(_case_two(topology, g, reader, i, p, q))
    if limit is not None:
        out = out[:limit]
    return out


def calibration_schedules() -> list[Schedule]:
    """Small fixed scripts aimed at single rules of the stable time.

    ``stale-lst``: the LST traffic from server 0 to 1 is held, so only the
    client's own LST vector lets it see at 1 what it already depends on.
    ``read-your-writes``: a client writes y at 0 right after a heartbeat
    tick and immediately reads y at 1; only the wait on PT keeps the reply
    fresh, and the margin is one tick.
    """
    from .simnet import Hold, Step
    out = []
    spec = TopologySpec.from_dict({
        "servers": [0, 1, 2],
        "keys": {"x": [0, 2], "kp": [1, 2]},
        "clients": {"c": [0, 1], "d": [2]},
    })
    steps = (
        Step(100, "d", "put", 2, "kp", "K'0"),
        Step(150, "d", "put", 2, "kp", "K'"),
        Step(200, "d", "put", 2, "x", "K"),
        Step(400, "c", "get", 0, "x"),
        Step(450, "c", "get", 1, "kp"),
    )
    out.append(Schedule("stale-lst", "calibration", True, topology=spec, steps=steps,
                        holds=(Hold(0, 1, 0),), reader="c", probe=(1, "kp"), witness=("K", "K'")))
    spec = TopologySpec.from_dict({
        "servers": [0, 1],
        "keys": {"y": [0, 1]},
        "clients": {"c": [0, 1]},
    })
    steps = (
        Step(99, "c", "put", 0, "y", "Y"),
        Step(100, "c", "get", 1, "y"),
    )
    out.append(Schedule("read-your-writes", "calibration", True, topology=spec, steps=steps,
                        reader="c", probe=(1, "y"), witness=None, skews=((1, 1000),), delay_ms=3))
    return out


def run_schedule(schedule: Schedule, options=None, seed: int = 0) -> ScheduleOutcome:
    """Execute a schedule through the simulator and check the trace."""
    from .migration import GroupConfig
    from .simnet import ClockConfig, NetConfig, ServerOptions, TimerConfig, WorkloadConfig, run
    if not schedule.available:
        raise ValueError(f"schedule {schedule.name} is unavailable: {schedule.reason}")
    spec = schedule.topology
    last = max(s.time for s in schedule.steps)
    res = run(
        spec,
        GroupConfig.for_mode("full", spec),
        NetConfig(delay_ms=schedule.delay_ms, client_delay_ms=1, holds=schedule.holds),
        ClockConfig.of(dict(schedule.skews)),
        TimerConfig(hb_hz=schedule.hb_hz, lst_hz=schedule.lst_hz, stab_hz=1000, phase="zero"),
        WorkloadConfig(put_rate=0, get_rate=0, duration_ms=last + 1, drain_ms=300, script=schedule.steps),
        seed=seed,
        options=options or ServerOptions(),
    )
    report = check_trace(res.trace)
    return ScheduleOutcome(schedule, report, _realized(res.trace, schedule), res.trace)


def _realized(trace: Trace, schedule: Schedule) -> bool:
    if schedule.witness is None:
        return True
    dg = build_dep_graph(trace)
    stamps = {}
    for ev in trace.of_kind("op-complete"):
        d = ev.data
        if d.get("op") == "PUT" and "error" not in d:
            stamps[d["value"]] = (d["ut"], d["origin"])
    a, b = (stamps.get(v) for v in schedule.witness)
    if a is None or b is None:
        return False
    return dg.dep(a, b)


def minimal_inflation(schedule: Schedule, hi: int = 1 << 20, seed: int = 0) -> int | None:
    """Smallest stable-time inflation (ticks) under which the schedule fails, by bisection."""
    from .simnet import ServerOptions

    def fails(eps):
        return not run_schedule(schedule, ServerOptions(mutant="inflate", inflate_ticks=eps), seed).ok

    if not fails(hi):
        return None
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fails(mid):
            hi = mid
        else:
            lo = mid
    return hi


# older name, kept for existing callers
check_lemma1 = check_dep_order
