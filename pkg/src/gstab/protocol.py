"""Client and server state machines for GST-based causal consistency.

Servers never block the caller: a request that must wait is parked and
re-examined by :meth:`Server.retry` whenever heartbeat, LST or clock state
moves. Every handler returns the list of ``(destination, message)`` pairs it
wants sent; the runtime (``simnet``) owns delivery.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .topology import AugmentedShareGraph, ServerMetadata, compute_R

INF = math.inf

MUTANTS = (None, "drop_rd", "drop_ld", "no_block", "inflate")
LOCAL_READ_RULES = ("guarded", "origin")


class ProtocolError(RuntimeError):
    pass


class AccessViolation(ProtocolError):
    """Client addressed a server outside its access set."""


class InvariantViolation(ProtocolError):
    """A monotonic quantity went backwards; the channel model is broken."""


@dataclass(frozen=True)
class Version:
    key: str
    value: Any
    ut: int
    origin: int
    writer: str | None = field(default=None, compare=False)

    @property
    def stamp(self) -> tuple[int, int]:
        return (self.ut, self.origin)

    def to_json(self):
        return [self.key, self.value, self.ut, self.origin, self.writer]

    @classmethod
    def from_json(cls, doc):
        return cls(*doc)


# the initial (never written) version of any key
BOTTOM_STAMP = (0, -1)


# ---- messages -----------------------------------------------------------

@dataclass(frozen=True)
class GetReq:
    rid: int
    key: str
    t: int
    rd: float
    group: frozenset


@dataclass(frozen=True)
class GetReply:
    rid: int
    key: str
    value: Any
    t: int
    origin: int
    lst: Mapping[int, float]


@dataclass(frozen=True)
class PutReq:
    rid: int
    key: str
    value: Any
    t: int
    pt: int = 0
    group: frozenset | None = None


@dataclass(frozen=True)
class PutReply:
    rid: int
    key: str
    t: int
    origin: int


@dataclass(frozen=True)
class Update:
    version: Version


@dataclass(frozen=True)
class Heartbeat:
    ct: int


@dataclass(frozen=True)
class LocalStableTime:
    lst: int
    group: frozenset


@dataclass(frozen=True)
class MigrateReq:
    rid: int
    t: int
    group: frozenset


@dataclass(frozen=True)
class MigrateReply:
    rid: int
    lst: Mapping[int, float]


@dataclass(frozen=True)
class ErrorReply:
    rid: int
    reason: str


MESSAGE_TYPES = {
    cls.__name__: cls
    for cls in (GetReq, GetReply, PutReq, PutReply, Update, Heartbeat, LocalStableTime,
                MigrateReq, MigrateReply, ErrorReply)
}


def _wire(x):
    if isinstance(x, frozenset):
        return sorted(x)
    if isinstance(x, Version):
        return x.to_json()
    if isinstance(x, Mapping):
        return {str(k): _wire(v) for k, v in sorted(x.items())}
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def message_fields(msg) -> dict:
    """JSON-friendly field dict for trace rendering."""
    out = {"type": type(msg).__name__}
    for name in msg.__dataclass_fields__:
        out[name] = _wire(getattr(msg, name))
    return out


# ---- clocks --------------------------------------------------------------

class ManualClock:
    """Strictly increasing local clock driven by hand; used by unit tests."""

    def __init__(self, now: int = 0):
        self.now = now
        self.last = 0

    def peek(self) -> int:
        return max(self.now, self.last + 1)

    def read(self) -> int:
        self.last = self.peek()
        return self.last


# ---- client --------------------------------------------------------------

class ClientState:
    """GT, PT and the per-server LST vector of one client."""

    def __init__(self, cid: str, access: Iterable[int]):
        self.id = cid
        self.access = frozenset(access)
        if not self.access:
            raise ProtocolError(f"client {cid!r} has an empty access set")
        self.GT = 0
        self.PT = 0
        self.LST_vec: dict[int, float] = {j: 0 for j in sorted(self.access)}
        self._rid = 0

    def _next_rid(self) -> int:
        self._rid += 1
        return self._rid

    def scope(self) -> frozenset:
        return self.access

    def _check(self, i: int) -> None:
        if i not in self.scope():
            raise AccessViolation(f"client {self.id!r} cannot reach server {i}")

    def lst_view(self) -> Mapping[int, float]:
        return self.LST_vec

    def rd_for(self, i: int) -> float:
        lst = self.lst_view()
        return min((v for j, v in lst.items() if j != i), default=INF)

    def get_request(self, i: int, k: str) -> GetReq:
        self._check(i)
        return GetReq(self._next_rid(), k, self.PT, self.rd_for(i), self.scope())

    def on_get_reply(self, reply: GetReply) -> Any:
        self.GT = max(self.GT, reply.t)
        lst = self.lst_view()
        for j, v in reply.lst.items():
            if j in lst:
                lst[j] = max(lst[j], v)
        return reply.value

    def put_request(self, i: int, k: str, v: Any) -> PutReq:
        self._check(i)
        return PutReq(self._next_rid(), k, v, max(self.PT, self.GT), self.PT, self.scope())

    def on_put_reply(self, reply: PutReply) -> None:
        self.PT = max(self.PT, reply.t)

    def state(self) -> dict:
        return {"GT": self.GT, "PT": self.PT, "LST": dict(self.lst_view())}


# ---- server --------------------------------------------------------------

@dataclass
class _Pending:
    src: str
    req: Any


class Server:
    """Multi-version store with heartbeat/LST bookkeeping and the GST function.

    ``local_reads`` picks which versions above the stable time a GET may return:
    ``"origin"`` returns any version created by a PUT at this server;
    ``"guarded"`` returns the requesting client's own writes here, and other
    local versions only once they are covered by the remote part
    ``max(RD, rd)`` of the stable time.

    ``put_guard`` makes a PUT from a client that spans several servers wait
    until the client's PT is covered by every local-dependency clock here, so
    writes it made elsewhere have arrived before the new version exists.

    ``lst_cap`` also bounds the remote part by this server's own LST for the
    group. The reply hands that LST to the client, so whatever it reads here
    is covered by the remote part it will present at the other servers.
    """

    def __init__(
        self,
        sid: int,
        graph: AugmentedShareGraph,
        meta: ServerMetadata,
        *,
        clock=None,
        mode: str = "full",
        mutant: str | None = None,
        inflate_ticks: int = 1,
        local_reads: str = "guarded",
        put_guard: bool = True,
        lst_cap: bool = True,
    ):
        if mutant not in MUTANTS:
            raise ValueError(f"unknown mutant {mutant!r}")
        if local_reads not in LOCAL_READ_RULES:
            raise ValueError(f"unknown local read rule {local_reads!r}")
        self.id = sid
        self.graph = graph
        self.meta = meta
        self.mode = mode
        self.mutant = mutant
        self.inflate_ticks = inflate_ticks
        self.local_reads = local_reads
        self.put_guard = put_guard
        self.lst_cap = lst_cap
        self.local_latest: dict[str, Version] = {}
        self.clock = clock if clock is not None else ManualClock()
        self.keys = graph.keys[sid]
        self.store: dict[str, list[Version]] = {k: [] for k in sorted(self.keys)}
        self._stamps: dict[str, list[tuple[int, int]]] = {k: [] for k in self.store}
        self.own_latest: dict[tuple[str, str], Version] = {}
        self.HB: dict[int, int] = {j: 0 for j in graph.vertices if j != sid}
        self.LST_table: dict[tuple[int, frozenset], int] = {}
        for g in meta.groups:
            for j in g:
                if j != sid:
                    self.LST_table[(j, g)] = 0
        self.class_LD: list[float] = [
            min((0 for _ in c.sources), default=INF) for c in meta.classes
        ]
        self._classes_by_source: dict[int, list[int]] = {}
        for idx, c in enumerate(meta.classes):
            for x in set(c.sources):
                self._classes_by_source.setdefault(x, []).append(idx)
        self.pending_gets: list[_Pending] = []
        self.pending_puts: list[_Pending] = []
        self.replicas = {
            k: tuple(sorted(j for j in graph.vertices if j != sid and k in graph.keys[j]))
            for k in self.store
        }
        self._guard_cache: dict[tuple[str, frozenset], bool] = {}
        self._extra_lst_sources: dict[frozenset, tuple[int, ...]] = {}
        if mode == "gentlerain":
            self.targets = frozenset(self.HB)
        else:
            self.targets = meta.targets

    # -- derived quantities

    def ld(self, k: str) -> float:
        return self.class_LD[self.meta.class_of[k]]

    def min_ld(self) -> float:
        return min(self.class_LD, default=INF)

    def rd_group(self, g: frozenset) -> float:
        return min((self.LST_table.get((j, g), 0) for j in g if j != self.id), default=INF)

    def lst_own(self, g: frozenset) -> float:
        srcs = self.meta.lst_sources.get(g)
        if srcs is None:
            srcs = self._extra_lst_sources.get(g)
            if srcs is None:
                srcs = tuple(sorted(x for x, y in compute_R(self.graph, g) if y == self.id))
                self._extra_lst_sources[g] = srcs
        return min((self.HB[z] for z in srcs), default=INF)

    def lst_wire(self, g: frozenset) -> float:
        return self.lst_own(g)

    def gentlerain_gst(self) -> float:
        return min(self.HB.values(), default=INF)

    def gst_parts(self, k: str, g: frozenset, rd: float) -> tuple[float, float]:
        """(local part LD, remote part max(RD, rd)); the stable time is their minimum."""
        if self.mode == "gentlerain":
            return self.gentlerain_gst(), INF
        ld = self.ld(k)
        RD = self.rd_group(g)
        if self.mutant == "drop_rd":
            return ld, RD
        if self.mutant == "drop_ld":
            return INF, max(RD, rd)
        return ld, max(RD, rd)

    def _parts(self, k, g, rd):
        if k not in self.keys:
            raise ProtocolError(f"key {k!r} not stored at server {self.id}")
        ld, remote = self.gst_parts(k, g, rd)
        if self.lst_cap and self.mode in ("full", "general") and len(g) > 1:
            remote = min(remote, self.lst_own(g))
        if self.mutant == "inflate":
            ld, remote = ld + self.inflate_ticks, remote + self.inflate_ticks
        return ld, remote

    def base_gst(self, k: str, g: frozenset, rd: float) -> float:
        ld, remote = self.gst_parts(k, g, rd)
        return min(ld, remote)

    def gst(self, k: str, g: frozenset, rd: float) -> float:
        return min(self._parts(k, g, rd))

    def guarded(self, k: str, g: frozenset) -> bool:
        """True when some other member of ``g`` also stores ``k``."""
        hit = self._guard_cache.get((k, g))
        if hit is None:
            hit = any(j != self.id and k in self.graph.keys[j] for j in g)
            self._guard_cache[(k, g)] = hit
        return hit

    def select(self, k: str, bound: float, client: str | None, remote: float = INF) -> Version | None:
        stamps = self._stamps[k]
        versions = self.store[k]
        best = None
        if bound == INF:
            if versions:
                best = versions[-1]
        else:
            pos = bisect.bisect_right(stamps, (int(bound), math.inf))
            if pos:
                best = versions[pos - 1]
        if self.local_reads == "origin":
            cands = [self.local_latest.get(k)]
        else:
            cands = [self.own_latest.get((k, client))]
            latest = self.local_latest.get(k)
            if latest is not None and latest.ut <= remote:
                cands.append(latest)
            elif latest is not None:
                for v in reversed(versions):
                    if v.origin == self.id and v.ut <= remote:
                        cands.append(v)
                        break
        for local in cands:
            if local is not None and (best is None or local.stamp > best.stamp):
                best = local
        return best

    def _insert(self, v: Version) -> None:
        stamps = self._stamps[v.key]
        pos = bisect.bisect_left(stamps, v.stamp)
        if pos < len(stamps) and stamps[pos] == v.stamp:
            raise InvariantViolation(f"duplicate version {v.stamp} of {v.key!r} at server {self.id}")
        stamps.insert(pos, v.stamp)
        self.store[v.key].insert(pos, v)

    def _set_hb(self, j: int, value: int) -> bool:
        old = self.HB.get(j)
        if old is None:
            raise ProtocolError(f"server {self.id} got a clock value from unknown server {j}")
        if value < old:
            raise InvariantViolation(f"HB[{j}] at server {self.id} regressed {old} -> {value}")
        if value == old:
            return False
        self.HB[j] = value
        for idx in self._classes_by_source.get(j, ()):
            srcs = self.meta.classes[idx].sources
            self.class_LD[idx] = min(self.HB[x] for x in srcs)
        return True

    # -- request handling

    def handle(self, src, msg) -> list:
        if isinstance(msg, GetReq):
            return self._on_get(src, msg)
        if isinstance(msg, PutReq):
            return self._on_put(src, msg)
        if isinstance(msg, Update):
            return self._on_update(src, msg)
        if isinstance(msg, Heartbeat):
            changed = self._set_hb(src, msg.ct)
            return self.retry() if changed else []
        if isinstance(msg, LocalStableTime):
            return self._on_lst(src, msg)
        if isinstance(msg, MigrateReq):
            return self._on_migrate(src, msg)
        raise ProtocolError(f"server {self.id} cannot handle {type(msg).__name__}")

    def _on_get(self, src, req: GetReq) -> list:
        if req.key not in self.keys:
            return [(src, ErrorReply(req.rid, f"key {req.key!r} not stored at server {self.id}"))]
        if self.id not in req.group:
            return [(src, ErrorReply(req.rid, f"server {self.id} not in group {sorted(req.group)}"))]
        out = self._try_get(src, req)
        if out is None:
            self.pending_gets.append(_Pending(src, req))
            return []
        return out

    def get_blocked(self, req: GetReq) -> bool:
        if self.mutant == "no_block" or not self.guarded(req.key, req.group):
            return False
        return req.t > self.gst(req.key, req.group, req.rd)

    def _try_get(self, src, req: GetReq):
        if self.get_blocked(req):
            return None
        ld, remote = self._parts(req.key, req.group, req.rd)
        v = self.select(req.key, min(ld, remote), src, remote)
        lst = self.reply_lst(req.group)
        if v is None:
            return [(src, GetReply(req.rid, req.key, None, 0, -1, lst))]
        return [(src, GetReply(req.rid, req.key, v.value, v.ut, v.origin, lst))]

    def reply_lst(self, g: frozenset) -> dict:
        if self.mode not in ("full", "general") or len(g) < 2:
            return {}
        out = {}
        for j in sorted(g):
            out[j] = self.lst_wire(g) if j == self.id else self.LST_table.get((j, g), 0)
        return out

    def _on_put(self, src, req: PutReq) -> list:
        if req.key not in self.keys:
            return [(src, ErrorReply(req.rid, f"key {req.key!r} not stored at server {self.id}"))]
        if self.pending_puts or not self._put_ready(req):
            self.pending_puts.append(_Pending(src, req))
            return self._drain_puts()
        return self._apply_put(src, req)

    def put_guarded(self, req: PutReq) -> bool:
        return self.put_guard and req.group is not None and len(req.group) > 1

    def _put_ready(self, req: PutReq) -> bool:
        if self.clock.peek() <= req.t:
            return False
        return not self.put_guarded(req) or req.pt <= self.min_ld()

    def _apply_put(self, src, req: PutReq) -> list:
        ut = self.clock.read()
        assert ut > req.t
        v = Version(req.key, req.value, ut, self.id, src)
        self._insert(v)
        self.own_latest[(req.key, src)] = v
        self.local_latest[req.key] = v
        out = [(j, Update(v)) for j in self.replicas[req.key]]
        out.append((src, PutReply(req.rid, req.key, ut, self.id)))
        return out

    def _drain_puts(self) -> list:
        out = []
        progress = True
        while progress and self.pending_puts:
            progress = False
            for idx, p in enumerate(self.pending_puts):
                if self._put_ready(p.req):
                    del self.pending_puts[idx]
                    out.extend(self._apply_put(p.src, p.req))
                    progress = True
                    break
        return out

    def put_wake_local(self) -> int | None:
        """Earliest local clock reading at which some pending PUT passes its clock wait."""
        waits = [p.req.t + 1 for p in self.pending_puts if self.clock.peek() <= p.req.t]
        return min(waits, default=None)

    def _on_update(self, src: int, msg: Update) -> list:
        v = msg.version
        if v.key not in self.keys:
            raise ProtocolError(f"update for {v.key!r} reached server {self.id} which does not store it")
        self._insert(v)
        changed = self._set_hb(src, v.ut)
        return self.retry() if changed else []

    def _on_lst(self, src: int, msg: LocalStableTime) -> list:
        key = (src, msg.group)
        old = self.LST_table.get(key, 0)
        if msg.lst < old:
            raise InvariantViolation(f"LST[{src},{sorted(msg.group)}] at server {self.id} regressed")
        self.LST_table[key] = msg.lst
        return self.retry() if msg.lst != old else []

    def _on_migrate(self, src, msg: MigrateReq) -> list:
        raise ProtocolError("migration requests need a migration-capable server")

    def retry(self) -> list:
        out = self._drain_puts()
        if self.pending_gets:
            waiting = self.pending_gets
            self.pending_gets = []
            for p in waiting:
                res = self._try_pending(p)
                if res is None:
                    self.pending_gets.append(p)
                else:
                    out.extend(res)
        return out

    def _try_pending(self, p: _Pending):
        return self._try_get(p.src, p.req)

    # -- periodic work

    def heartbeat_tick(self) -> list:
        if not self.targets:
            return []
        ct = self.clock.read()
        return [(j, Heartbeat(ct)) for j in sorted(self.targets)]

    def lst_groups(self) -> tuple[frozenset, ...]:
        return tuple(g for g in self.meta.groups if len(g) >= 2)

    def lst_tick(self) -> list:
        if self.mode not in ("full", "general"):
            return []
        out = []
        for g in self.lst_groups():
            lst = self.lst_wire(g)
            for j in sorted(g):
                if j != self.id:
                    out.append((j, LocalStableTime(lst, g)))
        return out

    def blocked_requests(self) -> list:
        return [(p.src, p.req) for p in self.pending_gets + self.pending_puts]

    def snapshot(self) -> dict:
        return {
            "HB": {str(j): v for j, v in sorted(self.HB.items())},
            "LST": [[j, sorted(g), "inf" if v == INF else v] for (j, g), v in sorted(self.LST_table.items(), key=lambda kv: (kv[0][0], sorted(kv[0][1])))],
        }
