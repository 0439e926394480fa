"""Migration-optimised variants: per-server barrier (basic) and per-group barrier (general).

In these modes a client works inside one group at a time. Moving to another
group goes through a MIGRATE handshake whose barrier guarantees the client's
causal past is already present at the target, which lets in-group GETs use a
larger stable time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .protocol import (
    INF,
    AccessViolation,
    ClientState,
    GetReq,
    MigrateReply,
    MigrateReq,
    ProtocolError,
    Server,
    _Pending,
)
from .topology import TopologySpec, normalize_groups

MODES = ("full", "basic", "general", "gentlerain")


@dataclass(frozen=True)
class GroupConfig:
    mode: str
    groups: tuple[frozenset, ...]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        object.__setattr__(self, "groups", normalize_groups(self.groups))
        if self.mode == "basic" and any(len(g) != 1 for g in self.groups):
            raise ValueError("basic mode needs singleton groups")

    @classmethod
    def for_mode(cls, mode: str, spec: TopologySpec, groups: Iterable[Iterable[int]] | None = None) -> "GroupConfig":
        if mode == "ours":
            mode = "full"
        if mode in ("full", "gentlerain"):
            return cls(mode, tuple(spec.client_access.values()))
        if mode == "basic":
            return cls(mode, tuple(frozenset({s}) for s in spec.servers))
        if groups is None:
            # one group per access set: the no-migration shape of general mode
            groups = spec.client_access.values()
        return cls(mode, tuple(frozenset(g) for g in groups))

    def client_groups(self, access: frozenset) -> tuple[frozenset, ...]:
        """Groups a client with this access set moves between; the first is where it starts.

        A client whose whole access set is a group starts there.
        """
        access = frozenset(access)
        if self.mode in ("full", "gentlerain"):
            return (access,)
        mine = tuple(g for g in self.groups if g <= access)
        if access in mine:
            mine = (access,) + tuple(g for g in mine if g != access)
        covered = frozenset().union(*mine) if mine else frozenset()
        if covered != access:
            raise ValueError(
                f"groups {[sorted(g) for g in self.groups]} do not cover access set {sorted(access)}"
            )
        return mine

    @property
    def lst_groups(self) -> tuple[frozenset, ...]:
        if self.mode in ("basic", "gentlerain"):
            return ()
        return self.groups


class MigratingClientState(ClientState):
    """Client that operates inside ``current_group`` and migrates between groups."""

    def __init__(self, cid: str, access: Iterable[int], config: GroupConfig):
        super().__init__(cid, access)
        self.config = config
        self.mode = config.mode
        self.groups = config.client_groups(self.access)
        self.current_group: frozenset = self.groups[0]
        self.migration_pending: MigrateReq | None = None
        if self.mode == "general":
            self.lst_by_group = {g: {j: 0 for j in sorted(g)} for g in self.groups}

    def scope(self) -> frozenset:
        if self.mode in ("full", "gentlerain"):
            return self.access
        return self.current_group

    def lst_view(self) -> Mapping[int, float]:
        if self.mode == "general":
            return self.lst_by_group[self.current_group]
        if self.mode == "basic":
            return {}
        return self.LST_vec

    def get_request(self, i: int, k: str) -> GetReq:
        if self.migration_pending is not None:
            raise ProtocolError(f"client {self.id!r} has a migration in flight")
        self._check(i)
        if self.mode == "basic":
            return GetReq(self._next_rid(), k, self.PT, INF, frozenset({i}))
        return super().get_request(i, k)

    def migrate_request(self, target) -> tuple[int, MigrateReq]:
        """Start a move to ``target`` (a server id in basic mode, a group in general mode).

        Returns the server to contact and the request.
        """
        if self.mode == "basic":
            i = int(target)
            if i not in self.access:
                raise AccessViolation(f"client {self.id!r} cannot reach server {i}")
            g = frozenset({i})
        elif self.mode == "general":
            g = frozenset(target)
            if g not in self.groups:
                raise AccessViolation(f"client {self.id!r} has no group {sorted(g)}")
            i = min(g)
        else:
            raise ProtocolError(f"migration is not available in {self.mode} mode")
        req = MigrateReq(self._next_rid(), max(self.PT, self.GT), g)
        self.migration_pending = req
        return i, req

    def on_migrate_reply(self, reply: MigrateReply) -> None:
        req = self.migration_pending
        if req is None or req.rid != reply.rid:
            raise ProtocolError(f"client {self.id!r} got an unexpected migration reply")
        self.current_group = req.group
        self.migration_pending = None
        if self.mode == "general":
            vec = self.lst_by_group[req.group]
            for j, v in reply.lst.items():
                if j in vec:
                    vec[j] = max(vec[j], v)

    def state(self) -> dict:
        out = super().state()
        if self.mode in ("basic", "general"):
            out["group"] = sorted(self.current_group)
        return out


def migrate_basic(client: MigratingClientState, i: int):
    return client.migrate_request(i)


def migrate_general(client: MigratingClientState, g: Iterable[int]):
    return client.migrate_request(frozenset(g))


class MigratingServer(Server):
    """Server that also understands the basic/general GST rules and MIGRATE."""

    def gst_parts(self, k: str, g: frozenset, rd: float) -> tuple[float, float]:
        if self.mode == "basic":
            return self.ld(k), INF
        return super().gst_parts(k, g, rd)

    def barrier(self, g: frozenset) -> float:
        if self.mode == "basic":
            return self.min_ld()
        if self.mode == "general":
            return min(self.min_ld(), self.rd_group(g))
        raise ProtocolError(f"server {self.id} has no migration barrier in {self.mode} mode")

    def _on_migrate(self, src, msg: MigrateReq) -> list:
        if self.id not in msg.group:
            raise ProtocolError(f"migration to {sorted(msg.group)} addressed to non-member {self.id}")
        out = self._try_migrate(src, msg)
        if out is None:
            self.pending_gets.append(_Pending(src, msg))
            return []
        return out

    def _try_migrate(self, src, msg: MigrateReq):
        if msg.t > self.barrier(msg.group):
            return None
        lst = self.reply_lst(msg.group) if self.mode == "general" else {}
        return [(src, MigrateReply(msg.rid, lst))]

    def _try_pending(self, p: _Pending):
        if isinstance(p.req, MigrateReq):
            return self._try_migrate(p.src, p.req)
        return super()._try_pending(p)
