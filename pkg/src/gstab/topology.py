"""Share graph, augmented share graph and the static metadata derived from them.

Servers are dense integers ``0..n-1``. Keys and clients are strings. Every
directed edge set is returned as a sorted tuple of ``(src, dst)`` pairs so
results compare and hash deterministically.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import yaml

from .kernels import simple_path_ends

INF = math.inf

Edge = tuple[int, int]
EdgeSet = tuple[Edge, ...]
Group = frozenset


class TopologyError(ValueError):
    """Malformed topology or a query outside a server's domain."""


def _bits(mask: int):
    while mask:
        b = mask & -mask
        mask ^= b
        yield b.bit_length() - 1


@dataclass(frozen=True)
class TopologySpec:
    servers: tuple[int, ...]
    key_placement: Mapping[str, frozenset[int]]
    client_access: Mapping[str, frozenset[int]]
    names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(
            self, "key_placement", {str(k): frozenset(v) for k, v in self.key_placement.items()}
        )
        object.__setattr__(
            self, "client_access", {str(c): frozenset(v) for c, v in self.client_access.items()}
        )
        object.__setattr__(self, "names", dict(self.names))

    @property
    def n(self) -> int:
        return len(self.servers)

    def validate(self) -> None:
        if not self.servers:
            raise TopologyError("topology has no servers")
        if sorted(self.servers) != list(range(len(self.servers))):
            raise TopologyError(f"server ids must be 0..{len(self.servers) - 1}, got {list(self.servers)}")
        known = set(self.servers)
        for key, replicas in self.key_placement.items():
            if not replicas:
                raise TopologyError(f"key {key!r} is placed on no server")
            bad = sorted(replicas - known)
            if bad:
                raise TopologyError(f"key {key!r} references unknown server(s) {bad}")
        for client, access in self.client_access.items():
            if not access:
                raise TopologyError(f"client {client!r} has an empty access set")
            bad = sorted(access - known)
            if bad:
                raise TopologyError(f"client {client!r} references unknown server(s) {bad}")

    def keys_of(self, server: int) -> frozenset[str]:
        return frozenset(k for k, r in self.key_placement.items() if server in r)

    def with_clients(self, extra: Mapping[str, Iterable[int]]) -> "TopologySpec":
        access = dict(self.client_access)
        for c, s in extra.items():
            if c in access:
                raise TopologyError(f"client {c!r} already exists")
            access[c] = frozenset(s)
        return TopologySpec(self.servers, self.key_placement, access, self.names)

    def label(self, server: int) -> str:
        return self.names.get(server, str(server))

    def to_dict(self) -> dict:
        out = {
            "servers": [self.label(s) for s in self.servers],
            "keys": {k: sorted(self.label(s) for s in r) for k, r in sorted(self.key_placement.items())},
            "clients": {c: sorted(self.label(s) for s in a) for c, a in sorted(self.client_access.items())},
        }
        return out

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TopologySpec":
        """Parse the ``servers`` / ``keys`` / ``clients`` document form.

        Server entries may be integers or names; names are numbered in list order.
        """
        if not isinstance(doc, Mapping):
            raise TopologyError("topology document must be a mapping")
        unknown = set(doc) - {"servers", "keys", "clients"}
        if unknown:
            raise TopologyError(f"unknown topology field(s): {sorted(unknown)}")
        for section in ("servers", "keys", "clients"):
            if section not in doc:
                raise TopologyError(f"topology is missing section {section!r}")
        raw_servers = list(doc["servers"])
        if len(set(map(str, raw_servers))) != len(raw_servers):
            raise TopologyError("duplicate server entries")
        index = {str(s): i for i, s in enumerate(raw_servers)}
        names = {i: str(s) for i, s in enumerate(raw_servers)}
        if all(isinstance(s, int) for s in raw_servers) and sorted(raw_servers) == list(range(len(raw_servers))):
            index = {str(s): s for s in raw_servers}
            names = {}

        def resolve(owner: str, refs) -> frozenset[int]:
            if isinstance(refs, (str, int)):
                refs = [refs]
            out = set()
            for r in refs:
                if str(r) not in index:
                    raise TopologyError(f"{owner} references unknown server {r!r}")
                out.add(index[str(r)])
            return frozenset(out)

        keys = {str(k): resolve(f"key {k!r}", v) for k, v in (doc["keys"] or {}).items()}
        clients = {str(c): resolve(f"client {c!r}", v) for c, v in (doc["clients"] or {}).items()}
        spec = cls(tuple(range(len(raw_servers))), keys, clients, names)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "TopologySpec":
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except ValueError:
            doc = yaml.safe_load(text)
        return cls.from_dict(doc)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def ring_spec(n: int) -> TopologySpec:
    """Ring of ``n`` servers; node i shares one key with each neighbour and has one local client."""
    if n < 2:
        raise TopologyError("a ring needs at least 2 servers")
    keys = {f"k{i}_{(i + 1) % n}": frozenset({i, (i + 1) % n}) for i in range(n)}
    clients = {f"c{i}": frozenset({i}) for i in range(n)}
    return TopologySpec(tuple(range(n)), keys, clients)


def random_topology(
    rng: random.Random, n: int, n_keys: int, n_clients: int, max_access: int = 3
) -> TopologySpec:
    """Random placement of ``n_keys`` keys (1-3 replicas) plus one local key per server,
    and ``n_clients`` clients with 1..max_access servers each."""
    keys = {}
    for x in range(n_keys):
        size = rng.choice([1, 2, 2, 2, 3])
        keys[f"k{x}"] = frozenset(rng.sample(range(n), min(size, n)))
    for s in range(n):
        keys[f"own{s}"] = frozenset({s})
    clients = {}
    for c in range(n_clients):
        size = rng.randint(1, min(max_access, n))
        clients[f"c{c}"] = frozenset(rng.sample(range(n), size))
    return TopologySpec(tuple(range(n)), keys, clients)


class AugmentedShareGraph:
    """Servers plus real edges (shared keys) and virtual edges (co-accessing clients)."""

    def __init__(self, spec: TopologySpec):
        self.spec = spec
        self.n = spec.n
        self.vertices = tuple(range(self.n))
        self.keys: dict[int, frozenset[str]] = {s: spec.keys_of(s) for s in self.vertices}
        real: dict[Edge, frozenset[str]] = {}
        for a in self.vertices:
            for b in range(a + 1, self.n):
                shared = self.keys[a] & self.keys[b]
                if shared:
                    real[(a, b)] = shared
        virtual: dict[Edge, set[str]] = {}
        for c, access in sorted(spec.client_access.items()):
            acc = sorted(access)
            for x, a in enumerate(acc):
                for b in acc[x + 1:]:
                    virtual.setdefault((a, b), set()).add(c)
        self.real_edges: dict[Edge, frozenset[str]] = dict(sorted(real.items()))
        self.virtual_edges: dict[Edge, frozenset[str]] = {e: frozenset(v) for e, v in sorted(virtual.items())}
        self.groups: tuple[frozenset[int], ...] = tuple(
            sorted({a for a in spec.client_access.values()}, key=lambda g: (len(g), sorted(g)))
        )
        adj = [0] * self.n
        real_adj = [0] * self.n
        virt_adj = [0] * self.n
        for a, b in self.real_edges:
            real_adj[a] |= 1 << b
            real_adj[b] |= 1 << a
        for a, b in self.virtual_edges:
            virt_adj[a] |= 1 << b
            virt_adj[b] |= 1 << a
        for v in self.vertices:
            adj[v] = real_adj[v] | virt_adj[v]
        self.adj = tuple(adj)
        self.real_adj = tuple(real_adj)
        self.virtual_adj = tuple(virt_adj)
        self._ends: dict[int, list[int]] = {}

    def is_real(self, a: int, b: int) -> bool:
        return bool(self.real_adj[a] >> b & 1)

    def is_virtual(self, a: int, b: int) -> bool:
        return bool(self.virtual_adj[a] >> b & 1)

    def shared_keys(self, a: int, b: int) -> frozenset[str]:
        return self.keys[a] & self.keys[b]

    def path_ends(self, start: int) -> list[int]:
        ends = self._ends.get(start)
        if ends is None:
            ends = self._ends[start] = simple_path_ends(list(self.adj), start)
        return ends

    def real_neighbors(self, v: int) -> tuple[int, ...]:
        return tuple(_bits(self.real_adj[v]))

    def __repr__(self):
        return (
            f"AugmentedShareGraph(n={self.n}, real={len(self.real_edges)}, "
            f"virtual={len(self.virtual_edges)}, groups={len(self.groups)})"
        )


def build_graph(spec: TopologySpec) -> AugmentedShareGraph:
    spec.validate()
    return AugmentedShareGraph(spec)


def _check_server(graph: AugmentedShareGraph, i: int) -> None:
    if not 0 <= i < graph.n:
        raise TopologyError(f"unknown server {i}")


def compute_L(graph: AugmentedShareGraph, i: int, k: str) -> EdgeSet:
    """Edges into ``i`` that can carry local causal dependencies of key ``k``."""
    _check_server(graph, i)
    if k not in graph.keys[i]:
        raise TopologyError(f"key {k!r} is not stored at server {i}")
    ends = graph.path_ends(i)
    nbrs = graph.adj[i]
    out: set[Edge] = set()
    for v1 in _bits(graph.real_adj[i]):
        if k not in graph.shared_keys(i, v1):
            continue
        if graph.is_virtual(i, v1):
            # real + virtual parallel edges form a cycle of length 2
            out.add((v1, i))
        for vm in _bits(ends[v1] & nbrs & ~(1 << v1)):
            out.add((v1, i))
            if graph.is_real(vm, i):
                out.add((vm, i))
    return tuple(sorted(out))


def _group_mask(graph: AugmentedShareGraph, g: Iterable[int]) -> tuple[frozenset[int], int]:
    g = frozenset(g)
    if not g:
        raise TopologyError("group must contain at least one server")
    mask = 0
    for s in g:
        _check_server(graph, s)
        mask |= 1 << s
    return g, mask


def compute_R(graph: AugmentedShareGraph, g: Iterable[int]) -> EdgeSet:
    """Real edges at the endpoints of simple paths joining two members of ``g``."""
    g, gmask = _group_mask(graph, g)
    out: set[Edge] = set()
    for y in g:
        ends = graph.path_ends(y)
        others = gmask & ~(1 << y)
        for x in _bits(graph.real_adj[y]):
            if ends[x] & others:
                out.add((x, y))
    return tuple(sorted(out))


def compute_R_i(graph: AugmentedShareGraph, g: Iterable[int], i: int) -> EdgeSet:
    g = frozenset(g)
    if i not in g:
        raise TopologyError(f"server {i} is not a member of group {sorted(g)}")
    return tuple(e for e in compute_R(graph, g) if e[1] != i)


def compute_O(graph: AugmentedShareGraph, i: int, groups: Iterable[Iterable[int]] | None = None) -> frozenset[int]:
    """Servers that ``i`` must send heartbeats to."""
    _check_server(graph, i)
    groups = graph.groups if groups is None else [frozenset(g) for g in groups]
    out = set()
    for j in graph.vertices:
        if j == i:
            continue
        for k in graph.keys[j]:
            if (i, j) in compute_L(graph, j, k):
                out.add(j)
                break
    for g in groups:
        for z in g:
            for x, y in compute_R_i(graph, g, z):
                if x == i:
                    out.add(y)
    return frozenset(out)


@dataclass(frozen=True)
class KeyClass:
    keys: frozenset[str]
    edges: EdgeSet

    @property
    def sources(self) -> tuple[int, ...]:
        return tuple(x for x, _ in self.edges)


def key_classes(graph: AugmentedShareGraph, i: int) -> tuple[KeyClass, ...]:
    """Partition of the keys at ``i`` by identical L-set."""
    by_edges: dict[EdgeSet, set[str]] = {}
    for k in sorted(graph.keys[i]):
        by_edges.setdefault(compute_L(graph, i, k), set()).add(k)
    return tuple(
        KeyClass(frozenset(keys), edges)
        for edges, keys in sorted(by_edges.items(), key=lambda kv: (kv[0], sorted(kv[1])))
    )


@dataclass(frozen=True)
class ServerMetadata:
    """Everything one server needs at runtime, computed once and frozen."""

    server: int
    classes: tuple[KeyClass, ...]
    class_of: Mapping[str, int]
    lst_sources: Mapping[frozenset, tuple[int, ...]]
    targets: frozenset[int]
    groups: tuple[frozenset[int], ...]

    def ld_sources(self, key: str) -> tuple[int, ...]:
        return self.classes[self.class_of[key]].sources


def normalize_groups(groups: Iterable[Iterable[int]]) -> tuple[frozenset[int], ...]:
    uniq = {frozenset(g) for g in groups}
    return tuple(sorted(uniq, key=lambda g: (len(g), sorted(g))))


def server_metadata(graph: AugmentedShareGraph, groups: Iterable[Iterable[int]] | None = None) -> dict[int, ServerMetadata]:
    groups = graph.groups if groups is None else normalize_groups(groups)
    r_sets = {g: compute_R(graph, g) for g in groups}
    out = {}
    for s in graph.vertices:
        classes = key_classes(graph, s)
        class_of = {k: idx for idx, c in enumerate(classes) for k in c.keys}
        lst_sources = {
            g: tuple(sorted(x for x, y in r_sets[g] if y == s)) for g in groups if s in g
        }
        out[s] = ServerMetadata(
            server=s,
            classes=classes,
            class_of=class_of,
            lst_sources=lst_sources,
            targets=compute_O(graph, s, groups),
            groups=tuple(g for g in groups if s in g),
        )
    return out
