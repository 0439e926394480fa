"""Shared fixtures-as-functions and brute-force oracles for the test suite."""
from __future__ import annotations

import itertools
import random

from gstab.migration import GroupConfig
from gstab.simnet import ClockConfig, Hold, NetConfig, ServerOptions, Step, TimerConfig, WorkloadConfig, run
from gstab.topology import TopologySpec, random_topology

UNGUARDED = ServerOptions(local_reads="origin", put_guard=False, lst_cap=False)

SEVEN_NAMES = ["h", "i", "j", "v1", "v2", "v3", "v4"]


def seven_node_spec() -> TopologySpec:
    """Seven servers, one client spanning {h, i, j}; v1..v4 bridge them with shared keys."""
    placement = {
        "i": {"k'", "k", "y", "a"},
        "v1": {"k'", "x", "b"},
        "v2": {"k", "x"},
        "v3": {"y", "z"},
        "h": {"z", "w"},
        "v4": {"w", "v"},
        "j": {"v", "d"},
    }
    doc = {
        "servers": SEVEN_NAMES,
        "keys": {},
        "clients": {"c": ["h", "i", "j"]},
    }
    for srv, keys in placement.items():
        for k in keys:
            doc["keys"].setdefault(k, []).append(srv)
    return TopologySpec.from_dict(doc)


def two_server_counterexample(options: ServerOptions):
    """Writer w PUTs x then a at server 0; reader c spanning {0,1} reads x at 1, a at 0, then x at 1.
    Channel 1->0 is held for the whole run."""
    spec = TopologySpec.from_dict({"servers": [0, 1], "keys": {"x": [0, 1], "a": [0]},
                                   "clients": {"w": [0], "c": [0, 1]}})
    steps = (Step(10, "w", "put", 0, "x", "X1"), Step(12, "w", "put", 0, "a", "A1"),
             Step(300, "c", "get", 1, "x"), Step(320, "c", "get", 0, "a"), Step(340, "c", "get", 1, "x"))
    wl = WorkloadConfig(put_rate=0, duration_ms=400, drain_ms=100, script=steps)
    return run(spec, GroupConfig.for_mode("full", spec), NetConfig(delay_ms=5, holds=(Hold(1, 0),)),
               ClockConfig(), TimerConfig(phase="zero"), wl, options=options).trace


def sid(name: str) -> int:
    return SEVEN_NAMES.index(name)


def random_spec(rng: random.Random, n: int, n_keys: int, n_clients: int, max_access: int = 3) -> TopologySpec:
    return random_topology(rng, n, n_keys, n_clients, max_access)


class BruteGraph:
    """Multigraph view built straight from the placement map, no shared code with the package."""

    def __init__(self, spec: TopologySpec):
        self.n = spec.n
        self.keys = {s: {k for k, r in spec.key_placement.items() if s in r} for s in range(self.n)}
        self.real = {(a, b) for a in range(self.n) for b in range(self.n)
                     if a != b and self.keys[a] & self.keys[b]}
        self.virtual = set()
        for acc in spec.client_access.values():
            for a in acc:
                for b in acc:
                    if a != b:
                        self.virtual.add((a, b))

    def edge(self, a, b):
        return (a, b) in self.real or (a, b) in self.virtual

    def simple_cycles_through(self, i):
        """All (v1..vm) such that (i, v1, .., vm, i) is a simple cycle in the multigraph."""
        for v in range(self.n):
            if (i, v) in self.real and (i, v) in self.virtual:
                yield (v,)
        for p in self.all_simple_paths():
            if p[0] == i and len(p) >= 3 and self.edge(p[-1], i):
                yield p[1:]

    def all_simple_paths(self):
        if not hasattr(self, "_paths"):
            self._paths = [
                seq
                for m in range(2, self.n + 1)
                for seq in itertools.permutations(range(self.n), m)
                if all(self.edge(seq[t], seq[t + 1]) for t in range(m - 1))
            ]
        return self._paths

    def simple_paths_between(self, g):
        return (p for p in self.all_simple_paths() if p[0] in g and p[-1] in g)

    def L(self, i, k):
        out = set()
        for seq in self.simple_cycles_through(i):
            v1, vm = seq[0], seq[-1]
            if k in (self.keys[v1] & self.keys[i]):
                out.add((v1, i))
                if (vm, i) in self.real:
                    out.add((vm, i))
        return tuple(sorted(out))

    def R(self, g):
        out = set()
        for seq in self.simple_paths_between(g):
            if (seq[1], seq[0]) in self.real:
                out.add((seq[1], seq[0]))
            if (seq[-2], seq[-1]) in self.real:
                out.add((seq[-2], seq[-1]))
        return tuple(sorted(out))

    def R_i(self, g, i):
        return tuple(e for e in self.R(g) if e[1] != i)

    def O(self, i, groups):
        out = set()
        for j in range(self.n):
            for k in self.keys[j]:
                if j != i and (i, j) in self.L(j, k):
                    out.add(j)
        for g in groups:
            for z in g:
                for x, y in self.R_i(g, z):
                    if x == i:
                        out.add(y)
        return frozenset(out)
