"""Compiled vs pure-Python simple-path kernels.

    python benchmarks/bench_pathenum.py [--sizes 8 10 12] [--density 0.4] [--repeat 5]

Times both kernels on the same random graphs, checks they agree, and prints
the speedup. Also times ``server_metadata`` end to end on random topologies,
with each kernel swapped in.
"""
from __future__ import annotations

import argparse
import random
import statistics
import sys
import time

from gstab import _pathenum_py, kernels, topology
from gstab.topology import build_graph, random_topology, server_metadata

try:
    from gstab import _pathenum as compiled
except ImportError:
    compiled = None


def random_adj(rng: random.Random, n: int, density: float) -> list[int]:
    adj = [0] * n
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < density:
                adj[a] |= 1 << b
                adj[b] |= 1 << a
    return adj


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(sizes, density, repeat, seed):
    print(f"{'n':>3} {'kernel':<18} {'pure ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n in sizes:
        rng = random.Random(f"bench:{seed}:{n}")
        graphs = [random_adj(rng, n, density) for _ in range(5)]
        for name in ("simple_path_ends", "count_simple_paths"):
            def work(mod, name=name):
                for adj in graphs:
                    for s in range(n):
                        getattr(mod, name)(adj, s)
            if compiled is not None:
                for adj in graphs:
                    for s in range(n):
                        assert getattr(compiled, name)(adj, s) == getattr(_pathenum_py, name)(adj, s)
            pure = best_of(lambda: work(_pathenum_py), repeat)
            fast = best_of(lambda: work(compiled), repeat) if compiled is not None else float("nan")
            print(f"{n:>3} {name:<18} {pure * 1e3:>10.2f} {fast * 1e3:>12.2f} {pure / fast:>7.1f}x")


def bench_metadata(sizes, repeat, seed):
    print(f"\n{'n':>3} {'server_metadata':<18} {'pure ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n in sizes:
        rng = random.Random(f"meta:{seed}:{n}")
        specs = [random_topology(rng, n, 2 * n, 3) for _ in range(3)]

        def work():
            for spec in specs:
                server_metadata(build_graph(spec))

        res = {}
        for label, mod in (("pure", _pathenum_py), ("compiled", compiled)):
            if mod is None:
                res[label] = float("nan")
                continue
            topology.simple_path_ends = mod.simple_path_ends
            try:
                res[label] = statistics.median(best_of(work, 1) for _ in range(repeat))
            finally:
                topology.simple_path_ends = kernels.simple_path_ends
        print(f"{n:>3} {'':<18} {res['pure'] * 1e3:>10.2f} {res['compiled'] * 1e3:>12.2f} "
              f"{res['pure'] / res['compiled']:>7.1f}x")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--density", type=float, default=0.4)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernel not built; only the pure-Python column is meaningful", file=sys.stderr)
    print(f"active kernel at import: {'compiled' if kernels.COMPILED else 'pure Python'}\n")
    bench_kernels(args.sizes, args.density, args.repeat, args.seed)
    bench_metadata(args.sizes, args.repeat, args.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
