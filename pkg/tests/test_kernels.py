import os
import random
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from gstab import _pathenum_py, kernels

compiled = pytest.importorskip("gstab._pathenum", reason="compiled kernel not built")


def random_adj(rng, n, density):
    adj = [0] * n
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < density:
                adj[a] |= 1 << b
                adj[b] |= 1 << a
    return adj


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9), st.floats(0.1, 0.9))
def test_kernels_agree(seed, n, density):
    adj = random_adj(random.Random(seed), n, density)
    for s in range(n):
        assert compiled.simple_path_ends(adj, s) == _pathenum_py.simple_path_ends(adj, s)
        assert compiled.simple_path_ends(adj, s, False) == _pathenum_py.simple_path_ends(adj, s, False)
        assert compiled.count_simple_paths(adj, s) == _pathenum_py.count_simple_paths(adj, s)


def test_pruning_does_not_change_result():
    adj = random_adj(random.Random(3), 8, 0.5)
    for s in range(8):
        assert _pathenum_py.simple_path_ends(adj, s) == _pathenum_py.simple_path_ends(adj, s, prune=False)


def test_triangle_counts():
    adj = [0b110, 0b101, 0b011]
    # from 0: 0-1, 0-2, 0-1-2, 0-2-1
    assert _pathenum_py.count_simple_paths(adj, 0) == 4


def test_env_forces_fallback():
    env = dict(os.environ, GSTAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import gstab.kernels as k; print(k.COMPILED)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_default_prefers_compiled():
    if os.environ.get("GSTAB_PURE_PYTHON") == "1":
        assert not kernels.COMPILED
    else:
        assert kernels.COMPILED
