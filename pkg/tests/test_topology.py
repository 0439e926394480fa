import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from gstab.topology import (
    TopologyError,
    TopologySpec,
    build_graph,
    compute_L,
    compute_O,
    compute_R,
    compute_R_i,
    key_classes,
    ring_spec,
    server_metadata,
)

from helpers import BruteGraph, random_spec, seven_node_spec, sid


@pytest.fixture(scope="module")
def seven():
    return build_graph(seven_node_spec())


def edges(*pairs):
    return tuple(sorted((sid(a), sid(b)) for a, b in pairs))


class TestBuildGraph:
    def test_seven_node_key_sets(self, seven):
        assert seven.keys[sid("i")] == {"k'", "k", "y", "a"}
        assert seven.keys[sid("v1")] == {"k'", "x", "b"}
        assert seven.shared_keys(sid("i"), sid("v1")) == {"k'"}
        assert seven.shared_keys(sid("i"), sid("j")) == frozenset()
        h, i, j = sid("h"), sid("i"), sid("j")
        assert set(seven.virtual_edges) == {tuple(sorted(p)) for p in [(h, i), (h, j), (i, j)]}

    def test_single_server(self):
        g = build_graph(TopologySpec((0,), {"a": {0}, "b": {0}}, {"c": {0}}))
        assert not g.real_edges and not g.virtual_edges
        assert g.groups == (frozenset({0}),)

    def test_ring_edges(self):
        g = build_graph(ring_spec(5))
        assert set(g.real_edges) == {tuple(sorted((i, (i + 1) % 5))) for i in range(5)}
        assert not g.virtual_edges

    def test_parallel_edges(self):
        spec = TopologySpec((0, 1), {"x": {0, 1}}, {"c": {0, 1}})
        g = build_graph(spec)
        assert g.is_real(0, 1) and g.is_virtual(0, 1)

    @pytest.mark.parametrize(
        "doc, needle",
        [
            ({"servers": [0], "keys": {"a": [3]}, "clients": {}}, "key 'a'"),
            ({"servers": [0], "keys": {"a": [0]}, "clients": {"c": []}}, "client 'c'"),
            ({"servers": [0], "keys": {"a": []}, "clients": {}}, "key 'a'"),
            ({"servers": [0], "keys": {}, "clients": {}, "extra": 1}, "unknown"),
            ({"servers": [0], "keys": {}}, "clients"),
        ],
    )
    def test_validation_names_offender(self, doc, needle):
        with pytest.raises(TopologyError, match=needle):
            TopologySpec.from_dict(doc)

    def test_load_yaml_and_json(self, tmp_path):
        spec = seven_node_spec()
        p = tmp_path / "t.yaml"
        spec.dump(p)
        again = TopologySpec.load(p)
        assert again.key_placement == spec.key_placement
        assert again.client_access == spec.client_access
        q = tmp_path / "t.json"
        q.write_text(json.dumps(spec.to_dict()))
        assert TopologySpec.load(q).client_access == spec.client_access


class TestMetadataSets:
    def test_L_seven(self, seven):
        assert compute_L(seven, sid("i"), "k") == edges(("v1", "i"), ("v2", "i"))
        assert compute_L(seven, sid("i"), "k'") == edges(("v1", "i"), ("v2", "i"))

    def test_L_unshared_key(self, seven):
        assert compute_L(seven, sid("i"), "a") == ()

    def test_L_domain_error(self, seven):
        with pytest.raises(TopologyError):
            compute_L(seven, sid("i"), "z")

    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_L_ring(self, n):
        g = build_graph(ring_spec(n))
        for i in range(n):
            l, r = (i - 1) % n, (i + 1) % n
            assert compute_L(g, i, f"k{i}_{r}") == tuple(sorted([(l, i), (r, i)]))

    def test_R_seven(self, seven):
        g = {sid("h"), sid("i"), sid("j")}
        assert compute_R(seven, g) == edges(("v3", "i"), ("v3", "h"), ("v4", "h"), ("v4", "j"))
        assert compute_R_i(seven, g, sid("i")) == edges(("v3", "h"), ("v4", "h"), ("v4", "j"))
        assert compute_R_i(seven, g, sid("h")) == edges(("v3", "i"), ("v4", "j"))

    def test_R_singleton(self, seven):
        assert compute_R(seven, {sid("i")}) == ()
        assert compute_R_i(seven, {sid("i")}, sid("i")) == ()

    def test_R_ring_adjacent_pair(self):
        g = build_graph(ring_spec(4))
        # pair {0,1}; other arc enters 0 from 3 and 1 from 2
        assert compute_R(g, {0, 1}) == ((0, 1), (1, 0), (2, 1), (3, 0))

    def test_R_errors(self, seven):
        with pytest.raises(TopologyError):
            compute_R(seven, set())
        with pytest.raises(TopologyError):
            compute_R_i(seven, {sid("h")}, sid("i"))

    def test_O_ring(self):
        g = build_graph(ring_spec(6))
        for i in range(6):
            assert compute_O(g, i) == {(i - 1) % 6, (i + 1) % 6}

    def test_O_isolated(self):
        g = build_graph(TopologySpec((0,), {"a": {0}}, {"c": {0}}))
        assert compute_O(g, 0) == frozenset()

    def test_O_seven(self, seven):
        out = compute_O(seven, sid("v3"))
        assert {sid("i"), sid("h")} <= out

    def test_key_classes_ring(self):
        spec = TopologySpec(
            (0, 1, 2),
            {"a1": {0, 1}, "a2": {0, 1}, "b1": {0, 2}, "c": {1, 2}, "solo": {0}},
            {"c0": {0}},
        )
        cls = key_classes(build_graph(spec), 0)
        by_key = {k: c.edges for c in cls for k in c.keys}
        assert by_key["a1"] == by_key["a2"] == by_key["b1"] == ((1, 0), (2, 0))
        assert by_key["solo"] == ()
        assert len(cls) == 2

    def test_key_classes_seven(self, seven):
        cls = key_classes(seven, sid("i"))
        together = [c for c in cls if "k" in c.keys][0]
        assert "k'" in together.keys

    def test_metadata_bundle(self, seven):
        meta = server_metadata(seven)
        m = meta[sid("i")]
        g = frozenset({sid("h"), sid("i"), sid("j")})
        assert m.lst_sources[g] == (sid("v3"),)
        assert m.ld_sources("k") == (sid("v1"), sid("v2"))


def _check_against_oracle(spec):
    g = build_graph(spec)
    b = BruteGraph(spec)
    for i in range(spec.n):
        for k in sorted(g.keys[i]):
            assert compute_L(g, i, k) == b.L(i, k), (i, k)
    for grp in g.groups:
        assert compute_R(g, grp) == b.R(grp), grp
        for i in grp:
            assert compute_R_i(g, grp, i) == b.R_i(grp, i)
    for i in range(spec.n):
        assert compute_O(g, i) == b.O(i, g.groups)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 7))
def test_matches_bruteforce_enumerator(seed, n):
    rng = random.Random(seed)
    _check_against_oracle(random_spec(rng, n, rng.randint(1, 2 * n), rng.randint(1, 3)))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(4))
def test_matches_bruteforce_n9(seed):
    rng = random.Random(1000 + seed)
    _check_against_oracle(random_spec(rng, 9, 9, 2))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 8))
def test_observation_L_subset_of_R(seed, n):
    rng = random.Random(seed)
    spec = random_spec(rng, n, rng.randint(1, 2 * n), rng.randint(1, 3))
    g = build_graph(spec)
    for grp in g.groups:
        for j in grp:
            rj = set(compute_R_i(g, grp, j))
            for i in range(n):
                if i == j:
                    continue
                for k in g.keys[i]:
                    li = set(compute_L(g, i, k))
                    if li & rj:
                        assert li <= rj


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 8))
def test_edge_directions_real(seed, n):
    rng = random.Random(seed)
    g = build_graph(random_spec(rng, n, n, 2))
    for i in range(n):
        for k in g.keys[i]:
            for x, y in compute_L(g, i, k):
                assert y == i and g.is_real(x, y)
    for grp in g.groups:
        for x, y in compute_R(g, grp):
            assert g.is_real(x, y)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_determinism_under_reordering(seed):
    rng = random.Random(seed)
    spec = random_spec(rng, 6, 8, 3)
    keys = list(spec.key_placement.items())
    clients = list(spec.client_access.items())
    rng.shuffle(keys)
    rng.shuffle(clients)
    shuffled = TopologySpec(spec.servers, dict(keys), dict(clients))
    a, b = build_graph(spec), build_graph(shuffled)
    assert a.real_edges == b.real_edges and a.virtual_edges == b.virtual_edges
    assert server_metadata(a) == server_metadata(b)
