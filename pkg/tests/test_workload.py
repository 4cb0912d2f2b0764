import json
import math
import random

import networkx as nx
import pytest

from ezsegway.netmodel import Flow, NetworkConfig, Topology, link_loads, validate_config
from ezsegway.workload import (PathFinder, TopologyError, candidate_pairs, config_sequence,
                               default_total_demand, failure_reroute, gravity_volumes,
                               latency_ms, load_topology, make_config, random_instance,
                               reroute_pairs, rocketfuel_like, three_paths, topology_from_dict,
                               trim_to_capacity)


def ring(n=8):
    return Topology.from_edges([(i, (i + 1) % n, 10.0, 1.0 + (i % 3)) for i in range(n)])


def test_parse_weights_coordinates_and_directed():
    d = {"name": "t", "switches": [{"id": 1, "lat": 0, "lon": 0}, {"id": 2, "lat": 0, "lon": 1},
                                   {"id": 3}],
         "links": [{"src": 1, "dst": 2, "weight": 2}, {"src": 2, "dst": 3, "weight": 4, "latency_ms": 3},
                   {"src": 3, "dst": 1, "weight": 1000, "latency_ms": 1, "directed": True}]}
    t = topology_from_dict(d)
    assert t.link(1, 2).capacity == 100.0 and t.link(2, 3).capacity == 50.0
    assert t.link(3, 1).capacity == 1.0 and not t.has_link(1, 3)
    assert t.link(2, 1).latency == pytest.approx(latency_ms((0, 0), (0, 1)))
    assert t.link(2, 1).latency == pytest.approx(111.19 / 200, rel=1e-3)


@pytest.mark.parametrize("d,msg", [
    ({"switches": []}, "needs"),
    ({"switches": [{"id": "a"}], "links": []}, "not an integer"),
    ({"switches": [{"id": 1}, {"id": 1}], "links": []}, "duplicate"),
    ({"switches": [{"id": 1}], "links": [{"src": 1, "dst": 2, "capacity_gbps": 1, "latency_ms": 1}]}, "unknown"),
    ({"switches": [{"id": 1}, {"id": 2}], "links": [{"src": 1, "dst": 2, "capacity_gbps": 1, "weight": 1}]}, "both"),
    ({"switches": [{"id": 1}, {"id": 2}], "links": [{"src": 1, "dst": 2, "latency_ms": 1}]}, "capacity_gbps or weight"),
    ({"switches": [{"id": 1}, {"id": 2}], "links": [{"src": 1, "dst": 2, "capacity_gbps": 1}]}, "latency"),
])
def test_parse_errors_name_the_problem(d, msg):
    with pytest.raises(TopologyError, match=msg):
        topology_from_dict(d)


def test_load_files_and_bundled(tmp_path):
    b4 = load_topology("b4")
    assert len(b4.switches) == 12 and {l.capacity for l in b4.links.values()} == {1.0}
    assert len(load_topology("internet2").switches) == 11
    p = tmp_path / "t.json"
    p.write_text("{bad")
    with pytest.raises(TopologyError, match="JSON"):
        load_topology(str(p))
    p.write_text(json.dumps({"switches": [{"id": 1}, {"id": 2}],
                             "links": [{"src": 1, "dst": 2, "capacity_gbps": 3, "latency_ms": 2}]}))
    assert load_topology(str(p)).link(2, 1).capacity == 3
    with pytest.raises(OSError):
        load_topology(str(tmp_path / "missing.json"))
    assert len(load_topology("rocketfuel:20:3").switches) == 20
    with pytest.raises(TopologyError):
        load_topology("rocketfuel:x")


def test_rocketfuel_capacities_follow_weights():
    t = rocketfuel_like(50, 1)
    caps = [l.capacity for l in t.links.values()]
    assert min(caps) >= 1 and max(caps) == 100
    assert nx.is_strongly_connected(t.to_networkx())


def test_pairs_are_uniform_chi_square():
    t = ring(6)
    pairs = candidate_pairs(t)
    rng = random.Random(7)
    masses = {s: 1.0 for s in t.switches}
    counts = {p: 0 for p in pairs}
    draws = 10_000
    for _ in range(draws):
        (s, d, v), = gravity_volumes(t, 1, rng, masses)
        counts[(s, d)] += 1
    exp = draws / len(pairs)
    chi = sum((c - exp) ** 2 / exp for c in counts.values())
    k = len(pairs) - 1
    # 90th percentile of chi-square(k), Wilson-Hilferty
    crit = k * (1 - 2 / (9 * k) + 1.2816 * math.sqrt(2 / (9 * k))) ** 3
    assert chi < crit


def test_gravity_ratio_and_no_adjacent_pairs():
    t = ring(8)
    masses = {s: 1.0 for s in t.switches}
    masses[0] = 10.0
    vols = gravity_volumes(t, 40, random.Random(1), masses, total_demand=100)
    by = {(s, d): v for s, d, v in vols}
    with0 = [v for (s, d), v in by.items() if 0 in (s, d)]
    other = [v for (s, d), v in by.items() if 0 not in (s, d)]
    assert with0 and other
    assert max(with0) / min(other) == pytest.approx(10.0)
    assert all(not t.has_link(s, d) for s, d in by)
    assert gravity_volumes(t, 5, random.Random(3), masses) == gravity_volumes(t, 5, random.Random(3), masses)


def test_gravity_total_scale():
    t = ring(8)
    pairs = candidate_pairs(t)
    vols = gravity_volumes(t, len(pairs), random.Random(1), {s: 1.0 for s in t.switches}, 80.0)
    assert sum(v for *_, v in vols) == pytest.approx(80.0)
    assert default_total_demand(t) == pytest.approx(0.7 * sum(l.capacity for l in t.links.values()))


def test_ring_paths_within_stretch_by_enumeration():
    t = ring(8)
    g = nx.Graph()
    for (u, v), l in t.links.items():
        g.add_edge(u, v, latency=l.latency)
    finder = PathFinder(t)
    rng = random.Random(4)
    for s in t.switches:
        for d in t.switches:
            if s == d:
                continue
            all_lat = {tuple(p): nx.path_weight(g, p, "latency") for p in nx.all_simple_paths(g, s, d)}
            best = min(all_lat.values())
            for p in finder.three_paths(s, d, rng):
                assert p in all_lat and all_lat[p] <= 1.5 * best + 1e-9


def test_adjacent_endpoints_get_shortest_path_and_seeded_paths():
    t = Topology.from_edges([(1, 2), (2, 3), (1, 3, 10, 5.0)])
    assert three_paths(t, 1, 2, random.Random(0)) == [(1, 2)] * 3
    t = ring(8)
    assert three_paths(t, 0, 4, random.Random(9)) == three_paths(t, 0, 4, random.Random(9))


def test_trim_drops_largest_first():
    t = Topology.from_edges([(1, 2, 5.0), (2, 3, 5.0)])
    flows = [Flow("a", 3, (1, 2, 3)), Flow("b", 4, (1, 2)), Flow("c", 1, (2, 3))]
    kept, dropped = trim_to_capacity(t, flows)
    assert [f.id for f in dropped] == ["b"] and [f.id for f in kept] == ["a", "c"]
    loads = link_loads(NetworkConfig.of(kept))
    assert all(v <= 5 for v in loads.values())


def test_config_sequence_valid_and_seeded():
    t = load_topology("b4")
    seq = config_sequence(t, 100, 3)
    assert len(seq) == 100
    for c in seq:
        validate_config(t, c)
        for f in c:
            assert len(set(f.path)) == len(f.path)
    assert config_sequence(t, 3, 3) == seq[:3]


def test_failure_reroute():
    t = load_topology("b4")
    cur = make_config(t, 40, random.Random(2), {s: 1.0 for s in t.switches})
    tgt, failed = failure_reroute(t, cur, 0.25, seed=5)
    assert (tgt, failed) == failure_reroute(t, cur, 0.25, seed=5)
    dead = {e for e in failed} | {(b, a) for a, b in failed}
    hit = [f for f in cur if any(l in dead for l in zip(f.path, f.path[1:]))]
    assert len(hit) >= 0.25 * len(cur)
    validate_config(t, tgt)
    for f in tgt:
        old = cur.get(f.id)
        if old in hit:
            assert not any(l in dead for l in zip(f.path, f.path[1:]))
        else:
            assert f.path == old.path


def test_single_hit_changes_only_that_flow():
    t = Topology.from_edges([(1, 2), (2, 3), (1, 3), (3, 4)])

    cur = NetworkConfig.of([Flow("a", 1, (1, 2, 3)), Flow("b", 1, (3, 4))])
    for seed in range(10):
        tgt, failed = failure_reroute(t, cur, 0.5, seed)
        changed = [f.id for f in tgt if f.path != cur.get(f.id).path]
        if failed and set(failed) <= {(1, 2), (2, 3)}:
            assert changed == ["a"] and tgt.get("a").path == (1, 3)


def test_reroute_pairs_and_random_instances():
    t = load_topology("b4")
    ps = reroute_pairs(t, 2, 1, 0.5, n_pairs=20)
    assert ps == reroute_pairs(t, 2, 1, 0.5, n_pairs=20)
    for cur, tgt in ps:
        validate_config(t, cur)
        validate_config(t, tgt)
    for seed in range(50):
        topo, cur, tgt = random_instance(seed)
        assert len(topo.switches) <= 8 and len(set(cur.flows) | set(tgt.flows)) <= 6
        assert {l.capacity for l in topo.links.values()} <= {5, 10}
        validate_config(topo, cur)
        validate_config(topo, tgt)
