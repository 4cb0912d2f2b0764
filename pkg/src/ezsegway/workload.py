"""Topology files, gravity-model traffic, path choice and config sequences."""
from __future__ import annotations

import json
import math
import random
from importlib import resources

import networkx as nx

from .netmodel import EPS, Flow, Link, NetworkConfig, Topology, ValidationError, link_loads

EARTH_RADIUS_KM = 6371.0
PROPAGATION_KM_PER_MS = 200.0  # 200,000 km/s
STRETCH = 1.5
BUNDLED = ("b4", "internet2")
PAIRS_PER_SWITCH = 8


class TopologyError(ValueError):
    pass


def great_circle_km(a, b) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def latency_ms(a, b) -> float:
    return great_circle_km(a, b) / PROPAGATION_KM_PER_MS


def topology_from_dict(d: dict) -> Topology:
    if "switches" not in d or "links" not in d:
        raise TopologyError("topology needs 'switches' and 'links'")
    ids, coords = [], {}
    for s in d["switches"]:
        if "id" not in s:
            raise TopologyError("switch without id")
        sid = s["id"]
        if not isinstance(sid, int):
            raise TopologyError(f"switch id {sid!r} is not an integer")
        ids.append(sid)
        if "lat" in s and "lon" in s:
            coords[sid] = (float(s["lat"]), float(s["lon"]))
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate switch id")
    known = set(ids)
    raw = []
    default_cap = d.get("default_capacity_gbps")
    weights = [l["weight"] for l in d["links"] if "weight" in l]
    wmin = min(weights) if weights else None
    for l in d["links"]:
        u, v = l.get("src"), l.get("dst")
        if u not in known or v not in known:
            raise TopologyError(f"link {u}-{v} references an unknown switch")
        has_c, has_w = "capacity_gbps" in l, "weight" in l
        if has_c and has_w:
            raise TopologyError(f"link {u}-{v} gives both capacity and weight")
        if has_c:
            cap = float(l["capacity_gbps"])
        elif has_w:
            w = float(l["weight"])
            if w <= 0:
                raise TopologyError(f"link {u}-{v} has non-positive weight")
            cap = min(100.0, max(1.0, 100.0 * wmin / w))
        elif default_cap is not None:
            cap = float(default_cap)
        else:
            raise TopologyError(f"link {u}-{v} needs capacity_gbps or weight")
        if "latency_ms" in l:
            lat = float(l["latency_ms"])
        elif u in coords and v in coords:
            lat = latency_ms(coords[u], coords[v])
        else:
            raise TopologyError(f"link {u}-{v} has no latency and no coordinates")
        raw.append(Link(u, v, cap, lat))
        if not (l.get("directed") or d.get("directed")):
            raw.append(Link(v, u, cap, lat))
    try:
        return Topology(ids, raw, name=d.get("name", ""), coords=coords)
    except ValidationError as e:
        raise TopologyError(str(e)) from None


def load_topology(path_or_name: str) -> Topology:
    """Read a topology JSON file, one of the bundled names, or
    "rocketfuel:N[:SEED]" for a generated ISP-like topology."""
    if path_or_name.startswith("rocketfuel:"):
        parts = path_or_name.split(":")[1:]
        try:
            n, seed = int(parts[0]), int(parts[1]) if len(parts) > 1 else 0
        except (ValueError, IndexError):
            raise TopologyError(f"bad generated topology name {path_or_name!r}") from None
        if n < 4 or len(parts) > 2:
            raise TopologyError(f"bad generated topology name {path_or_name!r}")
        return rocketfuel_like(n, seed)
    if path_or_name in BUNDLED:
        text = resources.files("ezsegway").joinpath(f"data/{path_or_name}.json").read_text()
    else:
        with open(path_or_name) as fh:
            text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise TopologyError(f"bad JSON: {e}") from None
    return topology_from_dict(d)


def _undirected(topology):
    g = nx.Graph()
    g.add_nodes_from(topology.switches)
    for (u, v), l in topology.links.items():
        g.add_edge(u, v, latency=l.latency)
    return g


def candidate_pairs(topology) -> list[tuple]:
    """Ordered pairs of distinct, non-adjacent switches."""
    sw = topology.switches
    return [(s, d) for s in sw for d in sw if s != d and not topology.has_link(s, d)]


def gravity_masses(topology, rng: random.Random) -> dict:
    return {s: rng.expovariate(1.0) for s in topology.switches}


def default_total_demand(topology) -> float:
    return 0.7 * sum(l.capacity for l in topology.links.values())


def gravity_volumes(topology, n_pairs, rng: random.Random, masses=None, total_demand=None):
    """Pick n_pairs distinct non-adjacent pairs uniformly and give each a
    volume proportional to the product of endpoint masses, with the
    proportionality constant fixed by total_demand over all candidate pairs."""
    masses = masses if masses is not None else gravity_masses(topology, rng)
    pairs = candidate_pairs(topology)
    if not pairs:
        return []
    n = min(n_pairs, len(pairs))
    chosen = rng.sample(pairs, n)
    total = total_demand if total_demand is not None else default_total_demand(topology)
    # normalise over the expected share of n random pairs so volumes do not
    # depend on which other pairs were drawn
    norm = sum(masses[s] * masses[d] for s, d in pairs) * n / len(pairs)
    return [(s, d, total * masses[s] * masses[d] / norm) for s, d in chosen]


class PathFinder:
    def __init__(self, topology):
        self.topology = topology
        self.g = _undirected(topology)
        self._sp = dict(nx.all_pairs_dijkstra(self.g, weight="latency"))

    def dist(self, a, b):
        return self._sp[a][0][b]

    def shortest(self, a, b):
        return tuple(self._sp[a][1][b])

    def latency(self, path):
        return sum(self.topology.link(a, b).latency for a, b in zip(path, path[1:]))

    def via(self, s, d, t):
        p = self.shortest(s, t) + self.shortest(t, d)[1:]
        return p if len(set(p)) == len(p) else None

    def three_paths(self, s, d, rng: random.Random, k=3, tries=30):
        """k paths from s to d through random transit switches, each within
        the latency stretch bound; the shortest path fills any gap."""
        best = self.dist(s, d)
        others = [x for x in self.topology.switches if x not in (s, d)]
        out = []
        for _ in range(k):
            got = None
            for _ in range(tries):
                if not others:
                    break
                t = rng.choice(others)
                p = self.via(s, d, t)
                if p is not None and self.latency(p) <= STRETCH * best + 1e-9:
                    got = p
                    break
            out.append(got or self.shortest(s, d))
        return out


def three_paths(topology, s, d, rng: random.Random, k=3):
    return PathFinder(topology).three_paths(s, d, rng, k)


def trim_to_capacity(topology, flows: list[Flow]) -> tuple[list[Flow], list[Flow]]:
    """Drop flows largest-first until no link is overloaded. Returns (kept, dropped)."""
    kept = sorted(flows, key=lambda f: (-f.volume, f.id))
    dropped = []
    loads = link_loads(NetworkConfig({f.id: f for f in kept}))
    while True:
        over = {l for l, v in loads.items() if v > topology.links[l].capacity + EPS}
        if not over:
            break
        for i, f in enumerate(kept):
            if any((a, b) in over for a, b in zip(f.path, f.path[1:])):
                dropped.append(kept.pop(i))
                for a, b in zip(f.path, f.path[1:]):
                    loads[(a, b)] -= f.volume
                break
    kept.sort(key=lambda f: f.id)
    return kept, dropped


def make_config(topology, n_pairs, rng, masses, total_demand=None, finder=None) -> NetworkConfig:
    finder = finder or PathFinder(topology)
    flows = []
    for s, d, vol in gravity_volumes(topology, n_pairs, rng, masses, total_demand):
        for k, p in enumerate(finder.three_paths(s, d, rng)):
            flows.append(Flow(f"{s}-{d}-{k}", vol / 3, p))
    kept, _ = trim_to_capacity(topology, flows)
    return NetworkConfig.of(kept)


def config_sequence(topology, count, seed, n_pairs=None, total_demand=None) -> list[NetworkConfig]:
    """count configurations drawn from one fixed set of gravity masses."""
    rng = random.Random(seed)
    masses = gravity_masses(topology, rng)
    finder = PathFinder(topology)
    n_pairs = n_pairs or PAIRS_PER_SWITCH * len(topology.switches)
    return [make_config(topology, n_pairs, rng, masses, total_demand, finder) for _ in range(count)]


def failure_reroute(topology, config: NetworkConfig, p: float, seed) -> tuple[NetworkConfig, list]:
    """Fail random links until at least a fraction p of flows cross a failed
    one, then move those flows to shortest paths avoiding failed links.
    Returns (target config, failed undirected links)."""
    rng = random.Random(seed)
    edges = sorted({tuple(sorted(k)) for k in topology.links})
    rng.shuffle(edges)
    failed: set = set()
    flows = list(config)
    need = math.ceil(p * len(flows) - 1e-12)

    def hit(f):
        return any(tuple(sorted(e)) in failed for e in zip(f.path, f.path[1:]))

    for e in edges:
        if sum(1 for f in flows if hit(f)) >= need:
            break
        failed.add(e)
    g = _undirected(topology)
    g.remove_edges_from(failed)
    out = []
    for f in flows:
        if not hit(f):
            out.append(f)
            continue
        try:
            path = tuple(nx.dijkstra_path(g, f.src, f.dst, weight="latency"))
        except nx.NetworkXNoPath:
            continue
        out.append(Flow(f.id, f.volume, path))
    kept, _ = trim_to_capacity(topology, out)
    return NetworkConfig.of(kept), sorted(failed)


def reroute_pairs(topology, count, seed, p, n_pairs=None, total_demand=None) -> list[tuple]:
    """count independent (current, target) pairs: a fresh gravity config and
    its failure-driven reroute. Masses stay fixed across pairs."""
    rng = random.Random(seed)
    masses = gravity_masses(topology, rng)
    finder = PathFinder(topology)
    n_pairs = n_pairs or PAIRS_PER_SWITCH * len(topology.switches)
    out = []
    for _ in range(count):
        cur = make_config(topology, n_pairs, rng, masses, total_demand, finder)
        tgt, _ = failure_reroute(topology, cur, p, rng.randrange(2 ** 32))
        out.append((cur, tgt))
    return out


def rocketfuel_like(n, seed, degree=3) -> Topology:
    """Random ISP-like topology: points in a continental box joined to their
    nearest neighbours plus a spanning tree; weights and capacities follow
    distance."""
    rng = random.Random(seed)
    pts = {i: (rng.uniform(25, 49), rng.uniform(-124, -67)) for i in range(n)}
    g = nx.Graph()
    g.add_nodes_from(pts)
    dist = {(a, b): great_circle_km(pts[a], pts[b]) for a in pts for b in pts if a < b}
    full = nx.Graph()
    for (a, b), w in dist.items():
        full.add_edge(a, b, weight=w)
    g.add_edges_from(nx.minimum_spanning_tree(full).edges())
    for a in pts:
        near = sorted((b for b in pts if b != a), key=lambda b: dist[tuple(sorted((a, b)))])
        for b in near[:degree - 1]:
            g.add_edge(a, b)
    d = {"name": f"rocketfuel-like-{n}-{seed}",
         "switches": [{"id": i, "lat": pts[i][0], "lon": pts[i][1]} for i in range(n)],
         "links": []}
    for a, b in sorted(g.edges()):
        km = dist[tuple(sorted((a, b)))]
        d["links"].append({"src": a, "dst": b, "weight": max(1, round(km / 50))})
    return topology_from_dict(d)


def random_instance(seed, max_switches=8, max_flows=6, capacities=(5, 10), max_volume=5):
    """Small random update instance: (topology, current, target)."""
    rng = random.Random(seed)
    n = rng.randint(4, max_switches)
    nodes = list(range(1, n + 1))
    edges = set()
    for i in range(1, n):
        edges.add((nodes[rng.randrange(i)], nodes[i]))
    extra = rng.randint(0, n)
    for _ in range(extra):
        a, b = rng.sample(nodes, 2)
        edges.add((min(a, b), max(a, b)))
    edges = sorted({(min(a, b), max(a, b)) for a, b in edges})
    links = []
    for a, b in edges:
        c = rng.choice(capacities)
        lat = rng.choice((1.0, 2.0, 3.0))
        links += [Link(a, b, c, lat), Link(b, a, c, lat)]
    topo = Topology(nodes, links, name=f"rand{seed}")
    g = _undirected(topo)
    cur, tgt = [], []
    nflows = rng.randint(1, max_flows)

    def fits(flows, f):
        loads = link_loads(NetworkConfig({x.id: x for x in flows + [f]}))
        return all(v <= topo.links[l].capacity + EPS for l, v in loads.items())

    for i in range(nflows):
        for _ in range(20):
            s, d = rng.sample(nodes, 2)
            paths = list(nx.all_simple_paths(g, s, d, cutoff=n))
            if not paths:
                continue
            paths.sort()
            vol = rng.randint(1, max_volume)
            kind = rng.random()
            old = tuple(rng.choice(paths))
            new = tuple(rng.choice(paths))
            fo, fn = Flow(f"f{i}", vol, old), Flow(f"f{i}", vol, new)
            if kind < 0.1:
                if fits(tgt, fn):
                    tgt.append(fn)
                    break
            elif kind < 0.2:
                if fits(cur, fo):
                    cur.append(fo)
                    break
            elif fits(cur, fo) and fits(tgt, fn):
                cur.append(fo)
                tgt.append(fn)
                break
    return topo, NetworkConfig.of(cur), NetworkConfig.of(tgt)
