"""Topology, flows, network configurations and update diffs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

EPS = 1e-9

LinkKey = tuple  # (src, dst)


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    capacity: float
    latency: float = 1.0  # ms

    @property
    def key(self) -> LinkKey:
        return (self.src, self.dst)


class Topology:
    """Directed capacitated graph. Undirected input edges become two links."""

    def __init__(self, switches: Iterable[int], links: Iterable[Link], name: str = "",
                 coords: Mapping[int, tuple] | None = None):
        self.name = name
        self.switches = tuple(sorted(set(switches)))
        self.links: dict[LinkKey, Link] = {}
        for l in links:
            if l.src == l.dst:
                raise ValidationError(f"self loop at {l.src}")
            if l.capacity < 0:
                raise ValidationError(f"negative capacity on {l.key}")
            if l.src not in self.switches or l.dst not in self.switches:
                raise ValidationError(f"link {l.key} has unknown endpoint")
            self.links[l.key] = l
        self.coords = dict(coords or {})
        self._succ: dict[int, list[int]] = {s: [] for s in self.switches}
        for (u, v) in sorted(self.links):
            self._succ[u].append(v)

    @classmethod
    def from_edges(cls, edges, capacity=10.0, latency=1.0, name=""):
        """Build from undirected (u, v) or (u, v, cap) or (u, v, cap, lat) tuples."""
        links, nodes = [], set()
        for e in edges:
            u, v = e[0], e[1]
            cap = e[2] if len(e) > 2 else capacity
            lat = e[3] if len(e) > 3 else latency
            nodes.update((u, v))
            links.append(Link(u, v, cap, lat))
            links.append(Link(v, u, cap, lat))
        return cls(nodes, links, name=name)

    def has_link(self, u, v) -> bool:
        return (u, v) in self.links

    def link(self, u, v) -> Link:
        try:
            return self.links[(u, v)]
        except KeyError:
            raise ValidationError(f"no link {u}->{v}") from None

    def capacity(self, key) -> float:
        return self.links[key].capacity

    def successors(self, u) -> list[int]:
        return self._succ.get(u, [])

    def to_networkx(self):
        import networkx as nx
        g = nx.DiGraph()
        g.add_nodes_from(self.switches)
        for (u, v), l in self.links.items():
            g.add_edge(u, v, latency=l.latency, capacity=l.capacity)
        return g

    def __repr__(self):
        return f"Topology({self.name!r}, {len(self.switches)} switches, {len(self.links)} links)"


def path_links(path) -> list[LinkKey]:
    return [(path[i], path[i + 1]) for i in range(len(path) - 1)]


@dataclass(frozen=True)
class Flow:
    id: str
    volume: float
    path: tuple

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        if self.volume <= 0:
            raise ValidationError(f"flow {self.id}: volume must be positive")
        if len(self.path) < 2:
            raise ValidationError(f"flow {self.id}: path needs two switches")
        if len(set(self.path)) != len(self.path):
            raise ValidationError(f"flow {self.id}: path is not simple")

    @property
    def src(self):
        return self.path[0]

    @property
    def dst(self):
        return self.path[-1]


@dataclass(frozen=True)
class NetworkConfig:
    flows: Mapping[str, Flow] = field(default_factory=dict)

    @classmethod
    def of(cls, flows: Iterable[Flow]) -> "NetworkConfig":
        d = {}
        for f in flows:
            if f.id in d:
                raise ValidationError(f"duplicate flow id {f.id}")
            d[f.id] = f
        return cls(dict(sorted(d.items())))

    def __len__(self):
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows.values())

    def get(self, fid):
        return self.flows.get(fid)


def link_loads(config: NetworkConfig) -> dict[LinkKey, float]:
    loads: dict[LinkKey, float] = {}
    for f in config:
        for l in path_links(f.path):
            loads[l] = loads.get(l, 0.0) + f.volume
    return loads


def residuals(topology: Topology, config: NetworkConfig) -> dict[LinkKey, float]:
    loads = link_loads(config)
    return {k: l.capacity - loads.get(k, 0.0) for k, l in topology.links.items()}


def validate_config(topology: Topology, config: NetworkConfig) -> None:
    """Raise ValidationError if a path uses a missing link or a link is overloaded."""
    for f in config:
        for l in path_links(f.path):
            if l not in topology.links:
                raise ValidationError(f"flow {f.id} uses missing link {l}")
    for key, load in link_loads(config).items():
        cap = topology.links[key].capacity
        if load > cap + EPS:
            raise ValidationError(f"link {key} overloaded: {load:g} > {cap:g}")


@dataclass(frozen=True)
class FlowUpdate:
    """One unit of change. old_path/new_path may be empty for pure add/remove.

    Volume changes are split into a removal tagged "~r" and an addition
    tagged "~a" of the same flow id.
    """
    flow_id: str
    volume: float
    old_path: tuple
    new_path: tuple
    tag: str = ""

    @property
    def uid(self) -> str:
        return self.flow_id + self.tag

    @property
    def kind(self) -> str:
        if not self.old_path:
            return "add"
        if not self.new_path:
            return "remove"
        return "move"

    @property
    def volume_change(self) -> bool:
        return bool(self.tag)


def diff_update(current: NetworkConfig, target: NetworkConfig) -> list[FlowUpdate]:
    """Per-flow changes from current to target, sorted by uid. Unchanged flows are skipped."""
    out = []
    for fid in sorted(set(current.flows) | set(target.flows)):
        a, b = current.get(fid), target.get(fid)
        if a is not None and b is not None:
            if abs(a.volume - b.volume) > EPS:
                out.append(FlowUpdate(fid, a.volume, a.path, (), "~r"))
                out.append(FlowUpdate(fid, b.volume, (), b.path, "~a"))
            elif a.path != b.path:
                out.append(FlowUpdate(fid, a.volume, a.path, b.path))
        elif a is not None:
            out.append(FlowUpdate(fid, a.volume, a.path, ()))
        else:
            out.append(FlowUpdate(fid, b.volume, (), b.path))
    return out


def apply_updates(current: NetworkConfig, updates: Iterable[FlowUpdate]) -> NetworkConfig:
    flows = dict(current.flows)
    for u in updates:
        if u.old_path and flows.get(u.flow_id) is not None and flows[u.flow_id].path == tuple(u.old_path):
            del flows[u.flow_id]
        if u.new_path:
            flows[u.flow_id] = Flow(u.flow_id, u.volume, u.new_path)
    return NetworkConfig(dict(sorted(flows.items())))
