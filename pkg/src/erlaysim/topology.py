"""Two-phase network bootstrap: public nodes first connect to each other
with the configured outbound limit, then private nodes connect to random
public nodes. Private nodes therefore accept no inbound connections.

Nodes are 0..n-1 with publics first. Links are undirected and indexed;
each link remembers which endpoint initiated it (that end owns the link
outbound and, for reconciliation, picks the salt and drives rounds).
"""

from __future__ import annotations

from dataclasses import dataclass, field

MAX_BUILD_RETRIES = 25


class ConfigError(ValueError):
    """Impossible or inconsistent simulation parameters."""


@dataclass
class Topology:
    n_public: int
    n_private: int
    connectivity: int
    # per undirected link
    link_a: list[int] = field(default_factory=list)      # initiator endpoint
    link_b: list[int] = field(default_factory=list)
    link_latency: list[float] = field(default_factory=list)
    link_salt: list[int] = field(default_factory=list)
    # per node: list of (peer, link_id, outbound)
    adjacency: list[list[tuple[int, int, bool]]] = field(default_factory=list)
    build_retries: int = 0

    @property
    def n_nodes(self) -> int:
        return self.n_public + self.n_private

    @property
    def n_links(self) -> int:
        return len(self.link_a)

    def is_public(self, node: int) -> bool:
        return node < self.n_public

    def outbound_peers(self, node: int) -> list[int]:
        return [p for p, _, out in self.adjacency[node] if out]

    def inbound_degree(self, node: int) -> int:
        return sum(1 for _, _, out in self.adjacency[node] if not out)


def _try_build(n_public: int, n_private: int, connectivity: int,
               rng, latency_range: tuple[float, float]) -> Topology | None:
    topo = Topology(n_public, n_private, connectivity)
    n = n_public + n_private
    topo.adjacency = [[] for _ in range(n)]
    have_edge = [set() for _ in range(n)]

    def connect(u: int, v: int) -> None:
        link = len(topo.link_a)
        topo.link_a.append(u)
        topo.link_b.append(v)
        topo.link_latency.append(rng.uniform(*latency_range))
        topo.link_salt.append(rng.getrandbits(64))
        topo.adjacency[u].append((v, link, True))
        topo.adjacency[v].append((u, link, False))
        have_edge[u].add(v)
        have_edge[v].add(u)

    # phase 1: publics connect to each other
    for u in range(n_public):
        candidates = [v for v in range(n_public)
                      if v != u and v not in have_edge[u]]
        if len(candidates) < connectivity:
            return None
        for v in rng.sample(candidates, connectivity):
            connect(u, v)

    # phase 2: privates connect to random publics
    for u in range(n_public, n):
        for v in rng.sample(range(n_public), connectivity):
            connect(u, v)

    # connectivity check over the undirected graph
    seen = [False] * n
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        x = stack.pop()
        for p, _, _ in topo.adjacency[x]:
            if not seen[p]:
                seen[p] = True
                count += 1
                stack.append(p)
    if count != n:
        return None
    return topo


def build_topology(n_public: int, n_private: int, connectivity: int, rng,
                   latency_range: tuple[float, float] = (0.01, 0.30)) \
        -> Topology:
    """Bootstrap the graph; retries with fresh randomness (recording the
    retry count) if construction dead-ends or the graph comes out
    disconnected."""
    if connectivity < 1:
        raise ConfigError("connectivity must be >= 1")
    if n_public < connectivity + 1:
        raise ConfigError(
            f"need at least connectivity+1={connectivity + 1} public nodes, "
            f"got {n_public}")
    if n_private < 0:
        raise ConfigError("n_private must be >= 0")
    for retry in range(MAX_BUILD_RETRIES):
        topo = _try_build(n_public, n_private, connectivity, rng,
                          latency_range)
        if topo is not None:
            topo.build_retries = retry
            return topo
    raise ConfigError(
        f"could not build a connected topology in {MAX_BUILD_RETRIES} tries")
