"""Random-graph (percolation) representations of the village epidemics.

Vertices are (site, individual) with sites 0..length-1 and individuals [N].
Admissible pairs sit at site distance <= 1; self-pairs are excluded,
within-village pairs between distinct individuals included.  SIR percolation
draws one Bernoulli(p) coin per pair; the SIS variant is time-layered, with
fresh coins per generation.  Built from the same keyed coins as the per-pair
epidemic reference mode, BFS layers reproduce the epidemic pathwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import KeyedStreams

Vertex = tuple[int, int]


@dataclass
class VillageGraph:
    N: int
    length: int
    p: float
    variant: str  # "sir": static edges; "sis": per-generation layers
    edges: set[frozenset[Vertex]] = field(default_factory=set)
    _adj: dict[Vertex, list[Vertex]] | None = None
    _streams: KeyedStreams | None = None   # lazy SIS layers draw from here
    _layers: dict[int, set[frozenset[Vertex]]] = field(default_factory=dict)

    def adjacency(self) -> dict[Vertex, list[Vertex]]:
        if self._adj is None:
            adj: dict[Vertex, list[Vertex]] = {}
            for e in self.edges:
                u, v = tuple(e)
                adj.setdefault(u, []).append(v)
                adj.setdefault(v, []).append(u)
            self._adj = adj
        return self._adj

    def degree(self, v: Vertex) -> int:
        return len(self.adjacency().get(v, []))

    def layer_edges(self, t: int) -> set[frozenset[Vertex]]:
        """SIS layer-t edge set; drawn lazily from the keyed streams."""
        if self.variant != "sis":
            raise ValueError("layers exist only for the SIS variant")
        if t not in self._layers:
            if self._streams is None:
                raise ValueError("graph was built without keyed streams")
            self._layers[t] = _draw_edges(self.N, self.length, self.p,
                                          self._streams, layer=t)
        return self._layers[t]


def _admissible_pairs(N: int, length: int):
    for x in range(length):
        for i in range(N):
            # within-village, distinct individuals (ordered once)
            for j in range(i + 1, N):
                yield (x, i), (x, j)
            # cross-village to the right neighbor
            if x + 1 < length:
                for j in range(N):
                    yield (x, i), (x + 1, j)


def _draw_edges(N: int, length: int, p: float, streams: KeyedStreams,
                layer: int | None) -> set[frozenset[Vertex]]:
    edges = set()
    for u, v in _admissible_pairs(N, length):
        if streams.pair_coin(p, u, v, layer=layer):
            edges.add(frozenset((u, v)))
    return edges


def build_graph(N: int, length: int, variant: str,
                streams: KeyedStreams | None = None,
                rng: np.random.Generator | None = None,
                p: float | None = None) -> VillageGraph:
    """Bernoulli bond percolation on K_N x {0..length-1} (nearest-neighbor sites).

    With `streams`, every pair carries its keyed coin (shared with the
    per-pair epidemic mode).  With `rng`, coins are drawn from the plain
    stream (faster, for distribution-level use).  p defaults to 1/(3N).
    """
    if variant not in ("sis", "sir"):
        raise ValueError("variant must be 'sis' or 'sir'")
    if (streams is None) == (rng is None):
        raise ValueError("pass exactly one of streams / rng")
    if p is None:
        p = 1.0 / (3 * N)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    g = VillageGraph(N, length, p, variant)
    if variant == "sir":
        if streams is not None:
            g.edges = _draw_edges(N, length, p, streams, layer=None)
        else:
            g.edges = _fast_edges(N, length, p, rng)
        g._adj = None
    else:
        if streams is None:
            raise ValueError("the SIS variant draws layers lazily and needs keyed streams")
        g._streams = streams
    return g


def _fast_edges(N: int, length: int, p: float,
                rng: np.random.Generator) -> set[frozenset[Vertex]]:
    """Edge set via per-block Binomial counts + uniform pair indices."""
    edges: set[frozenset[Vertex]] = set()
    n_within = N * (N - 1) // 2
    for x in range(length):
        k = rng.binomial(n_within, p) if n_within else 0
        if k:
            idx = rng.choice(n_within, size=k, replace=False)
            for t in idx:
                i, j = _unrank_pair(int(t), N)
                edges.add(frozenset(((x, i), (x, j))))
        if x + 1 < length:
            k = rng.binomial(N * N, p)
            if k:
                idx = rng.choice(N * N, size=k, replace=False)
                for t in idx:
                    edges.add(frozenset(((x, int(t) // N), (x + 1, int(t) % N))))
    return edges


def _unrank_pair(t: int, N: int) -> tuple[int, int]:
    """Index -> unordered pair (i < j) of distinct elements of range(N)."""
    i = 0
    row = N - 1
    while t >= row:
        t -= row
        i += 1
        row -= 1
    return i, i + 1 + t


def graph_epidemic(graph: VillageGraph, initially_infected: set[Vertex],
                   max_gens: int = 10_000) -> list[set[Vertex]]:
    """Generation sets from BFS layers.

    SIR: Y_{n+1} = neighbors of Y_n not previously infected.
    SIS: Y_{n+1} = layer-n neighbors of Y_n not currently infected.
    """
    if not initially_infected:
        raise ValueError("initial set must be nonempty")
    for (x, i) in initially_infected:
        if not (0 <= x < graph.length and 0 <= i < graph.N):
            raise ValueError(f"vertex {(x, i)} outside the graph")
    gens = [set(initially_infected)]
    ever = set(initially_infected)
    current = set(initially_infected)
    if graph.variant == "sir":
        adj = graph.adjacency()
        for _ in range(max_gens):
            if not current:
                break
            nxt = {v for u in current for v in adj.get(u, []) if v not in ever}
            gens.append(nxt)
            ever |= nxt
            current = nxt
    else:
        for t in range(max_gens):
            if not current:
                break
            nxt: set[Vertex] = set()
            for e in graph.layer_edges(t):
                u, v = tuple(e)
                if u in current and v not in current:
                    nxt.add(v)
                elif v in current and u not in current:
                    nxt.add(u)
            gens.append(nxt)
            current = nxt
    return gens


def final_infected_set(gens: list[set[Vertex]]) -> set[Vertex]:
    out: set[Vertex] = set()
    for g in gens:
        out |= g
    return out


def components_meeting(graph: VillageGraph, seeds: set[Vertex]) -> set[Vertex]:
    """Union of connected components containing at least one seed (SIR graphs)."""
    adj = graph.adjacency()
    seen: set[Vertex] = set()
    stack = [v for v in seeds]
    seen |= seeds
    while stack:
        u = stack.pop()
        for v in adj.get(u, []):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen
