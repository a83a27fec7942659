"""Stage cost functions ``c(m, S)``: linear costs and computation-reuse graphs."""

from __future__ import annotations

import heapq
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import SOURCE, ModelManifest, UnknownModelError


class CostGraphError(ValueError):
    pass


class LinearCost:
    """Each model costs the same no matter what has already been computed."""

    kind = "linear"

    def __init__(self, costs: Mapping[str, float]):
        for m, c in costs.items():
            if not c >= 0:
                raise ValueError(f"model {m!r} has negative cost {c!r}")
        self._costs = dict(costs)

    @property
    def model_ids(self):
        return tuple(self._costs)

    def _check(self, ids):
        for m in ids:
            if m not in self._costs:
                raise UnknownModelError(f"model {m!r} has no cost")

    def base_cost(self, target: str):
        self._check((target,))
        return self._costs[target]

    def cost(self, target: str, already: Iterable[str] = ()):
        already = tuple(already)
        self._check((target,) + already)
        return self._costs[target]


class CostGraph:
    """Weighted digraph over ``SOURCE`` and one vertex per model.

    An edge ``(u, v, w)`` says ``v``'s output costs ``w`` once ``u``'s output is
    known; ``(SOURCE, m, w)`` is the from-scratch cost of ``m``.
    """

    def __init__(self, model_ids: Iterable[str], edges: Iterable[tuple[str, str, float]]):
        self.model_ids = tuple(model_ids)
        self.vertices = frozenset(self.model_ids) | {SOURCE}
        self.edges = tuple((u, v, w) for u, v, w in edges)
        self.adj: dict[str, list[tuple[str, float]]] = defaultdict(list)
        for u, v, w in self.edges:
            if u not in self.vertices or v not in self.vertices:
                raise CostGraphError(f"edge {u}->{v} references an unknown vertex")
            if not w >= 0:
                raise CostGraphError(f"edge {u}->{v} has negative weight {w!r}")
            self.adj[u].append((v, w))
        dist = self.distances([SOURCE])
        unreachable = [m for m in self.model_ids if m not in dist]
        if unreachable:
            raise CostGraphError(f"models unreachable from the source: {unreachable}")

    def distances(self, sources: Iterable[str]) -> dict[str, float]:
        """Multi-source Dijkstra: distance from the nearest source to every reachable vertex."""
        dist: dict[str, float] = {}
        heap = [(0, s) for s in sorted(set(sources))]
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if u in dist:
                continue
            dist[u] = d
            for v, w in self.adj.get(u, ()):
                if v not in dist:
                    heapq.heappush(heap, (d + w, v))
        return dist

    def has_edge(self, u: str, v: str) -> bool:
        return any(x == v for x, _ in self.adj.get(u, ()))

    def edge_weight(self, u: str, v: str):
        ws = [w for x, w in self.adj.get(u, ()) if x == v]
        if not ws:
            raise CostGraphError(f"no edge {u}->{v}")
        return min(ws)


class GraphCost:
    """``c(m, S)``: shortest path to ``v(m)`` from ``SOURCE`` or any vertex of ``S``.

    Paths may pass through vertices of models outside ``S``. Results are
    memoised per ``(target, frozenset(S))``.
    """

    kind = "graph"

    def __init__(self, graph: CostGraph):
        self.graph = graph
        self._memo: dict[tuple[str, frozenset], float] = {}

    @classmethod
    def from_edges(cls, model_ids, edges):
        return cls(CostGraph(model_ids, edges))

    @property
    def model_ids(self):
        return self.graph.model_ids

    def _check(self, ids):
        for m in ids:
            if m not in self.graph.vertices or m == SOURCE:
                raise UnknownModelError(f"model {m!r} is not in the cost graph")

    def base_cost(self, target: str):
        return self.cost(target, ())

    def cost(self, target: str, already: Iterable[str] = ()):
        already = frozenset(already)
        self._check((target,) + tuple(already))
        key = (target, already)
        if key not in self._memo:
            dist = self.graph.distances(already | {SOURCE})
            self._memo[key] = dist[target]
        return self._memo[key]

    def with_vertices(self, new_ids: Sequence[str], new_edges) -> "GraphCost":
        return GraphCost(CostGraph(self.graph.model_ids + tuple(new_ids),
                                   self.graph.edges + tuple(new_edges)))


def cost(cf, target: str, already: Iterable[str] = ()):
    return cf.cost(target, already)


def cost_function_from_manifest(manifest: ModelManifest, kind: str = "linear"):
    if kind == "linear":
        return LinearCost(manifest.costs)
    if kind == "graph":
        return GraphCost(CostGraph(manifest.model_ids, manifest.graph_edges()))
    raise ValueError(f"unknown cost kind {kind!r}")


def sequence_stage_costs(models: Sequence, cf) -> list:
    """``c(m_i, m_{1:i-1})`` for each stage model of a sequence."""
    computed: set[str] = set()
    out = []
    for m in models:
        out.append(m.marginal_cost(cf, frozenset(computed)))
        computed.update(m.computes)
    return out


class CompositeModel:
    """Runs a chain prefix ``m_1..m_k`` and answers with the highest-index member that answers."""

    provenance = "composite"

    def __init__(self, model_id: str, members: Sequence):
        if not members:
            raise ValueError("composite needs at least one member")
        self.model_id = model_id
        self.members = tuple(members)

    @property
    def chain(self) -> tuple[str, ...]:
        return tuple(m.model_id for m in self.members)

    @property
    def key(self) -> str:
        return f"{self.model_id}|" + "|".join(m.key for m in self.members)

    @property
    def computes(self) -> tuple[str, ...]:
        return (self.model_id,) + self.chain

    def predict(self, log):
        n = len(log)
        pred = np.zeros(n, dtype=np.int64)
        answered = np.zeros(n, dtype=bool)
        for m in self.members:
            p, a = m.predict(log)
            pred = np.where(a, p, pred)
            answered |= a
        return pred, answered

    def marginal_cost(self, cf, computed):
        return cf.cost(self.model_id, computed)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "composite_chain": list(self.chain),
                "members": [m.to_dict() for m in self.members]}

    def __repr__(self):
        return f"CompositeModel({self.model_id!r}, chain={list(self.chain)})"


def composite_id(model_id: str) -> str:
    return f"{model_id}*"


def make_prefix_composites(chain: Sequence[str], cf: GraphCost, log, abstaining: Mapping):
    """Add a composite ``m*_k`` for every prefix of a linear chain of models.

    Each composite costs ``c(m_k, ∅)`` from scratch and is joined to ``m_k`` by
    zero-weight edges in both directions, since computing either one yields the
    other's intermediate results. Returns ``(composites, augmented cost function)``.
    """
    if not isinstance(cf, GraphCost):
        raise CostGraphError("prefix composites need a graph cost function")
    chain = list(chain)
    if not chain:
        return [], cf
    g = cf.graph
    if not g.has_edge(SOURCE, chain[0]):
        raise CostGraphError(f"chain head {chain[0]!r} has no edge from the source")
    for a, b in zip(chain, chain[1:]):
        if not g.has_edge(a, b):
            raise CostGraphError(f"chain is not a path in the cost graph: no edge {a}->{b}")
    missing = [m for m in chain if m not in abstaining]
    if missing:
        raise UnknownModelError(f"no abstaining wrapper for {missing}")
    log.predictions(chain[0])  # fail early if the chain is not in the log

    composites, new_ids, new_edges = [], [], []
    for k in range(1, len(chain) + 1):
        cid = composite_id(chain[k - 1])
        base = cf.cost(chain[k - 1], ())
        composites.append(CompositeModel(cid, [abstaining[m] for m in chain[:k]]))
        new_ids.append(cid)
        new_edges += [(SOURCE, cid, base), (chain[k - 1], cid, 0), (cid, chain[k - 1], 0)]
    return composites, cf.with_vertices(new_ids, new_edges)
