"""Topology expert systems.

Graph tier: 1-WL colour refinement over a pair of graphs with a shared
compression table, compared through the Jaccard coefficient of the label
sets. Subgraph tier: structural coefficients of the overlap subgraph of each
edge, row-normalised over the neighbours of every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import Graph

__all__ = [
    "WlLabelTable",
    "WlResult",
    "IsoSimilarity",
    "StructuralCoefficients",
    "initial_labels",
    "wl_refine_once",
    "wl_refine",
    "iso_similarity",
    "neighborhood_subgraph",
    "overlap_subgraph",
    "structural_coefficient",
    "structural_matrix",
    "FINAL",
    "UNION",
]

FINAL = "final"
UNION = "union"


@dataclass
class WlLabelTable:
    """Injective map from refinement signatures to consecutive integers."""

    mapping: dict = field(default_factory=dict)
    next_label: int = 0

    def lookup(self, signature) -> int:
        label = self.mapping.get(signature)
        if label is None:
            label = self.mapping[signature] = self.next_label
            self.next_label += 1
        return label

    def __len__(self):
        return len(self.mapping)


@dataclass(frozen=True)
class WlResult:
    history: tuple  # history[t][v] is the label of node v after t refinements
    label_set: frozenset
    iterations: int


@dataclass(frozen=True)
class IsoSimilarity:
    value: float

    def __float__(self):
        return self.value


def initial_labels(g: Graph, use_degree: bool = False) -> list:
    if use_degree:
        return [len(g.neighbors(v)) for v in range(g.num_nodes)]
    return list(g.node_labels)


def wl_refine_once(graphs: Sequence[Graph], labels: Sequence[Sequence[int]], table: WlLabelTable) -> list:
    """One refinement round over every graph in ``graphs`` with one table.

    Nodes are visited graph by graph in index order, which fixes the order in
    which new signatures receive labels.
    """
    if isinstance(graphs, Graph):
        raise TypeError("pass a sequence of graphs")
    if len(graphs) != len(labels):
        raise ValueError(f"{len(graphs)} graphs but {len(labels)} label sequences")
    out = []
    for g, current in zip(graphs, labels):
        if len(current) != g.num_nodes:
            raise ValueError(f"label sequence of length {len(current)} for {g.num_nodes} nodes")
        new = []
        for v in range(g.num_nodes):
            signature = (current[v], tuple(sorted(current[u] for u in g.neighbors(v))))
            new.append(table.lookup(signature))
        out.append(new)
    return out


def _label_set(history: Sequence[Sequence[int]], policy: str) -> frozenset:
    if policy == FINAL:
        return frozenset(history[-1])
    if policy == UNION:
        # tag with the iteration: label ids are only comparable within one round
        return frozenset((t, x) for t, labels in enumerate(history) for x in labels)
    raise ValueError(f"unknown retained-iterations policy {policy!r}")


def wl_refine(
    graphs: Sequence[Graph],
    iterations: int,
    policy: str = FINAL,
    use_degree: bool = False,
    table: WlLabelTable | None = None,
) -> list:
    """Run ``iterations`` shared refinement rounds; one :class:`WlResult` per graph."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    table = WlLabelTable() if table is None else table
    current = [initial_labels(g, use_degree) for g in graphs]
    histories = [[tuple(c)] for c in current]
    for _ in range(iterations):
        current = wl_refine_once(graphs, current, table)
        for h, c in zip(histories, current):
            h.append(tuple(c))
    return [WlResult(tuple(h), _label_set(h, policy), iterations) for h in histories]


def iso_similarity(
    gi: Graph,
    gj: Graph,
    iterations: int,
    policy: str = FINAL,
    use_degree: bool = False,
) -> IsoSimilarity:
    """Jaccard coefficient of the WL label sets of ``gi`` and ``gj``."""
    if gi.num_nodes == 0 or gj.num_nodes == 0:
        raise ValueError("iso_similarity is undefined for graphs without nodes")
    ri, rj = wl_refine([gi, gj], iterations, policy, use_degree)
    a, b = ri.label_set, rj.label_set
    union = a | b
    if not union:
        return IsoSimilarity(1.0)
    return IsoSimilarity(len(a & b) / len(union))


def neighborhood_subgraph(g: Graph, v: int):
    """Closed neighbourhood of ``v`` as ``(node set, edge set)``."""
    nodes = frozenset((v, *g.neighbors(v)))
    edges = frozenset(e for e in g.edges if e[0] in nodes and e[1] in nodes)
    return nodes, edges


def overlap_subgraph(g: Graph, v: int, u: int):
    """Node and edge counts of the intersection of two adjacent closed neighbourhoods."""
    if (min(v, u), max(v, u)) not in g.edges:
        raise ValueError(f"nodes {v} and {u} are not adjacent")
    nv, ev = neighborhood_subgraph(g, v)
    nu, eu = neighborhood_subgraph(g, u)
    return len(nv & nu), len(ev & eu)


def structural_coefficient(node_count, edge_count, lam: float) -> float:
    """``E / (V (V - 1)) * V**lam`` for an overlap subgraph with V nodes and E edges."""
    if node_count < 2:
        raise ValueError(f"overlap subgraph needs at least 2 nodes, got {node_count}")
    if edge_count < 1:
        raise ValueError(f"overlap subgraph needs at least 1 edge, got {edge_count}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return edge_count / (node_count * (node_count - 1)) * node_count**lam


@dataclass(frozen=True)
class StructuralCoefficients:
    """Raw and row-normalised coefficients keyed by directed pair ``(v, u)``."""

    num_nodes: int
    raw: dict
    normalized: dict
    lam: float

    def dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        for (v, u), w in self.normalized.items():
            out[v, u] = w
        return out

    def triples(self) -> list:
        return [(v, u, w) for (v, u), w in sorted(self.normalized.items())]


def structural_matrix(g: Graph, lam: float = 1.0) -> StructuralCoefficients:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    closed = [frozenset((v, *g.neighbors(v))) for v in range(g.num_nodes)]
    raw = {}
    for v, u in sorted(g.edges):
        shared = closed[v] & closed[u]
        # edges of the overlap: both endpoints in the shared node set
        n_edges = sum(1 for x in shared for y in g.neighbors(x) if y in shared) // 2
        w = structural_coefficient(len(shared), n_edges, lam)
        raw[(v, u)] = raw[(u, v)] = w
    normalized = {}
    for v in range(g.num_nodes):
        nbrs = g.neighbors(v)
        if not nbrs:
            continue
        total = sum(raw[(v, u)] for u in nbrs)
        for u in nbrs:
            normalized[(v, u)] = raw[(v, u)] / total
    return StructuralCoefficients(g.num_nodes, raw, normalized, float(lam))
