"""Stochastic graph views: node dropping, edge perturbation, attribute masking
and random-walk subgraphs. Every function takes an explicit
``numpy.random.Generator`` and is otherwise pure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "AugmentSpec",
    "KINDS",
    "node_drop",
    "edge_perturb",
    "attr_mask",
    "subgraph_sample",
    "identity",
    "apply_augment",
]


def _check_ratio(ratio):
    if not 0 <= ratio < 1:
        raise ValueError(f"ratio must lie in [0, 1), got {ratio}")


def node_drop(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    _check_ratio(ratio)
    if g.num_nodes == 0:
        raise ValueError("cannot drop nodes from an empty graph")
    n_drop = min(int(math.floor(ratio * g.num_nodes)), g.num_nodes - 1)
    if n_drop == 0:
        return g
    dropped = set(rng.choice(g.num_nodes, size=n_drop, replace=False).tolist())
    return g.induced_subgraph([v for v in range(g.num_nodes) if v not in dropped])


def edge_perturb(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Delete ``floor(ratio*|E|)`` edges and add as many new ones, capped by the
    number of non-edges of the original graph."""
    _check_ratio(ratio)
    edges = sorted(g.edges)
    k = int(math.floor(ratio * len(edges)))
    if k == 0:
        return g
    removed = {edges[i] for i in rng.choice(len(edges), size=k, replace=False)}
    n = g.num_nodes
    non_edges = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in g.edges]
    n_add = min(k, len(non_edges))
    added = set()
    if n_add:
        added = {non_edges[i] for i in rng.choice(len(non_edges), size=n_add, replace=False)}
    return g.replace(edges=(g.edges - removed) | added)


def attr_mask(g: Graph, ratio: float, rng: np.random.Generator, mean: np.ndarray | None = None) -> Graph:
    """Overwrite the features of ``floor(ratio*n)`` nodes with ``mean``.

    ``mean`` should be the dataset-wide mean feature vector; when omitted the
    graph's own mean is used.
    """
    _check_ratio(ratio)
    if g.node_features is None:
        raise ValueError("attr_mask needs node features")
    k = int(math.floor(ratio * g.num_nodes))
    if k == 0:
        return g
    feats = np.array(g.node_features)
    fill = feats.mean(axis=0) if mean is None else np.asarray(mean, dtype=np.float64)
    if fill.shape != feats.shape[1:]:
        raise ValueError(f"mean has shape {fill.shape}, features have width {feats.shape[1]}")
    rows = rng.choice(g.num_nodes, size=k, replace=False)
    feats[rows] = fill
    return g.replace(node_features=feats)


def subgraph_sample(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Induced subgraph on the nodes visited by a random walk.

    The walk stops once ``ceil((1-ratio)*n)`` distinct nodes are seen. When the
    walk cannot reach a new node it jumps to a uniformly chosen visited node;
    if the visited set has no unvisited neighbour at all (the start component
    is exhausted) it jumps to a uniform unvisited node instead.
    """
    _check_ratio(ratio)
    n = g.num_nodes
    if n == 0:
        raise ValueError("cannot sample a subgraph of an empty graph")
    target = max(1, min(n, int(math.ceil((1 - ratio) * n - 1e-12))))
    current = int(rng.integers(n))
    visited = [current]
    seen = {current}
    stall = 0
    while len(seen) < target:
        nbrs = g.neighbors(current)
        if nbrs and stall < 2 * n:
            current = int(nbrs[rng.integers(len(nbrs))])
            if current not in seen:
                seen.add(current)
                visited.append(current)
                stall = 0
            else:
                stall += 1
            continue
        frontier = any(u not in seen for v in visited for u in g.neighbors(v))
        if frontier:
            current = visited[int(rng.integers(len(visited)))]
            stall = 0
        else:
            rest = [v for v in range(n) if v not in seen]
            current = rest[int(rng.integers(len(rest)))]
            seen.add(current)
            visited.append(current)
    return g.induced_subgraph(sorted(seen))


def identity(g: Graph, ratio: float = 0.0, rng: np.random.Generator | None = None) -> Graph:
    return g


KINDS = {
    "node_drop": node_drop,
    "edge_perturb": edge_perturb,
    "attr_mask": attr_mask,
    "subgraph": subgraph_sample,
    "identity": identity,
}


@dataclass(frozen=True)
class AugmentSpec:
    kind: str = "node_drop"
    ratio: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}; choose from {sorted(KINDS)}")
        if self.kind != "identity":
            _check_ratio(self.ratio)

    def __call__(self, g: Graph, rng: np.random.Generator, mean=None) -> Graph:
        return apply_augment(self, g, rng, mean)

    def to_dict(self):
        return {"kind": self.kind, "ratio": self.ratio}


def apply_augment(spec: AugmentSpec, g: Graph, rng: np.random.Generator, mean=None) -> Graph:
    if spec.kind == "attr_mask":
        return attr_mask(g, spec.ratio, rng, mean)
    if spec.kind == "subgraph" and spec.ratio == 0:
        return g
    return KINDS[spec.kind](g, spec.ratio, rng)
