"""Immutable graph model, validation and TUDataset text ingestion."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Graph",
    "DatasetBundle",
    "IngestionError",
    "load_tudataset",
    "save_tudataset",
    "validate",
    "degree",
    "one_hot_features",
]


class IngestionError(Exception):
    """Raised when a TUDataset directory is missing files or is inconsistent."""


def _canonical_edges(edges: Iterable[Sequence[int]]) -> frozenset:
    return frozenset(tuple(sorted((int(u), int(v)))) for u, v in edges)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected node-labelled graph.

    Edges are stored as a frozenset of sorted ``(u, v)`` tuples, so the
    edge set is symmetric and duplicate-free by construction. Invariants that
    cannot be enforced structurally (no self loops, endpoints in range,
    uniform feature width) are reported by :func:`validate`.
    """

    num_nodes: int
    edges: frozenset = field(default_factory=frozenset)
    node_labels: tuple = ()
    node_features: Optional[np.ndarray] = None
    graph_label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        labels = tuple(int(x) for x in self.node_labels)
        if not labels:
            labels = (0,) * self.num_nodes
        object.__setattr__(self, "node_labels", labels)
        if self.node_features is not None:
            feats = np.array(self.node_features, dtype=np.float64)
            if feats.ndim == 1:
                feats = feats.reshape(len(feats), -1) if len(feats) else feats.reshape(0, 0)
            feats.setflags(write=False)
            object.__setattr__(self, "node_features", feats)
        # adjacency lists are derived once; tolerate invalid edges so that
        # validate() can report them instead of failing here
        adj = [[] for _ in range(max(self.num_nodes, 0))]
        for u, v in sorted(self.edges):
            if 0 <= u < self.num_nodes and 0 <= v < self.num_nodes and u != v:
                adj[u].append(v)
                adj[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    def neighbors(self, v: int) -> tuple:
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node {v} out of range for graph with {self.num_nodes} nodes")
        return self._adj[v]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.num_nodes)):
            raise ValueError("perm must be a permutation of range(num_nodes)")
        labels = [0] * self.num_nodes
        for i, p in enumerate(perm):
            labels[p] = self.node_labels[i]
        feats = None
        if self.node_features is not None:
            feats = np.empty_like(self.node_features)
            feats[perm] = self.node_features
        return Graph(
            self.num_nodes,
            {(perm[u], perm[v]) for u, v in self.edges},
            labels,
            feats,
            self.graph_label,
        )

    def induced_subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph on ``nodes``; new index ``k`` is ``sorted(nodes)[k]``."""
        keep = sorted(set(int(v) for v in nodes))
        index = {v: k for k, v in enumerate(keep)}
        edges = {(index[u], index[v]) for u, v in self.edges if u in index and v in index}
        feats = None if self.node_features is None else self.node_features[keep]
        return Graph(len(keep), edges, [self.node_labels[v] for v in keep], feats, self.graph_label)

    def replace(self, **changes) -> "Graph":
        kwargs = dict(
            num_nodes=self.num_nodes,
            edges=self.edges,
            node_labels=self.node_labels,
            node_features=self.node_features,
            graph_label=self.graph_label,
        )
        kwargs.update(changes)
        return Graph(**kwargs)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.num_nodes, self.edges, self.node_labels, self.graph_label) != (
            other.num_nodes,
            other.edges,
            other.node_labels,
            other.graph_label,
        ):
            return False
        if (self.node_features is None) != (other.node_features is None):
            return False
        return self.node_features is None or np.array_equal(self.node_features, other.node_features)

    def __hash__(self):
        return hash((self.num_nodes, self.edges, self.node_labels, self.graph_label))

    def __repr__(self):
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, graph_label={self.graph_label})"


@dataclass(frozen=True)
class DatasetBundle:
    graphs: tuple
    label_vocab_size: int
    class_count: int
    name: str = ""
    class_mapping: dict = field(default_factory=dict)
    has_node_labels: bool = True

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)


def validate(g: Graph) -> list:
    """Return every invariant violation of ``g`` as a message; empty means valid."""
    problems = []
    if g.num_nodes < 0:
        problems.append(f"negative node count {g.num_nodes}")
    for u, v in sorted(g.edges):
        if u == v:
            problems.append(f"self-loop at node {u}")
        for x in (u, v):
            if not 0 <= x < g.num_nodes:
                problems.append(f"edge ({u}, {v}) endpoint {x} outside [0, {g.num_nodes})")
    if len(g.node_labels) != g.num_nodes:
        problems.append(f"{len(g.node_labels)} node labels for {g.num_nodes} nodes")
    negative = [i for i, x in enumerate(g.node_labels) if x < 0]
    if negative:
        problems.append(f"negative node labels at nodes {negative}")
    if g.node_features is not None:
        f = g.node_features
        if f.ndim != 2:
            problems.append(f"node features must be 2-d, got shape {f.shape}")
        elif f.shape[0] != g.num_nodes:
            problems.append(f"{f.shape[0]} feature rows for {g.num_nodes} nodes")
    return problems


def degree(g: Graph, v: int) -> int:
    return len(g.neighbors(v))


def one_hot_features(labels: Sequence[int], vocab_size: int) -> np.ndarray:
    out = np.zeros((len(labels), vocab_size))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


def _read_int_lines(path: Path, width: int | None = None) -> list:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            tokens = [t.strip() for t in text.split(",")]
            try:
                values = [int(t) for t in tokens]
            except ValueError:
                raise IngestionError(f"{path.name}:{lineno}: non-integer token in {text!r}") from None
            if width is not None and len(values) != width:
                raise IngestionError(f"{path.name}:{lineno}: expected {width} values, got {len(values)}")
            rows.append((lineno, values))
    return rows


def _find(directory: Path, suffix: str, name: str | None) -> Path | None:
    if name is not None:
        p = directory / f"{name}_{suffix}"
        return p if p.exists() else None
    hits = sorted(directory.glob(f"*_{suffix}"))
    return hits[0] if hits else None


def load_tudataset(directory: str | os.PathLike, name: str | None = None) -> DatasetBundle:
    """Load a dataset stored in the 1-indexed TUDataset text layout.

    ``name`` is the file prefix (``DS`` in ``DS_A.txt``); by default it is
    taken from the directory name, falling back to whichever ``*_A.txt`` is
    present. Graph class labels are remapped to ``0..class_count-1`` in
    sorted order of the raw values, and the mapping is kept on the bundle.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestionError(f"dataset directory {directory} does not exist")
    if name is None:
        if (directory / f"{directory.name}_A.txt").exists():
            name = directory.name
        else:
            # any required file reveals the prefix; the loop below reports what is missing
            name = directory.name
            for suffix in ("A.txt", "graph_indicator.txt", "graph_labels.txt"):
                hit = _find(directory, suffix, None)
                if hit is not None:
                    name = hit.name[: -len(suffix) - 1]
                    break

    required = {}
    for suffix in ("A.txt", "graph_indicator.txt", "graph_labels.txt"):
        p = directory / f"{name}_{suffix}"
        if not p.exists():
            raise IngestionError(f"required file {p.name} not found in {directory}")
        required[suffix] = p

    indicator = [vals[0] for _, vals in _read_int_lines(required["graph_indicator.txt"], 1)]
    graph_ids = sorted(set(indicator))
    if graph_ids != list(range(1, len(graph_ids) + 1)):
        raise IngestionError(f"{name}_graph_indicator.txt: graph ids are not 1..N")
    raw_classes = [vals[0] for _, vals in _read_int_lines(required["graph_labels.txt"], 1)]
    if len(raw_classes) != len(graph_ids):
        raise IngestionError(
            f"{name}_graph_labels.txt has {len(raw_classes)} lines for {len(graph_ids)} graphs"
        )

    node_label_path = directory / f"{name}_node_labels.txt"
    has_node_labels = node_label_path.exists()
    if has_node_labels:
        node_labels = [vals[0] for _, vals in _read_int_lines(node_label_path)]
        if len(node_labels) != len(indicator):
            raise IngestionError(
                f"{node_label_path.name} has {len(node_labels)} lines for {len(indicator)} nodes"
            )
        if min(node_labels, default=0) < 0:
            vocab = {x: k for k, x in enumerate(sorted(set(node_labels)))}
            node_labels = [vocab[x] for x in node_labels]
    else:
        node_labels = [0] * len(indicator)
    label_vocab_size = max(node_labels, default=0) + 1

    # global node id (0-based) -> (graph index, local index)
    offsets = {}
    local = []
    counts = [0] * len(graph_ids)
    for gid in indicator:
        local.append(counts[gid - 1])
        counts[gid - 1] += 1
    for k, gid in enumerate(indicator):
        offsets[k] = gid - 1

    edge_sets = [set() for _ in graph_ids]
    n_total = len(indicator)
    for lineno, (a, b) in _read_int_lines(required["A.txt"], 2):
        if not (1 <= a <= n_total and 1 <= b <= n_total):
            raise IngestionError(f"{name}_A.txt:{lineno}: node id outside 1..{n_total}")
        ga, gb = offsets[a - 1], offsets[b - 1]
        if ga != gb:
            raise IngestionError(
                f"{name}_A.txt:{lineno}: edge ({a}, {b}) joins graphs {ga + 1} and {gb + 1}"
            )
        u, v = local[a - 1], local[b - 1]
        if u == v:
            raise IngestionError(f"{name}_A.txt:{lineno}: self-loop on node {a}")
        edge_sets[ga].add((min(u, v), max(u, v)))

    class_values = sorted(set(raw_classes))
    class_mapping = {raw: k for k, raw in enumerate(class_values)}

    per_graph_labels = [[] for _ in graph_ids]
    for k, gid in enumerate(indicator):
        per_graph_labels[gid - 1].append(node_labels[k])

    graphs = []
    for gi in range(len(graph_ids)):
        labels = per_graph_labels[gi]
        graphs.append(
            Graph(
                counts[gi],
                edge_sets[gi],
                labels,
                one_hot_features(labels, label_vocab_size),
                class_mapping[raw_classes[gi]],
            )
        )
    return DatasetBundle(
        tuple(graphs),
        label_vocab_size,
        len(class_values),
        name,
        class_mapping,
        has_node_labels,
    )


def save_tudataset(bundle: DatasetBundle, directory: str | os.PathLike, name: str | None = None) -> Path:
    """Write ``bundle`` in the TUDataset layout (both edge directions listed).

    Class labels are written back through the inverse of ``class_mapping``
    so that a reload reproduces the same bundle.
    """
    name = name or bundle.name or "DS"
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    inverse = {k: raw for raw, k in bundle.class_mapping.items()} if bundle.class_mapping else {}
    offset = 0
    a_lines, ind_lines, gl_lines, nl_lines = [], [], [], []
    for gi, g in enumerate(bundle.graphs):
        for u, v in sorted(g.edges):
            a_lines.append(f"{u + offset + 1}, {v + offset + 1}")
            a_lines.append(f"{v + offset + 1}, {u + offset + 1}")
        ind_lines.extend([str(gi + 1)] * g.num_nodes)
        nl_lines.extend(str(x) for x in g.node_labels)
        gl_lines.append(str(inverse.get(g.graph_label, g.graph_label)))
        offset += g.num_nodes
    files = {"A.txt": a_lines, "graph_indicator.txt": ind_lines, "graph_labels.txt": gl_lines}
    if bundle.has_node_labels:
        files["node_labels.txt"] = nl_lines
    for suffix, lines in files.items():
        (directory / f"{name}_{suffix}").write_text("\n".join(lines) + ("\n" if lines else ""))
    return directory
