"""GIN encoder, projection head and the two expertise prediction heads.

Graphs are processed as a disjoint union: node features are stacked, the
block-diagonal adjacency is a constant sparse matrix, and pooling is a sparse
graph-by-node assignment matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .graph import Graph

__all__ = [
    "EncoderParams",
    "HeadParams",
    "GraphBatch",
    "init_encoder",
    "init_heads",
    "encode",
    "encode_batch",
    "project",
    "predict_iso",
    "autocor",
    "predict_subiso",
    "predict_subiso_entries",
    "block_indices",
]


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator, name: str) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _mlp(x: Tensor, w1, b1, w2, b2) -> Tensor:
    return ad.relu(x @ w1 + b1) @ w2 + b2


@dataclass
class EncoderParams:
    in_dim: int
    n_layers: int = 3
    hidden_dim: int = 32
    embed_dim: int = 32
    pooling: str = "sum"
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("encoder needs at least one layer")
        if self.pooling not in ("sum", "mean"):
            raise ValueError(f"pooling must be 'sum' or 'mean', got {self.pooling!r}")

    def widths(self) -> list:
        dims = [self.in_dim] + [self.hidden_dim] * (self.n_layers - 1) + [self.embed_dim]
        return list(zip(dims[:-1], dims[1:]))

    def header(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "n_layers": self.n_layers,
            "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim,
            "pooling": self.pooling,
        }

    def parameters(self) -> list:
        return list(self.tensors.values())


@dataclass
class HeadParams:
    embed_dim: int
    hidden_dim: int = 32
    iso_hidden: int = 32
    subiso_width: int = 16
    outer_hidden: int = 8
    normalize: bool = True
    tensors: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "iso_hidden": self.iso_hidden,
            "subiso_width": self.subiso_width,
            "outer_hidden": self.outer_hidden,
            "normalize": self.normalize,
        }

    def parameters(self) -> list:
        return list(self.tensors.values())


def init_encoder(
    in_dim: int,
    rng: np.random.Generator,
    n_layers: int = 3,
    hidden_dim: int = 32,
    embed_dim: int = 32,
    pooling: str = "sum",
) -> EncoderParams:
    p = EncoderParams(in_dim, n_layers, hidden_dim, embed_dim, pooling)
    for k, (d_in, d_out) in enumerate(p.widths()):
        p.tensors[f"gin{k}.eps"] = zeros((1, 1), f"gin{k}.eps")
        p.tensors[f"gin{k}.w1"] = glorot(d_in, d_out, rng, f"gin{k}.w1")
        p.tensors[f"gin{k}.b1"] = zeros((1, d_out), f"gin{k}.b1")
        p.tensors[f"gin{k}.w2"] = glorot(d_out, d_out, rng, f"gin{k}.w2")
        p.tensors[f"gin{k}.b2"] = zeros((1, d_out), f"gin{k}.b2")
    return p


def init_heads(
    embed_dim: int,
    hidden_dim: int,
    rng: np.random.Generator,
    iso_hidden: int = 32,
    subiso_width: int = 16,
    outer_hidden: int = 8,
    normalize: bool = True,
) -> HeadParams:
    """Projection head plus both expertise heads.

    With ``normalize`` the iso head sees unit-norm embeddings and the Gram
    matrix of the subiso head is taken over unit-norm rows. Without it, the
    sum-pooled embeddings grow during training until both sigmoid outputs
    saturate and their gradients vanish.
    """
    h = HeadParams(embed_dim, hidden_dim, iso_hidden, subiso_width, outer_hidden, normalize)
    t = h.tensors
    t["proj.w1"] = glorot(embed_dim, embed_dim, rng, "proj.w1")
    t["proj.b1"] = zeros((1, embed_dim), "proj.b1")
    t["proj.w2"] = glorot(embed_dim, embed_dim, rng, "proj.w2")
    t["proj.b2"] = zeros((1, embed_dim), "proj.b2")
    t["iso.w1"] = glorot(2 * embed_dim, iso_hidden, rng, "iso.w1")
    t["iso.b1"] = zeros((1, iso_hidden), "iso.b1")
    t["iso.w2"] = glorot(iso_hidden, 1, rng, "iso.w2")
    t["iso.b2"] = zeros((1, 1), "iso.b2")
    t["sub_in.w1"] = glorot(hidden_dim, subiso_width, rng, "sub_in.w1")
    t["sub_in.b1"] = zeros((1, subiso_width), "sub_in.b1")
    t["sub_in.w2"] = glorot(subiso_width, subiso_width, rng, "sub_in.w2")
    t["sub_in.b2"] = zeros((1, subiso_width), "sub_in.b2")
    t["sub_out.w1"] = glorot(1, outer_hidden, rng, "sub_out.w1")
    t["sub_out.b1"] = zeros((1, outer_hidden), "sub_out.b1")
    t["sub_out.w2"] = glorot(outer_hidden, 1, rng, "sub_out.w2")
    t["sub_out.b2"] = zeros((1, 1), "sub_out.b2")
    return h


@dataclass
class GraphBatch:
    features: np.ndarray
    adjacency: sp.csr_matrix
    pool: sp.csr_matrix
    sizes: np.ndarray
    offsets: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
        if np.any(sizes == 0):
            raise ValueError("cannot encode a graph without nodes")
        if any(g.node_features is None for g in graphs):
            raise ValueError("every graph needs node features")
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        n = int(sizes.sum())
        rows, cols = [], []
        for g, off in zip(graphs, offsets):
            for u, v in g.edges:
                rows += [u + off, v + off]
                cols += [v + off, u + off]
        adjacency = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        owner = np.repeat(np.arange(len(graphs)), sizes)
        pool = sp.csr_matrix((np.ones(n), (owner, np.arange(n))), shape=(len(graphs), n))
        widths = {g.node_features.shape[1] for g in graphs}
        if len(widths) != 1:
            raise DimensionError(f"graphs in one batch have feature widths {sorted(widths)}")
        features = np.vstack([g.node_features for g in graphs])
        return cls(features, adjacency, pool, sizes, offsets)


def encode_batch(batch: GraphBatch, p: EncoderParams):
    """Encode every graph of ``batch``; returns ``(Z, H)``.

    ``Z`` has one pooled row per graph, ``H`` one row per node holding the
    output of the first GIN layer.
    """
    if batch.features.shape[1] != p.in_dim:
        raise DimensionError(
            f"node features have width {batch.features.shape[1]}, encoder expects {p.in_dim}"
        )
    h = Tensor(batch.features)
    first = None
    t = p.tensors
    for k in range(p.n_layers):
        agg = h + t[f"gin{k}.eps"] * h + ad.sparse_matmul(batch.adjacency, h)
        h = ad.relu(_mlp(agg, t[f"gin{k}.w1"], t[f"gin{k}.b1"], t[f"gin{k}.w2"], t[f"gin{k}.b2"]))
        if first is None:
            first = h
    z = ad.sparse_matmul(batch.pool, h)
    if p.pooling == "mean":
        z = z * Tensor(1.0 / batch.sizes.reshape(-1, 1))
    return z, first


def encode(g: Graph, p: EncoderParams):
    """Encode one graph; ``Z`` has shape ``(1, embed_dim)``, ``H`` is ``(n, hidden)``."""
    return encode_batch(GraphBatch.from_graphs([g]), p)


def _check_width(x: Tensor, width: int, what: str):
    if x.shape[-1] != width:
        raise DimensionError(f"{what}: expected width {width}, got shape {x.shape}")


def unit_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    return x / ad.sqrt(ad.row_sum(ad.square(x)) + eps)


def project(z: Tensor, h: HeadParams) -> Tensor:
    _check_width(z, h.embed_dim, "project")
    t = h.tensors
    return _mlp(z, t["proj.w1"], t["proj.b1"], t["proj.w2"], t["proj.b2"])


def predict_iso(zi: Tensor, zj: Tensor, h: HeadParams) -> Tensor:
    """Sigmoid MLP over ``[zi ; zj]``; one output row per row of the inputs."""
    if zi.shape != zj.shape:
        raise DimensionError(f"predict_iso: shapes {zi.shape} and {zj.shape} differ")
    _check_width(zi, h.embed_dim, "predict_iso")
    t = h.tensors
    if h.normalize:
        zi, zj = unit_rows(zi), unit_rows(zj)
    return ad.sigmoid(_mlp(ad.concat_cols([zi, zj]), t["iso.w1"], t["iso.b1"], t["iso.w2"], t["iso.b2"]))


def autocor(x) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    return x @ ad.transpose(x)


def block_indices(sizes: Sequence[int]):
    """Row/column indices of every entry in the diagonal blocks of a batch."""
    rows, cols = [], []
    off = 0
    for n in sizes:
        r, c = np.meshgrid(np.arange(off, off + n), np.arange(off, off + n), indexing="ij")
        rows.append(r.reshape(-1))
        cols.append(c.reshape(-1))
        off += n
    return np.concatenate(rows), np.concatenate(cols)


def _outer_map(entries: Tensor, t: dict) -> Tensor:
    return ad.sigmoid(_mlp(entries, t["sub_out.w1"], t["sub_out.b1"], t["sub_out.w2"], t["sub_out.b2"]))


def predict_subiso_entries(hmat: Tensor, sizes: Sequence[int], h: HeadParams) -> Tensor:
    """Predicted structural matrices of a batch, flattened block by block.

    Returns an ``(sum n_g**2, 1)`` column; block ``g`` in row-major order is
    the ``n_g x n_g`` prediction for graph ``g``.
    """
    _check_width(hmat, h.hidden_dim, "predict_subiso")
    t = h.tensors
    x = _mlp(hmat, t["sub_in.w1"], t["sub_in.b1"], t["sub_in.w2"], t["sub_in.b2"])
    if h.normalize:
        x = unit_rows(x)
    rows, cols = block_indices(sizes)
    return _outer_map(ad.take(autocor(x), rows, cols), t)


def predict_subiso(hmat: Tensor, h: HeadParams) -> Tensor:
    """``n x n`` prediction for a single graph's first-layer node matrix."""
    hmat = hmat if isinstance(hmat, Tensor) else Tensor(hmat)
    n = hmat.shape[0]
    flat = predict_subiso_entries(hmat, [n], h)
    return ad.reshape(flat, (n, n))
