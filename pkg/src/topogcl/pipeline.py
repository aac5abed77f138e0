"""Training loop with expertise distillation, embedding extraction and
linear-probe evaluation."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import autodiff as ad
from .augment import AugmentSpec
from .expert import FINAL, UNION, iso_similarity, structural_matrix
from .gnn import EncoderParams, GraphBatch, HeadParams, encode_batch, init_encoder, init_heads
from .gnn import predict_iso, predict_subiso_entries, project
from .graph import DatasetBundle, Graph
from .objective import LossBreakdown, mse_iso, mse_subiso_flat, nt_xent, total_loss
from .probe import LogisticProbe, ProbeError

__all__ = [
    "TrainConfig",
    "MetricsRecord",
    "ProbeResult",
    "TrainResult",
    "TrainingError",
    "stream",
    "train",
    "batch_loss",
    "encode_views",
    "loss_terms",
    "prepare_batch",
    "expertise_targets",
    "embed_dataset",
    "linear_probe_cv",
    "sweep",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one named consumer of the run seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 10.0
    beta: float = 1000.0
    tau: float = 0.5
    lam: float = 1.0
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    n_layers: int = 3
    hidden_dim: int = 32
    embed_dim: int = 32
    pooling: str = "sum"
    iso_hidden: int = 32
    subiso_width: int = 16
    outer_hidden: int = 8
    head_norm: bool = True
    augment: tuple = (AugmentSpec("node_drop", 0.2), AugmentSpec("node_drop", 0.2))
    wl_policy: str = FINAL
    subiso_views: str = "first"
    seed: int = 0
    dataset: str | None = None
    record_wallclock: bool = True

    def __post_init__(self):
        aug = tuple(a if isinstance(a, AugmentSpec) else AugmentSpec(**a) for a in self.augment)
        object.__setattr__(self, "augment", aug)
        problems = []
        if self.alpha < 0 or self.beta < 0:
            problems.append("alpha and beta must be non-negative")
        if not self.tau > 0:
            problems.append("tau must be positive")
        if not self.lam > 0:
            problems.append("lam must be positive")
        if not self.lr > 0:
            problems.append("lr must be positive")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.n_layers < 1:
            problems.append("n_layers must be >= 1")
        if len(aug) != 2:
            problems.append("augment must hold exactly two specs")
        if self.wl_policy not in (FINAL, UNION):
            problems.append(f"wl_policy must be {FINAL!r} or {UNION!r}")
        if self.subiso_views not in ("first", "both"):
            problems.append("subiso_views must be 'first' or 'both'")
        if problems:
            raise ValueError("invalid TrainConfig: " + "; ".join(problems))

    @property
    def wl_iterations(self) -> int:
        return self.n_layers

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["augment"] = [a.to_dict() for a in self.augment]
        return d


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    l_c: float
    l_iso: float
    l_subiso: float
    total: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass(frozen=True)
class ProbeResult:
    fold_accuracies: tuple
    mean: float
    std: float

    @classmethod
    def from_folds(cls, folds: Sequence[float]) -> "ProbeResult":
        folds = tuple(float(a) for a in folds)
        return cls(folds, float(np.mean(folds)), float(np.std(folds)))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "fold_accuracies": list(self.fold_accuracies)}


@dataclass
class TrainResult:
    encoder: EncoderParams
    heads: HeadParams
    metrics: list = field(default_factory=list)
    steps: int = 0


def init_model(config: TrainConfig, in_dim: int):
    rng = stream(config.seed, "init")
    enc = init_encoder(in_dim, rng, config.n_layers, config.hidden_dim, config.embed_dim, config.pooling)
    first_width = enc.widths()[0][1]
    heads = init_heads(
        config.embed_dim,
        first_width,
        rng,
        config.iso_hidden,
        config.subiso_width,
        config.outer_hidden,
        config.head_norm,
    )
    return enc, heads


def expertise_targets(view_i: Sequence[Graph], view_j: Sequence[Graph], config: TrainConfig, use_degree=False):
    """Graph-tier similarities of each view pair and the flattened structural
    matrices of the first views, all as plain arrays."""
    y_iso = np.array(
        [
            iso_similarity(a, b, config.wl_iterations, config.wl_policy, use_degree).value
            for a, b in zip(view_i, view_j)
        ]
    ).reshape(-1, 1)
    y_sub = np.concatenate([structural_matrix(g, config.lam).dense().reshape(-1) for g in view_i])
    return y_iso, y_sub.reshape(-1, 1)


@dataclass
class PreparedBatch:
    """Batched views plus their expertise targets, computed off the tape."""

    first: GraphBatch
    second: GraphBatch
    y_iso: np.ndarray
    y_sub: np.ndarray
    y_sub_second: np.ndarray | None = None


def prepare_batch(view_i, view_j, config: TrainConfig, use_degree: bool = False) -> PreparedBatch:
    y_iso, y_sub = expertise_targets(view_i, view_j, config, use_degree)
    y_sub_j = None
    if config.subiso_views == "both":
        y_sub_j = np.concatenate(
            [structural_matrix(g, config.lam).dense().reshape(-1) for g in view_j]
        ).reshape(-1, 1)
    return PreparedBatch(
        GraphBatch.from_graphs(view_i), GraphBatch.from_graphs(view_j), y_iso, y_sub, y_sub_j
    )


TERMS = ("l_c", "l_iso", "l_subiso")


def encode_views(pb: PreparedBatch, enc: EncoderParams):
    """``(Z_i, H_i, Z_j, H_j)`` for both views of a prepared batch."""
    zi, hi = encode_batch(pb.first, enc)
    zj, hj = encode_batch(pb.second, enc)
    return zi, hi, zj, hj


def loss_terms(pb: PreparedBatch, encoded, heads: HeadParams, config: TrainConfig, only=TERMS) -> dict:
    """The requested unweighted loss terms as tensors, keyed by name."""
    zi, hi, zj, hj = encoded
    out = {}
    if "l_c" in only:
        out["l_c"] = nt_xent(project(zi, heads), project(zj, heads), config.tau)
    if "l_iso" in only:
        out["l_iso"] = mse_iso(pb.y_iso, predict_iso(zi, zj, heads))
    if "l_subiso" in only:
        sizes = pb.first.sizes
        l_sub = mse_subiso_flat(pb.y_sub, predict_subiso_entries(hi, sizes, heads), sizes)
        if config.subiso_views == "both":
            sizes_j = pb.second.sizes
            l_sub_j = mse_subiso_flat(pb.y_sub_second, predict_subiso_entries(hj, sizes_j, heads), sizes_j)
            l_sub = ad.scalar_mul(l_sub + l_sub_j, 0.5)
        out["l_subiso"] = l_sub
    return out


def batch_loss(
    view_i: Sequence[Graph],
    view_j: Sequence[Graph],
    enc: EncoderParams,
    heads: HeadParams,
    config: TrainConfig,
    use_degree: bool = False,
    prepared: PreparedBatch | None = None,
):
    """Combined loss on one batch of view pairs; returns ``(loss tensor, LossBreakdown)``."""
    pb = prepared if prepared is not None else prepare_batch(view_i, view_j, config, use_degree)
    t = loss_terms(pb, encode_views(pb, enc), heads, config)
    loss = total_loss(t["l_c"], t["l_iso"], t["l_subiso"], config.alpha, config.beta)
    parts = total_loss(t["l_c"].item(), t["l_iso"].item(), t["l_subiso"].item(), config.alpha, config.beta)
    return loss, parts


def _mean_features(data: Sequence[Graph]) -> np.ndarray | None:
    feats = [g.node_features for g in data if g.node_features is not None and g.num_nodes]
    return np.vstack(feats).mean(axis=0) if feats else None


def wl_uses_degree(data) -> bool:
    """Unlabelled datasets start WL from node degrees instead of constant labels."""
    if isinstance(data, DatasetBundle):
        return not data.has_node_labels
    return all(x == 0 for g in data for x in g.node_labels)


def train(config: TrainConfig, data, metrics_path=None, callback=None) -> TrainResult:
    """Contrastive training with graph-tier and subgraph-tier expertise losses.

    ``data`` is a :class:`DatasetBundle` or a sequence of graphs carrying node
    features. When ``metrics_path`` is given one JSON line per epoch is
    written there as soon as the epoch ends.
    """
    graphs = list(data)
    if not graphs:
        raise ValueError("cannot train on an empty dataset")
    use_degree = wl_uses_degree(data)
    in_dim = graphs[0].node_features.shape[1]
    enc, heads = init_model(config, in_dim)
    params = enc.parameters() + heads.parameters()
    opt = ad.Adam(params, lr=config.lr)
    order_rng = stream(config.seed, "shuffle")
    aug_rng = stream(config.seed, "augment")
    aug_i, aug_j = config.augment
    mean = _mean_features(graphs)
    result = TrainResult(enc, heads)
    sink = open(metrics_path, "w") if metrics_path is not None else None
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            order = order_rng.permutation(len(graphs))
            sums = np.zeros(3)
            n_batches = 0
            for b, lo in enumerate(range(0, len(order), config.batch_size)):
                idx = order[lo : lo + config.batch_size]
                if len(idx) < 2:
                    log.info("epoch %d: skipping trailing batch of size %d", epoch, len(idx))
                    continue
                batch = [graphs[k] for k in idx]
                view_i = [aug_i(g, aug_rng, mean) for g in batch]
                view_j = [aug_j(g, aug_rng, mean) for g in batch]
                loss, parts = batch_loss(view_i, view_j, enc, heads, config, use_degree)
                if not math.isfinite(parts.total):
                    raise TrainingError(f"non-finite loss {parts.total} at epoch {epoch}, batch {b}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                result.steps += 1
                sums += (parts.l_c, parts.l_iso, parts.l_subiso)
                n_batches += 1
            if n_batches == 0:
                raise TrainingError("no batch with at least two graphs; dataset too small")
            l_c, l_iso, l_sub = sums / n_batches
            bd = total_loss(l_c, l_iso, l_sub, config.alpha, config.beta)
            seconds = time.perf_counter() - start if config.record_wallclock else 0.0
            rec = MetricsRecord(epoch, bd.l_c, bd.l_iso, bd.l_subiso, bd.total, seconds)
            result.metrics.append(rec)
            if sink is not None:
                sink.write(rec.to_json() + "\n")
                sink.flush()
            if callback is not None:
                callback(rec)
            log.debug("epoch %d %s", epoch, rec)
    finally:
        if sink is not None:
            sink.close()
    return result


def embed_dataset(enc: EncoderParams, data, batch_size: int = 256) -> np.ndarray:
    """Graph embeddings of every graph (no augmentation), in dataset order."""
    graphs = list(data)
    rows = []
    with ad.no_grad():
        for lo in range(0, len(graphs), batch_size):
            z, _ = encode_batch(GraphBatch.from_graphs(graphs[lo : lo + batch_size]), enc)
            rows.append(z.data)
    return np.vstack(rows) if rows else np.zeros((0, enc.embed_dim))


def linear_probe_cv(
    embeddings,
    labels,
    folds: int = 10,
    repeats: int = 5,
    seed: int = 0,
    reg: float = 1e-3,
) -> ProbeResult:
    """Stratified ``folds``-fold CV repeated ``repeats`` times with fresh splits."""
    X = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(np.unique(y)) < 2:
        raise ProbeError("the probe needs at least two classes")
    accs = []
    for r in range(repeats):
        split_seed = int(stream(seed, f"probe-split-{r}").integers(2**31 - 1))
        skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=split_seed)
        for train_idx, test_idx in skf.split(X, y):
            clf = LogisticProbe(reg=reg).fit(X[train_idx], y[train_idx])
            accs.append(float(np.mean(clf.predict(X[test_idx]) == y[test_idx])))
    return ProbeResult.from_folds(accs)


def sweep(
    base: TrainConfig,
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    data: DatasetBundle,
    folds: int = 10,
    repeats: int = 5,
) -> list:
    """Train and probe every ``(alpha, beta)`` cell; a failing cell is recorded
    with its error and the remaining cells still run."""
    if not alpha_grid or not beta_grid:
        raise ValueError("sweep grids must be non-empty")
    cells = []
    for alpha in alpha_grid:
        for beta in beta_grid:
            cell = {"alpha": float(alpha), "beta": float(beta)}
            try:
                cfg = base.replace(alpha=float(alpha), beta=float(beta))
                res = train(cfg, data)
                emb = embed_dataset(res.encoder, data)
                probe = linear_probe_cv(emb, data.labels, folds, repeats, cfg.seed)
                cell.update(status="ok", probe=probe)
            except Exception as exc:  # noqa: BLE001 - one failing cell must not stop the grid
                log.warning("sweep cell alpha=%s beta=%s failed: %s", alpha, beta, exc)
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            cells.append(cell)
    return cells


def save_model(path, enc: EncoderParams, heads: HeadParams, config: TrainConfig | None = None) -> None:
    header = {"encoder": enc.header(), "heads": heads.header()}
    if config is not None:
        header["config"] = config.to_dict()
    ad.save_checkpoint(path, {**enc.tensors, **heads.tensors}, header)


def load_model(path):
    """Rebuild ``(EncoderParams, HeadParams, header)`` from a checkpoint file."""
    header, arrays = ad.load_checkpoint(path)
    try:
        enc = EncoderParams(**header["encoder"])
        heads = HeadParams(**header["heads"])
    except (KeyError, TypeError) as exc:
        raise ad.DimensionError(f"{path}: checkpoint header lacks model hyperparameters ({exc})") from None
    rng = np.random.default_rng(0)
    ref_enc = init_encoder(enc.in_dim, rng, enc.n_layers, enc.hidden_dim, enc.embed_dim, enc.pooling)
    ref_heads = init_heads(
        heads.embed_dim, heads.hidden_dim, rng, heads.iso_hidden, heads.subiso_width, heads.outer_hidden
    )
    expected = {name: t.shape for name, t in {**ref_enc.tensors, **ref_heads.tensors}.items()}
    ad.check_shapes(arrays, expected)
    enc.tensors = {name: ad.Tensor(arrays[name], requires_grad=True, name=name) for name in ref_enc.tensors}
    heads.tensors = {name: ad.Tensor(arrays[name], requires_grad=True, name=name) for name in ref_heads.tensors}
    return enc, heads, header
