"""scikit-learn compatible front end.

``TopoContrastiveEmbedder`` is a transformer whose samples are
:class:`~topogcl.graph.Graph` objects, so it composes with
``sklearn.pipeline.Pipeline`` and the model-selection helpers::

    pipe = make_pipeline(TopoContrastiveEmbedder(epochs=20), LogisticProbe())
    cross_val_score(pipe, list(bundle), bundle.labels, cv=10)
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentSpec
from .graph import DatasetBundle, Graph, validate
from .pipeline import TrainConfig, embed_dataset, train

__all__ = ["check_graphs", "TopoContrastiveEmbedder"]


def check_graphs(X, require_features: bool = True) -> list:
    """Validate a collection of graphs and return it as a list.

    Raises ``ValueError`` listing the first invariant violations found.
    """
    if isinstance(X, Graph):
        raise TypeError("expected a collection of graphs, got a single Graph")
    graphs = list(X.graphs if isinstance(X, DatasetBundle) else X)
    if not graphs:
        raise ValueError("found an empty collection of graphs")
    problems = []
    widths = set()
    for i, g in enumerate(graphs):
        if not isinstance(g, Graph):
            raise TypeError(f"sample {i} is a {type(g).__name__}, not a Graph")
        problems += [f"graph {i}: {p}" for p in validate(g)]
        if g.num_nodes == 0:
            problems.append(f"graph {i}: no nodes")
        if require_features:
            if g.node_features is None:
                problems.append(f"graph {i}: missing node features")
            else:
                widths.add(g.node_features.shape[1])
    if len(widths) > 1:
        problems.append(f"inconsistent feature widths {sorted(widths)}")
    if problems:
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ValueError("invalid graphs: " + "; ".join(problems[:5]) + more)
    return graphs


class TopoContrastiveEmbedder(TransformerMixin, BaseEstimator):
    """Contrastive graph encoder trained with topology isomorphism expertise.

    Parameters mirror :class:`~topogcl.pipeline.TrainConfig`; ``augment`` is
    a pair of ``(kind, ratio)`` tuples and ``random_state`` seeds every
    random stream of the run.

    Attributes
    ----------
    encoder_ : EncoderParams
        Trained encoder weights.
    heads_ : HeadParams
        Projection and expertise heads.
    metrics_ : list of MetricsRecord
        One record per epoch.
    n_features_in_ : int
        Width of the node features seen during ``fit``.
    """

    def __init__(
        self,
        alpha=10.0,
        beta=1000.0,
        tau=0.5,
        lam=1.0,
        lr=1e-3,
        epochs=50,
        batch_size=32,
        n_layers=3,
        hidden_dim=32,
        embed_dim=32,
        pooling="sum",
        wl_policy="final",
        augment=(("node_drop", 0.2), ("node_drop", 0.2)),
        random_state=0,
    ):
        self.alpha = alpha
        self.beta = beta
        self.tau = tau
        self.lam = lam
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_layers = n_layers
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.pooling = pooling
        self.wl_policy = wl_policy
        self.augment = augment
        self.random_state = random_state

    def to_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha,
            beta=self.beta,
            tau=self.tau,
            lam=self.lam,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            n_layers=self.n_layers,
            hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim,
            pooling=self.pooling,
            wl_policy=self.wl_policy,
            augment=tuple(AugmentSpec(kind, ratio) for kind, ratio in self.augment),
            seed=0 if self.random_state is None else int(self.random_state),
            record_wallclock=False,
        )

    def fit(self, X, y=None):
        """Train the encoder on the graphs in ``X``; ``y`` is ignored."""
        data = X if isinstance(X, DatasetBundle) else None
        graphs = check_graphs(X)
        result = train(self.to_config(), data if data is not None else graphs)
        self.encoder_ = result.encoder
        self.heads_ = result.heads
        self.metrics_ = result.metrics
        self.n_features_in_ = graphs[0].node_features.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        graphs = check_graphs(X)
        width = graphs[0].node_features.shape[1]
        if width != self.n_features_in_:
            raise ValueError(f"X has node features of width {width}, fit saw {self.n_features_in_}")
        return embed_dataset(self.encoder_, graphs)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.two_d_array = False
        tags.requires_fit = True
        tags.target_tags.required = False
        return tags

