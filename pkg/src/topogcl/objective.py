"""Contrastive loss, expertise regression losses and their weighted sum."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "LossBreakdown",
    "cosine_matrix",
    "nt_xent",
    "mse_iso",
    "mse_subiso",
    "mse_subiso_flat",
    "subiso_weights",
    "total_loss",
]


@dataclass(frozen=True)
class LossBreakdown:
    l_c: float
    l_iso: float
    l_subiso: float
    total: float
    alpha: float
    beta: float

    def to_dict(self):
        return asdict(self)


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unit_rows(z: Tensor, view: str) -> Tensor:
    norms = np.linalg.norm(z.data, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise FloatingPointError(f"zero-norm embedding in {view} view at row {int(bad[0])}")
    return z / ad.sqrt(ad.row_sum(ad.square(z)))


def cosine_matrix(zi, zj) -> Tensor:
    """``S[n, m] = cos(zi[n], zj[m])``."""
    zi, zj = _tensor(zi), _tensor(zj)
    return _unit_rows(zi, "first") @ ad.transpose(_unit_rows(zj, "second"))


def nt_xent(zi, zj, tau: float = 0.5) -> Tensor:
    """NT-Xent with cross-view negatives only.

    ``-(1/N) sum_n log( exp(s_nn/tau) / sum_{m != n} exp(s_nm/tau) )`` where
    ``s`` is the cosine similarity between row ``n`` of the first view and
    row ``m`` of the second. The positive pair is not part of the denominator,
    so the loss can be negative.
    """
    zi, zj = _tensor(zi), _tensor(zj)
    if zi.shape != zj.shape or zi.data.ndim != 2:
        raise ad.DimensionError(f"nt_xent: views have shapes {zi.shape} and {zj.shape}")
    n = zi.shape[0]
    if n < 2:
        raise ValueError("nt_xent needs at least two graphs per batch")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    sim = cosine_matrix(zi, zj)
    # shifting by 1/tau (the largest possible similarity) keeps exp bounded;
    # the shift cancels between numerator and denominator
    logits = ad.scalar_mul(sim - 1.0, 1.0 / tau)
    eye = np.eye(n)
    positive = ad.row_sum(logits * Tensor(eye))
    negatives = ad.row_sum(ad.exp(logits) * Tensor(1.0 - eye))
    return ad.scalar_mul(ad.sum_all(positive - ad.log(negatives)), -1.0 / n)


def mse_iso(targets, preds) -> Tensor:
    targets, preds = _tensor(targets), _tensor(preds)
    if targets.size != preds.size:
        raise ValueError(f"mse_iso: {targets.size} targets but {preds.size} predictions")
    if targets.size == 0:
        raise ValueError("mse_iso needs at least one pair")
    if targets.shape != preds.shape:
        targets = Tensor(targets.data.reshape(preds.shape))
    return ad.mean_all(ad.square(preds - targets))


def subiso_weights(sizes: Sequence[int]) -> np.ndarray:
    """Per-entry weights turning a flat squared error into a mean of per-graph means."""
    sizes = np.asarray(sizes, dtype=np.int64)
    return np.repeat(1.0 / (sizes.astype(float) ** 2 * len(sizes)), sizes**2).reshape(-1, 1)


def mse_subiso(targets, preds) -> Tensor:
    """Mean over graphs of the mean squared entrywise error of each matrix."""
    if len(targets) != len(preds):
        raise ValueError(f"mse_subiso: {len(targets)} targets but {len(preds)} predictions")
    if not targets:
        raise ValueError("mse_subiso needs at least one graph")
    terms = []
    for k, (t, p) in enumerate(zip(targets, preds)):
        t, p = _tensor(t), _tensor(p)
        if t.shape != p.shape:
            raise ValueError(f"mse_subiso: graph {k} target shape {t.shape} vs prediction {p.shape}")
        terms.append(ad.mean_all(ad.square(p - t)))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return ad.scalar_mul(total, 1.0 / len(terms))


def mse_subiso_flat(targets: np.ndarray, preds: Tensor, sizes: Sequence[int]) -> Tensor:
    """Same reduction as :func:`mse_subiso` on block-flattened columns."""
    w = subiso_weights(sizes)
    preds = _tensor(preds)
    if preds.shape != w.shape or np.shape(targets) != w.shape:
        raise ValueError(
            f"mse_subiso: expected columns of shape {w.shape}, got {np.shape(targets)} and {preds.shape}"
        )
    return ad.sum_all(ad.square(preds - Tensor(targets)) * Tensor(w))


def total_loss(l_c, l_iso, l_subiso, alpha: float, beta: float):
    """``l_c + alpha*l_iso + beta*l_subiso``.

    Works on tensors (returns a tensor) and on plain numbers (returns a
    :class:`LossBreakdown`).
    """
    if alpha < 0 or beta < 0:
        raise ValueError(f"loss weights must be non-negative, got alpha={alpha}, beta={beta}")
    if isinstance(l_c, Tensor):
        return l_c + ad.scalar_mul(l_iso, alpha) + ad.scalar_mul(l_subiso, beta)
    l_c, l_iso, l_subiso = float(l_c), float(l_iso), float(l_subiso)
    return LossBreakdown(l_c, l_iso, l_subiso, l_c + alpha * l_iso + beta * l_subiso, alpha, beta)
