"""Central finite-difference check of every parameter gradient of the combined loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .graph import Graph
from .objective import total_loss
from .pipeline import TERMS, TrainConfig, batch_loss, encode_views, init_model, loss_terms, prepare_batch, stream
from .pipeline import wl_uses_degree

__all__ = ["GradcheckReport", "gradient_check", "micro_batch"]


@dataclass
class GradcheckReport:
    max_rel_error: float
    per_parameter: dict = field(default_factory=dict)
    tolerance: float = 1e-4
    n_entries: int = 0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < self.tolerance)

    def lines(self) -> list:
        out = [f"{name}\t{err:.3e}" for name, err in self.per_parameter.items()]
        verdict = "PASS" if self.passed else "FAIL"
        out.append(
            f"{verdict}: max relative error {self.max_rel_error:.3e} over {self.n_entries} entries "
            f"(tolerance {self.tolerance:g})"
        )
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Normwise relative error ``|a - n| / max(|a|, |n|, floor)``."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def micro_batch(graphs: Sequence[Graph], config: TrainConfig, size: int = 2):
    """Fixed augmented views of the first ``size`` graphs."""
    rng = stream(config.seed, "gradcheck")
    batch = list(graphs)[:size]
    aug_i, aug_j = config.augment
    return [aug_i(g, rng) for g in batch], [aug_j(g, rng) for g in batch]


def gradient_check(
    config: TrainConfig,
    graphs: Sequence[Graph],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    size: int = 2,
) -> GradcheckReport:
    """Compare backprop gradients with central differences on a micro-batch.

    Each parameter entry is perturbed by ``+-step``; the error of a parameter
    tensor is the normwise relative error of its gradient, and the report
    keeps the worst one.
    """
    graphs = list(graphs)
    use_degree = wl_uses_degree(graphs)
    view_i, view_j = micro_batch(graphs, config, size)
    enc, heads = init_model(config, graphs[0].node_features.shape[1])
    named = {**enc.tensors, **heads.tensors}

    prepared = prepare_batch(view_i, view_j, config, use_degree)
    loss, _ = batch_loss(view_i, view_j, enc, heads, config, prepared=prepared)
    for p in named.values():
        p.grad = None
    loss.backward()

    # a head parameter only reaches one loss term, so the encoder outputs and
    # the other terms are evaluated once and reused; the sum is still the full loss
    reach = {"proj.": ("l_c",), "iso.": ("l_iso",), "sub_": ("l_subiso",)}
    with ad.no_grad():
        encoded = encode_views(prepared, enc)
        base = loss_terms(prepared, encoded, heads, config)

    def value(name: str) -> float:
        with ad.no_grad():
            only = next((v for k, v in reach.items() if name.startswith(k)), None)
            if only is None:
                terms = loss_terms(prepared, encode_views(prepared, enc), heads, config)
            else:
                terms = {**base, **loss_terms(prepared, encoded, heads, config, only)}
            out = total_loss(*(terms[k] for k in TERMS), config.alpha, config.beta)
        return out.item()

    report = GradcheckReport(0.0, tolerance=tolerance)
    for name, p in named.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = value(name)
            flat[k] = orig - step
            down = value(name)
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * step)
        err = relative_error(analytic, numeric)
        report.per_parameter[name] = err
        report.n_entries += flat.size
        report.max_rel_error = max(report.max_rel_error, err)
    return report
