"""Run configuration files.

A run configuration is a JSON object. ``schema_version`` is required and
must equal :data:`SCHEMA_VERSION`; every other key is either a
:class:`~topogcl.pipeline.TrainConfig` field or one of the run options in
:data:`RUN_DEFAULTS`. Unknown keys are rejected. Example::

    {
      "schema_version": 1,
      "dataset": "data/MUTAG",
      "alpha": 10, "beta": 1000, "epochs": 50, "seed": 0,
      "augment": [{"kind": "node_drop", "ratio": 0.2},
                  {"kind": "node_drop", "ratio": 0.2}],
      "folds": 10, "repeats": 5
    }
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

from .pipeline import TrainConfig

__all__ = ["ConfigError", "SCHEMA_VERSION", "RUN_DEFAULTS", "load_config", "parse_config", "write_resolved"]

SCHEMA_VERSION = 1

RUN_DEFAULTS = {
    "out_dir": None,
    "folds": 10,
    "repeats": 5,
    "probe_reg": 1e-3,
    "alpha_grid": [1.0, 10.0, 100.0, 1000.0, 10000.0],
    "beta_grid": [1.0, 10.0, 100.0, 1000.0, 10000.0],
    "ablation_seeds": [0, 1, 2, 3, 4],
}

_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


class ConfigError(ValueError):
    pass


def parse_config(doc: dict):
    """Split a configuration mapping into ``(TrainConfig, run options)``."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    if "schema_version" not in doc:
        raise ConfigError("missing required key 'schema_version'")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc['schema_version']!r}; expected {SCHEMA_VERSION}")
    unknown = sorted(set(doc) - set(_TRAIN_FIELDS) - set(RUN_DEFAULTS) - {"schema_version"})
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    train_kw = {k: v for k, v in doc.items() if k in _TRAIN_FIELDS}
    if "augment" in train_kw:
        aug = train_kw["augment"]
        if not isinstance(aug, list) or not all(isinstance(a, dict) for a in aug):
            raise ConfigError("augment must be a list of {kind, ratio} objects")
        bad = [sorted(set(a) - {"kind", "ratio"}) for a in aug if set(a) - {"kind", "ratio"}]
        if bad:
            raise ConfigError(f"unknown augment keys: {bad[0]}")
        train_kw["augment"] = tuple(aug)
    try:
        config = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    run = dict(RUN_DEFAULTS)
    run.update({k: v for k, v in doc.items() if k in RUN_DEFAULTS})
    return config, run


def load_config(path: str | os.PathLike):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


def resolved_document(config: TrainConfig, run: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(config.to_dict())
    doc.update(run)
    return doc


def write_resolved(config: TrainConfig, run: dict, out_dir: str | os.PathLike) -> Path:
    """Write the fully resolved configuration so the run can be replayed from it."""
    out = Path(out_dir) / "resolved_config.json"
    out.write_text(json.dumps(resolved_document(config, run), indent=2, sort_keys=True) + "\n")
    return out
