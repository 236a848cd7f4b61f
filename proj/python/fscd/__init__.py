"""Complexity-aware feature-field selection for pre-ranking models."""

import json

from ._core import (
    ConfigError,
    Dataset,
    DimensionError,
    DomainError,
    FeatureCatalog,
    FormatError,
    FscdError,
    NumericError,
    __version__,
    auc,
    complexity,
    prior_theta,
    recall_rate,
    reg_weight_alpha,
    sample_gate,
    standard_benchmark,
)
from . import _core


def default_config():
    """Training defaults as a dict."""
    return json.loads(_core.default_config())


def generate(spec, heldout=False):
    """(catalog, dataset) from a generator spec given as a dict."""
    return _core.generate(json.dumps(spec), heldout)


def run(catalog, train, heldout, config=None, with_reference=False):
    """Selection + fine-tuning; returns the report as a dict.

    `config` holds TrainConfig overrides; missing keys keep their defaults.
    """
    text = json.dumps(config) if config else ""
    return json.loads(_core.run(catalog, train, heldout, text, with_reference))


def sweep(catalog, train, heldout, k_list, config=None):
    """List of (K, held-out AUC, request cost), one fine-tune per K."""
    text = json.dumps(config) if config else ""
    return _core.sweep(catalog, train, heldout, list(k_list), text)


__all__ = [
    "ConfigError",
    "Dataset",
    "DimensionError",
    "DomainError",
    "FeatureCatalog",
    "FormatError",
    "FscdError",
    "NumericError",
    "__version__",
    "auc",
    "complexity",
    "default_config",
    "generate",
    "prior_theta",
    "recall_rate",
    "reg_weight_alpha",
    "run",
    "sample_gate",
    "standard_benchmark",
    "sweep",
]
