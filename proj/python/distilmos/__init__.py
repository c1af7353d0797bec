# Copyright 2026 The distilmos Authors
# SPDX-License-Identifier: Apache-2.0
"""MOS prediction toolkit: layer-distilled training, metrics and analysis."""

from ._distilmos import (
    DmosError,
    __version__,
    analyze_cca,
    cca_similarity,
    evaluate,
    fit_kmeans,
    fit_tokens,
    generate_synthetic_corpus,
    kmeans_assign,
    ktau,
    lcc,
    manifest_info,
    mse,
    predict,
    srcc,
    train,
)

__all__ = [
    "DmosError",
    "__version__",
    "analyze_cca",
    "cca_similarity",
    "evaluate",
    "fit_kmeans",
    "fit_tokens",
    "generate_synthetic_corpus",
    "kmeans_assign",
    "ktau",
    "lcc",
    "manifest_info",
    "mse",
    "predict",
    "srcc",
    "train",
]
