"""Cross, Local, Global and Paired Similarity over a performance tensor.

Missing (model, train, test) entries shrink the averaging denominators
instead of counting as zero. A paired similarity whose denominator is zero
or missing is undefined (NaN), never 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import PerformanceTensor


def _models(tensor: PerformanceTensor, models) -> list[str]:
    return list(models) if models is not None else tensor.models


def cross_similarity_terms(tensor: PerformanceTensor, d1: str, d2: str, models=None) -> list[float]:
    return [v for m in _models(tensor, models)
            if (v := tensor.get(m, d1, d2)) is not None]


def cross_similarity(tensor: PerformanceTensor, d1: str, d2: str, models=None) -> float | None:
    """Mean score over models trained on ``d1`` and tested on ``d2``; None if no model has it."""
    terms = cross_similarity_terms(tensor, d1, d2, models)
    if not terms:
        return None
    return sum(terms) / len(terms)


def local_similarity(tensor: PerformanceTensor, d: str, models=None) -> float | None:
    return cross_similarity(tensor, d, d, models)


def global_similarity(tensor: PerformanceTensor, d_train: str, models=None,
                      datasets=None) -> float | None:
    datasets = list(datasets) if datasets is not None else tensor.datasets
    terms = []
    for d_test in datasets:
        if d_test == d_train:
            continue
        cs = cross_similarity(tensor, d_train, d_test, models)
        if cs is not None:
            terms.append(cs)
    if not terms:
        return None
    return sum(terms) / len(terms)


def paired_similarity(tensor: PerformanceTensor, d_train: str, d_test: str,
                      models=None) -> float | None:
    numerator = cross_similarity(tensor, d_train, d_test, models)
    denominator = cross_similarity(tensor, d_test, d_test, models)
    if numerator is None or denominator is None or denominator == 0:
        return None
    return numerator / denominator


def _nan(v):
    return math.nan if v is None else v


@dataclass
class SimilarityReport:
    models: list[str]
    datasets: list[str]
    cs: np.ndarray
    ls: np.ndarray
    gs: np.ndarray
    ps: np.ndarray
    cs_model_counts: np.ndarray
    per_model_ls: dict[str, np.ndarray] = field(default_factory=dict)
    per_model_gs: dict[str, np.ndarray] = field(default_factory=dict)
    per_model_ps: dict[str, np.ndarray] = field(default_factory=dict)
    missing_pairs: list[tuple[str, str, str]] = field(default_factory=list)

    def index(self, d: str) -> int:
        return self.datasets.index(d)


def _matrices(tensor, models, datasets):
    n = len(datasets)
    cs = np.full((n, n), math.nan)
    counts = np.zeros((n, n), dtype=int)
    ps = np.full((n, n), math.nan)
    for i, a in enumerate(datasets):
        for j, b in enumerate(datasets):
            counts[i, j] = len(cross_similarity_terms(tensor, a, b, models))
            cs[i, j] = _nan(cross_similarity(tensor, a, b, models))
            ps[i, j] = _nan(paired_similarity(tensor, a, b, models))
    ls = np.array([_nan(local_similarity(tensor, d, models)) for d in datasets])
    gs = np.array([_nan(global_similarity(tensor, d, models, datasets)) for d in datasets])
    return cs, counts, ls, gs, ps


def build_similarity_report(tensor: PerformanceTensor, models=None, datasets=None) -> SimilarityReport:
    models = _models(tensor, models)
    datasets = list(datasets) if datasets is not None else tensor.datasets
    if not models or not datasets:
        raise ValueError("empty performance tensor")
    cs, counts, ls, gs, ps = _matrices(tensor, models, datasets)
    report = SimilarityReport(models, datasets, cs, ls, gs, ps, counts)
    for m in models:
        _, _, m_ls, m_gs, m_ps = _matrices(tensor, [m], datasets)
        report.per_model_ls[m] = m_ls
        report.per_model_gs[m] = m_gs
        report.per_model_ps[m] = m_ps
    report.missing_pairs = sorted(
        (m, a, b) for m in models for a in datasets for b in datasets
        if tensor.get(m, a, b) is None
    )
    return report
