"""Non-parametric KNN out-of-distribution scoring on unit features.

A query is scored by the bounded T-style metric to its k-th nearest bank
neighbor (nearest in dot product).  The score is reported as
2/epsilon - metric so that larger means farther from the in-distribution
bank; an exact bank hit at k=1 scores 0.  Because the metric is strictly
monotone in the dot product, kappa and epsilon rescale scores but never
change the induced ranking, AUROC, or FPR95.

The bank is exact brute force: desk-scale sizes make approximate indexes
pointless, and exactness keeps every oracle trivial.  Ties among
neighbors resolve by bank insertion order, which cannot change the k-th
neighbor's dot product value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, ShapeError
from .metric import MetricConfig

__all__ = [
    "KnnIndex",
    "DetectionMetrics",
    "build_index",
    "ood_score",
    "ood_scores",
    "tpr95_threshold",
    "evaluate",
]


@dataclass
class KnnIndex:
    """Exact KNN bank over unit feature rows.

    ``threshold`` is the optional calibrated 95%-TPR score threshold a
    drift detector compares against (set via ``tpr95_threshold``).
    """

    bank: np.ndarray
    k: int
    metric: MetricConfig = field(default_factory=MetricConfig)
    threshold: float | None = None


@dataclass(frozen=True)
class DetectionMetrics:
    auroc: float
    fpr_at_95_tpr: float
    threshold: float


def build_index(features, k: int = 10, metric: MetricConfig = MetricConfig()) -> KnnIndex:
    """Exact index over a non-empty unit-row bank; requires 1 <= k <= |bank|."""
    bank = np.asarray(features, dtype=np.float64)
    if bank.ndim == 1:
        bank = bank[None, :]
    if bank.ndim != 2 or bank.shape[0] == 0:
        raise ShapeError(f"bank must be a non-empty (n, d) matrix, got {bank.shape}")
    if not np.all(np.isfinite(bank)):
        raise DomainError("bank has non-finite entries")
    norms = np.linalg.norm(bank, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise DomainError("bank rows must be unit-norm")
    if not 1 <= int(k) <= bank.shape[0]:
        raise DomainError(f"need 1 <= k <= {bank.shape[0]}, got {k}")
    return KnnIndex(bank=bank.copy(), k=int(k), metric=metric)


def _kth_dot(index: KnnIndex, queries: np.ndarray) -> np.ndarray:
    dots = queries @ index.bank.T
    # k-th largest dot product per row
    return np.partition(dots, -index.k, axis=1)[:, -index.k]


def ood_scores(index: KnnIndex, queries) -> np.ndarray:
    """Vectorized scores for an (n, d) matrix of unit queries."""
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != index.bank.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]}, bank dim {index.bank.shape[1]}")
    t_k = _kth_dot(index, q)
    cfg = index.metric
    sim = 2.0 / (cfg.kappa * (1.0 - t_k) + cfg.epsilon)
    return 2.0 / cfg.epsilon - sim


def ood_score(index: KnnIndex, x) -> float:
    """Score one query: 2/epsilon minus the metric at the k-th neighbor."""
    return float(ood_scores(index, x)[0])


def tpr95_threshold(index: KnnIndex, id_features, tpr: float = 0.95) -> float:
    """Calibrate and store the score threshold covering ``tpr`` of ID data.

    The threshold is the smallest observed ID score with at least a
    ``tpr`` fraction of ID scores at or below it.
    """
    if not 0.0 < tpr <= 1.0:
        raise DomainError(f"tpr must lie in (0, 1], got {tpr}")
    scores = np.sort(ood_scores(index, id_features))
    idx = min(len(scores) - 1, max(0, math.ceil(tpr * len(scores)) - 1))
    index.threshold = float(scores[idx])
    return index.threshold


def evaluate(scores_id, scores_ood) -> DetectionMetrics:
    """AUROC (rank statistic, ties half) and FPR at 95% ID coverage.

    ID is the low-score class.  The threshold is the smallest ID score
    with >= 95% of ID scores at or below it; FPR95 is the fraction of OOD
    scores strictly below that threshold.  Both metrics are invariant
    under any strictly increasing transform of all scores.
    """
    s_id = np.asarray(scores_id, dtype=np.float64).ravel()
    s_ood = np.asarray(scores_ood, dtype=np.float64).ravel()
    if s_id.size == 0 or s_ood.size == 0:
        raise DomainError("both score lists must be non-empty")

    # Mann-Whitney statistic: P(ood > id) + 0.5 P(ood == id)
    order = np.argsort(np.concatenate([s_id, s_ood]), kind="mergesort")
    combined = np.concatenate([s_id, s_ood])[order]
    is_ood = np.concatenate([np.zeros(s_id.size, bool), np.ones(s_ood.size, bool)])[order]
    ranks = np.empty(combined.size)
    i = 0
    while i < combined.size:
        j = i
        while j + 1 < combined.size and combined[j + 1] == combined[i]:
            j += 1
        ranks[i : j + 1] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    r_ood = ranks[is_ood].sum()
    n_i, n_o = s_id.size, s_ood.size
    auroc = (r_ood - 0.5 * n_o * (n_o + 1)) / (n_i * n_o)

    sorted_id = np.sort(s_id)
    idx = min(n_i - 1, max(0, math.ceil(0.95 * n_i) - 1))
    threshold = float(sorted_id[idx])
    fpr95 = float(np.mean(s_ood < threshold))
    return DetectionMetrics(auroc=float(auroc), fpr_at_95_tpr=fpr95, threshold=threshold)
