"""Symmetric N x N contrastive alignment with momentum soft targets.

Given matched feature batches from two modality towers, the N x N
cross-similarity under the T-style metric supplies softmax logits in both
directions; the diagonal pairs are positives and the remaining N^2 - N
entries negatives.  Targets mix a one-hot identity with the row-softmax
of a momentum encoder's similarities so that plausible positives hiding
among the negatives are not pushed away at full strength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeError
from .metric import MetricConfig, thp_metric_from_dot

__all__ = [
    "SoftTargetConfig",
    "as_feature_batch",
    "thp_similarity_matrix",
    "row_softmax",
    "soft_targets",
    "contrastive_loss",
    "ema_update",
]


@dataclass(frozen=True)
class SoftTargetConfig:
    """Mixing weight of momentum soft labels and the EMA decay."""

    alpha: float = 0.4
    momentum: float = 0.995

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError(f"momentum must lie in [0, 1), got {self.momentum!r}")


def as_feature_batch(features, name: str = "features") -> np.ndarray:
    """Validate an (N, d) matrix of unit-norm rows."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty (N, d) matrix, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite entries")
    norms = np.linalg.norm(x, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise DomainError(f"{name} rows must be unit-norm")
    return x


def thp_similarity_matrix(a, b, cfg: MetricConfig) -> np.ndarray:
    """Matrix with entry (i, j) = T-style metric between b[j] and a[i].

    All entries lie in (0, 2/epsilon]; permuting b's rows permutes the
    columns identically.
    """
    a = as_feature_batch(a, "a")
    b = as_feature_batch(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"batches must share shape, got {a.shape} vs {b.shape}")
    return thp_metric_from_dot(a @ b.T, cfg)


def row_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def soft_targets(momentum_logits, cfg: SoftTargetConfig) -> np.ndarray:
    """alpha * row_softmax(momentum logits) + (1 - alpha) * identity."""
    m = np.asarray(momentum_logits, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"momentum logits must be square, got {m.shape}")
    n = m.shape[0]
    return cfg.alpha * row_softmax(m) + (1.0 - cfg.alpha) * np.eye(n)


def _check_targets(t: np.ndarray, name: str) -> None:
    if np.any(t < -1e-12) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError(f"{name} must be row-stochastic")


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def _direction_loss(sim: np.ndarray, targets: np.ndarray) -> float:
    logp = sim - _logsumexp_rows(sim)
    return float(-(targets * logp).sum(axis=1).mean())


def contrastive_loss(sim_i2t, sim_t2i, targets_i2t, targets_t2i) -> float:
    """Mean row-wise cross-entropy of both softmax directions, halved.

    The raw metric values act directly as logits.  Equals the target-row
    entropy exactly when the predicted softmax matches the targets, hence
    is always >= 0.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in (sim_i2t, sim_t2i, targets_i2t, targets_t2i)]
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise ShapeError(f"all matrices must be ({n}, {n}), got {m.shape}")
    _check_targets(mats[2], "targets_i2t")
    _check_targets(mats[3], "targets_t2i")
    return 0.5 * (_direction_loss(mats[0], mats[2]) + _direction_loss(mats[1], mats[3]))


def ema_update(online_params, ema_params, m: float):
    """ema <- m * ema + (1 - m) * online, element-wise over a dict of arrays.

    Mutates and returns ``ema_params``.
    """
    if not (math.isfinite(m) and 0.0 <= m <= 1.0):
        raise DomainError(f"momentum must lie in [0, 1], got {m!r}")
    if set(online_params) != set(ema_params):
        raise ShapeError("parameter collections have different keys")
    for key, online in online_params.items():
        ema = ema_params[key]
        if np.shape(ema) != np.shape(online):
            raise ShapeError(f"shape mismatch for {key!r}")
        ema *= m
        ema += (1.0 - m) * online
    return ema_params
