"""Synthetic long-tailed, multi-modal, open-world dataset generator.

Each class gets one latent generating direction per modality (directions
within a modality are rejection-sampled to stay at least a configured
angle apart); a sample is its class direction plus Gaussian noise, one
raw vector per modality, timestamps assigned in shuffled order.
Out-of-distribution samples use fresh directions at least a configured
angle away from every class direction and carry no label.  Per-class
counts follow the exponential long-tail profile
n_c = max(1, round(n_max * IR^{-c/(C-1)})).

Everything is a pure function of the config (seed included): the JSONL
serialization plus manifest allows byte-identical regeneration.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .drift_types import ModalSample
from .exceptions import DomainError, RejectionError
from .numerics import make_rng, sample_uniform_sphere

__all__ = [
    "GenConfig",
    "GroundTruth",
    "longtail_counts",
    "gen_class_directions",
    "gen_pairs",
    "gen_ood",
    "split_boundaries",
    "serialize",
    "load",
    "write_manifest",
    "read_manifest",
]

MANIFEST_FORMAT_VERSION = 1
_MAX_REJECTIONS = 1_000_000


@dataclass(frozen=True)
class GenConfig:
    classes: int = 20
    raw_dim: int = 32
    imbalance_ratio: float = 100.0
    n_max: int = 150
    noise: float = 0.1
    n_modalities: int = 2
    min_class_angle_deg: float = 25.0
    ood_exclusion_deg: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise DomainError(f"need at least 2 classes, got {self.classes}")
        if self.raw_dim < 4:
            raise DomainError(f"raw_dim must be >= 4, got {self.raw_dim}")
        if self.imbalance_ratio < 1.0:
            raise DomainError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")
        if self.n_max < 1 or self.n_modalities < 1:
            raise DomainError("n_max and n_modalities must be positive")
        if self.noise < 0.0:
            raise DomainError(f"noise must be >= 0, got {self.noise}")


@dataclass(frozen=True)
class GroundTruth:
    """Latent per-class, per-modality generating directions.

    ``directions[j][c]`` is the unit direction of class c in modality j.
    """

    directions: tuple

    def modality(self, j: int) -> np.ndarray:
        return self.directions[j]

    @property
    def n_modalities(self) -> int:
        return len(self.directions)


def longtail_counts(classes: int, n_max: int, imbalance_ratio: float) -> list:
    """Exponential tail profile: n_c = max(1, round(n_max * IR^{-c/(C-1)})).

    Rounding is half-up so counts are platform-stable.
    """
    if classes < 2 or n_max < 1 or imbalance_ratio < 1.0:
        raise DomainError("need classes >= 2, n_max >= 1, imbalance_ratio >= 1")
    counts = []
    for c in range(classes):
        raw = n_max * imbalance_ratio ** (-c / (classes - 1))
        counts.append(max(1, int(math.floor(raw + 0.5))))
    return counts


def _min_pairwise_dot(rows: np.ndarray) -> float:
    dots = rows @ rows.T
    return float(np.max(dots - 2.0 * np.eye(rows.shape[0])))  # max off-diagonal


def gen_class_directions(cfg: GenConfig, rng: np.random.Generator) -> GroundTruth:
    """Rejection-sample per-modality class directions with min separation.

    The two (or more) modalities' directions for one class are sampled
    independently; only the class id links them, which is exactly the
    structure cross-modal alignment has to learn.
    """
    cos_cap = math.cos(math.radians(cfg.min_class_angle_deg))
    per_modality = []
    for _ in range(cfg.n_modalities):
        chosen: list = []
        attempts = 0
        while len(chosen) < cfg.classes:
            if attempts >= _MAX_REJECTIONS:
                raise RejectionError(
                    f"could not place {cfg.classes} directions >= "
                    f"{cfg.min_class_angle_deg} deg apart in dim {cfg.raw_dim}"
                )
            batch = min(4096, _MAX_REJECTIONS - attempts)
            candidates = sample_uniform_sphere(cfg.raw_dim, rng, size=batch)
            attempts += batch
            if chosen:
                # vectorized prefilter against the already-frozen set
                ok = np.max(candidates @ np.array(chosen).T, axis=1) < cos_cap
                candidates = candidates[ok]
            for candidate in candidates:
                if len(chosen) == cfg.classes:
                    break
                if not chosen or float(np.max(np.array(chosen) @ candidate)) < cos_cap:
                    chosen.append(candidate)
        per_modality.append(np.array(chosen))
    return GroundTruth(directions=tuple(per_modality))


def gen_pairs(cfg: GenConfig, gt: GroundTruth, rng: np.random.Generator) -> list:
    """Labeled ID samples with long-tailed class counts, shuffled timestamps."""
    counts = longtail_counts(cfg.classes, cfg.n_max, cfg.imbalance_ratio)
    samples = []
    for c, n_c in enumerate(counts):
        for _ in range(n_c):
            modalities = [
                gt.modality(j)[c] + cfg.noise * rng.standard_normal(cfg.raw_dim)
                for j in range(cfg.n_modalities)
            ]
            samples.append((c, modalities))
    order = rng.permutation(len(samples))
    return [
        ModalSample(modalities=samples[i][1], label=samples[i][0], timestamp=t)
        for t, i in enumerate(order)
    ]


def gen_ood(cfg: GenConfig, gt: GroundTruth, count: int, rng: np.random.Generator) -> list:
    """Unlabeled samples whose directions avoid every class direction."""
    cos_cap = math.cos(math.radians(cfg.ood_exclusion_deg))
    all_dirs = np.vstack([gt.modality(j) for j in range(gt.n_modalities)])

    def far_direction():
        for _ in range(_MAX_REJECTIONS):
            candidate = sample_uniform_sphere(cfg.raw_dim, rng)
            if float(np.max(all_dirs @ candidate)) < cos_cap:
                return candidate
        raise RejectionError(
            f"could not find directions >= {cfg.ood_exclusion_deg} deg from all classes"
        )

    samples = []
    for t in range(count):
        modalities = [
            far_direction() + cfg.noise * rng.standard_normal(cfg.raw_dim)
            for _ in range(cfg.n_modalities)
        ]
        samples.append(ModalSample(modalities=modalities, label=None, timestamp=t))
    return samples


def split_boundaries(counts) -> dict:
    """Class ids per long-tail evaluation split (many > 100, medium 20-100,
    few < 20 training samples)."""
    counts = list(counts)
    return {
        "many": [c for c, n in enumerate(counts) if n > 100],
        "medium": [c for c, n in enumerate(counts) if 20 <= n <= 100],
        "few": [c for c, n in enumerate(counts) if n < 20],
    }


# ---------------------------------------------------------------------------
# JSONL serialization


def serialize(samples, path) -> None:
    """One JSON object per line: {"t": int, "label": int|null, "modalities": [[...], ...]}."""
    path = Path(path)
    with path.open("w") as fh:
        for s in samples:
            doc = {
                "t": int(s.timestamp),
                "label": None if s.label is None else int(s.label),
                "modalities": [np.asarray(m, dtype=np.float64).tolist() for m in s.modalities],
            }
            fh.write(json.dumps(doc) + "\n")


def load(path) -> list:
    """Parse a JSONL dataset; malformed lines report their line number."""
    samples = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                modalities = [np.asarray(m, dtype=np.float64) for m in doc["modalities"]]
                samples.append(
                    ModalSample(modalities=modalities, label=doc["label"], timestamp=doc["t"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise DomainError(f"{path}: malformed line {lineno}: {err}") from err
    return samples


def write_manifest(path, cfg: GenConfig, counts, extra: dict | None = None) -> None:
    doc = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "config": asdict(cfg),
        "counts": list(counts),
        "splits": split_boundaries(counts),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise DomainError(f"unsupported manifest format_version {doc.get('format_version')!r}")
    return doc
