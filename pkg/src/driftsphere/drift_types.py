"""Stream sample record shared by the data generator and the drift machinery."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError


@dataclass
class ModalSample:
    """One timestamped multi-modal observation.

    ``modalities`` holds one raw feature vector per modality stream;
    ``label`` is the class id or None for unlabeled (e.g. open-world)
    samples.  Timestamps are integers, strictly increasing within a
    stream.
    """

    modalities: list = field(default_factory=list)
    label: int | None = None
    timestamp: int = 0

    def __post_init__(self):
        if len(self.modalities) < 1:
            raise DomainError("a sample needs at least one modality")
        self.modalities = [np.asarray(m, dtype=np.float64) for m in self.modalities]

    @property
    def n_modalities(self) -> int:
        return len(self.modalities)
