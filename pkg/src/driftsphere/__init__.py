"""driftsphere: directional statistics and drift-aware training on the unit sphere.

The package provides, at desk scale:

* exact densities and samplers for the heavy-tailed T-style spherical
  distribution and the von Mises-Fisher distribution (``sphere``),
* the bounded T-style training metric, its vMF counterpart, and their
  gradients (``metric``),
* symmetric contrastive alignment of two feature towers with
  momentum-encoder soft targets (``align``, ``model``),
* non-parametric KNN out-of-distribution scoring with AUROC/FPR95
  evaluation (``ood``),
* sliding-window detection of sudden and gradual distribution drift in
  multi-modal streams, with in-window adaptation (``drift``),
* a reproducible long-tailed multi-modal synthetic data generator
  (``datagen``), and
* a ``driftsphere`` command-line front end tying the stages together
  (``cli``).
"""

__version__ = "0.1.0"

from . import numerics  # noqa: F401  (re-exported module namespaces)
from .exceptions import (  # noqa: F401
    DegenerateError,
    DomainError,
    DriftsphereError,
    NonFiniteError,
    RejectionError,
    ShapeError,
    SingularityError,
)
