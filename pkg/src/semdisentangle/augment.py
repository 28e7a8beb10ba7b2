"""Random perturbations producing two views of a record.

The family is modality agnostic and applied in a fixed order:
scale jitter, then additive Gaussian noise, then coordinate masking.
"""

from dataclasses import dataclass

import numpy as np

from .numcore import DomainError


@dataclass(frozen=True)
class PerturbPolicy:
    noise_sigma: float = 0.0
    mask_fraction: float = 0.0
    scale_jitter: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise DomainError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise DomainError(f"mask_fraction must lie in [0, 1], got {self.mask_fraction}")
        if self.scale_jitter < 0:
            raise DomainError(f"scale_jitter must be >= 0, got {self.scale_jitter}")

    @property
    def is_identity(self):
        return self.noise_sigma == 0 and self.mask_fraction == 0 and self.scale_jitter == 0


def perturb(x, policy, rng):
    """One random view of ``x`` (1-D) or of each row of a batch ``x`` (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    if policy.is_identity:
        return x.copy()
    single = x.ndim == 1
    X = np.atleast_2d(x).copy()
    n, D = X.shape
    if policy.scale_jitter > 0:
        s = rng.uniform(1.0 - policy.scale_jitter, 1.0 + policy.scale_jitter, size=(n, 1))
        X *= s
    if policy.noise_sigma > 0:
        X += rng.normal(0.0, policy.noise_sigma, size=X.shape)
    k = int(np.floor(policy.mask_fraction * D))
    if k > 0:
        if k == D:
            X[:] = 0.0
        else:
            # k smallest uniform keys per row = uniformly chosen k-subset
            idx = np.argpartition(rng.random((n, D)), k - 1, axis=1)[:, :k]
            np.put_along_axis(X, idx, 0.0, axis=1)
    return X[0] if single else X


def two_views(x, policy, rng):
    return perturb(x, policy, rng), perturb(x, policy, rng)
