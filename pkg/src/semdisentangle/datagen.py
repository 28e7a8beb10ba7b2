"""Source streams: labelled synthetic mixtures and raw binary record files."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .numcore import DomainError, make_rng

RAW_FLOAT_BITS = 64


@dataclass
class DataPoint:
    x: np.ndarray
    truth_content: int | None = None
    is_noise: bool | None = None


@dataclass
class Datastream:
    """A stream of records stored row-wise in ``X``.

    ``labels`` holds the generating component (``-1`` for noise) and
    ``is_noise`` the noise flags; both are ``None`` for unlabelled streams.
    ``record_bits`` is the raw size of one record on the wire.
    """

    X: np.ndarray
    labels: np.ndarray | None = None
    is_noise: np.ndarray | None = None
    record_bits: int | None = None
    centers: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DomainError(f"records must form a 2-D array, got shape {self.X.shape}")
        if self.record_bits is None:
            self.record_bits = self.dim * RAW_FLOAT_BITS

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def __getitem__(self, i):
        return DataPoint(
            self.X[i],
            None if self.labels is None else int(self.labels[i]),
            None if self.is_noise is None else bool(self.is_noise[i]),
        )

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Datastream(
            self.X[idx],
            None if self.labels is None else self.labels[idx],
            None if self.is_noise is None else self.is_noise[idx],
            self.record_bits,
            self.centers,
        )


@dataclass(frozen=True)
class MixtureConfig:
    n_contents: int = 4
    dim: int = 16
    points: int = 2000
    noise_fraction: float = 0.2
    separation: float = 8.0
    seed: int = 0
    std: float = 1.0

    def __post_init__(self):
        if self.n_contents < 1 or self.dim < 1 or self.points < 1:
            raise DomainError("n_contents, dim and points must be positive")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise DomainError(f"noise_fraction must lie in [0, 1], got {self.noise_fraction}")
        if not self.separation > 0 or not self.std > 0:
            raise DomainError("separation and std must be positive")


def _sphere_centers(n, dim, separation, std, rng, n_candidates=4096):
    """Farthest-point placement of ``n`` centres on a sphere, scaled to the separation."""
    if n == 1:
        c = np.zeros((1, dim))
        c[0, 0] = separation * std
        return c
    cand = rng.normal(size=(n_candidates, dim))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    chosen = [0]
    d = np.linalg.norm(cand - cand[0], axis=1)
    for _ in range(n - 1):
        j = int(np.argmax(d))
        chosen.append(j)
        d = np.minimum(d, np.linalg.norm(cand - cand[j], axis=1))
    C = cand[chosen]
    diff = C[:, None, :] - C[None, :, :]
    pd = np.linalg.norm(diff, axis=2)[np.triu_indices(n, 1)]
    if pd.min() < 1e-9:
        raise DomainError(f"cannot place {n} distinct centres on a sphere in dimension {dim}")
    return C * (separation * std / pd.min())


def synth_mixture(cfg):
    """Equiprobable isotropic Gaussian components plus uniform box noise.

    Noise is drawn from the box spanned by the centres padded by three
    component standard deviations. Rows are shuffled.
    """
    rng = make_rng(cfg.seed)
    centers = _sphere_centers(cfg.n_contents, cfg.dim, cfg.separation, cfg.std, rng)
    n_noise = int(round(cfg.noise_fraction * cfg.points))
    n_content = cfg.points - n_noise
    per = np.full(cfg.n_contents, n_content // cfg.n_contents)
    per[: n_content % cfg.n_contents] += 1

    labels = np.repeat(np.arange(cfg.n_contents), per)
    X = centers[labels] + rng.normal(0.0, cfg.std, size=(n_content, cfg.dim))
    lo = centers.min(axis=0) - 3 * cfg.std
    hi = centers.max(axis=0) + 3 * cfg.std
    noise = rng.uniform(lo, hi, size=(n_noise, cfg.dim))

    X = np.vstack([X, noise])
    labels = np.concatenate([labels, np.full(n_noise, -1)])
    is_noise = np.concatenate([np.zeros(n_content, bool), np.ones(n_noise, bool)])
    order = rng.permutation(cfg.points)
    return Datastream(X[order], labels[order], is_noise[order], centers=centers)


def source_entropy(n_contents, noise_fraction):
    p = np.full(n_contents, (1.0 - noise_fraction) / n_contents)
    p = np.append(p, noise_fraction)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def content_complexity(cfg):
    """Entropy in nats of the categorical choice of generating source."""
    return source_entropy(cfg.n_contents, cfg.noise_fraction)


def noise_for_complexity(target, n_contents):
    """Noise fraction giving ``target`` nats with ``n_contents`` components.

    Entropy rises with the noise fraction only up to 1/(n+1), where all
    sources are equiprobable, so targets must lie in [ln n, ln(n+1)].
    """
    lo, hi = np.log(n_contents), np.log(n_contents + 1)
    if not lo - 1e-12 <= target <= hi + 1e-12:
        raise DomainError(
            f"complexity {target:.6g} nats unreachable with {n_contents} contents "
            f"(range [{lo:.6g}, {hi:.6g}])")
    if target <= lo:
        return 0.0
    fmax = 1.0 / (n_contents + 1)
    if target >= hi:
        return fmax
    return float(brentq(lambda f: source_entropy(n_contents, f) - target, 0.0, fmax, xtol=1e-14))


def mixture_for_complexity(target, max_contents):
    """``(n_contents, noise_fraction)`` whose source entropy is ``target`` nats.

    Uses as many noise-free contents as the target allows (at most
    ``max_contents``) and makes up the remainder with noise mass, so the
    reachable range is [0, ln(max_contents + 1)].
    """
    hi = np.log(max_contents + 1)
    if not -1e-12 <= target <= hi + 1e-12:
        raise DomainError(f"complexity {target:.6g} nats outside [0, {hi:.6g}] for at most "
                          f"{max_contents} contents")
    n = int(min(max_contents, max(1, np.floor(np.exp(target) + 1e-9))))
    return n, noise_for_complexity(max(target, np.log(n)), n)


class RecordFormatError(ValueError):
    def __init__(self, msg, offset):
        super().__init__(msg)
        self.offset = offset


def ingest_binary(path, record_bytes, normalize=True):
    """Cut a binary file into fixed-size records, one data point per record."""
    if record_bytes < 1:
        raise DomainError(f"record_bytes must be positive, got {record_bytes}")
    raw = Path(path).read_bytes()
    full = len(raw) // record_bytes * record_bytes
    if len(raw) == 0 or full != len(raw):
        raise RecordFormatError(
            f"{path}: size {len(raw)} is not a positive multiple of {record_bytes} "
            f"(trailing partial record at byte offset {full})", offset=full)
    X = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record_bytes).astype(np.float64)
    if normalize:
        X /= 255.0
    return Datastream(X, record_bits=8 * record_bytes)
