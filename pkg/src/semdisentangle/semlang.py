"""Semantic language store, representation coding and language complexity.

A language maps each learnable point id to its cluster pseudo-label and the
quantised code of its embedding, plus one centroid per learnable cluster.
"""

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import encoder as enc
from .numcore import DomainError


def quantize(z, q):
    """Uniform ``q``-bit scalar quantisation of each coordinate of ``z`` over [-1, 1]."""
    if not 1 <= q <= 16:
        raise DomainError(f"bits per dimension must lie in [1, 16], got {q}")
    levels = 1 << q
    z = np.asarray(z, dtype=np.float64)
    idx = np.floor((z + 1.0) * 0.5 * levels).astype(np.int64)
    return np.clip(idx, 0, levels - 1)


def dequantize(codes, q):
    """Bin midpoints for quantiser codes."""
    levels = 1 << q
    return -1.0 + (np.asarray(codes, dtype=np.float64) + 0.5) * (2.0 / levels)


def representation_length_bits(codes):
    """Average code length (bits) under a per-coordinate empirical entropy coder.

    ``codes`` is (n_representations, N); each coordinate has its own symbol
    frequencies estimated from the corpus. The average length equals the sum
    over coordinates of the empirical entropy.
    """
    codes = np.atleast_2d(np.asarray(codes))
    n = codes.shape[0]
    if n == 0:
        raise DomainError("cannot measure the length of an empty corpus")
    total = 0.0
    for col in codes.T:
        _, counts = np.unique(col, return_counts=True)
        p = counts / n
        total += float(-(counts * np.log2(p)).sum())
    return total / n


@dataclass
class SemanticLanguage:
    q: int
    M: int
    labels: dict = field(default_factory=dict)  # point id -> pseudo-label
    codes: dict = field(default_factory=dict)  # point id -> code array (N,)
    codebook: dict = field(default_factory=dict)  # label -> unit centroid

    def __len__(self):
        return len(self.labels)

    def __contains__(self, pid):
        return pid in self.labels

    @property
    def ids(self):
        return np.array(sorted(self.labels), dtype=int)

    def code_matrix(self):
        return np.array([self.codes[i] for i in self.ids])

    def lookup(self, pid):
        """Receiver side: reconstruct a point's representation from its code."""
        return self.labels[pid], dequantize(self.codes[pid], self.q)

    def to_json(self):
        return json.dumps({
            "q": self.q,
            "M": self.M,
            "codebook": {str(k): [float(x) for x in v] for k, v in sorted(self.codebook.items())},
            "entries": {str(i): {"label": int(self.labels[i]), "code": [int(c) for c in self.codes[i]]}
                        for i in self.ids},
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        lang = cls(int(d["q"]), int(d["M"]))
        lang.codebook = {int(k): np.array(v) for k, v in d["codebook"].items()}
        for k, e in d["entries"].items():
            lang.labels[int(k)] = int(e["label"])
            lang.codes[int(k)] = np.array(e["code"], dtype=np.int64)
        return lang


def build_language(X, split, kappa, q, hard_labels=None, M=None):
    """Language over the learnable points of ``split``.

    Pseudo-labels default to ``split.hard_labels``. Embeddings are computed
    on the unperturbed records.
    """
    X = X.X if hasattr(X, "X") else np.atleast_2d(X)
    labels = split.hard_labels if hard_labels is None else np.asarray(hard_labels, dtype=int)
    if labels is None:
        raise DomainError("pseudo-labels are required to build a language")
    if labels.size != X.shape[0]:
        raise DomainError(f"{labels.size} labels for {X.shape[0]} records")
    if M is None:
        M = len(split.confidence)
    lang = SemanticLanguage(q, M)
    ids = np.asarray(split.learnable_ids, dtype=int)
    if ids.size == 0:
        return lang
    Z = enc.forward(kappa, X[ids])
    codes = quantize(Z, q)
    for pid, lab, code in zip(ids, labels[ids], codes):
        lang.labels[int(pid)] = int(lab)
        lang.codes[int(pid)] = code
    for lab in np.unique(labels[ids]):
        m = Z[labels[ids] == lab].sum(axis=0)
        norm = np.linalg.norm(m)
        if norm == 0:
            raise DomainError(f"cluster {lab} has a zero mean embedding; centroid undefined")
        lang.codebook[int(lab)] = m / norm
    return lang


@dataclass(frozen=True)
class ComplexityConfig:
    beta: float = 1.0
    prior_sigma: float = 1.0
    posterior_sigma: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise DomainError("beta must be nonnegative")
        if not (self.prior_sigma > 0 and self.posterior_sigma > 0):
            raise DomainError("distribution widths must be positive")


class Complexity(NamedTuple):
    total: float
    cross_entropy: float
    kl: float
    offending_index: int | None = None


def gaussian_kl(mu_post, sigma_post, mu_pre, sigma_pre):
    """KL( N(mu_post, sigma_post^2 I) || N(mu_pre, sigma_pre^2 I) ) in nats."""
    mu_post = np.asarray(mu_post, dtype=np.float64)
    mu_pre = np.asarray(mu_pre, dtype=np.float64)
    if mu_post.shape != mu_pre.shape:
        raise DomainError("KL between Gaussians of different dimension")
    d = mu_post.size
    r = sigma_post ** 2 / sigma_pre ** 2
    diff = float(np.sum((mu_post - mu_pre) ** 2))
    return 0.5 * (d * r + diff / sigma_pre ** 2 - d - d * math.log(r))


def language_complexity(lang, A, params_pre, params_post, cfg):
    """Cross-entropy of the entries' pseudo-labels plus ``beta`` times the model KL.

    ``A`` is the :class:`AssignmentMatrix` (or raw probability rows) indexed
    by point id. A zero member probability yields ``total = inf`` with the
    offending point id.
    """
    P = A.P if hasattr(A, "P") else np.atleast_2d(A)
    ce = 0.0
    for pid in lang.ids:
        p = P[pid, lang.labels[pid]]
        if p <= 0.0:
            return Complexity(math.inf, math.inf, math.nan, int(pid))
        ce -= math.log(p)
    kl = 0.0
    if cfg.beta > 0:
        kl = gaussian_kl(params_post.flat(), cfg.posterior_sigma, params_pre.flat(), cfg.prior_sigma)
    return Complexity(ce + cfg.beta * kl, ce, kl)
