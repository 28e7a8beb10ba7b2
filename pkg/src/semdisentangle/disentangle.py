"""Cluster confidence ranking and the learnable / memorizable split."""

import json
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .contrastive import cluster_probability_matrix
from .numcore import DomainError


@dataclass
class AssignmentMatrix:
    P: np.ndarray  # (n_points, M) soft assignments
    hard_labels: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        if np.any(np.abs(self.P.sum(axis=1) - 1.0) > 1e-9):
            raise DomainError("assignment rows must sum to 1")
        self.hard_labels = np.asarray(self.hard_labels, dtype=int)

    @classmethod
    def from_probabilities(cls, P):
        P = np.atleast_2d(np.asarray(P, dtype=np.float64))
        return cls(P, np.argmax(P, axis=1))  # argmax picks the lowest index on ties

    @property
    def M(self):
        return self.P.shape[1]


def assign_all(X, kappa, bank, tau):
    """Soft and hard cluster assignment of every (unperturbed) record."""
    E, cids = bank.flatten()
    if E.shape[0] == 0:
        raise DomainError("memory bank is empty")
    X = X.X if hasattr(X, "X") else np.atleast_2d(X)
    Z = enc.forward(kappa, X)
    return AssignmentMatrix.from_probabilities(cluster_probability_matrix(Z, E, cids, bank.M, tau))


def cluster_confidence(A):
    """Mean assignment probability of each cluster's own members (0 when empty)."""
    conf = np.zeros(A.M)
    for l in range(A.M):
        members = A.hard_labels == l
        if members.any():
            conf[l] = A.P[members, l].mean()
    return conf


def rank_clusters(conf):
    """Cluster indices by descending confidence, ties to the lower index."""
    conf = np.asarray(conf, dtype=np.float64)
    return np.lexsort((np.arange(conf.size), -conf))


def auto_threshold(conf, populated=None):
    """Cut at the largest drop in the descending confidence sequence.

    Only populated clusters take part (empty ones carry a meaningless 0).
    Returns the confidence of the last cluster above the cut, so every
    cluster before the drop satisfies ``confidence >= threshold``; with no
    drop to cut at, everything is learnable (threshold 0).
    """
    conf = np.asarray(conf, dtype=np.float64)
    if populated is None:
        populated = conf > 0
    s = np.sort(conf[np.asarray(populated, bool)])[::-1]
    if s.size < 2:
        return 0.0
    gaps = s[:-1] - s[1:]
    k = int(np.argmax(gaps))
    if gaps[k] <= 0:
        return 0.0
    return float(s[k])


@dataclass
class SplitReport:
    confidence: np.ndarray
    ranking: np.ndarray
    learnable_ids: np.ndarray
    memorizable_ids: np.ndarray
    threshold: float
    hard_labels: np.ndarray | None = None

    @property
    def learnable_clusters(self):
        return np.flatnonzero(self.confidence >= self.threshold)

    def to_json(self):
        return json.dumps({
            "cluster_confidence": [float(c) for c in self.confidence],
            "ranking": [int(r) for r in self.ranking],
            "learnable_ids": [int(i) for i in self.learnable_ids],
            "memorizable_ids": [int(i) for i in self.memorizable_ids],
            "theta_conf": float(self.threshold),
            "hard_labels": None if self.hard_labels is None else [int(h) for h in self.hard_labels],
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            np.array(d["cluster_confidence"], dtype=np.float64),
            np.array(d["ranking"], dtype=int),
            np.array(d["learnable_ids"], dtype=int),
            np.array(d["memorizable_ids"], dtype=int),
            float(d["theta_conf"]),
            None if d.get("hard_labels") is None else np.array(d["hard_labels"], dtype=int),
        )


def rank_and_split(conf, hard_labels, theta):
    """Route members of clusters with confidence >= ``theta`` to the learnable set."""
    if not 0.0 <= theta <= 1.0 + 1e-9:
        raise DomainError(f"confidence threshold must lie in [0, 1], got {theta}")
    conf = np.asarray(conf, dtype=np.float64)
    hard_labels = np.asarray(hard_labels, dtype=int)
    learnable = conf[hard_labels] >= theta
    ids = np.arange(hard_labels.size)
    return SplitReport(conf, rank_clusters(conf), ids[learnable], ids[~learnable],
                       float(theta), hard_labels)


def split(A, theta="auto"):
    """Confidence ranking plus routing in one call; ``theta`` may be ``"auto"``."""
    conf = cluster_confidence(A)
    if theta == "auto":
        populated = np.bincount(A.hard_labels, minlength=A.M) > 0
        theta = auto_threshold(conf, populated)
    return rank_and_split(conf, A.hard_labels, float(theta))


def all_learnable(A):
    """Degenerate split routing every point semantically."""
    return rank_and_split(cluster_confidence(A), A.hard_labels, 0.0)
