"""Memory banks, instance/cluster discrimination losses and the training loop.

Scores are cosine similarities between unit-norm embeddings divided by the
temperature ``tau``. Bank entries are stale: they are stored once and never
re-encoded, and gradients only flow through the anchor embedding.
"""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .augment import PerturbPolicy, perturb
from .numcore import DomainError, log_sum_exp, make_rng

UNIT_TOL = 1e-9
BANK_MAGIC = b"SDBANK01"


class MemoryBank:
    """``M`` FIFO ring buffers of unit-norm embeddings, one per cluster."""

    def __init__(self, M, capacity, dim):
        if M < 1 or capacity < 1 or dim < 1:
            raise DomainError("M, capacity and dim must be positive")
        self.M = M
        self.capacity = capacity
        self.dim = dim
        self._data = np.zeros((M, capacity, dim))
        self._count = np.zeros(M, dtype=int)
        self._head = np.zeros(M, dtype=int)  # next write slot

    def __len__(self):
        return int(self._count.sum())

    def sizes(self):
        return self._count.copy()

    def buffer(self, l):
        """Entries of cluster ``l`` in insertion order, oldest first."""
        n = self._count[l]
        if n < self.capacity:
            return self._data[l, :n].copy()
        h = self._head[l]
        return np.concatenate([self._data[l, h:], self._data[l, :h]])

    def insert(self, b, cluster):
        if not 0 <= cluster < self.M:
            raise DomainError(f"cluster {cluster} out of range [0, {self.M})")
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.dim,):
            raise DomainError(f"embedding shape {b.shape} does not match bank dim {self.dim}")
        if abs(np.linalg.norm(b) - 1.0) > UNIT_TOL:
            raise DomainError("memory bank only stores unit-norm embeddings")
        h = self._head[cluster]
        self._data[cluster, h] = b
        self._head[cluster] = (h + 1) % self.capacity
        self._count[cluster] = min(self._count[cluster] + 1, self.capacity)

    def flatten(self):
        """All entries stacked cluster by cluster, with their cluster ids."""
        parts = [self.buffer(l) for l in range(self.M)]
        E = np.concatenate(parts) if len(self) else np.zeros((0, self.dim))
        cids = np.repeat(np.arange(self.M), self._count)
        return E, cids

    def copy(self):
        other = MemoryBank(self.M, self.capacity, self.dim)
        other._data = self._data.copy()
        other._count = self._count.copy()
        other._head = self._head.copy()
        return other

    def to_bytes(self):
        """Magic, M/capacity/dim as <i4, counts and heads as <i4, then slots as <f8."""
        return (BANK_MAGIC + struct.pack("<iii", self.M, self.capacity, self.dim)
                + self._count.astype("<i4").tobytes() + self._head.astype("<i4").tobytes()
                + self._data.astype("<f8").tobytes())

    @classmethod
    def from_bytes(cls, buf):
        head = len(BANK_MAGIC)
        if buf[:head] != BANK_MAGIC:
            raise ValueError("not a memory bank file (bad magic)")
        M, cap, dim = struct.unpack("<iii", buf[head:head + 12])
        bank = cls(M, cap, dim)
        off = head + 12
        bank._count = np.frombuffer(buf, "<i4", M, off).astype(int)
        bank._head = np.frombuffer(buf, "<i4", M, off + 4 * M).astype(int)
        data = np.frombuffer(buf[off + 8 * M:], "<f8")
        if data.size != M * cap * dim:
            raise ValueError(f"bank file holds {data.size} floats, expected {M * cap * dim}")
        bank._data = data.reshape(M, cap, dim).astype(np.float64)
        return bank


def update_memory_bank(bank, b, cluster):
    """Append ``b`` to buffer ``cluster`` (evicting the oldest entry when full)."""
    bank.insert(b, cluster)
    return bank


def sample_negative_indices(cids, anchors, K, rng):
    """Row-wise uniform draws of ``K`` bank indices outside each anchor's cluster.

    Returns ``(idx, mask)`` of shape (B, K); ``mask`` marks valid slots when
    fewer than ``K`` candidates exist.
    """
    anchors = np.atleast_1d(np.asarray(anchors, dtype=int))
    B, T = anchors.size, cids.size
    if T == 0 or K == 0:
        return np.zeros((B, 0), dtype=int), np.zeros((B, 0), dtype=bool)
    keys = rng.random((B, T))
    own = cids[None, :] == anchors[:, None]
    keys[own] = np.inf
    k = min(K, T)
    idx = np.argsort(keys, axis=1, kind="stable")[:, :k]
    available = (~own).sum(axis=1)
    mask = np.arange(k)[None, :] < np.minimum(available, k)[:, None]
    return idx, mask


def build_contrastive_set(bank, anchor_cluster, K, rng):
    """Up to ``K`` stale embeddings drawn without replacement from the other clusters."""
    if not 0 <= anchor_cluster < bank.M:
        raise DomainError(f"anchor cluster {anchor_cluster} out of range [0, {bank.M})")
    E, cids = bank.flatten()
    idx, mask = sample_negative_indices(cids, [anchor_cluster], K, rng)
    return E[idx[0][mask[0]]]


def instance_loss(a, b, negs, tau):
    """Instance-discrimination loss of anchor ``a`` against positive ``b`` and ``negs``."""
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    negs = np.asarray(negs, dtype=np.float64).reshape(-1, np.size(a))
    if negs.shape[0] == 0:
        return 0.0
    pos = float(np.dot(a, b)) / tau
    return float(_softplus(log_sum_exp(negs @ a / tau - pos)))


def _softplus(t):
    """``log(1 + exp(t))`` without overflow and without rounding small values to 0."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > 0, t + np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(np.minimum(t, 0.0))))


def _cluster_log_probs(S, cids, M):
    """Per-row log P_l from score matrix ``S`` (B, T); empty clusters get -inf."""
    total = log_sum_exp(S, axis=1)
    out = np.full((S.shape[0], M), -np.inf)
    for l in range(M):
        sel = cids == l
        if sel.any():
            out[:, l] = log_sum_exp(S[:, sel], axis=1) - total
    return out


def cluster_probability(a, bank, tau):
    """Soft assignment of anchor ``a`` over the bank's clusters (length ``M``)."""
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    E, cids = bank.flatten()
    if E.shape[0] == 0:
        raise DomainError("cluster probability undefined: every memory buffer is empty")
    return cluster_probability_matrix(np.atleast_2d(a), E, cids, bank.M, tau)[0]


def cluster_probability_matrix(A, E, cids, M, tau):
    P = np.exp(_cluster_log_probs(A @ E.T / tau, cids, M))
    return P / P.sum(axis=1, keepdims=True)


def cluster_loss(P):
    """Mean per-row entropy (nats) of soft assignments, with 0 ln 0 = 0."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if np.any(P < 0):
        raise DomainError("negative probability in assignment matrix")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise DomainError("assignment rows must sum to 1")
    logs = np.log(np.where(P > 0, P, 1.0))
    return float(-(P * logs).sum(axis=1).mean())


def total_loss(L_I, L_D, eta=1.0, eps=1.0):
    if eta < 0 or eps < 0:
        raise DomainError("loss weights must be nonnegative")
    return eta * L_I + eps * L_D


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.1
    eta: float = 1.0
    eps: float = 1.0
    omega: float = 0.9
    lr: float = 0.02
    epochs: int = 200
    batch_size: int = 32
    K: int = 32
    M: int = 5
    capacity_per_cluster: int = 64
    hidden_dim: int = 32
    embed_dim: int = 16
    seed: int = 0
    policy: PerturbPolicy = field(default_factory=lambda: PerturbPolicy(0.1, 0.0, 0.1))

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")
        if self.eta < 0 or self.eps < 0:
            raise DomainError("eta and eps must be nonnegative")
        if not 0.0 <= self.omega <= 1.0:
            raise DomainError("omega must lie in [0, 1]")
        if not self.lr >= 0:
            raise DomainError("lr must be nonnegative")
        for name in ("batch_size", "K", "M", "capacity_per_cluster", "hidden_dim", "embed_dim"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise DomainError("epochs must be nonnegative")


@dataclass
class TrainState:
    kappa: enc.EncoderParams
    kappa_tilde: enc.EncoderParams
    bank: MemoryBank
    epoch: int = 0


@dataclass
class EpochMetrics:
    epoch: int
    L_I: float
    L_D: float
    L_T: float


class TrainingError(RuntimeError):
    def __init__(self, msg, epoch=None, batch=None, sample=None):
        super().__init__(msg)
        self.epoch, self.batch, self.sample = epoch, batch, sample


def cosine_kmeans(Z, M, rng, rounds=10):
    """Spherical k-means on unit rows of ``Z`` with farthest-point seeding."""
    n = Z.shape[0]
    first = int(rng.integers(n))
    centers = [Z[first]]
    mind = 1.0 - Z @ Z[first]
    for _ in range(1, min(M, n)):
        j = int(np.argmax(mind))
        centers.append(Z[j])
        mind = np.minimum(mind, 1.0 - Z @ Z[j])
    C = np.array(centers)
    for _ in range(rounds):
        labels = np.argmax(Z @ C.T, axis=1)
        for l in range(C.shape[0]):
            members = Z[labels == l]
            if len(members):
                m = members.sum(axis=0)
                nm = np.linalg.norm(m)
                if nm > 0:
                    C[l] = m / nm
    return np.argmax(Z @ C.T, axis=1)


def init_state(data, cfg):
    """Fresh encoder pair plus a memory bank seeded by spherical k-means."""
    rng = make_rng(cfg.seed)
    kappa = enc.init_params(data.dim, cfg.hidden_dim, cfg.embed_dim, rng)
    kappa_tilde = kappa.copy()
    bank = bootstrap_bank(kappa_tilde, data.X, cfg, rng)
    return TrainState(kappa, kappa_tilde, bank)


def bootstrap_bank(kappa_tilde, X, cfg, rng):
    Z = enc.forward(kappa_tilde, X)
    labels = cosine_kmeans(Z, cfg.M, rng)
    bank = MemoryBank(cfg.M, cfg.capacity_per_cluster, Z.shape[1])
    for z, l in zip(Z, labels):
        bank.insert(z, int(l))
    return bank


def batch_objective(kappa, X1, Bpos, E, cids, neg_idx, neg_mask, cfg):
    """Batch loss ``eta * mean L_I + eps * L_D`` and its gradient w.r.t. ``kappa``.

    Bank entries ``E``, positives ``Bpos`` and the negative index sets are
    held fixed. Returns ``(L_T, grad, L_I_mean, L_D, P)``.
    """
    A = enc.forward(kappa, X1)
    Bn, tau, M = A.shape[0], cfg.tau, cfg.M

    # instance discrimination
    pos = np.sum(A * Bpos, axis=1) / tau
    negE = E[neg_idx] if neg_idx.size else np.zeros((Bn, 0, A.shape[1]))
    neg = np.einsum("bkn,bn->bk", negE, A) / tau
    neg = np.where(neg_mask, neg, -np.inf)
    logits = np.concatenate([pos[:, None], neg], axis=1)
    lse = log_sum_exp(logits, axis=1)
    L_I = np.zeros(Bn)
    has = neg_mask.any(axis=1) if neg.shape[1] else np.zeros(Bn, bool)
    if has.any():
        L_I[has] = _softplus(log_sum_exp(neg[has] - pos[has, None], axis=1))
    w = np.exp(logits - lse[:, None])  # softmax over {b} + negatives
    gA_I = ((w[:, 0] - 1.0)[:, None] * Bpos + np.einsum("bk,bkn->bn", w[:, 1:], negE)) / tau

    # cluster discrimination
    S = A @ E.T / tau
    logP = _cluster_log_probs(S, cids, M)
    P = np.exp(logP)
    safe = np.where(np.isfinite(logP), logP, 0.0)
    H = -(P * safe).sum(axis=1)
    q = np.exp(S - log_sum_exp(S, axis=1)[:, None])
    g = -(safe + 1.0)  # dH/dP_l
    gbar = (g * P).sum(axis=1, keepdims=True)
    dS = q * (g[:, cids] - gbar)
    gA_D = dS @ E / tau

    L_I_mean = float(L_I.mean())
    L_D = float(H.mean())
    L_T = total_loss(L_I_mean, L_D, cfg.eta, cfg.eps)
    upstream = (cfg.eta * gA_I + cfg.eps * gA_D) / Bn
    grad = enc.backward(kappa, X1, upstream)
    return L_T, grad, L_I_mean, L_D, P


def train_epoch(state, data, cfg, rng):
    """One pass over ``data`` in shuffled minibatches; returns :class:`EpochMetrics`."""
    if len(data) == 0:
        raise DomainError("cannot train on an empty stream")
    epoch = state.epoch + 1
    order = rng.permutation(len(data))
    sums = np.zeros(3)
    for bi, start in enumerate(range(0, len(data), cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        X1 = perturb(data.X[idx], cfg.policy, rng)
        X2 = perturb(data.X[idx], cfg.policy, rng)
        try:
            E, cids = state.bank.flatten()
            A = enc.forward(state.kappa, X1)
            hard = np.argmax(cluster_probability_matrix(A, E, cids, cfg.M, cfg.tau), axis=1)
            Bpos = enc.forward(state.kappa_tilde, X2)
            neg_idx, neg_mask = sample_negative_indices(cids, hard, cfg.K, rng)
            L_T, grad, L_I, L_D, _ = batch_objective(
                state.kappa, X1, Bpos, E, cids, neg_idx, neg_mask, cfg)
        except enc.DegenerateEmbeddingError as exc:
            sample = None if exc.index is None else int(idx[exc.index])
            raise TrainingError(f"epoch {epoch}, batch {bi}, sample {sample}: {exc}",
                                epoch, bi, sample) from exc
        if cfg.lr > 0:
            state.kappa = enc.sgd_step(state.kappa, grad, cfg.lr)
        state.kappa_tilde = enc.momentum_update(state.kappa_tilde, state.kappa, cfg.omega)
        for z, l in zip(Bpos, hard):
            state.bank.insert(z, int(l))
        sums += len(idx) * np.array([L_I, L_D, L_T])
    state.epoch = epoch
    L_I, L_D, L_T = sums / len(data)
    return EpochMetrics(epoch, float(L_I), float(L_D), float(L_T))


def train(data, cfg, state=None, on_epoch=None):
    """Bootstrap (unless ``state`` is given) and run ``cfg.epochs`` epochs."""
    if state is None:
        state = init_state(data, cfg)
    rng = make_rng(np.random.SeedSequence([cfg.seed, 1]))
    history = []
    for _ in range(cfg.epochs):
        m = train_epoch(state, data, cfg, rng)
        history.append(m)
        if on_epoch is not None:
            on_epoch(m)
    return state, history


def write_metrics_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_L_I", "mean_L_D", "mean_L_T"])
        for m in history:
            w.writerow([m.epoch, f"{m.L_I:.9g}", f"{m.L_D:.9g}", f"{m.L_T:.9g}"])
