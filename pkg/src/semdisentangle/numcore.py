"""Small deterministic numerical kernels used throughout the package.

Vectors are plain 1-D ``float64`` numpy arrays. Randomness always flows
through an explicitly seeded :class:`numpy.random.Generator` (PCG64); there
is no module-level random state.
"""

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside an operation's domain."""


def make_rng(seed):
    """Return a PCG64 generator for ``seed`` (int or SeedSequence)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def child_seeds(seed, n):
    """Spawn ``n`` independent child SeedSequences from an integer seed."""
    return np.random.SeedSequence(int(seed)).spawn(n)


def as_vec(x):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DomainError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("vector has non-finite components")
    return v


def cosine(u, v):
    u = as_vec(u)
    v = as_vec(v)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.size} vs {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine undefined for zero-norm vector")
    # normalise first so the product is symmetric in (u, v) bit for bit
    c = float(np.dot(u / nu, v / nv))
    return min(1.0, max(-1.0, c))


def log_sum_exp(s, axis=None):
    """Shift-stable ``log(sum(exp(s)))``.

    With ``axis=None`` the input must be a non-empty finite sequence and a
    float is returned; otherwise the reduction runs along ``axis``.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise DomainError("log_sum_exp of an empty list")
    if axis is None:
        if not np.all(np.isfinite(s)):
            raise DomainError("log_sum_exp requires finite inputs")
        m = s.max()
        return float(m + np.log(np.exp(s - m).sum()))
    m = s.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(s - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax_t(s, tau):
    """Temperature softmax ``exp(s/tau) / sum(exp(s/tau))``."""
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    s = np.asarray(s, dtype=np.float64) / tau
    e = np.exp(s - s.max())
    return e / e.sum()


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + h
        fp = f(x)
        flat[j] = old - h
        fm = f(x)
        flat[j] = old
        gflat[j] = (fp - fm) / (2.0 * h)
    return g
