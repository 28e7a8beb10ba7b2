"""Two-layer embedding network with hand-written backpropagation.

The network maps a record ``x`` (dim D) to a unit vector (dim N)::

    h = tanh(W1 x + b1)        # hidden, dim H
    u = W2 h + b2              # pre-normalisation output
    z = u / ||u||

The momentum twin has exactly the same structure; it is only ever changed by
:func:`momentum_update`, never by gradients.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .numcore import DomainError

DEGENERATE_NORM = 1e-12
CHECKPOINT_MAGIC = b"SDENC001"


class DegenerateEmbeddingError(ArithmeticError):
    """Pre-normalisation output too close to zero to define a direction."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


@dataclass
class EncoderParams:
    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (N, H)
    b2: np.ndarray  # (N,)
    activation: str = "tanh"

    FIELDS = ("W1", "b1", "W2", "b2")

    @property
    def dims(self):
        H, D = self.W1.shape
        return D, H, self.W2.shape[0]

    def arrays(self):
        return [getattr(self, k) for k in self.FIELDS]

    def copy(self):
        return EncoderParams(*(a.copy() for a in self.arrays()), activation=self.activation)

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta):
        """New params of the same shapes filled from the flat vector ``theta``."""
        theta = np.asarray(theta, dtype=np.float64)
        out, pos = [], 0
        for a in self.arrays():
            out.append(theta[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != theta.size:
            raise DomainError(f"flat vector has {theta.size} entries, expected {pos}")
        return EncoderParams(*out, activation=self.activation)

    def zeros_like(self):
        return EncoderParams(*(np.zeros_like(a) for a in self.arrays()), activation=self.activation)

    def same_shape(self, other):
        return all(a.shape == b.shape for a, b in zip(self.arrays(), other.arrays()))


def init_params(D, H, N, rng):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for every layer."""
    if min(D, H, N) < 1:
        raise DomainError(f"dimensions must be positive, got D={D} H={H} N={N}")
    r1 = 1.0 / np.sqrt(D)
    r2 = 1.0 / np.sqrt(H)
    return EncoderParams(
        W1=rng.uniform(-r1, r1, size=(H, D)),
        b1=rng.uniform(-r1, r1, size=H),
        W2=rng.uniform(-r2, r2, size=(N, H)),
        b2=rng.uniform(-r2, r2, size=N),
    )


def identity_params(D):
    """Identity network (H = N = D, linear activation); used in tests."""
    return EncoderParams(np.eye(D), np.zeros(D), np.eye(D), np.zeros(D), activation="identity")


def _act(params, pre):
    if params.activation == "tanh":
        return np.tanh(pre)
    if params.activation == "identity":
        return pre
    raise DomainError(f"unknown activation {params.activation!r}")


def _forward_cache(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != params.W1.shape[1]:
        raise DomainError(f"input dim {X2.shape[1]} does not match encoder D={params.W1.shape[1]}")
    h = _act(params, X2 @ params.W1.T + params.b1)
    u = h @ params.W2.T + params.b2
    norm = np.linalg.norm(u, axis=1)
    bad = np.flatnonzero(norm < DEGENERATE_NORM)
    if bad.size:
        raise DegenerateEmbeddingError(
            f"degenerate embedding (pre-normalisation norm {norm[bad[0]]:.3g}) at row {bad[0]}",
            index=int(bad[0]))
    z = u / norm[:, None]
    return single, X2, h, norm, z


def forward(params, X):
    """Unit-norm embedding of a record (1-D) or a batch of records (2-D, one per row)."""
    single, _, _, _, z = _forward_cache(params, X)
    return z[0] if single else z


def backward(params, X, upstream):
    """Gradient of ``sum_i upstream_i . forward(params, X_i)`` w.r.t. every parameter.

    ``X`` and ``upstream`` are either single vectors or matching batches; the
    batch gradient is the sum over rows. Returns an :class:`EncoderParams`
    holding the gradient.
    """
    single, X2, h, norm, z = _forward_cache(params, X)
    G = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if G.shape != z.shape:
        raise DomainError(f"upstream shape {G.shape} does not match output {z.shape}")
    # Jacobian of u -> u/|u| is (I - z z^T)/|u|
    du = (G - z * np.sum(z * G, axis=1, keepdims=True)) / norm[:, None]
    dW2 = du.T @ h
    db2 = du.sum(axis=0)
    dh = du @ params.W2
    dpre = dh * (1.0 - h * h) if params.activation == "tanh" else dh
    dW1 = dpre.T @ X2
    db1 = dpre.sum(axis=0)
    return EncoderParams(dW1, db1, dW2, db2, activation=params.activation)


def sgd_step(params, grad, lr):
    if not lr > 0:
        raise DomainError(f"learning rate must be positive, got {lr}")
    return EncoderParams(*(p - lr * g for p, g in zip(params.arrays(), grad.arrays())),
                         activation=params.activation)


def momentum_update(kappa_tilde, kappa, omega):
    """``omega * kappa_tilde + (1 - omega) * kappa``; ``kappa`` is left untouched."""
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"momentum coefficient must lie in [0, 1], got {omega}")
    if not kappa_tilde.same_shape(kappa):
        raise DomainError("momentum update between encoders of different shapes")
    if omega == 1.0:
        return kappa_tilde.copy()
    if omega == 0.0:
        return kappa.copy()
    return EncoderParams(*(omega * t + (1.0 - omega) * k
                           for t, k in zip(kappa_tilde.arrays(), kappa.arrays())),
                         activation=kappa_tilde.activation)


def to_bytes(params):
    """Checkpoint layout: magic, D/H/N as <i4, then W1, b1, W2, b2 as <f8 (row-major)."""
    if params.activation != "tanh":
        raise DomainError("only tanh encoders can be checkpointed")
    D, H, N = params.dims
    body = params.flat().astype("<f8").tobytes()
    return CHECKPOINT_MAGIC + struct.pack("<iii", D, H, N) + body


def from_bytes(buf):
    head = len(CHECKPOINT_MAGIC)
    if buf[:head] != CHECKPOINT_MAGIC:
        raise ValueError("not an encoder checkpoint (bad magic)")
    D, H, N = struct.unpack("<iii", buf[head:head + 12])
    theta = np.frombuffer(buf[head + 12:], dtype="<f8").astype(np.float64)
    expect = H * D + H + N * H + N
    if theta.size != expect:
        raise ValueError(f"checkpoint holds {theta.size} floats, expected {expect} for D={D} H={H} N={N}")
    template = EncoderParams(np.zeros((H, D)), np.zeros(H), np.zeros((N, H)), np.zeros(N))
    return template.with_flat(theta)


def save(params, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(params))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
