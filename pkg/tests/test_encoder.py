import numpy as np
import pytest

import oracles
from semdisentangle import encoder as enc
from semdisentangle.numcore import DomainError, finite_diff_grad, make_rng


def test_forward_matches_scalar_oracle():
    rng = make_rng(0)
    p = enc.init_params(5, 7, 3, rng)
    x = rng.normal(size=5)
    np.testing.assert_allclose(enc.forward(p, x), oracles.encoder_forward(p, x), atol=1e-14)


def test_forward_unit_norm_and_batch_consistency():
    rng = make_rng(1)
    p = enc.init_params(6, 10, 4, rng)
    X = rng.normal(size=(25, 6))
    Z = enc.forward(p, X)
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(Z[3], enc.forward(p, X[3]), atol=1e-15)


def test_identity_network_normalises_input():
    x = np.array([3.0, -4.0, 0.0])
    np.testing.assert_allclose(enc.forward(enc.identity_params(3), x), x / 5.0, atol=1e-15)


def test_forward_deterministic_across_inits():
    x = np.linspace(-1, 1, 4)
    a = enc.forward(enc.init_params(4, 8, 2, make_rng(9)), x)
    b = enc.forward(enc.init_params(4, 8, 2, make_rng(9)), x)
    np.testing.assert_array_equal(a, b)


def test_degenerate_embedding_raises_with_row_index():
    p = enc.init_params(3, 4, 2, make_rng(0))
    p.W2[:] = 0.0
    p.b2[:] = 0.0
    with pytest.raises(enc.DegenerateEmbeddingError) as info:
        enc.forward(p, np.ones((2, 3)))
    assert info.value.index == 0
    with pytest.raises(enc.DegenerateEmbeddingError):
        enc.backward(p, np.ones(3), np.ones(2))


@pytest.mark.parametrize("trial", range(24))
def test_backward_matches_finite_differences(trial):
    rng = make_rng(100 + trial)
    D, H, N = rng.integers(1, 6, size=3) + np.array([1, 1, 1])
    p = enc.init_params(D, H, N, rng)
    X = rng.normal(size=(int(rng.integers(1, 4)), D))
    G = rng.normal(size=(X.shape[0], N))
    analytic = enc.backward(p, X, G).flat()
    numeric = finite_diff_grad(lambda th: float(np.sum(G * enc.forward(p.with_flat(th), X))), p.flat())
    assert oracles.rel_err(analytic, numeric) < 1e-4


def test_backward_small_fixed_instance():
    rng = make_rng(2024)
    p = enc.init_params(3, 4, 2, rng)
    x, g = rng.normal(size=3), rng.normal(size=2)
    analytic = enc.backward(p, x, g).flat()
    numeric = finite_diff_grad(lambda th: float(g @ enc.forward(p.with_flat(th), x)), p.flat(), h=1e-5)
    assert oracles.rel_err(analytic, numeric) < 1e-4


def test_backward_zero_upstream_and_determinism():
    rng = make_rng(3)
    p = enc.init_params(4, 5, 3, rng)
    x = rng.normal(size=4)
    assert np.all(enc.backward(p, x, np.zeros(3)).flat() == 0)
    g = rng.normal(size=3)
    np.testing.assert_array_equal(enc.backward(p, x, g).flat(), enc.backward(p, x, g).flat())


def test_sgd_step():
    p = enc.init_params(2, 2, 2, make_rng(0))
    assert np.array_equal(enc.sgd_step(p, p.zeros_like(), 0.02).flat(), p.flat())
    one = enc.EncoderParams(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1))
    g = enc.EncoderParams(np.full((1, 1), 0.5), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    assert enc.sgd_step(one, g, 0.02).W1[0, 0] == pytest.approx(0.99, abs=1e-15)
    g1 = p.with_flat(make_rng(1).normal(size=p.flat().size))
    g2 = p.with_flat(make_rng(2).normal(size=p.flat().size))
    two = enc.sgd_step(enc.sgd_step(p, g1, 0.1), g2, 0.1).flat()
    once = enc.sgd_step(p, p.with_flat(g1.flat() + g2.flat()), 0.1).flat()
    np.testing.assert_allclose(two, once, atol=1e-14)
    with pytest.raises(DomainError):
        enc.sgd_step(p, g1, 0.0)


def test_momentum_update():
    k = enc.init_params(3, 4, 2, make_rng(0))
    kt = enc.init_params(3, 4, 2, make_rng(1))
    assert np.array_equal(enc.momentum_update(kt, k, 1.0).flat(), kt.flat())
    assert np.array_equal(enc.momentum_update(kt, k, 0.0).flat(), k.flat())
    mixed = enc.momentum_update(kt, k, 0.9).flat()
    np.testing.assert_allclose(mixed, 0.9 * kt.flat() + 0.1 * k.flat(), atol=1e-15)
    scalar = enc.EncoderParams(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    target = scalar.with_flat([1.0, 1.0, 1.0, 1.0])
    assert enc.momentum_update(scalar, target, 0.9).W1[0, 0] == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(DomainError):
        enc.momentum_update(kt, k, 1.5)
    with pytest.raises(DomainError):
        enc.momentum_update(kt, enc.init_params(3, 5, 2, make_rng(0)), 0.5)


def test_momentum_converges_to_fixed_target():
    k = enc.init_params(3, 4, 2, make_rng(0))
    kt = enc.init_params(3, 4, 2, make_rng(1))
    for _ in range(400):
        kt = enc.momentum_update(kt, k, 0.9)
    np.testing.assert_allclose(kt.flat(), k.flat(), atol=1e-15)


def test_checkpoint_round_trip(tmp_path):
    p = enc.init_params(5, 6, 3, make_rng(4))
    enc.save(p, tmp_path / "e.ckpt")
    q = enc.load(tmp_path / "e.ckpt")
    assert q.dims == (5, 6, 3)
    np.testing.assert_array_equal(p.flat(), q.flat())
    assert enc.to_bytes(p) == enc.to_bytes(q)
    with pytest.raises(ValueError):
        enc.from_bytes(b"garbage!" + enc.to_bytes(p)[8:])
    with pytest.raises(ValueError):
        enc.from_bytes(enc.to_bytes(p)[:-8])
