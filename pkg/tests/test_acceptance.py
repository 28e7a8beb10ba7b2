"""End-to-end acceptance checks, one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists one
PASS/FAIL line per criterion.
"""

import itertools
import math
import time

import numpy as np
import pytest

import oracles
from semdisentangle import cli, config, contrastive as C, disentangle as Dn, pipeline
from semdisentangle import encoder as enc
from semdisentangle import semlang as S
from semdisentangle import simkpi as K
from semdisentangle.numcore import finite_diff_grad, make_rng

crit = pytest.mark.criterion


def random_unit(rng, n, dim):
    Z = rng.normal(size=(n, dim))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def make_bank(rng, M, dim, per, capacity=16):
    bank = C.MemoryBank(M, capacity, dim)
    for l, k in enumerate(per):
        for z in random_unit(rng, int(k), dim):
            bank.insert(z, l)
    return bank


@crit(1, "analytic gradients vs central differences")
def test_gradient_suite(record_property):
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(25):
        rng = make_rng(1000 + trial)
        D, H, N = (int(v) for v in rng.integers(2, 7, size=3))
        p = enc.init_params(D, H, N, rng)
        X = rng.normal(size=(int(rng.integers(1, 4)), D))
        G = rng.normal(size=(X.shape[0], N))
        num = finite_diff_grad(lambda th: float(np.sum(G * enc.forward(p.with_flat(th), X))), p.flat())
        worst = max(worst, oracles.rel_err(enc.backward(p, X, G).flat(), num))
    for trial in range(20):
        rng = make_rng(2000 + trial)
        D, H, N = (int(v) for v in rng.integers(2, 6, size=3))
        M = int(rng.integers(1, 5))
        cfg = C.TrainConfig(tau=float(rng.uniform(0.1, 1.0)), eta=float(rng.uniform(0.5, 1.5)),
                            eps=float(rng.uniform(0.5, 1.5)), M=M, K=int(rng.integers(1, 8)),
                            hidden_dim=H, embed_dim=N)
        kappa = enc.init_params(D, H, N, rng)
        E, cids = make_bank(rng, M, N, rng.integers(1, 6, size=M)).flatten()
        X1 = rng.normal(size=(int(rng.integers(1, 6)), D))
        Bpos = random_unit(rng, X1.shape[0], N)
        idx, mask = C.sample_negative_indices(cids, rng.integers(0, M, size=X1.shape[0]), cfg.K, rng)
        grad = C.batch_objective(kappa, X1, Bpos, E, cids, idx, mask, cfg)[1].flat()
        num = finite_diff_grad(
            lambda th: C.batch_objective(kappa.with_flat(th), X1, Bpos, E, cids, idx, mask, cfg)[0],
            kappa.flat())
        worst = max(worst, oracles.rel_err(grad, num))
    elapsed = time.perf_counter() - t0
    record_property("max_rel_err", f"{worst:.2e}")
    record_property("seconds", f"{elapsed:.1f}")
    assert worst < 1e-4
    assert elapsed < 30


@crit(2, "loss oracles")
def test_loss_oracle_suite(record_property):
    rng = make_rng(7)
    worst_i = worst_p = 0.0
    for _ in range(200):
        dim = int(rng.integers(2, 6))
        a, b = random_unit(rng, 2, dim)
        negs = random_unit(rng, int(rng.integers(0, 9)), dim)
        tau = float(rng.uniform(0.1, 2.0))
        worst_i = max(worst_i, abs(C.instance_loss(a, b, negs, tau) - oracles.instance_loss(a, b, negs, tau)))
        M = int(rng.integers(1, 5))
        bank = make_bank(rng, M, dim, rng.integers(1, 9, size=M))
        got = C.cluster_probability(a, bank, tau)
        want = oracles.cluster_probability(a, [bank.buffer(l) for l in range(M)], tau)
        worst_p = max(worst_p, float(np.max(np.abs(got - want))))
    record_property("instance_max_abs_err", f"{worst_i:.1e}")
    record_property("cluster_prob_max_abs_err", f"{worst_p:.1e}")
    assert worst_i <= 1e-10 and worst_p <= 1e-10
    assert abs(C.cluster_loss(np.full((5, 4), 0.25)) - 1.386294361119891) <= 1e-12
    assert abs(C.cluster_loss([[0.5, 0.5], [1.0, 0.0]]) - math.log(2) / 2) <= 1e-12
    assert abs(C.cluster_loss([[0.2, 0.3, 0.5]]) - 1.0296530140645737) <= 1e-12
    assert C.cluster_loss(np.eye(4)) == 0.0


@crit(3, "probability and range invariants")
def test_probability_and_range_invariants(record_property):
    rng = make_rng(8)
    worst = 0.0
    for _ in range(300):
        M, dim = int(rng.integers(1, 7)), int(rng.integers(2, 6))
        bank = make_bank(rng, M, dim, rng.integers(0, 6, size=M) + (np.arange(M) == 0))
        E, cids = bank.flatten()
        tau = float(rng.uniform(0.02, 2.0))
        P = C.cluster_probability_matrix(random_unit(rng, 5, dim), E, cids, M, tau)
        worst = max(worst, float(np.max(np.abs(P.sum(axis=1) - 1.0))))
        L_D = C.cluster_loss(P)
        assert 0.0 <= L_D <= math.log(M) + 1e-12
        a, b = random_unit(rng, 2, dim)
        k = int(rng.integers(0, 6))
        L_I = C.instance_loss(a, b, random_unit(rng, k, dim), tau)
        assert L_I >= 0.0 and (L_I == 0.0) == (k == 0)
    record_property("max_row_sum_err", f"{worst:.1e}")
    assert worst <= 1e-12
    k, kt = enc.init_params(4, 5, 3, make_rng(1)), enc.init_params(4, 5, 3, make_rng(2))
    assert np.array_equal(enc.momentum_update(kt, k, 1.0).flat(), kt.flat())
    assert np.array_equal(enc.momentum_update(kt, k, 0.0).flat(), k.flat())


def best_permutation_accuracy(hard, truth, n_contents):
    """Exhaustive one-to-one matching of content labels to clusters."""
    M = int(max(hard.max() + 1, n_contents))
    best = 0
    for perm in itertools.permutations(range(M), n_contents):
        best = max(best, sum(int(np.sum((truth == c) & (hard == perm[c]))) for c in range(n_contents)))
    return best / truth.size


@crit(4, "noise detection and clustering on the default mixture")
def test_disentanglement_quality(record_property):
    cfg = config.load_config(None, {"split.theta": "auto"})
    t0 = time.perf_counter()
    data = pipeline.load_data(cfg)
    state, _ = pipeline.fit(data, cfg)
    report = pipeline.split(pipeline.assign(data, state, cfg), cfg)
    elapsed = time.perf_counter() - t0
    mem = np.zeros(len(data), bool)
    mem[report.memorizable_ids] = True
    tp = int(np.sum(mem & data.is_noise))
    precision = tp / max(1, int(mem.sum()))
    recall = tp / int(data.is_noise.sum())
    content = ~data.is_noise
    acc = best_permutation_accuracy(report.hard_labels[content], data.labels[content], cfg["data.n_contents"])
    for k, v in (("precision", precision), ("recall", recall), ("accuracy", acc)):
        record_property(k, f"{v:.3f}")
    record_property("seconds", f"{elapsed:.0f}")
    assert elapsed < 120
    assert acc >= 0.9
    assert precision >= 0.8 and recall >= 0.8


@pytest.fixture(scope="module")
def sweep():
    cfg = config.load_config(None, {"split.theta": "auto"})
    assert len(cfg["sweep.complexities"]) >= 4
    t0 = time.perf_counter()
    records = K.run_sweep(cfg["sweep.complexities"], list(K.SCHEMES), cfg)
    elapsed = time.perf_counter() - t0
    table = {(r.scheme, r.complexity_nats): r for r in records}
    return cfg["sweep.complexities"], table, elapsed


@crit(5, "representation length trend")
def test_length_trend(sweep, record_property):
    cx, table, elapsed = sweep
    vanilla = [table["vanilla", c].avg_repr_len_bits for c in cx]
    top_c = table["contrastive", cx[-1]].avg_repr_len_bits
    record_property("vanilla_bits", ",".join(f"{v:.2f}" for v in vanilla))
    record_property("contrastive_top_bits", f"{top_c:.2f}")
    record_property("sweep_seconds", f"{elapsed:.0f}")
    assert elapsed < 600
    assert all(b >= a for a, b in zip(vanilla, vanilla[1:]))
    assert top_c < vanilla[-1]


@crit(6, "semantic impact trend")
def test_impact_trend(sweep, record_property):
    cx, table, _ = sweep
    vanilla = [table["vanilla", c].semantic_impact for c in cx]
    top_c = table["contrastive", cx[-1]].semantic_impact
    record_property("vanilla_impact", ",".join(f"{v:.4g}" for v in vanilla))
    record_property("contrastive_top_impact", f"{top_c:.4g}")
    assert top_c >= vanilla[-1]
    upper = vanilla[len(vanilla) // 2:]
    assert all(b <= a for a, b in zip(upper, upper[1:]))


@crit(6, "degenerate-split parity identities")
def test_parity_identities():
    cfg = config.load_config(None, {"data.points": 300, "train.epochs": 5})
    data = pipeline.load_data(cfg)
    state, _ = pipeline.fit(data, cfg)
    A = pipeline.assign(data, state, cfg)
    Z = enc.forward(state.kappa, data.X)
    ch = config.channel_config(cfg)
    everything = pipeline.language(data, Dn.all_learnable(A), state, cfg)
    vanilla = K.evaluate_scheme("vanilla", data, everything, ch, Z)
    assert K.evaluate_scheme("contrastive", data, everything, ch, Z).same_kpis(vanilla)
    split = Dn.rank_and_split(Dn.cluster_confidence(A), A.hard_labels, np.nextafter(1.0, 2.0))
    nothing = pipeline.language(data, split, state, cfg)
    classical = K.evaluate_scheme("classical", data, None, ch)
    assert K.evaluate_scheme("contrastive", data, nothing, ch, Z).same_kpis(classical)


@crit(7, "byte-identical reruns")
def test_determinism(tmp_path):
    small = ["--set", "train.epochs=10", "--set", "data.points=600",
             "--set", "sweep.complexities=[0.7, 1.4, 1.6]", "--set", "split.theta=auto"]
    for run in ("a", "b"):
        assert cli.main(["train", "--out", str(tmp_path / run), "--seed", "11"] + small) == 0
        assert cli.main(["sweep", "--out", str(tmp_path / run), "--seed", "11"] + small) == 0
    for name in ("metrics.csv", "kpis.csv", "kpis.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@crit(8, "language complexity metric")
def test_complexity_metric():
    p = enc.init_params(3, 4, 2, make_rng(0))
    q = enc.init_params(3, 4, 2, make_rng(1))
    lang = S.SemanticLanguage(q=4, M=3)
    for i, l in enumerate([0, 2, 1]):
        lang.labels[i], lang.codes[i] = l, np.zeros(2, int)
    one_hot = np.eye(3)[[0, 2, 1]]
    assert abs(S.language_complexity(lang, one_hot, p, q, S.ComplexityConfig(beta=0.0)).total) <= 1e-12
    assert abs(S.language_complexity(lang, one_hot, p, p, S.ComplexityConfig(beta=2.0)).kl) <= 1e-12
    rng = make_rng(3)
    cfg = S.ComplexityConfig(beta=0.7)
    for _ in range(200):
        P = rng.dirichlet(np.ones(3), size=3)
        i = int(rng.integers(0, 3))
        lab = lang.labels[i]
        P2 = P.copy()
        P2[i, lab] += rng.uniform(0, 1 - P[i, lab])
        P2[i] /= P2[i].sum()
        if P2[i, lab] < P[i, lab]:
            continue
        assert (S.language_complexity(lang, P2, p, q, cfg).total
                <= S.language_complexity(lang, P, p, q, cfg).total + 1e-12)
