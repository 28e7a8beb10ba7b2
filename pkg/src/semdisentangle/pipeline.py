"""End-to-end stages shared by the command line and the demos.

Every function takes the flat run configuration produced by
:func:`semdisentangle.config.load_config`.
"""

from pathlib import Path

import numpy as np

from . import config as C
from . import contrastive, datagen, disentangle, semlang, simkpi
from . import encoder as enc
from .numcore import child_seeds, make_rng

ENCODER_FILE = "encoder.ckpt"
MOMENTUM_FILE = "momentum_encoder.ckpt"
BANK_FILE = "memory_bank.bin"


class SweepError(RuntimeError):
    def __init__(self, msg, complexity):
        super().__init__(msg)
        self.complexity = complexity


def standardize(X):
    """Zero-mean, unit-variance columns; constant columns are only centred."""
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def load_data(cfg, seed=None, noise_fraction=None):
    if cfg["data.kind"] == "binary":
        data = datagen.ingest_binary(cfg["data.path"], cfg["data.record_bytes"], cfg["data.normalize"])
    else:
        data = datagen.synth_mixture(C.mixture_config(cfg, seed, noise_fraction))
    if cfg["data.standardize"]:
        data.X = standardize(data.X)
    return data


def fit(data, cfg, seed=None, on_epoch=None):
    """Bootstrap and train; returns the final state and per-epoch metrics."""
    return contrastive.train(data, C.train_config(cfg, seed), on_epoch=on_epoch)


def assign(data, state, cfg):
    return disentangle.assign_all(data, state.kappa, state.bank, cfg["train.tau"])


def split(A, cfg):
    return disentangle.split(A, cfg["split.theta"])


def language(data, split_report, state, cfg):
    return semlang.build_language(data, split_report, state.kappa, cfg["language.q"], M=state.bank.M)


def save_state(state, out):
    out = Path(out)
    enc.save(state.kappa, out / ENCODER_FILE)
    enc.save(state.kappa_tilde, out / MOMENTUM_FILE)
    (out / BANK_FILE).write_bytes(state.bank.to_bytes())


def load_state(directory):
    d = Path(directory)
    kappa = enc.load(d / ENCODER_FILE)
    kappa_tilde = enc.load(d / MOMENTUM_FILE)
    bank = contrastive.MemoryBank.from_bytes((d / BANK_FILE).read_bytes())
    return contrastive.TrainState(kappa, kappa_tilde, bank)


def check_compatible(state, data, cfg):
    """Raise ``ValueError`` when a checkpoint cannot serve this config's data."""
    D, H, N = state.kappa.dims
    if D != data.dim:
        raise ValueError(f"checkpoint input dim {D} does not match data dim {data.dim}")
    if state.bank.dim != N:
        raise ValueError(f"memory bank dim {state.bank.dim} does not match encoder output dim {N}")
    if state.bank.M != cfg["train.M"]:
        raise ValueError(f"checkpoint has {state.bank.M} clusters, config asks for {cfg['train.M']}")


def initial_params(cfg, input_dim, seed=None):
    """The encoder initialisation ``fit`` starts from (same seed, same draws)."""
    tc = C.train_config(cfg, seed)
    return enc.init_params(input_dim, tc.hidden_dim, tc.embed_dim, make_rng(tc.seed))


def sweep_seeds(seed, n):
    """Independent integer seeds for ``n`` sweep points, derived from ``seed``."""
    return [int(c.generate_state(1)[0]) for c in child_seeds(seed, n)]


def evaluate_all(data, state, cfg, schemes, complexity=0.0):
    """KPI records of ``schemes`` for one trained pipeline."""
    ch = C.channel_config(cfg)
    A = assign(data, state, cfg)
    Z = enc.forward(state.kappa, data.X)
    out = []
    for scheme in schemes:
        lang = None
        if scheme == "vanilla":
            lang = language(data, disentangle.all_learnable(A), state, cfg)
        elif scheme == "contrastive":
            lang = language(data, split(A, cfg), state, cfg)
        out.append(simkpi.evaluate_scheme(scheme, data, lang, ch, Z, complexity))
    return out


def sweep_point(complexity, schemes, cfg, seed):
    """Generate data at ``complexity`` nats, train once, evaluate every scheme."""
    try:
        n, f = datagen.mixture_for_complexity(complexity, cfg["data.n_contents"])
        data = load_data({**cfg, "data.n_contents": n}, seed=seed, noise_fraction=f)
        state, _ = fit(data, cfg, seed=seed)
        return evaluate_all(data, state, cfg, schemes, complexity)
    except Exception as exc:
        raise SweepError(f"sweep point {complexity:.9g} nats: {exc}", complexity) from exc
