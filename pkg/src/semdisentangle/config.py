"""Run configuration: one flat mapping of dotted keys.

Files are YAML. Either flat (``train.lr: 0.02``) or sectioned
(``train: {lr: 0.02}``) layouts are accepted; sections are flattened on
load. Every key must be known, and values are coerced to the type of the
default.
"""

import copy
import math

import yaml

from .augment import PerturbPolicy
from .contrastive import TrainConfig
from .datagen import MixtureConfig
from .numcore import DomainError
from .semlang import ComplexityConfig
from .simkpi import ChannelConfig

DEFAULTS = {
    "seed": 0,
    "out": "runs",
    # data source
    "data.kind": "mixture",            # mixture | binary
    "data.n_contents": 4,
    "data.dim": 16,
    "data.points": 2000,
    "data.noise_fraction": 0.2,
    "data.separation": 8.0,
    "data.path": "",
    "data.record_bytes": 256,
    "data.normalize": True,
    "data.standardize": True,          # z-score features before encoding
    # training
    "train.tau": 0.1,
    "train.eta": 1.0,
    "train.eps": 1.0,
    "train.omega": 0.9,
    "train.lr": 0.02,
    "train.epochs": 200,
    "train.batch_size": 32,
    "train.K": 32,
    "train.M": 5,
    "train.capacity_per_cluster": 64,
    "train.hidden_dim": 32,
    "train.embed_dim": 16,
    # perturbations
    "augment.noise_sigma": 0.1,
    "augment.mask_fraction": 0.0,
    "augment.scale_jitter": 0.1,
    # split: a number in [0, 1] or "auto" (largest confidence gap)
    "split.theta": 0.7,
    # language
    "language.q": 4,
    "language.beta": 1.0,
    "language.prior_sigma": 1.0,
    "language.posterior_sigma": 1.0,
    # channel
    "channel.rate_bits_per_s": 1.0e6,
    "channel.packet_bits": 1024,
    # sweep
    "sweep.complexities": [0.7, 1.1, 1.4, 1.6],
    "sweep.schemes": ["classical", "vanilla", "contrastive"],
    "sweep.workers": 1,
}


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"config key {key!r}: {msg}")
        self.key = key


def flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, value, default):
    if isinstance(value, str) and not isinstance(default, str):
        try:
            value = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse {value!r}") from exc
    if key == "split.theta":
        if value == "auto":
            return value
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected a number or 'auto', got {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(key, f"expected a finite number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            value = [value]
        return list(value)
    if value is None:
        return ""
    return str(value)


def parse_overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (key -> value)."""
    cfg = copy.deepcopy(DEFAULTS)
    layers = []
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config file must hold a mapping")
        layers.append(flatten(raw))
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        for k, v in layer.items():
            if k not in DEFAULTS:
                raise ConfigError(k, "unknown key")
            cfg[k] = _coerce(k, v, DEFAULTS[k])
    validate(cfg)
    return cfg


def validate(cfg):
    """Check every module precondition up front, naming the offending key."""
    def check(key, ok, msg):
        if not ok:
            raise ConfigError(key, msg)

    check("data.kind", cfg["data.kind"] in ("mixture", "binary"), "must be 'mixture' or 'binary'")
    if cfg["data.kind"] == "binary":
        check("data.path", bool(cfg["data.path"]), "required for binary data")
        check("data.record_bytes", cfg["data.record_bytes"] >= 1, "must be positive")
    theta = cfg["split.theta"]
    check("split.theta", theta == "auto" or 0.0 <= theta <= 1.0, "must be 'auto' or lie in [0, 1]")
    check("language.q", 1 <= cfg["language.q"] <= 16, "must lie in [1, 16]")
    cx = cfg["sweep.complexities"]
    check("sweep.complexities", len(cx) >= 1, "needs at least one value")
    check("sweep.complexities", all(b > a for a, b in zip(cx, cx[1:])), "must be strictly increasing")
    for s in cfg["sweep.schemes"]:
        check("sweep.schemes", s in ("classical", "vanilla", "contrastive"), f"unknown scheme {s!r}")
    check("sweep.workers", cfg["sweep.workers"] >= 1, "must be positive")
    builders = [
        ("data.", lambda: mixture_config(cfg)),
        ("train.", lambda: train_config(cfg)),
        ("augment.", lambda: perturb_policy(cfg)),
        ("language.", lambda: complexity_config(cfg)),
        ("channel.", lambda: channel_config(cfg)),
    ]
    for prefix, build in builders:
        try:
            build()
        except DomainError as exc:
            raise ConfigError(prefix.rstrip("."), str(exc)) from exc


def perturb_policy(cfg):
    return PerturbPolicy(cfg["augment.noise_sigma"], cfg["augment.mask_fraction"],
                         cfg["augment.scale_jitter"])


def train_config(cfg, seed=None):
    keys = ("tau", "eta", "eps", "omega", "lr", "epochs", "batch_size", "K", "M",
            "capacity_per_cluster", "hidden_dim", "embed_dim")
    return TrainConfig(**{k: cfg[f"train.{k}"] for k in keys},
                       seed=cfg["seed"] if seed is None else seed, policy=perturb_policy(cfg))


def mixture_config(cfg, seed=None, noise_fraction=None):
    return MixtureConfig(
        n_contents=cfg["data.n_contents"], dim=cfg["data.dim"], points=cfg["data.points"],
        noise_fraction=cfg["data.noise_fraction"] if noise_fraction is None else noise_fraction,
        separation=cfg["data.separation"], seed=cfg["seed"] if seed is None else seed)


def complexity_config(cfg):
    return ComplexityConfig(cfg["language.beta"], cfg["language.prior_sigma"],
                            cfg["language.posterior_sigma"])


def channel_config(cfg):
    return ChannelConfig(cfg["channel.rate_bits_per_s"], cfg["channel.packet_bits"])


def dump(cfg):
    return yaml.safe_dump(dict(sorted(cfg.items())), sort_keys=False)
