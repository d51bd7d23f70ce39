"""Run configuration: YAML file <-> typed sections, presets, and hashing."""

import copy
import dataclasses
import hashlib
import json

import yaml

from . import kernels, losses
from .data import SyntheticSpec
from .sampling import SweepConfig
from .trainer import TrainConfig

DEFAULT_CONFIG_TEXT = """\
# semalign run configuration. Every key is optional; omitted keys take the
# values shown here.

seed: 0              # global seed; data, model init and training derive from it
out_dir: runs/default

data:
  semantic_dim: 8          # width of the shared latent semantic variable
  clusters: 8              # components of the shared Gaussian mixture
  dim_a: 24                # observed width of modality A
  dim_b: 32                # observed width of modality B
  map_a: linear            # identity | linear | tanh
  map_b: tanh
  noise_std: 0.05          # iid observation noise
  center_spread: 2.0       # std of mixture centers
  cluster_scale: [0.4, 1.0]  # per-component std drawn uniformly from this range
  weight_concentration: 2.0  # Dirichlet concentration of component weights
  nuisance_dim: 0          # modality-specific factors unrelated to semantics
  nuisance_scale: 0.0
  n_pairs: 100             # N, aligned training pairs
  n_unpaired_a: 900        # M1
  n_unpaired_b: 900        # M2
  test_pairs: 200          # held-out aligned pairs for retrieval

model:
  hidden: [64, 64]         # encoder hidden widths (tanh)
  latent: 16               # shared embedding width K
  activation: tanh         # tanh | relu

train:
  mode: setclip            # clip | setclip | unsup | sdd-only | ssl-only
  batch_size: 64
  epochs: 50
  lr: 0.001
  beta1: 0.9
  beta2: 0.999
  eps: 1.0e-8
  augment_strength: 0.1    # jitter std as a fraction of each input column's std
  eval_every: 5
  ks: [1, 5]
  ssl_denominator: literal # literal | positives
  mmd_unbiased: false
  learn_beta: true

weights:                   # used as-is for mode=setclip; other modes override
  alpha: 1.0               # paired + self-supervised group
  delta: 0.1               # MK-MMD
  eta: 1.0                 # SDD
  mu: 0.1                  # self-supervised terms inside the paired group

sdd:
  bandwidth_b: 1.0
  use_relative_distance: true
  divergence: kl           # kl | mse
  sigma_floor: 1.0e-8
  prob_floor: 1.0e-30
  detach_sigma: false
  detach_normalizer: false

kernels:
  gaussian_gamma_sq: null  # null = median heuristic per batch
  poly_coef0: 1.0
  poly_degree: 2

sweep:
  sizes: [2, 4, 8, 16, 32, 64, 128, 256]
  dims: [2, 16, 64]
  trials: 50
  seed: 0
  reference: uniform       # uniform | mixture
"""

MODES = ("clip", "setclip", "unsup", "sdd-only", "ssl-only")


class ConfigError(ValueError):
    pass


def defaults():
    return yaml.safe_load(DEFAULT_CONFIG_TEXT)


def merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            out[key] = merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def resolve(raw=None):
    """Fill defaults into a partial config dict and validate every section."""
    cfg = merge(defaults(), raw or {})
    if cfg["train"]["mode"] not in MODES:
        raise ConfigError(f"train.mode must be one of {MODES}")
    try:
        build(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    return resolve(raw)


def dump(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


def config_hash(cfg):
    """Hash of everything that determines a trained model (not paths)."""
    keyed = {k: v for k, v in cfg.items() if k not in ("out_dir", "sweep")}
    blob = json.dumps(keyed, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def mode_weights(mode, base):
    """Loss weights for a preset; ``base`` supplies the setclip values."""
    if mode == "clip":
        return losses.LossWeights(base.alpha, 0.0, 0.0, 0.0)
    if mode == "unsup":
        return losses.LossWeights(0.0, base.delta, base.eta, base.mu)
    if mode == "sdd-only":
        return losses.LossWeights(base.alpha, base.delta, base.eta, 0.0)
    if mode == "ssl-only":
        return losses.LossWeights(base.alpha, base.delta, 0.0, base.mu)
    return base


def build(cfg):
    """Typed objects for one resolved config dict.

    Returns a dict with ``spec`` (SyntheticSpec), ``train`` (TrainConfig),
    ``sweep`` (SweepConfig), ``model`` (dict) and ``mode``.
    """
    d = dict(cfg["data"])
    d["cluster_scale"] = tuple(d["cluster_scale"])
    spec = SyntheticSpec(seed=cfg["seed"], **d)
    t = dict(cfg["train"])
    mode = t.pop("mode")
    k = cfg["kernels"]
    base = losses.LossWeights(**cfg["weights"])
    train = TrainConfig(
        weights=mode_weights(mode, base),
        sdd=losses.SddConfig(**cfg["sdd"]),
        kernels=[kernels.Gaussian(k["gaussian_gamma_sq"]), kernels.Polynomial(k["poly_coef0"], k["poly_degree"])],
        seed=cfg["seed"],
        ks=tuple(t.pop("ks")),
        **t,
    )
    sweep = SweepConfig(**cfg["sweep"])
    return {"spec": spec, "train": train, "sweep": sweep, "model": dict(cfg["model"]), "mode": mode}


def with_overrides(cfg, **sections):
    """Copy of ``cfg`` with ``section={key: value}`` overrides applied."""
    return resolve(merge(cfg, sections))
