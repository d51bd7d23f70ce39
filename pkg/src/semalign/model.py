"""Two-stream encoders: one MLP encoder and projection head per modality."""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import grad as G
from . import numerics

TAU_INIT = 0.07
TAU_MIN, TAU_MAX = 0.01, 100.0
CHECKPOINT_VERSION = 1


@dataclass
class MlpSpec:
    """Layer widths from input to output.

    Hidden layers use ``activation``; the last layer is linear unless
    ``activate_output`` is set (encoders feed a projection head, so their
    output is activated).
    """

    widths: list
    activation: str = "tanh"
    activate_output: bool = False

    def __post_init__(self):
        if len(self.widths) < 2 or any(int(w) < 1 for w in self.widths):
            raise ValueError(f"need at least one layer with positive widths, got {self.widths}")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")


class Mlp:
    def __init__(self, spec, rng, prefix):
        self.spec = spec
        self.layers = []
        for i, (fan_in, fan_out) in enumerate(zip(spec.widths, spec.widths[1:])):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            w = G.Param(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name=f"{prefix}.{i}.w")
            b = G.Param(np.zeros((1, fan_out)), name=f"{prefix}.{i}.b")
            self.layers.append((w, b))

    def params(self):
        return [p for layer in self.layers for p in layer]

    def __call__(self, x):
        act = G.tanh if self.spec.activation == "tanh" else G.relu
        h = G.constant(x)
        if h.shape[1] != self.spec.widths[0]:
            raise numerics.DimensionError(
                f"input width {h.shape[1]} does not match {self.spec.widths[0]}"
            )
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i < last or self.spec.activate_output:
                h = act(h)
        return h


@dataclass
class StreamSpec:
    encoder: MlpSpec
    head: MlpSpec

    def __post_init__(self):
        if self.encoder.widths[-1] != self.head.widths[0]:
            raise ValueError("encoder output width must equal head input width")


def default_stream(in_dim, hidden=(64, 64), latent=16, activation="tanh"):
    return StreamSpec(
        encoder=MlpSpec([in_dim, *hidden], activation, activate_output=True),
        head=MlpSpec([hidden[-1], latent], activation),
    )


class TwoStreamModel:
    """Independent encoder+head per modality and a learnable log-temperature."""

    def __init__(self, spec_a, spec_b, seed=0):
        if spec_a.head.widths[-1] != spec_b.head.widths[-1]:
            raise ValueError("both streams must project to the same latent width")
        self.spec_a, self.spec_b = spec_a, spec_b
        self.seed = seed
        seeds = numerics.derive_seeds(seed, 2, "model")
        rng_a, rng_b = numerics.make_rng(seeds[0]), numerics.make_rng(seeds[1])
        self.encoder_a = Mlp(spec_a.encoder, rng_a, "a.enc")
        self.head_a = Mlp(spec_a.head, rng_a, "a.head")
        self.encoder_b = Mlp(spec_b.encoder, rng_b, "b.enc")
        self.head_b = Mlp(spec_b.head, rng_b, "b.head")
        self.tau_log = G.Param(np.array(math.log(TAU_INIT)), name="tau_log")

    @property
    def latent_dim(self):
        return self.spec_a.head.widths[-1]

    def params(self):
        return [
            *self.encoder_a.params(), *self.head_a.params(),
            *self.encoder_b.params(), *self.head_b.params(), self.tau_log,
        ]

    def tau(self):
        return G.clip(G.exp(self.tau_log), TAU_MIN, TAU_MAX)

    def embed_a(self, x):
        return self.head_a(self.encoder_a(x))

    def embed_b(self, x):
        return self.head_b(self.encoder_b(x))

    def forward(self, x_a, x_b):
        return self.embed_a(x_a), self.embed_b(x_b)

    def state(self):
        return {p.name: p.value.copy() for p in self.params()}

    def load_state(self, state):
        for p in self.params():
            if state[p.name].shape != p.value.shape:
                raise ValueError(f"shape mismatch for {p.name}")
            p.value = np.array(state[p.name], dtype=np.float64, copy=True)


def init(spec_a, spec_b, seed=0):
    return TwoStreamModel(spec_a, spec_b, seed)


def augment(x, strength, rng):
    """Add Gaussian jitter with per-column std ``strength * std(x[:, j])``."""
    x = numerics.as_matrix(x, "x")
    if strength < 0:
        raise ValueError("strength must be >= 0")
    if strength == 0:
        return x.copy()
    col_std = x.std(axis=0, keepdims=True)
    return x + strength * col_std * rng.standard_normal(x.shape)


# -- checkpoints -----------------------------------------------------------

def _spec_dict(s):
    return asdict(s)


def _spec_from(d):
    return StreamSpec(encoder=MlpSpec(**d["encoder"]), head=MlpSpec(**d["head"]))


def save_checkpoint(path, model, extra_params=(), optimizer_state=None, rng_state=None,
                    config_hash=None, epoch=None):
    """Write a versioned ``.npz`` checkpoint.

    ``extra_params`` holds learnables outside the model (kernel logits).
    Metadata (specs, hash, RNG state) is a JSON string stored alongside the
    arrays.
    """
    arrays = {f"param/{k}": v for k, v in model.state().items()}
    for p in extra_params:
        arrays[f"param/{p.name}"] = p.value
    for key, value in (optimizer_state or {}).items():
        arrays[f"opt/{key}"] = np.asarray(value)
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec_a": _spec_dict(model.spec_a),
        "spec_b": _spec_dict(model.spec_b),
        "seed": model.seed,
        "config_hash": config_hash,
        "rng_state": rng_state,
        "epoch": epoch,
        "extra_params": [p.name for p in extra_params],
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(model, extra_param_values, optimizer_state, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        opt = {k[len("opt/"):]: z[k] for k in z.files if k.startswith("opt/")}
    model = TwoStreamModel(_spec_from(meta["spec_a"]), _spec_from(meta["spec_b"]), meta["seed"])
    model.load_state(params)
    extra = {name: params[name] for name in meta["extra_params"]}
    return model, extra, opt, meta
