"""Semi-supervised training loop over composed paired/unpaired batches."""

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import grad as G
from . import kernels, losses, numerics
from .model import augment, save_checkpoint

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """The objective became non-finite; ``diagnostics`` holds the evidence."""

    def __init__(self, message, diagnostics):
        super().__init__(f"{message}: {json.dumps(diagnostics, sort_keys=True)}")
        self.diagnostics = diagnostics


@dataclass
class MultimodalBatch:
    paired_a: np.ndarray
    paired_b: np.ndarray
    unpaired_a: np.ndarray
    unpaired_b: np.ndarray
    resampled: bool = False  # some split was drawn with replacement

    @property
    def n_paired(self):
        return len(self.paired_a)

    def full_a(self):
        return np.concatenate([self.paired_a, self.unpaired_a], axis=0)

    def full_b(self):
        return np.concatenate([self.paired_b, self.unpaired_b], axis=0)


def paired_count(n_pairs, n_unpaired, batch_size):
    """Rows of a batch taken from the paired pool: ``floor(N / (M + N) * B)``."""
    if n_pairs + n_unpaired == 0:
        raise ValueError("dataset is empty")
    return min(max((n_pairs * batch_size) // (n_pairs + n_unpaired), 0), batch_size)


def _pick(rng, pool_size, k):
    if k <= pool_size:
        return rng.choice(pool_size, size=k, replace=False), False
    if pool_size == 0:
        raise ValueError(f"cannot draw {k} rows from an empty pool")
    return rng.choice(pool_size, size=k, replace=True), True


def compose_batch(dataset, batch_size, rng):
    """Draw one batch: paired rows first, the rest from each unpaired pool.

    The unpaired size used in the ratio is the smaller of the two pools.
    """
    n_pairs = len(dataset.paired_a)
    m = min(len(dataset.unpaired_a), len(dataset.unpaired_b))
    n = paired_count(n_pairs, m, batch_size)
    idx_p, rp = _pick(rng, n_pairs, n) if n else (np.zeros(0, int), False)
    idx_a, ra = _pick(rng, len(dataset.unpaired_a), batch_size - n) if batch_size > n else (np.zeros(0, int), False)
    idx_b, rb = _pick(rng, len(dataset.unpaired_b), batch_size - n) if batch_size > n else (np.zeros(0, int), False)
    resampled = rp or ra or rb
    if resampled:
        log.warning("batch of %d exceeds available data; sampled with replacement", batch_size)
    return MultimodalBatch(
        paired_a=dataset.paired_a[idx_p], paired_b=dataset.paired_b[idx_p],
        unpaired_a=dataset.unpaired_a[idx_a], unpaired_b=dataset.unpaired_b[idx_b],
        resampled=resampled,
    )


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.value = p.value - self.lr * update

    def state(self):
        out = {"t": np.array(self.t)}
        for i, p in enumerate(self.params):
            out[f"m/{p.name}"] = self.m[i]
            out[f"v/{p.name}"] = self.v[i]
        return out


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    sdd: losses.SddConfig = field(default_factory=losses.SddConfig)
    kernels: list = field(default_factory=lambda: [kernels.Gaussian(), kernels.Polynomial(1.0, 2)])
    learn_beta: bool = True
    mmd_unbiased: bool = False
    ssl_denominator: str = "literal"
    augment_strength: float = 0.1
    eval_every: int = 5
    ks: tuple = (1, 5)
    seed: int = 0

    def __post_init__(self):
        w = self.weights
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if (w.eta > 0 or w.delta > 0) and self.batch_size < 2:
            raise ValueError("distribution losses need batch_size >= 2")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")


def evaluate_retrieval(u, v, ks=(1, 5)):
    """Recall@k in both directions for row-aligned query/target embeddings.

    Candidates are ranked by cosine similarity; ties go to the lower index.
    For ``k`` larger than the number of rows, recall is taken at ``Q``.
    """
    sim = numerics.cosine_similarity_matrix(u, v)
    q = sim.shape[0]
    out = {}
    for direction, s in (("a2b", sim), ("b2a", sim.T)):
        true = np.diag(s)[:, None]
        col = np.arange(q)
        ahead = (s > true) | ((s == true) & (col[None, :] < col[:, None]))
        rank = ahead.sum(axis=1)
        for k in ks:
            out[f"recall@{k}_{direction}"] = float(np.mean(rank < min(k, q)))
    return out


def _embeddings(model, batch, cfg, rng):
    x_a, x_b = batch.full_a(), batch.full_b()
    u, v = model.forward(x_a, x_b)
    u_pos = v_pos = None
    if cfg.weights.alpha > 0 and cfg.weights.mu > 0:
        u_pos = model.embed_a(augment(x_a, cfg.augment_strength, rng))
        v_pos = model.embed_b(augment(x_b, cfg.augment_strength, rng))
    return losses.Embeddings(u, v, u_pos, v_pos, batch.n_paired, model.tau())


def _require_finite(u, v, epoch, params):
    if not (np.all(np.isfinite(u.value)) and np.all(np.isfinite(v.value))):
        raise TrainingDiverged(
            "non-finite embeddings",
            {"epoch": epoch, "grad_norms": _grad_norms(params),
             "param_finite": {p.name: bool(np.all(np.isfinite(p.value))) for p in params}},
        )


def _probe_components(model, probe, probe_noise, mk, cfg):
    x_a, x_b = probe.full_a(), probe.full_b()
    u, v = model.forward(x_a, x_b)
    emb = losses.Embeddings(
        u, v, model.embed_a(x_a + probe_noise[0]), model.embed_b(x_b + probe_noise[1]),
        probe.n_paired, model.tau(),
    )
    _, comp = losses.total_loss(
        emb, cfg.weights, mk, cfg.sdd, ssl_denominator=cfg.ssl_denominator,
        skip_zero=False, mmd_unbiased=cfg.mmd_unbiased,
    )
    return comp


def _grad_norms(params):
    return {p.name: float(np.linalg.norm(p.grad)) for p in params}


def steps_per_epoch(dataset, batch_size):
    n = len(dataset.paired_a)
    m = min(len(dataset.unpaired_a), len(dataset.unpaired_b))
    return max(1, math.ceil((n + m) / batch_size))


def train(dataset, model, cfg, out_dir=None, config_hash=None, mk=None):
    """Optimize ``model`` in place; returns ``(model, history, mk)``.

    ``history`` has one record per evaluation point (epoch 0 included). Loss
    components are measured on a probe batch fixed at the start of the run;
    ``train_l_total`` is the mean objective over that epoch's steps. With
    ``out_dir`` set, a checkpoint is written at every evaluation point.
    """
    seeds = numerics.derive_seeds(cfg.seed, 3, "train")
    rng = numerics.make_rng(seeds[0])
    probe_rng = numerics.make_rng(seeds[1])
    mk = mk or kernels.MultiKernel(list(cfg.kernels))
    params = model.params() + ([mk.beta_logits] if cfg.learn_beta else [])
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)

    probe = compose_batch(dataset, cfg.batch_size, probe_rng)
    probe_noise = tuple(
        augment(x, cfg.augment_strength, probe_rng) - x for x in (probe.full_a(), probe.full_b())
    )
    steps = steps_per_epoch(dataset, cfg.batch_size)
    history = []

    def record(epoch, train_total):
        rec = {"epoch": epoch}
        _require_finite(*model.forward(probe.full_a(), probe.full_b()), epoch, params)
        comp = _probe_components(model, probe, probe_noise, mk, cfg)
        for key in ("l_cl", "l_ssl_u", "l_ssl_v", "l_mkmmd", "l_sdd", "l_total"):
            rec[key] = comp[key]
        rec["train_l_total"] = train_total
        if len(dataset.test_a):
            ut, vt = model.forward(dataset.test_a, dataset.test_b)
            rec.update(evaluate_retrieval(ut.value, vt.value, cfg.ks))
        rec["tau"] = float(model.tau().value)
        rec["beta"] = [float(b) for b in mk.beta_values()]
        history.append(rec)
        if out_dir is not None:
            save_checkpoint(
                os.path.join(out_dir, f"checkpoint_epoch{epoch:04d}.npz"), model,
                extra_params=[mk.beta_logits], optimizer_state=opt.state(),
                rng_state=rng.bit_generator.state, config_hash=config_hash, epoch=epoch,
            )

    record(0, None)
    for epoch in range(1, cfg.epochs + 1):
        totals = []
        for _ in range(steps):
            batch = compose_batch(dataset, cfg.batch_size, rng)
            emb = _embeddings(model, batch, cfg, rng)
            _require_finite(emb.u, emb.v, epoch, params)
            loss, comp = losses.total_loss(
                emb, cfg.weights, mk, cfg.sdd, ssl_denominator=cfg.ssl_denominator,
                mmd_unbiased=cfg.mmd_unbiased,
            )
            if not math.isfinite(comp["l_total"]):
                raise TrainingDiverged("non-finite loss", {"epoch": epoch, "components": comp})
            try:
                G.value_and_grad(loss, params)
            except FloatingPointError:
                raise TrainingDiverged(
                    "non-finite gradient",
                    {"epoch": epoch, "components": comp, "grad_norms": _grad_norms(params)},
                ) from None
            opt.step()
            totals.append(comp["l_total"])
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            record(epoch, float(np.mean(totals)))
    return model, history, mk


def write_history(history, path):
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_history(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
