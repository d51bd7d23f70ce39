"""Alignment objectives: MK-MMD, semantic density distribution (SDD),
paired and self-supervised contrastive losses, and their weighted total.

Every loss accepts plain arrays or graph tensors and returns a scalar
:class:`~semalign.grad.Tensor`, so the same code path serves evaluation and
training.
"""

import contextlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import grad as G
from . import kernels
from .numerics import DimensionError


@dataclass
class SddConfig:
    bandwidth_b: float = 1.0
    use_relative_distance: bool = True
    divergence: str = "kl"  # "kl" or "mse"
    sigma_floor: float = 1e-8
    prob_floor: float = 1e-30
    detach_sigma: bool = False
    detach_normalizer: bool = False

    def __post_init__(self):
        if not self.bandwidth_b > 0:
            raise ValueError("bandwidth_b must be positive")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")
        if self.divergence not in ("kl", "mse"):
            raise ValueError(f"divergence must be 'kl' or 'mse', got {self.divergence!r}")


@dataclass
class LossWeights:
    alpha: float = 1.0
    delta: float = 0.1
    eta: float = 1.0
    mu: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "delta", "eta", "mu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


class EmptyPairsWarning(UserWarning):
    """The paired subset of a batch is empty, so the paired loss is zero."""


class _Counter:
    def __init__(self):
        self.kernel_evals = 0


_active_counters = []


@contextlib.contextmanager
def count_kernel_evaluations():
    """Count pairwise kernel evaluations made by the SDD machinery."""
    c = _Counter()
    _active_counters.append(c)
    try:
        yield c
    finally:
        _active_counters.remove(c)


def _tally(n):
    for c in _active_counters:
        c.kernel_evals += n


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"batch shapes differ: {a.shape} vs {b.shape}")


# -- MK-MMD ----------------------------------------------------------------

def _offdiag_mean(k):
    n = k.shape[0]
    mask = 1.0 - np.eye(n)
    return G.gsum(k * mask) / float(n * (n - 1))


def mkmmd_loss(mk, u, v, unbiased=False, gamma_sq=None):
    """Squared distance between the kernel mean embeddings of ``u`` and ``v``.

    The default is the biased V-statistic (all B^2 terms, diagonals
    included). Gaussian kernels without a fixed bandwidth share one
    median-heuristic value computed on the concatenated batch.
    """
    u, v = G.constant(u), G.constant(v)
    _check_same_shape(u, v)
    if gamma_sq is None and any(
        isinstance(s, kernels.Gaussian) and s.gamma_sq is None for s in mk.specs
    ):
        gamma_sq = kernels.median_heuristic(u, v)
    kuu = kernels.multi_gram(mk, u, u, gamma_sq)
    kvv = kernels.multi_gram(mk, v, v, gamma_sq)
    kuv = kernels.multi_gram(mk, u, v, gamma_sq)
    if unbiased:
        if u.shape[0] < 2:
            raise ValueError("unbiased MMD needs at least 2 rows")
        return _offdiag_mean(kuu) + _offdiag_mean(kvv) - 2.0 * _offdiag_mean(kuv)
    return G.mean(kuu) + G.mean(kvv) - 2.0 * G.mean(kuv)


# -- SDD -------------------------------------------------------------------

def _sigma(t, cfg):
    if not cfg.use_relative_distance:
        return 1.0
    s = G.maximum(G.batch_variance(t), cfg.sigma_floor)
    return G.detach(s) if cfg.detach_sigma else s


def log_kde(x, t, cfg):
    """Log of the relative-distance Parzen density of each row of ``x`` under ``t``.

    Returns a vector Tensor with one entry per row of ``x``.
    """
    x, t = G.constant(x), G.constant(t)
    n = t.shape[0]
    if cfg.use_relative_distance and n < 2:
        raise ValueError("relative-distance density needs at least 2 rows in t")
    if n < 1:
        raise ValueError("density needs a non-empty reference batch")
    b2 = cfg.bandwidth_b ** 2
    _tally(x.shape[0] * n)
    expo = G.pairwise_sq_dists(x, t) * (-1.0 / b2) / _sigma(t, cfg)
    return G.logsumexp_rows(expo) - math.log(2.0 * n * b2 * math.pi)


def kde_density(x, t, cfg):
    """Parzen density of row ``x`` (or of each row of matrix ``x``) under batch ``t``."""
    x = G.constant(x)
    if x.value.ndim == 1:
        return G.exp(log_kde(G.reshape(x, (1, -1)), t, cfg))[0]
    return G.exp(log_kde(x, t, cfg))


def _log_normalize(logk, detach_normalizer):
    z = G.logsumexp(logk)
    return logk - (G.detach(z) if detach_normalizer else z)


def gamma_divergence(t, r, cfg):
    """Divergence between the density profiles of ``t`` under ``t`` and under ``r``.

    Both profiles are evaluated at the points of ``t`` and normalized to sum
    to one over those points before the KL (or squared-error) comparison.
    """
    t, r = G.constant(t), G.constant(r)
    _check_same_shape(t, r)
    if t.shape[0] < 2:
        raise ValueError("gamma_divergence needs at least 2 rows")
    log_p = _log_normalize(log_kde(t, t, cfg), cfg.detach_normalizer)
    log_q = _log_normalize(log_kde(t, r, cfg), cfg.detach_normalizer)
    p = G.exp(log_p)
    if cfg.divergence == "kl":
        log_q = G.maximum(log_q, math.log(cfg.prob_floor))
        return G.gsum(p * (log_p - log_q))
    return G.gsum((p - G.exp(log_q)) ** 2)


def sdd_loss(u, v, cfg=None):
    cfg = cfg or SddConfig()
    return 0.5 * (gamma_divergence(u, v, cfg) + gamma_divergence(v, u, cfg))


# -- contrastive -----------------------------------------------------------

def clip_contrastive_loss(u, v, tau):
    """Symmetric InfoNCE over paired rows of ``u`` and ``v`` at temperature ``tau``."""
    u, v = G.constant(u), G.constant(v)
    _check_same_shape(u, v)
    n = u.shape[0]
    if n == 0:
        warnings.warn("empty paired subset; contrastive loss is zero", EmptyPairsWarning)
        return G.Tensor(0.0)
    logits = G.cosine_similarity(u, v) / tau
    d = G.diag(logits)
    rows = G.gsum(G.logsumexp_rows(logits) - d)
    cols = G.gsum(G.logsumexp_rows(G.transpose(logits)) - d)
    return (rows + cols) / (2.0 * n)


def ssl_loss(z, z_pos, tau, denominator="literal"):
    """Self-supervised contrastive loss of ``z`` against its augmentation ``z_pos``.

    ``denominator="literal"`` sums over the original rows ``z_j`` (self term
    included, positive excluded). ``"positives"`` sums over the augmented
    rows instead, the usual InfoNCE arrangement.
    """
    z, z_pos = G.constant(z), G.constant(z_pos)
    _check_same_shape(z, z_pos)
    cross = G.cosine_similarity(z, z_pos) / tau
    pos = G.diag(cross)
    if denominator == "literal":
        denom = G.logsumexp_rows(G.cosine_similarity(z, z) / tau)
    elif denominator == "positives":
        denom = G.logsumexp_rows(cross)
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    return G.mean(denom - pos)


def gc_loss(paired_u, paired_v, ssl_u, ssl_v, tau, mu):
    """Paired contrastive loss plus ``mu``-weighted self-supervised terms."""
    return clip_contrastive_loss(paired_u, paired_v, tau) + mu * ssl_u + mu * ssl_v


# -- total -----------------------------------------------------------------

@dataclass
class Embeddings:
    """Model outputs for one composed batch.

    The first ``n_paired`` rows of ``u`` and ``v`` are aligned pairs.
    ``u_pos``/``v_pos`` are embeddings of augmented inputs (may be None when
    the self-supervised weight is zero).
    """

    u: object
    v: object
    u_pos: object = None
    v_pos: object = None
    n_paired: int = 0
    tau: object = 0.07


def total_loss(emb, weights, mk, sdd_cfg, ssl_denominator="literal", skip_zero=True,
               mmd_unbiased=False):
    """Weighted objective ``alpha*GC + delta*MMD + eta*SDD``.

    Returns ``(total_tensor, components)`` where ``components`` maps
    ``l_cl, l_ssl_u, l_ssl_v, l_gc, l_mkmmd, l_sdd, l_total`` to floats and
    ``empty_pairs`` to a flag. With ``skip_zero`` the terms whose weight is
    zero are not built (their component value is reported as 0.0).
    """
    u, v = G.constant(emb.u), G.constant(emb.v)
    _check_same_shape(u, v)
    n = emb.n_paired
    comp = {"empty_pairs": n == 0}
    total = G.Tensor(0.0)

    def need(w):
        return w > 0 or not skip_zero

    if need(weights.alpha):
        if n > 0:
            l_cl = clip_contrastive_loss(u[:n], v[:n], emb.tau)
        else:
            l_cl = G.Tensor(0.0)
        if need(weights.mu) and emb.u_pos is not None:
            l_su = ssl_loss(u, emb.u_pos, emb.tau, ssl_denominator)
            l_sv = ssl_loss(v, emb.v_pos, emb.tau, ssl_denominator)
        else:
            l_su = l_sv = G.Tensor(0.0)
        l_gc = l_cl + weights.mu * l_su + weights.mu * l_sv
        total = total + weights.alpha * l_gc
    else:
        l_cl = l_su = l_sv = l_gc = G.Tensor(0.0)
    if need(weights.delta):
        l_mmd = mkmmd_loss(mk, u, v, unbiased=mmd_unbiased)
        total = total + weights.delta * l_mmd
    else:
        l_mmd = G.Tensor(0.0)
    if need(weights.eta):
        l_sdd = sdd_loss(u, v, sdd_cfg)
        total = total + weights.eta * l_sdd
    else:
        l_sdd = G.Tensor(0.0)
    comp.update(
        l_cl=l_cl.item(), l_ssl_u=l_su.item(), l_ssl_v=l_sv.item(), l_gc=l_gc.item(),
        l_mkmmd=l_mmd.item(), l_sdd=l_sdd.item(), l_total=total.item(),
    )
    return total, comp
