"""Gaussian and polynomial kernels and their learnable convex combination."""

from dataclasses import dataclass, field

import numpy as np

from . import grad as G
from . import numerics


@dataclass(frozen=True)
class Gaussian:
    """``exp(-|a-b|^2 / (2 gamma_sq))``. ``gamma_sq=None`` means median heuristic."""

    gamma_sq: float | None = None

    def __post_init__(self):
        if self.gamma_sq is not None and not self.gamma_sq > 0:
            raise ValueError("gamma_sq must be positive")


@dataclass(frozen=True)
class Polynomial:
    """``(<a, b> + coef0) ** degree``."""

    coef0: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError("degree must be a positive integer")


def median_heuristic(a, b):
    """Median pairwise squared distance over the concatenation of ``a`` and ``b``.

    Only off-diagonal pairs count. Computed on values, so no gradient flows.
    """
    x = np.concatenate([_values(a), _values(b)], axis=0)
    d = numerics.pairwise_sq_dists(x, x)
    iu = np.triu_indices(len(x), k=1)
    med = float(np.median(d[iu])) if len(iu[0]) else 0.0
    return med if med > 0 else 1.0


def _values(x):
    return x.value if isinstance(x, G.Tensor) else numerics.as_matrix(x)


def gram(kernel, a, b, gamma_sq=None):
    """Kernel matrix between rows of ``a`` and ``b``.

    Works on plain arrays and on graph tensors; the result is a Tensor.
    ``gamma_sq`` overrides a Gaussian kernel's bandwidth (used when a shared
    median-heuristic value has been computed for a batch).
    """
    a, b = G.constant(a), G.constant(b)
    if a.shape[1] != b.shape[1]:
        raise numerics.DimensionError(f"column mismatch: {a.shape} vs {b.shape}")
    if isinstance(kernel, Gaussian):
        g2 = gamma_sq or kernel.gamma_sq or median_heuristic(a, b)
        return G.exp(G.pairwise_sq_dists(a, b) * (-1.0 / (2.0 * g2)))
    if isinstance(kernel, Polynomial):
        return G.power(G.matmul(a, G.transpose(b)) + kernel.coef0, kernel.degree)
    raise TypeError(f"unknown kernel {kernel!r}")


@dataclass
class MultiKernel:
    """Convex combination of base kernels with weights ``softmax(beta_logits)``."""

    specs: list
    beta_logits: G.Param = field(default=None)

    def __post_init__(self):
        if not self.specs:
            raise ValueError("MultiKernel needs at least one kernel")
        if self.beta_logits is None:
            self.beta_logits = G.Param(np.zeros(len(self.specs)), name="beta_logits")
        elif not isinstance(self.beta_logits, G.Tensor):
            self.beta_logits = G.Param(np.asarray(self.beta_logits, dtype=np.float64), name="beta_logits")
        if self.beta_logits.shape != (len(self.specs),):
            raise ValueError("one logit per kernel required")

    @classmethod
    def default(cls):
        return cls([Gaussian(), Polynomial(1.0, 2)])

    def betas(self):
        return G.softmax(self.beta_logits)

    def beta_values(self):
        z = self.beta_logits.value
        e = np.exp(z - z.max())
        return e / e.sum()


def multi_gram(mk, a, b, gamma_sq=None):
    beta = mk.betas()
    total = None
    for i, spec in enumerate(mk.specs):
        term = beta[i] * gram(spec, a, b, gamma_sq=gamma_sq)
        total = term if total is None else total + term
    return total
