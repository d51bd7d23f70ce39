"""Dense float64 matrix primitives shared by the losses, kernels and model.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Every
function here is pure and validates its inputs.
"""

import zlib

import numpy as np

NORM_FLOOR = 1e-12


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible for an operation."""


def as_matrix(x, name="matrix"):
    """Coerce ``x`` to a 2-D float64 array and check every entry is finite."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _check_cols(a, b):
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"column mismatch: {a.shape} vs {b.shape}"
        )


def make_rng(seed):
    """Seeded PCG64 generator; the same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seeds(seed, n, stream=None):
    """``n`` independent child seeds derived from ``seed``.

    ``stream`` names a consumer (``"data"``, ``"model"``, ...) so that modules
    handed the same global seed still draw unrelated numbers.
    """
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    if stream is not None:
        entropy.append(zlib.crc32(stream.encode()))
    children = np.random.SeedSequence(entropy).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def pairwise_sq_dists(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def row_norms(a):
    return np.maximum(np.sqrt(np.sum(a * a, axis=1)), NORM_FLOOR)


def cosine_similarity_matrix(a, b):
    """Cosine similarity between every row of ``a`` and every row of ``b``.

    Row norms are floored at ``NORM_FLOOR`` so a zero row yields zero
    similarity instead of a division by zero.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _check_cols(a, b)
    an = a / row_norms(a)[:, None]
    bn = b / row_norms(b)[:, None]
    return an @ bn.T


def batch_variance(t):
    """Bessel-corrected total variance: sum of squared deviations over B-1."""
    t = as_matrix(t, "t")
    n = t.shape[0]
    if n < 2:
        raise ValueError(f"batch variance needs at least 2 rows, got {n}")
    centered = t - t.mean(axis=0, keepdims=True)
    return float(np.sum(centered * centered) / (n - 1))


def logsumexp_rows(m):
    m = as_matrix(m, "m")
    top = m.max(axis=1, keepdims=True)
    return (top + np.log(np.sum(np.exp(m - top), axis=1, keepdims=True)))[:, 0]


def finite_diff_grad(f, at, h=1e-5):
    """Central-difference gradient of scalar ``f`` at matrix ``at``."""
    x = np.array(at, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        f_plus = float(f(x.copy()))
        x[idx] = orig - h
        f_minus = float(f(x.copy()))
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(a, b, floor=1e-12):
    """Norm-wise relative error ``|a-b| / max(|a|, |b|)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)
