"""Batch representativeness under random sampling.

Two batches drawn independently from the same distribution are compared via
their soft Parzen-window density profiles; the average squared gap shrinks as
the batch size grows. Sweeping the size shows where batches become
representative of their source.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics


def parzen_density(x, t, sigma_floor=1e-8):
    """Density of each row of ``x`` under batch ``t`` with prefactor ``1/(B pi)``.

    Squared distances are scaled by the Bessel-corrected variance of ``t``;
    there is no bandwidth parameter in this variant.
    """
    x = numerics.as_matrix(x, "x")
    t = numerics.as_matrix(t, "t")
    sigma = max(numerics.batch_variance(t), sigma_floor)
    d = numerics.pairwise_sq_dists(x, t)
    return np.exp(-d / sigma).sum(axis=1) / (t.shape[0] * math.pi)


def representativeness_gap(t, r, sigma_floor=1e-8):
    """Mean squared gap between the two batches' density profiles, both ways."""
    t = numerics.as_matrix(t, "t")
    r = numerics.as_matrix(r, "r")
    if t.shape != r.shape:
        raise numerics.DimensionError(f"batch shapes differ: {t.shape} vs {r.shape}")
    if t.shape[0] < 2:
        raise ValueError("need at least 2 rows per batch")
    ktt = parzen_density(t, t, sigma_floor)
    ktr = parzen_density(t, r, sigma_floor)
    krr = parzen_density(r, r, sigma_floor)
    krt = parzen_density(r, t, sigma_floor)
    return float(np.mean((ktt - ktr) ** 2) + np.mean((krr - krt) ** 2))


@dataclass
class SweepConfig:
    sizes: list = field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128, 256])
    dims: list = field(default_factory=lambda: [2, 16, 64])
    trials: int = 50
    seed: int = 0
    reference: str = "uniform"  # or "mixture"

    def __post_init__(self):
        if any(s < 2 for s in self.sizes):
            raise ValueError("batch sizes must be >= 2")
        if list(self.sizes) != sorted(self.sizes):
            raise ValueError("sizes must be ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.reference not in ("uniform", "mixture"):
            raise ValueError(f"unknown reference distribution {self.reference!r}")


def _draw(rng, size, dim, reference, mixture):
    if reference == "uniform":
        return rng.uniform(0.0, 1.0, size=(size, dim))
    centers, scale = mixture
    labels = rng.integers(0, len(centers), size=size)
    return centers[labels] + scale * rng.standard_normal((size, dim))


def sweep(cfg):
    """Mean and spread of the gap for every (size, dim) cell.

    Each trial draws its batch pair from its own derived seed, so results do
    not depend on evaluation order. Rows are sorted by size, then dim.
    ``normalized_D`` is each cell's mean divided by the smallest size's mean
    for the same dim.
    """
    rows = []
    for dim_idx, dim in enumerate(cfg.dims):
        mixture = None
        if cfg.reference == "mixture":
            mrng = numerics.make_rng(numerics.derive_seeds(cfg.seed, dim_idx + 1)[-1])
            mixture = (mrng.uniform(0.0, 1.0, size=(4, dim)), 0.1)
        for size_idx, size in enumerate(cfg.sizes):
            seeds = numerics.derive_seeds(
                (cfg.seed, dim_idx, size_idx), cfg.trials
            )
            gaps = []
            for s in seeds:
                rng = numerics.make_rng(s)
                t = _draw(rng, size, dim, cfg.reference, mixture)
                r = _draw(rng, size, dim, cfg.reference, mixture)
                gaps.append(representativeness_gap(t, r))
            rows.append({
                "size": size, "dim": dim, "trials": cfg.trials,
                "mean_D": float(np.mean(gaps)), "std_D": float(np.std(gaps)),
            })
    base = {}
    for row in rows:
        base.setdefault(row["dim"], row["mean_D"])
    for row in rows:
        row["normalized_D"] = row["mean_D"] / base[row["dim"]] if base[row["dim"]] > 0 else 0.0
    rows.sort(key=lambda r: (r["size"], r["dim"]))
    return rows


CSV_COLUMNS = ["size", "dim", "mean_D", "std_D", "normalized_D", "trials"]


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in CSV_COLUMNS})


def read_csv(path):
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("size", "dim", "trials") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def count_inversions(means, rel_tol=0.02):
    """Count increases in a size-ordered sequence of means.

    Returns ``(n_inversions, n_large)``, where an inversion is large when the
    increase exceeds ``rel_tol`` of the preceding value.
    """
    n, large = 0, 0
    for prev, cur in zip(means, means[1:]):
        if cur > prev:
            n += 1
            if cur - prev > rel_tol * prev:
                large += 1
    return n, large
