"""Synthetic two-modality data and the on-disk dataset format.

Both modalities observe the same latent semantic variable, drawn from one
shared Gaussian mixture, through different random maps. Paired items share a
semantic draw; unpaired items are independent draws from the same mixture.

File layout (little endian)::

    b"SEMALIGN" | u32 version | u32 header_len | header JSON (spec echo)
    repeated per block:
        u16 name_len | name | u64 rows | u64 cols | rows*cols float64, column-major

A JSON sidecar ``<path>.json`` repeats the generator settings for human inspection.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import numerics

MAGIC = b"SEMALIGN"
VERSION = 1

MAPS = ("identity", "linear", "tanh")


class DatasetFormatError(ValueError):
    """A dataset file is truncated, corrupt, or otherwise unreadable."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedVersionError(DatasetFormatError):
    pass


@dataclass
class SyntheticSpec:
    semantic_dim: int = 8
    clusters: int = 8
    dim_a: int = 24
    dim_b: int = 32
    map_a: str = "linear"
    map_b: str = "tanh"
    noise_std: float = 0.05
    center_spread: float = 2.0
    cluster_scale: tuple = (0.4, 1.0)
    weight_concentration: float = 2.0
    nuisance_dim: int = 0
    nuisance_scale: float = 0.0
    n_pairs: int = 100
    n_unpaired_a: int = 900
    n_unpaired_b: int = 900
    test_pairs: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("n_pairs", "n_unpaired_a", "n_unpaired_b", "test_pairs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.clusters < 1 or self.semantic_dim < 1:
            raise ValueError("clusters and semantic_dim must be >= 1")
        for which in ("a", "b"):
            kind = getattr(self, f"map_{which}")
            if kind not in MAPS:
                raise ValueError(f"map_{which} must be one of {MAPS}, got {kind!r}")
            if kind == "identity" and getattr(self, f"dim_{which}") != self.semantic_dim:
                raise ValueError(f"identity map needs dim_{which} == semantic_dim")


BLOCKS = (
    "paired_a", "paired_b", "paired_labels",
    "unpaired_a", "unpaired_labels_a",
    "unpaired_b", "unpaired_labels_b",
    "test_a", "test_b", "test_labels",
)


@dataclass(eq=False)
class Dataset:
    """Train pairs, unpaired pools and held-out test pairs.

    Labels are mixture-component ids kept for diagnostics only; training
    never reads them.
    """

    paired_a: np.ndarray
    paired_b: np.ndarray
    paired_labels: np.ndarray
    unpaired_a: np.ndarray
    unpaired_labels_a: np.ndarray
    unpaired_b: np.ndarray
    unpaired_labels_b: np.ndarray
    test_a: np.ndarray
    test_b: np.ndarray
    test_labels: np.ndarray
    spec: dict

    @property
    def n_pairs(self):
        return len(self.paired_a)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.spec == other.spec and all(
            getattr(self, b).shape == getattr(other, b).shape
            and getattr(self, b).dtype == getattr(other, b).dtype
            and np.array_equal(getattr(self, b), getattr(other, b))
            for b in BLOCKS
        )


class _Mixture:
    def __init__(self, rng, spec):
        k, d = spec.clusters, spec.semantic_dim
        self.centers = rng.normal(0.0, spec.center_spread, size=(k, d))
        self.scales = rng.uniform(*spec.cluster_scale, size=k)
        # uneven weights so that components are distinguishable by mass
        self.weights = rng.dirichlet(np.full(k, spec.weight_concentration))

    def sample(self, rng, n):
        labels = rng.choice(len(self.weights), size=n, p=self.weights)
        s = self.centers[labels] + self.scales[labels, None] * rng.standard_normal(
            (n, self.centers.shape[1])
        )
        return s, labels


class _Map:
    def __init__(self, rng, kind, d_in, d_out):
        self.kind = kind
        self.weight = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
        self.offset = rng.normal(0.0, 1.0, size=d_out)

    def __call__(self, s):
        if self.kind == "identity":
            return s.copy()
        h = s @ self.weight
        if self.kind == "tanh":
            h = np.tanh(0.5 * h)
        return h + self.offset


class _Nuisance:
    """Modality-specific factors independent of the semantics.

    Modality A draws uniform factors, modality B skewed exponential ones, so
    the two modalities differ in distribution only through these directions.
    """

    def __init__(self, rng, which, n_factors, d_out, scale):
        self.which = which
        self.scale = scale
        self.mix = rng.normal(0.0, 1.0 / np.sqrt(max(n_factors, 1)), size=(n_factors, d_out))

    def __call__(self, rng, n):
        k = self.mix.shape[0]
        if self.which == "a":
            z = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, k))
        else:
            z = rng.exponential(1.0, size=(n, k)) - 1.0
        return self.scale * (z @ self.mix)


def generate(spec):
    """Draw a dataset; identical specs give bit-identical datasets."""
    rng_model, rng_pairs, rng_a, rng_b, rng_test, rng_noise = (
        numerics.make_rng(s) for s in numerics.derive_seeds(spec.seed, 6, "data")
    )
    mixture = _Mixture(rng_model, spec)
    map_a = _Map(rng_model, spec.map_a, spec.semantic_dim, spec.dim_a)
    map_b = _Map(rng_model, spec.map_b, spec.semantic_dim, spec.dim_b)

    nuis_a = _Nuisance(rng_model, "a", spec.nuisance_dim, spec.dim_a, spec.nuisance_scale)
    nuis_b = _Nuisance(rng_model, "b", spec.nuisance_dim, spec.dim_b, spec.nuisance_scale)

    def observe(m, s):
        x = m(s)
        nuis = nuis_a if m is map_a else nuis_b
        if spec.nuisance_dim > 0 and spec.nuisance_scale > 0:
            x = x + nuis(rng_noise, len(s))
        if spec.noise_std > 0:
            x = x + spec.noise_std * rng_noise.standard_normal(x.shape)
        return x

    s_pair, l_pair = mixture.sample(rng_pairs, spec.n_pairs)
    s_ua, l_ua = mixture.sample(rng_a, spec.n_unpaired_a)
    s_ub, l_ub = mixture.sample(rng_b, spec.n_unpaired_b)
    s_test, l_test = mixture.sample(rng_test, spec.test_pairs)
    return Dataset(
        paired_a=observe(map_a, s_pair).reshape(spec.n_pairs, spec.dim_a),
        paired_b=observe(map_b, s_pair).reshape(spec.n_pairs, spec.dim_b),
        paired_labels=l_pair.astype(np.int64),
        unpaired_a=observe(map_a, s_ua).reshape(spec.n_unpaired_a, spec.dim_a),
        unpaired_labels_a=l_ua.astype(np.int64),
        unpaired_b=observe(map_b, s_ub).reshape(spec.n_unpaired_b, spec.dim_b),
        unpaired_labels_b=l_ub.astype(np.int64),
        test_a=observe(map_a, s_test).reshape(spec.test_pairs, spec.dim_a),
        test_b=observe(map_b, s_test).reshape(spec.test_pairs, spec.dim_b),
        test_labels=l_test.astype(np.int64),
        # JSON-normal form (tuples become lists) so a saved file compares equal
        spec=json.loads(json.dumps(dataclasses.asdict(spec))),
    )


def without_unpaired(ds):
    """Copy of ``ds`` keeping only the paired and test splits."""
    spec = dict(ds.spec, n_unpaired_a=0, n_unpaired_b=0)
    return dataclasses.replace(
        ds,
        unpaired_a=ds.unpaired_a[:0], unpaired_labels_a=ds.unpaired_labels_a[:0],
        unpaired_b=ds.unpaired_b[:0], unpaired_labels_b=ds.unpaired_labels_b[:0],
        spec=spec,
    )


# -- I/O -------------------------------------------------------------------

def save(ds, path):
    path = str(path)
    header = json.dumps({"spec": ds.spec, "blocks": list(BLOCKS)}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for name in BLOCKS:
            arr = getattr(ds, name)
            mat = arr[:, None] if arr.ndim == 1 else arr
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<QQ", *mat.shape))
            fh.write(np.asarray(mat, dtype="<f8").tobytes(order="F"))
    with open(path + ".json", "w") as fh:
        json.dump(ds.spec, fh, indent=2, sort_keys=True)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise DatasetFormatError(
                f"truncated file while reading {what}: need {n} bytes, "
                f"{len(self.buf) - self.pos} left", self.pos,
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load(path):
    """Read a dataset written by :func:`save`. Never returns a partial dataset."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise DatasetFormatError("bad magic; not a dataset file", 0)
    version, header_len = r.unpack("<II", "version header")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version} (expected {VERSION})", len(MAGIC))
    header_at = r.pos
    try:
        header = json.loads(r.take(header_len, "header").decode())
        spec = header["spec"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetFormatError(f"corrupt header: {exc}", header_at) from None
    blocks = {}
    for expected in BLOCKS:
        at = r.pos
        (n,) = r.unpack("<H", "block name length")
        name = r.take(n, "block name").decode(errors="replace")
        if name != expected:
            raise DatasetFormatError(f"expected block {expected!r}, found {name!r}", at)
        rows, cols = r.unpack("<QQ", f"shape of {name}")
        raw = r.take(rows * cols * 8, f"data of {name}")
        blocks[name] = np.frombuffer(raw, dtype="<f8").reshape((rows, cols), order="F").astype(np.float64)
    if r.pos != len(r.buf):
        raise DatasetFormatError("trailing bytes after last block", r.pos)
    for name in BLOCKS:
        if "labels" in name:
            blocks[name] = blocks[name][:, 0].astype(np.int64)
    return Dataset(spec=spec, **blocks)
