import struct

import numpy as np
import pytest

from semalign import data as D


def small_spec(**kw):
    base = dict(n_pairs=12, n_unpaired_a=20, n_unpaired_b=15, test_pairs=9, seed=4)
    base.update(kw)
    return D.SyntheticSpec(**base)


def test_deterministic():
    assert D.generate(small_spec()) == D.generate(small_spec())
    assert D.generate(small_spec()) != D.generate(small_spec(seed=5))


def test_shapes():
    ds = D.generate(small_spec())
    assert ds.paired_a.shape == (12, 24) and ds.paired_b.shape == (12, 32)
    assert ds.unpaired_a.shape == (20, 24) and ds.unpaired_b.shape == (15, 32)
    assert ds.test_a.shape == (9, 24) and ds.test_labels.shape == (9,)
    assert ds.n_pairs == 12


def test_identity_maps_without_noise_give_equal_modalities():
    spec = small_spec(dim_a=8, dim_b=8, map_a="identity", map_b="identity", noise_std=0.0)
    ds = D.generate(spec)
    assert np.array_equal(ds.paired_a, ds.paired_b)
    assert np.array_equal(ds.test_a, ds.test_b)


def test_identity_maps_admit_linear_alignment():
    spec = small_spec(dim_a=8, dim_b=8, map_a="identity", map_b="linear", noise_std=0.0, n_pairs=40)
    ds = D.generate(spec)
    x = np.hstack([ds.paired_a, np.ones((40, 1))])
    w, *_ = np.linalg.lstsq(x, ds.paired_b, rcond=None)
    assert np.max(np.abs(x @ w - ds.paired_b)) < 1e-9


def test_zero_pairs():
    ds = D.generate(small_spec(n_pairs=0))
    assert ds.n_pairs == 0 and ds.paired_a.shape == (0, 24) and len(ds.unpaired_a) == 20


def test_unpaired_label_marginals_match():
    spec = D.SyntheticSpec(n_pairs=0, n_unpaired_a=10000, n_unpaired_b=10000, test_pairs=0, seed=1)
    ds = D.generate(spec)
    fa = np.bincount(ds.unpaired_labels_a, minlength=spec.clusters) / 10000
    fb = np.bincount(ds.unpaired_labels_b, minlength=spec.clusters) / 10000
    assert 0.5 * np.abs(fa - fb).sum() <= 0.03


def test_nuisance_factors_change_observations_only():
    plain = D.generate(small_spec())
    nuis = D.generate(small_spec(nuisance_dim=2, nuisance_scale=1.0))
    assert np.array_equal(plain.paired_labels, nuis.paired_labels)
    assert not np.array_equal(plain.paired_a, nuis.paired_a)


def test_without_unpaired():
    ds = D.without_unpaired(D.generate(small_spec()))
    assert ds.unpaired_a.shape == (0, 24) and ds.unpaired_b.shape == (0, 32)
    assert ds.spec["n_unpaired_a"] == 0 and ds.n_pairs == 12


@pytest.mark.parametrize("kw", [
    dict(n_pairs=-1), dict(noise_std=-0.1), dict(map_a="cubic"),
    dict(map_a="identity"), dict(clusters=0),
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        ds = D.generate(small_spec())
        path = tmp_path / "d.bin"
        D.save(ds, path)
        back = D.load(path)
        assert back == ds
        for name in D.BLOCKS:
            assert getattr(back, name).dtype == getattr(ds, name).dtype
        assert (tmp_path / "d.bin.json").exists()

    def test_round_trip_empty_pairs(self, tmp_path):
        ds = D.generate(small_spec(n_pairs=0))
        D.save(ds, tmp_path / "d.bin")
        assert D.load(tmp_path / "d.bin") == ds

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "d.bin"
        D.save(D.generate(small_spec()), path)
        raw = path.read_bytes()
        for cut in (4, 12, 40, len(raw) - 3):
            (tmp_path / "t.bin").write_bytes(raw[:cut])
            with pytest.raises(D.DatasetFormatError) as exc:
                D.load(tmp_path / "t.bin")
            assert exc.value.offset <= cut

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "d.bin"
        D.save(D.generate(small_spec()), path)
        raw = bytearray(path.read_bytes())
        raw[len(D.MAGIC):len(D.MAGIC) + 4] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(D.UnsupportedVersionError):
            D.load(path)

    def test_bad_magic_and_trailing_bytes(self, tmp_path):
        path = tmp_path / "d.bin"
        D.save(D.generate(small_spec()), path)
        raw = path.read_bytes()
        (tmp_path / "m.bin").write_bytes(b"X" + raw[1:])
        with pytest.raises(D.DatasetFormatError):
            D.load(tmp_path / "m.bin")
        (tmp_path / "x.bin").write_bytes(raw + b"\0")
        with pytest.raises(D.DatasetFormatError):
            D.load(tmp_path / "x.bin")
