import math

import numpy as np
import pytest

from semalign import numerics as N
from semalign import oracles as O
from semalign import sampling as S


def test_gap_of_identical_batches_is_zero():
    t = N.make_rng(0).uniform(size=(10, 3))
    assert S.representativeness_gap(t, t) == 0.0


def test_hand_instance():
    t, r = np.array([[0.0], [1.0]]), np.array([[0.0], [2.0]])
    sig_t, sig_r = 0.5, 2.0
    k = lambda x, pts, sig: sum(math.exp(-(x - p) ** 2 / sig) for p in pts) / (2 * math.pi)
    tt = [k(x, [0, 1], sig_t) for x in (0, 1)]
    tr = [k(x, [0, 2], sig_r) for x in (0, 1)]
    rr = [k(x, [0, 2], sig_r) for x in (0, 2)]
    rt = [k(x, [0, 1], sig_t) for x in (0, 2)]
    expect = sum((a - b) ** 2 for a, b in zip(tt, tr)) / 2 + sum((a - b) ** 2 for a, b in zip(rr, rt)) / 2
    assert abs(S.representativeness_gap(t, r) - expect) < 1e-12
    assert abs(S.representativeness_gap(t, r) - O.gap(t, r)) < 1e-12


def test_symmetric_and_nonnegative():
    rng = N.make_rng(1)
    for _ in range(20):
        t, r = rng.uniform(size=(6, 4)), rng.uniform(size=(6, 4))
        d = S.representativeness_gap(t, r)
        assert d >= 0
        assert abs(d - S.representativeness_gap(r, t)) <= 1e-12


def test_parzen_matches_oracle():
    rng = N.make_rng(2)
    t, x = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
    got = S.parzen_density(x, t)
    for i in range(2):
        assert abs(got[i] - O.parzen(x[i], t)) < 1e-12


def test_input_validation():
    with pytest.raises(N.DimensionError):
        S.representativeness_gap(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        S.representativeness_gap(np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        S.SweepConfig(sizes=[1, 2])
    with pytest.raises(ValueError):
        S.SweepConfig(sizes=[8, 4])
    with pytest.raises(ValueError):
        S.SweepConfig(trials=0)


def test_sweep_deterministic_and_sorted():
    cfg = S.SweepConfig(sizes=[2, 8, 32], dims=[2, 5], trials=1, seed=3)
    a, b = S.sweep(cfg), S.sweep(cfg)
    assert a == b
    assert [(r["size"], r["dim"]) for r in a] == [(2, 2), (2, 5), (8, 2), (8, 5), (32, 2), (32, 5)]
    assert all(r["normalized_D"] == 1.0 for r in a if r["size"] == 2)


def test_sweep_decreases_with_size():
    rows = S.sweep(S.SweepConfig(sizes=[2, 8, 32, 128], dims=[4], trials=20))
    means = [r["mean_D"] for r in rows]
    n, large = S.count_inversions(means)
    assert large == 0 and n <= 1
    assert means[-1] < 0.1 * means[0]


def test_mixture_reference_runs():
    rows = S.sweep(S.SweepConfig(sizes=[4, 16], dims=[3], trials=3, reference="mixture"))
    assert all(r["mean_D"] > 0 for r in rows)


def test_csv_round_trip(tmp_path):
    rows = S.sweep(S.SweepConfig(sizes=[2, 4], dims=[2], trials=2))
    path = tmp_path / "sweep.csv"
    S.write_csv(rows, path)
    assert S.read_csv(path) == [{k: r[k] for k in S.CSV_COLUMNS} for r in rows]
    assert path.read_text().splitlines()[0] == ",".join(S.CSV_COLUMNS)


def test_count_inversions():
    assert S.count_inversions([5, 4, 3]) == (0, 0)
    assert S.count_inversions([5, 5.05, 3]) == (1, 0)
    assert S.count_inversions([5, 6, 3, 3.01]) == (2, 1)
