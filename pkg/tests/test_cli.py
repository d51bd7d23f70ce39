import json

import pytest

from semalign import cli
from semalign import config as C
from semalign import data as D
from semalign import model as M
from semalign import trainer as T

TINY = """\
seed: 1
data:
  n_pairs: 20
  n_unpaired_a: 60
  n_unpaired_b: 60
  test_pairs: 15
model:
  hidden: [8, 8]
  latent: 4
train:
  epochs: 2
  eval_every: 1
  batch_size: 16
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestConfig:
    def test_default_text_documents_every_key(self):
        cfg = C.defaults()
        assert set(cfg) == {"seed", "out_dir", "data", "model", "train", "weights", "sdd", "kernels", "sweep"}
        assert C.resolve() == cfg
        assert cfg["weights"] == {"alpha": 1.0, "delta": 0.1, "eta": 1.0, "mu": 0.1}

    def test_unknown_keys_rejected(self):
        with pytest.raises(C.ConfigError):
            C.resolve({"train": {"epoch": 3}})
        with pytest.raises(C.ConfigError):
            C.resolve({"bogus": 1})

    def test_invalid_values_rejected(self):
        with pytest.raises(C.ConfigError):
            C.resolve({"train": {"mode": "fancy"}})
        with pytest.raises(C.ConfigError):
            C.resolve({"sdd": {"divergence": "js"}})
        with pytest.raises(C.ConfigError):
            C.resolve({"weights": {"eta": -1}})

    @pytest.mark.parametrize("mode,expect", [
        ("clip", (1.0, 0.0, 0.0, 0.0)),
        ("setclip", (1.0, 0.1, 1.0, 0.1)),
        ("unsup", (0.0, 0.1, 1.0, 0.1)),
        ("sdd-only", (1.0, 0.1, 1.0, 0.0)),
        ("ssl-only", (1.0, 0.1, 0.0, 0.1)),
    ])
    def test_mode_presets(self, mode, expect):
        w = C.build(C.resolve({"train": {"mode": mode}}))["train"].weights
        assert (w.alpha, w.delta, w.eta, w.mu) == expect

    def test_hash_ignores_paths_and_tracks_settings(self):
        a = C.resolve()
        assert C.config_hash(a) == C.config_hash(C.resolve({"out_dir": "elsewhere"}))
        assert C.config_hash(a) != C.config_hash(C.resolve({"seed": 5}))

    def test_dump_load_round_trip(self, tmp_path):
        cfg = C.resolve({"seed": 9, "sdd": {"divergence": "mse"}})
        C.dump(cfg, tmp_path / "c.yaml")
        assert C.load(tmp_path / "c.yaml") == cfg


def test_init_config(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    assert run("init-config", path) == 0
    assert C.load(path) == C.defaults()
    assert run("init-config", path) == cli.EXIT_USAGE
    assert run("init-config", path, "--force") == 0


def test_gen_data(tmp_path, tiny):
    out = tmp_path / "d.bin"
    assert run("gen-data", "--config", tiny, "--out", out) == 0
    ds = D.load(out)
    assert ds.n_pairs == 20 and ds.spec["seed"] == 1
    assert ds == D.generate(C.build(C.load(tiny))["spec"])


@pytest.mark.parametrize("mode", ["clip", "setclip", "unsup", "sdd-only", "ssl-only"])
def test_train_modes(tmp_path, tiny, mode):
    out = tmp_path / mode
    assert run("train", "--config", tiny, "--mode", mode, "--out", out) == 0
    hist = T.read_history(out / "metrics.jsonl")
    assert [h["epoch"] for h in hist] == [0, 1, 2]
    assert (out / "checkpoint_final.npz").exists() and (out / "curves.png").exists()
    echo = C.load(out / "config.yaml")
    assert echo["train"]["mode"] == mode
    _, _, _, meta = M.load_checkpoint(out / "checkpoint_final.npz")
    assert meta["config_hash"] == C.config_hash(echo)


def test_train_ablation_flags(tmp_path, tiny):
    out = tmp_path / "abl"
    assert run("train", "--config", tiny, "--sdd-rd", "off", "--sdd-div", "mse", "--out", out, "--no-plots") == 0
    echo = C.load(out / "config.yaml")
    assert echo["sdd"]["use_relative_distance"] is False and echo["sdd"]["divergence"] == "mse"
    assert not (out / "curves.png").exists()


def test_train_from_data_file_echoes_its_spec(tmp_path, tiny):
    data_path = tmp_path / "d.bin"
    run("gen-data", "--config", tiny, "--out", data_path, "--seed", "7")
    out = tmp_path / "run"
    assert run("train", "--config", tiny, "--data", data_path, "--out", out, "--no-plots") == 0
    echo = C.load(out / "config.yaml")
    assert echo["data"]["n_pairs"] == 20


def test_out_dir_from_environment(tmp_path, tiny, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert run("train", "--config", tiny, "--no-plots") == 0
    assert (tmp_path / "env" / "metrics.jsonl").exists()
    assert run("train", "--config", tiny, "--no-plots", "--out", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "metrics.jsonl").exists()


def test_identical_runs_give_identical_history_bytes(tmp_path, tiny):
    for name in ("a", "b"):
        assert run("train", "--config", tiny, "--out", tmp_path / name, "--no-plots") == 0
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()


def test_divergence_exit_code(tmp_path, tiny, monkeypatch):
    def boom(*a, **k):
        raise T.TrainingDiverged("non-finite loss", {"epoch": 1, "components": {"l_sdd": float("nan")}})

    monkeypatch.setattr(cli.trainer, "train", boom)
    out = tmp_path / "div"
    assert run("train", "--config", tiny, "--out", out) == cli.EXIT_DIVERGED
    report = json.loads((out / "diverged.json").read_text())
    assert report["epoch"] == 1 and "non-finite" in report["error"]


class TestEval:
    @pytest.fixture
    def trained(self, tmp_path, tiny):
        data_path = tmp_path / "d.bin"
        run("gen-data", "--config", tiny, "--out", data_path)
        out = tmp_path / "run"
        run("train", "--config", tiny, "--data", data_path, "--out", out, "--no-plots")
        return out, data_path

    def test_report_matches_history(self, trained):
        out, data_path = trained
        assert run("eval", "--checkpoint", out / "checkpoint_final.npz", "--data", data_path, "--ks", 1, 5) == 0
        report = json.loads((out / "recall.json").read_text())
        last = T.read_history(out / "metrics.jsonl")[-1]
        for key, val in report.items():
            assert val == last[key]
        rows = (out / "recall.csv").read_text().splitlines()
        assert rows[0] == "k,a2b,b2a" and len(rows) == 3
        assert (out / "recall.png").exists()

    def test_hash_mismatch_refused_unless_forced(self, trained, tmp_path):
        out, data_path = trained
        other = tmp_path / "other.yaml"
        other.write_text("seed: 99\n")
        ck = out / "checkpoint_final.npz"
        assert run("eval", "--checkpoint", ck, "--data", data_path, "--config", other) == cli.EXIT_USAGE
        assert run("eval", "--checkpoint", ck, "--data", data_path, "--config", other, "--force",
                   "--out", tmp_path / "forced", "--no-plots") == 0
        assert (tmp_path / "forced" / "recall.json").exists()

    def test_bad_dataset_file(self, trained, tmp_path):
        out, _ = trained
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"nope")
        assert run("eval", "--checkpoint", out / "checkpoint_final.npz", "--data", bad) == cli.EXIT_USAGE


def test_sample_analysis(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sweep:\n  sizes: [2, 8, 32]\n  dims: [2]\n  trials: 3\n")
    out = tmp_path / "sweep"
    assert run("sample-analysis", "--config", cfg, "--out", out) == 0
    from semalign import sampling
    rows = sampling.read_csv(out / "sweep.csv")
    assert [r["size"] for r in rows] == [2, 8, 32]
    assert (out / "sweep.png").exists() and (out / "config.yaml").exists()


def test_selfcheck_passes_and_detects_fault(capsys):
    assert run("selfcheck") == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("[PASS]") for line in lines[:-1])
    assert all("measured" in line and "tol" in line for line in lines[:-1])
    assert run("selfcheck", "--inject-fault", "exp") == cli.EXIT_FAILED
    assert any(line.startswith("[FAIL] gradient") for line in capsys.readouterr().out.splitlines())


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  mode: nope\n")
    assert run("train", "--config", bad, "--out", tmp_path / "x") == cli.EXIT_USAGE
