"""Command-line front end.

Subcommands: init-config, gen-data, train, eval, sample-analysis, selfcheck.
Every command that writes a run directory also writes the resolved config
(``config.yaml``) there, so a run can be repeated from its own output.
"""

import argparse
import csv
import json
import logging
import os
import sys

from . import config as C
from . import grad as G
from . import data, model, plotting, sampling, selfcheck, trainer

log = logging.getLogger("semalign")

OUT_DIR_ENV = "SEMALIGN_OUT_DIR"

EXIT_OK = 0
EXIT_FAILED = 1  # a check or comparison failed
EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _load_config(path, overrides=None):
    cfg = C.load(path) if path else C.resolve()
    return C.resolve(C.merge(cfg, overrides)) if overrides else cfg


def _out_dir(flag, cfg):
    # explicit flag > environment > config file
    out = flag or os.environ.get(OUT_DIR_ENV) or cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _dataset_for(cfg, path=None):
    """Dataset from ``path`` or freshly generated from the config's data section.

    A loaded file's spec replaces the config's data section, so the echoed
    config describes the data actually used.
    """
    if path:
        ds = data.load(path)
        cfg["data"] = {k: ds.spec[k] for k in cfg["data"]}
        cfg["data"]["cluster_scale"] = list(cfg["data"]["cluster_scale"])
        return ds
    return data.generate(C.build(cfg)["spec"])


def build_model(cfg, ds):
    m = cfg["model"]
    hidden = tuple(m["hidden"])
    return model.init(
        model.default_stream(ds.paired_a.shape[1], hidden, m["latent"], m["activation"]),
        model.default_stream(ds.paired_b.shape[1], hidden, m["latent"], m["activation"]),
        seed=cfg["seed"],
    )


def run_training(cfg, ds, out_dir=None):
    """Train one resolved config on ``ds``; returns ``(model, history, mk)``.

    The clip preset trains on the aligned pairs only.
    """
    built = C.build(cfg)
    if built["mode"] == "clip":
        ds = data.without_unpaired(ds)
    mdl = build_model(cfg, ds)
    return trainer.train(ds, mdl, built["train"], out_dir=out_dir, config_hash=C.config_hash(cfg))


def mean_recall(record, k):
    return 0.5 * (record[f"recall@{k}_a2b"] + record[f"recall@{k}_b2a"])


# -- commands ----------------------------------------------------------------

def cmd_init_config(args):
    if os.path.exists(args.path) and not args.force:
        log.error("%s exists; pass --force to overwrite", args.path)
        return EXIT_USAGE
    with open(args.path, "w") as fh:
        fh.write(C.DEFAULT_CONFIG_TEXT)
    print(args.path)
    return EXIT_OK


def cmd_gen_data(args):
    cfg = _load_config(args.config, _seed_override(args))
    spec = C.build(cfg)["spec"]
    ds = data.generate(spec)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    data.save(ds, args.out)
    print(f"wrote {args.out}: {ds.n_pairs} pairs, {len(ds.unpaired_a)}+{len(ds.unpaired_b)} unpaired, "
          f"{len(ds.test_a)} test pairs")
    return EXIT_OK


def _seed_override(args):
    return {"seed": args.seed} if getattr(args, "seed", None) is not None else None


def _train_overrides(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    train = {}
    if args.mode:
        train["mode"] = args.mode
    if args.epochs is not None:
        train["epochs"] = args.epochs
    if train:
        over["train"] = train
    sdd = {}
    if args.sdd_rd:
        sdd["use_relative_distance"] = args.sdd_rd == "on"
    if args.sdd_div:
        sdd["divergence"] = args.sdd_div
    if sdd:
        over["sdd"] = sdd
    return over


def cmd_train(args):
    cfg = _load_config(args.config, _train_overrides(args))
    out = _out_dir(args.out, cfg)
    ds = _dataset_for(cfg, args.data)
    cfg = C.resolve(cfg)
    C.dump(cfg, os.path.join(out, "config.yaml"))
    log.info("training mode=%s into %s (config %s)", cfg["train"]["mode"], out, C.config_hash(cfg))
    try:
        mdl, history, mk = run_training(cfg, ds, out_dir=out)
    except trainer.TrainingDiverged as exc:
        with open(os.path.join(out, "diverged.json"), "w") as fh:
            json.dump({"error": str(exc), **exc.diagnostics}, fh, indent=2, sort_keys=True, default=str)
        log.error("training diverged: %s (diagnostics in %s)", exc, os.path.join(out, "diverged.json"))
        return EXIT_DIVERGED
    trainer.write_history(history, os.path.join(out, "metrics.jsonl"))
    model.save_checkpoint(
        os.path.join(out, "checkpoint_final.npz"), mdl, extra_params=[mk.beta_logits],
        config_hash=C.config_hash(cfg), epoch=history[-1]["epoch"],
    )
    if not args.no_plots:
        plotting.plot_history(history, os.path.join(out, "curves.png"))
    last = history[-1]
    summary = ", ".join(f"{k}={last[k]:.3f}" for k in sorted(last) if k.startswith("recall@"))
    print(f"epoch {last['epoch']}: l_total={last['l_total']:.4f} {summary}")
    return EXIT_OK


def _hash_for_checkpoint(args):
    if args.config:
        return C.config_hash(C.load(args.config))
    echo = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "config.yaml")
    if os.path.exists(echo):
        return C.config_hash(C.load(echo))
    return None


def cmd_eval(args):
    mdl, _, _, meta = model.load_checkpoint(args.checkpoint)
    expected = _hash_for_checkpoint(args)
    if expected is None:
        log.warning("no config found to verify the checkpoint against")
    elif meta.get("config_hash") != expected:
        msg = f"checkpoint config hash {meta.get('config_hash')} != config {expected}"
        if not args.force:
            log.error("%s; pass --force to evaluate anyway", msg)
            return EXIT_USAGE
        log.warning("%s (forced)", msg)
    ds = data.load(args.data)
    u, v = mdl.forward(ds.test_a, ds.test_b)
    report = trainer.evaluate_retrieval(u.value, v.value, tuple(args.ks))
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "recall.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(os.path.join(out, "recall.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "a2b", "b2a"])
        for k in args.ks:
            w.writerow([k, report[f"recall@{k}_a2b"], report[f"recall@{k}_b2a"]])
    if not args.no_plots:
        plotting.plot_recall(report, os.path.join(out, "recall.png"))
    for k in args.ks:
        print(f"recall@{k}: a2b={report[f'recall@{k}_a2b']:.4f} b2a={report[f'recall@{k}_b2a']:.4f}")
    return EXIT_OK


def cmd_sample_analysis(args):
    over = {}
    if args.trials is not None:
        over["trials"] = args.trials
    if args.reference:
        over["reference"] = args.reference
    cfg = _load_config(args.config, {"sweep": over} if over else None)
    out = _out_dir(args.out, cfg)
    C.dump(cfg, os.path.join(out, "config.yaml"))
    rows = sampling.sweep(C.build(cfg)["sweep"])
    sampling.write_csv(rows, os.path.join(out, "sweep.csv"))
    if not args.no_plots:
        plotting.plot_sweep(rows, os.path.join(out, "sweep.png"))
    for r in rows:
        print(f"size={r['size']:4d} dim={r['dim']:3d} mean_D={r['mean_D']:.4e} normalized={r['normalized_D']:.4f}")
    return EXIT_OK


def cmd_selfcheck(args):
    checks = selfcheck.run_all(fault=args.inject_fault)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="semalign", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init-config", help="write the documented default config")
    s.add_argument("path")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_init_config)

    s = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="dataset file to write")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train a two-stream model")
    s.add_argument("--config")
    s.add_argument("--data", help="dataset file; generated from the config when omitted")
    s.add_argument("--out", help=f"run directory (default: ${OUT_DIR_ENV}, then config out_dir)")
    s.add_argument("--mode", choices=C.MODES)
    s.add_argument("--sdd-rd", choices=("on", "off"), help="relative-distance bandwidth")
    s.add_argument("--sdd-div", choices=("kl", "mse"))
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="retrieval recall of a checkpoint on a dataset's test pairs")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="config to verify the checkpoint against (default: run dir echo)")
    s.add_argument("--ks", type=int, nargs="+", default=[1, 5])
    s.add_argument("--out", help="report directory (default: checkpoint's directory)")
    s.add_argument("--force", action="store_true", help="evaluate despite a config hash mismatch")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample-analysis", help="representativeness gap vs batch size")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--trials", type=int)
    s.add_argument("--reference", choices=("uniform", "mixture"))
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_sample_analysis)

    s = sub.add_parser("selfcheck", help="gradient, oracle and invariant checks")
    s.add_argument("--inject-fault", metavar="OP", choices=G.FAULTABLE_OPS, help="perturb one primitive's gradient (mutation test)")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (C.ConfigError, data.DatasetFormatError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
