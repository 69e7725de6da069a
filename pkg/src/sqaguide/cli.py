"""Command-line entry point.

Every command resolves its configuration from built-in defaults, an optional
``--config`` JSON file, ``--set key.path=value`` overrides and a few
convenience flags, in that order. Unknown keys are rejected before any work
starts, and the resolved config is written next to the outputs.

Exit codes: 0 success, 1 validation or runtime error, 2 hack-monitor abort.
"""
import argparse
import copy
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from . import autodiff as ad
from . import datagen
from .checkpoint import CheckpointError
from .datagen import WavError
from .metrics import MetricVector, default_registry, pearson, spearman
from .metrics.ranking import rank_groups
from .metrics.reports import read_metric_csv, write_metric_csv

OUT_ROOT_ENV = "SQAGUIDE_OUT"
GRADCHECK_TOL = 1e-4

_FT = {
    "se": None, "sqa": None, "demo": None, "data": None,
    "lambdas": {"spec": 1.0, "score": 0.0, "feat": 0.0, "reg": 0.0},
    "metric_weights": {}, "standardize": True,
    "steps": 300, "lr": 1e-3, "batch_size": 4, "seed": 0,
    "n_train": 32, "n_val": 12, "data_seed": 2, "val_seed": 3, "duration": 1.0,
    "snr_range": [-5.0, 10.0], "reverb_prob": 0.0,
    "monitor": {"eval_every": 20, "tau": 0.5, "window": 5, "reg_unit": 4.0},
    "abort_on_hack": True, "sdr_filter_len": 512, "run_dir": None,
}

DEFAULTS = {
    "gen": {"out": None, "sources": 10, "variants": 4, "seed": 0, "duration": 1.0,
            "sample_rate": 16000, "sdr_filter_len": 512},
    "evaluate": {"manifest": None, "out": None, "sdr_filter_len": 512, "workers": 1},
    "rank": {"metrics": None, "manifest": None, "out": None, "sdr_filter_len": 512},
    "predict": {"sqa": None, "manifest": None, "out": None, "roles": ["variant"]},
    "train-sqa": {"data": None, "run_dir": None, "epochs": 60, "batch_size": 32, "lr": 3e-3,
                  "weight_decay": 1e-4, "warmup_steps": 500, "seed": 0, "freeze_encoder": False,
                  "model": {"n_mels": 40, "widths": [256], "hidden_dim": 64}},
    "pretrain-se": {"data": None, "run_dir": None, "steps": 600, "batch_size": 8, "lr": 3e-3, "seed": 0,
                    "n_pairs": 128, "data_seed": 1, "duration": 1.0, "snr_range": [-5.0, 10.0],
                    "model": {"hidden": [128], "context": 2, "mask_bias": 0.0}},
    "finetune": _FT,
    # reference-free mode: only the proxy score and the regularizer apply
    "finetune-real": {**_FT, "lambdas": {"spec": 0.0, "score": 1.0, "feat": 0.0, "reg": 1.0}},
    "gradcheck": {"sqa": None, "se": None, "seed": 0, "duration": 0.2, "tol": GRADCHECK_TOL},
    "correlate": {"pred": None, "labels": None, "out": None},
    "demo": {"out": None, "seed": 0, "n_sources": 125, "variants": 4, "sqa_epochs": 60, "se_steps": 600,
             "ft_train": 32, "ft_val": 12},
}


class ConfigError(ValueError):
    pass


class HackAbortExit(Exception):
    pass


# ------------------------------------------------------------------ config

def _check_type(path, default, value):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    elif isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            value = int(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list, got {value!r}")
    return value


def _merge(base, override, path=""):
    for k, v in override.items():
        p = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {p!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            _merge(base[k], v, p + ".")
        elif isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{p}: expected an object")
            base[k] = dict(v)
        else:
            base[k] = _check_type(p, base[k], v)


def _set_dotted(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    last = keys[-1]
    # metric_weights accepts any metric name; names are checked against the registry later
    if last not in node and keys[:-1] != ["metric_weights"]:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[last] = _check_type(dotted, node.get(last), value)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command, config_path=None, sets=(), flags=None):
    cfg = copy.deepcopy(DEFAULTS[command])
    if config_path:
        with open(config_path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, data)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), _parse_value(v))
    for k, v in (flags or {}).items():
        if v is not None:
            _set_dotted(cfg, k, v)
    return cfg


def out_root():
    return os.environ.get(OUT_ROOT_ENV, "runs")


def _run_dir(cfg, default_name):
    d = cfg.get("run_dir") or cfg.get("out") or os.path.join(out_root(), default_name)
    os.makedirs(d, exist_ok=True)
    return d


def _write_config(run_dir, command, cfg):
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump({"command": command, "version": __version__, "config": cfg}, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r}")


def _say(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands

def cmd_gen(cfg):
    out = _run_dir(cfg, f"gen-{cfg['seed']}")
    records = datagen.build_dataset(out, cfg["sources"], cfg["variants"], cfg["seed"], cfg["duration"],
                                    cfg["sample_rate"], cfg["sdr_filter_len"])
    _write_config(out, "gen", cfg)
    print(f"wrote {len(records)} audio files to {out}")


def _load_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    recs = datagen.read_manifest(path)
    for r in recs:
        if not os.path.exists(os.path.join(base, r["path"])):
            raise FileNotFoundError(f"manifest entry {r['utt_id']}: missing {r['path']}")
    return base, recs


def _evaluate_manifest(path, sdr_filter_len, workers=1):
    base, recs = _load_manifest(path)
    clean = {r["source_id"]: r for r in recs if r["role"] == "clean"}
    jobs = []
    for r in recs:
        if r["role"] == "clean":
            continue
        if r["source_id"] not in clean:
            raise ValueError(f"source {r['source_id']} has no clean reference")
        jobs.append((os.path.join(base, clean[r["source_id"]]["path"]), os.path.join(base, r["path"]),
                     r["text"], tuple(r["phonemes"]), sdr_filter_len))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            values = list(pool.map(_evaluate_one, jobs))
    else:
        values = [_evaluate_one(j) for j in jobs]
    registry = default_registry()
    rows = [(r, MetricVector(registry, v)) for r, v in zip([r for r in recs if r["role"] != "clean"], values)]
    return registry, rows


def _evaluate_one(job):
    clean_path, est_path, text, phonemes, filter_len = job
    return datagen.oracle_values(datagen.wav_read(clean_path), datagen.wav_read(est_path),
                                 datagen.Transcript(text, phonemes), filter_len)


def cmd_evaluate(cfg):
    _require(cfg, "manifest")
    registry, rows = _evaluate_manifest(cfg["manifest"], cfg["sdr_filter_len"], cfg["workers"])
    out = cfg["out"] or os.path.join(os.path.dirname(os.path.abspath(cfg["manifest"])), "metrics.csv")
    write_metric_csv(out, [(r["utt_id"], v, (r["source_id"], r["role"])) for r, v in rows], registry,
                     names=datagen.ORACLE_METRICS, extra=("source_id", "role"))
    print(f"wrote {len(rows)} rows to {out}")


def cmd_rank(cfg):
    registry = default_registry()
    if cfg["metrics"]:
        rows = read_metric_csv(cfg["metrics"], registry, extra=("source_id",), validate=True)
        vectors = {u: v for u, (v, _) in rows.items()}
        source_of = {u: ex["source_id"] or u for u, (_, ex) in rows.items()}
    elif cfg["manifest"]:
        _, evaluated = _evaluate_manifest(cfg["manifest"], cfg["sdr_filter_len"])
        vectors = {r["utt_id"]: v for r, v in evaluated if r["role"] == "variant"}
        source_of = {r["utt_id"]: r["source_id"] for r, _ in evaluated if r["role"] == "variant"}
    else:
        raise ConfigError("rank needs 'metrics' or 'manifest'")
    if not vectors:
        raise ValueError("nothing to rank")
    # ranks are computed from the oracle metrics, never from a RankingScore column
    vectors = {u: MetricVector(registry, {k: x for k, x in v.values.items() if k != "RankingScore"})
               for u, v in vectors.items()}
    scores = rank_groups(vectors, source_of, registry)
    out = cfg["out"] or os.path.join(out_root(), "rank.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "utt_id", "RankingScore"])
        for u in sorted(scores, key=lambda u: (source_of[u], u)):
            w.writerow([source_of[u], u, repr(scores[u])])
    print(f"wrote {len(scores)} rank scores to {out}")


def cmd_predict(cfg):
    from .sqa import SqaModel

    _require(cfg, "sqa", "manifest")
    model = SqaModel.load(cfg["sqa"])
    base, recs = _load_manifest(cfg["manifest"])
    rows = []
    for r in recs:
        if r["role"] in cfg["roles"]:
            out = model.predict(datagen.wav_read(os.path.join(base, r["path"])))
            rows.append((r["utt_id"], out.scores, (r["source_id"],)))
    out = cfg["out"] or os.path.join(os.path.dirname(os.path.abspath(cfg["manifest"])), "predictions.csv")
    write_metric_csv(out, rows, model.registry, names=model.metrics, extra=("source_id",))
    print(f"wrote {len(rows)} predictions to {out}")


def _load_dataset(path):
    base, recs = _load_manifest(os.path.join(path, "manifest.jsonl"))
    registry = default_registry()
    rows = read_metric_csv(os.path.join(path, "labels.csv"), registry, extra=("source_id", "split"))
    labels = {u: v for u, (v, _) in rows.items()}
    return base, recs, labels


def cmd_train_sqa(cfg):
    from .sqa import SqaConfig, SqaModel, SqaTrainConfig, train_sqa

    _require(cfg, "data")
    base, recs, labels = _load_dataset(cfg["data"])
    items = {"train": [], "val": []}
    for r in recs:
        if r["utt_id"] in labels:
            split = "train" if r["split"] == "train" else "val"
            items[split].append((datagen.wav_read(os.path.join(base, r["path"])), labels[r["utt_id"]]))
    run = _run_dir(cfg, f"train-sqa-{cfg['seed']}")
    _write_config(run, "train-sqa", cfg)
    m = cfg["model"]
    model = SqaModel(SqaConfig(n_mels=m["n_mels"], widths=tuple(m["widths"]), hidden_dim=m["hidden_dim"],
                               seed=cfg["seed"]))
    rep = train_sqa(model, items["train"], items["val"],
                    SqaTrainConfig(cfg["epochs"], cfg["batch_size"], cfg["lr"], cfg["weight_decay"],
                                   cfg["warmup_steps"], cfg["seed"], cfg["freeze_encoder"]))
    model.save(os.path.join(run, "sqa.ckpt"))
    with open(os.path.join(run, "trajectory.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss"])
        for i, v in enumerate(rep.history, 1):
            w.writerow([i, repr(v)])
    _write_correlations(os.path.join(run, "val_correlation.csv"), rep.val_lcc, rep.val_srcc,
                        {n: len(items["val"]) for n in rep.val_lcc})
    for n in model.metrics:
        print(f"{n:18s} LCC {rep.val_lcc.get(n, float('nan')):7.3f}  SRCC {rep.val_srcc.get(n, float('nan')):7.3f}")
    print(f"wrote {run}")


def _write_correlations(path, lcc, srcc, counts):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "n", "LCC", "SRCC"])
        for n in lcc:
            w.writerow([n, counts.get(n, 0), repr(lcc[n]), repr(srcc[n])])


def _dataset_pairs(path, split):
    base, recs, _ = _load_dataset(path)
    clean = {r["source_id"]: r for r in recs if r["role"] == "clean"}
    pairs = []
    for r in recs:
        if r["role"] == "mixture" and (split is None or (r["split"] == "train") == (split == "train")):
            c = clean[r["source_id"]]
            pairs.append(datagen.Pair(datagen.wav_read(os.path.join(base, r["path"])),
                                      datagen.wav_read(os.path.join(base, c["path"])), datagen.transcript_of(r)))
    return pairs


def cmd_pretrain_se(cfg):
    from .enhancer import SeConfig, SeModel, SeTrainConfig, pretrain_se

    if cfg["data"]:
        pairs = _dataset_pairs(cfg["data"], "train")
    else:
        pairs = datagen.simulate_pairs(cfg["n_pairs"], cfg["data_seed"], cfg["duration"],
                                       snr_range=tuple(cfg["snr_range"]))
    run = _run_dir(cfg, f"pretrain-se-{cfg['seed']}")
    _write_config(run, "pretrain-se", cfg)
    m = cfg["model"]
    model = SeModel(SeConfig(hidden=tuple(m["hidden"]), context=m["context"], mask_bias=m["mask_bias"],
                             seed=cfg["seed"]))
    hist = pretrain_se(model, pairs, SeTrainConfig(cfg["steps"], cfg["batch_size"], cfg["lr"], cfg["seed"]))
    model.save(os.path.join(run, "se.ckpt"))
    with open(os.path.join(run, "trajectory.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "train_spec"])
        for s, v in hist:
            w.writerow([s + 1, repr(v)])
    print(f"final batch L_spec {hist[-1][1]:.4f}; wrote {run}")


def _finetune_inputs(cfg):
    from .enhancer import SeModel
    from .sqa import SqaModel

    se, sqa = cfg["se"], cfg["sqa"]
    if cfg["demo"]:
        se = se or os.path.join(cfg["demo"], "se.ckpt")
        sqa = sqa or os.path.join(cfg["demo"], "sqa.ckpt")
    if not se or not sqa:
        raise ConfigError("finetune needs 'se' and 'sqa' checkpoints (or a 'demo' directory)")
    return SeModel.load(se), SqaModel.load(sqa)


def cmd_finetune(cfg, mode):
    from .losses import LossWeights
    from .training import FinetuneConfig, finetune_real, finetune_simulated, write_trajectory

    lam = cfg["lambdas"]
    registry = default_registry()
    unknown = set(cfg["metric_weights"]) - set(registry.names)
    if unknown:
        raise ConfigError(f"unknown metrics in metric_weights: {sorted(unknown)}")
    weights = LossWeights(lam["spec"], lam["score"], lam["feat"], lam["reg"],
                          dict(cfg["metric_weights"]), cfg["standardize"])
    if mode == "simu" and weights.lambda_reg:
        raise ConfigError("lambda_reg applies to 'finetune real' only")
    if mode == "real" and (weights.lambda_spec or weights.lambda_feat):
        raise ConfigError("'finetune real' has no reference: lambda_spec and lambda_feat must be 0")
    se0, proxy = _finetune_inputs(cfg)
    if cfg["data"]:
        train = _dataset_pairs(cfg["data"], "train")
        val = _dataset_pairs(cfg["data"], "val")
    else:
        rp = cfg["reverb_prob"]
        snr = tuple(cfg["snr_range"])
        train = datagen.simulate_pairs(cfg["n_train"], cfg["data_seed"], cfg["duration"], snr_range=snr,
                                       reverb_prob=rp)
        val = datagen.simulate_pairs(cfg["n_val"], cfg["val_seed"], cfg["duration"], snr_range=snr,
                                     reverb_prob=rp)
    if mode == "real":
        # references withheld from the loop; kept on val items for logging only
        train = [datagen.Pair(p.noisy, None, None) for p in train]
    mon = cfg["monitor"]
    fcfg = FinetuneConfig(steps=cfg["steps"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"],
                          eval_every=mon["eval_every"], tau=mon["tau"], window=mon["window"],
                          reg_unit=mon["reg_unit"], abort_on_hack=cfg["abort_on_hack"],
                          sdr_filter_len=cfg["sdr_filter_len"])
    run = _run_dir(cfg, f"finetune-{mode}-{cfg['seed']}")
    _write_config(run, f"finetune {mode}", cfg)
    fn = finetune_simulated if mode == "simu" else finetune_real
    res = fn(se0, proxy, train, weights, fcfg, val)
    write_trajectory(os.path.join(run, "trajectory.csv"), res.trajectory)
    os.makedirs(os.path.join(run, "checkpoints"), exist_ok=True)
    for step, m in res.checkpoints:
        m.save(os.path.join(run, "checkpoints", f"step_{step:06d}.ckpt"))
    res.model.save(os.path.join(run, "se.ckpt"))
    last = res.trajectory[-1]
    print(f"step {last['step']}: proxy composite {last.get('proxy_composite', float('nan')):.4f}, "
          f"val L_reg {last.get('val_reg', float('nan')):.4f}; wrote {run}")
    if res.aborted:
        raise HackAbortExit(res.message)


def _gradcheck_objectives(cfg):
    from .enhancer import SeConfig, SeModel, enhance
    from .losses import LogMagRef, LossWeights, loss_real, loss_simu
    from .sqa import SqaConfig, SqaModel

    proxy = SqaModel.load(cfg["sqa"]) if cfg["sqa"] else SqaModel(SqaConfig(seed=cfg["seed"]))
    se = SeModel.load(cfg["se"]) if cfg["se"] else SeModel(SeConfig(seed=cfg["seed"], hidden=(16,)))
    pair = datagen.simulate_pairs(1, cfg["seed"], cfg["duration"])[0]
    # L_reg is an L1 distance: take its reference from a differently seeded
    # enhancer so the check point sits away from the kink at zero
    other = SeModel(SeConfig(seed=cfg["seed"] + 1, hidden=se.config.hidden))
    other.buffers = {k: v.copy() for k, v in se.buffers.items()}
    init = LogMagRef(enhance(other, pair.noisy).enhanced.samples)
    params = se.params
    names = sorted(params)
    configs = [("simu", (1, 1, 1)), ("simu", (1, 1, 0)), ("simu", (1, 0, 1)), ("simu", (0, 1, 1)),
               ("simu", (0, 1, 0)), ("simu", (0, 0, 1)), ("real", (1, 1)), ("real", (1, 0))]
    results = []
    for mode, lams in configs:
        if mode == "simu":
            w = LossWeights(*lams)
        else:
            w = LossWeights(0.0, lams[0], 0.0, lams[1])

        def f(tape, *leaves, w=w, mode=mode):
            lv = dict(zip(names, leaves))
            y = enhance(se, pair.noisy, tape, lv).node
            if mode == "simu":
                return loss_simu(y, pair.clean.samples, proxy, w)
            return loss_real(y, init, proxy, w)

        err = ad.grad_check(f, [params[k] for k in names], rng=np.random.default_rng(cfg["seed"]))
        results.append((mode, lams, err))
    return results


def cmd_gradcheck(cfg):
    results = _gradcheck_objectives(cfg)
    worst = 0.0
    for mode, lams, err in results:
        label = "/".join(str(x) for x in lams)
        print(f"{mode:5s} lambda {label:8s} max rel err {err:.3e}")
        worst = max(worst, err)
    if worst > cfg["tol"]:
        raise ValueError(f"gradient check failed: {worst:.3e} > {cfg['tol']}")


def cmd_correlate(cfg):
    _require(cfg, "pred", "labels")
    registry = default_registry()
    pred = {u: v for u, (v, _) in read_metric_csv(cfg["pred"], registry, validate=False).items()}
    lab = {u: v for u, (v, _) in read_metric_csv(cfg["labels"], registry).items()}
    common = sorted(set(pred) & set(lab))
    if len(common) < 2:
        raise ValueError("fewer than two utterances shared by predictions and labels")
    lcc, srcc, counts = {}, {}, {}
    for name in registry.names:
        ids = [u for u in common if name in pred[u] and name in lab[u]]
        if len(ids) < 2:
            continue
        xs = [pred[u][name] for u in ids]
        ys = [lab[u][name] for u in ids]
        try:
            lcc[name], srcc[name] = pearson(xs, ys), spearman(xs, ys)
        except ValueError:
            lcc[name] = srcc[name] = float("nan")
        counts[name] = len(ids)
    out = cfg["out"] or os.path.join(out_root(), "correlation.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    _write_correlations(out, lcc, srcc, counts)
    for n in lcc:
        print(f"{n:18s} n={counts[n]:4d} LCC {lcc[n]:7.3f}  SRCC {srcc[n]:7.3f}")


def cmd_demo(cfg):
    from .pipeline import DeskConfig, prepare_desk

    out = _run_dir(cfg, "demo")
    desk = DeskConfig(seed=cfg["seed"], n_sources=cfg["n_sources"], variants=cfg["variants"],
                      sqa_epochs=cfg["sqa_epochs"], se_steps=cfg["se_steps"], ft_train=cfg["ft_train"],
                      ft_val=cfg["ft_val"])
    art = prepare_desk(desk, log=_say)
    art.proxy.save(os.path.join(out, "sqa.ckpt"))
    art.se0.save(os.path.join(out, "se.ckpt"))
    _write_correlations(os.path.join(out, "sqa_val_correlation.csv"), art.sqa_report.val_lcc,
                        art.sqa_report.val_srcc, {})
    _write_config(out, "demo", cfg)
    print(f"wrote demo proxy and enhancer to {out}")


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="sqaguide", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, value parsed as JSON (repeatable)")
        return sp

    g = add("gen", "write a synthetic labeled corpus")
    g.add_argument("--sources", type=int)
    g.add_argument("--variants", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    e = add("evaluate", "oracle metrics for every non-clean manifest entry")
    e.add_argument("--manifest")
    e.add_argument("--out")
    e.add_argument("--workers", type=int)
    r = add("rank", "per-source ranking scores")
    r.add_argument("--metrics")
    r.add_argument("--manifest")
    r.add_argument("--out")
    pr = add("predict", "proxy predictions for a manifest")
    pr.add_argument("--sqa")
    pr.add_argument("--manifest")
    pr.add_argument("--out")
    t = add("train-sqa", "train the quality proxy on a generated corpus")
    t.add_argument("--data")
    t.add_argument("--run-dir")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    s = add("pretrain-se", "pretrain the enhancer on the spectral loss")
    s.add_argument("--data")
    s.add_argument("--run-dir")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    f = add("finetune", "proxy-guided fine-tuning")
    f.add_argument("mode", choices=["simu", "real"])
    for lam in ("spec", "score", "feat", "reg"):
        f.add_argument(f"--lambda-{lam}", type=float)
    f.add_argument("--se")
    f.add_argument("--sqa")
    f.add_argument("--demo", help="directory holding se.ckpt and sqa.ckpt")
    f.add_argument("--data", help="generated corpus to draw pairs from")
    f.add_argument("--run-dir")
    f.add_argument("--steps", type=int)
    f.add_argument("--lr", type=float)
    f.add_argument("--seed", type=int)
    gc = add("gradcheck", "finite-difference check of every objective")
    gc.add_argument("--sqa")
    gc.add_argument("--se")
    gc.add_argument("--seed", type=int)
    c = add("correlate", "per-metric LCC/SRCC between predictions and labels")
    c.add_argument("--pred")
    c.add_argument("--labels")
    c.add_argument("--out")
    d = add("demo", "build the demo corpus, proxy and initial enhancer")
    d.add_argument("--out")
    d.add_argument("--seed", type=int)
    return p


_FLAG_KEYS = {
    "sources": "sources", "variants": "variants", "seed": "seed", "out": "out", "manifest": "manifest",
    "workers": "workers", "metrics": "metrics", "sqa": "sqa", "se": "se", "data": "data",
    "run_dir": "run_dir", "epochs": "epochs", "steps": "steps", "demo": "demo", "lr": "lr",
    "pred": "pred", "labels": "labels", "lambda_spec": "lambdas.spec", "lambda_score": "lambdas.score",
    "lambda_feat": "lambdas.feat", "lambda_reg": "lambdas.reg",
}

COMMANDS = {
    "gen": cmd_gen, "evaluate": cmd_evaluate, "rank": cmd_rank, "predict": cmd_predict,
    "train-sqa": cmd_train_sqa, "pretrain-se": cmd_pretrain_se, "gradcheck": cmd_gradcheck,
    "correlate": cmd_correlate, "demo": cmd_demo,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    flags = {_FLAG_KEYS[k]: v for k, v in vars(args).items() if k in _FLAG_KEYS}
    try:
        key = "finetune-real" if args.command == "finetune" and args.mode == "real" else args.command
        cfg = resolve_config(key, args.config, args.set, flags)
        if args.command == "finetune":
            cmd_finetune(cfg, args.mode)
        else:
            COMMANDS[args.command](cfg)
    except HackAbortExit as exc:
        _say(f"hack monitor abort: {exc}")
        return 2
    except (ConfigError, ValueError, KeyError, TypeError, OSError, FloatingPointError,
            CheckpointError, WavError) as exc:
        _say(f"error: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
