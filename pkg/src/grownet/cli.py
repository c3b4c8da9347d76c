"""Command-line entry point.

Subcommands: grow, baseline, rbf-demo, report, transfer-rank, gradcheck.

Configuration is a flat `key = value` file with `#` comments; every flag has
a config-file key of the same name (dashes become underscores) and flags win
on conflict. The effective configuration is echoed into the summary JSON.
Unknown or duplicate config keys are rejected with their line number.

Outputs land in --out (default: a per-command directory under the
GROWNET_OUT environment variable, or the working directory): run_log.csv,
events.jsonl, summary.json, checkpoint.json, plus rbf_demo.csv, report.json,
or transfer_rank.json where applicable.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (including a
failed gradcheck), 4 I/O error.
"""

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import data as data_mod
from . import network, rbf, topo, train
from .backend import backend_name
from .linalg import NumericError, make_rng

_INT_KEYS = ("n", "m", "max_iters", "init_layers", "epochs_base",
             "epochs_step", "batch", "patience", "seed")
_FLOAT_KEYS = ("sparsity", "lr", "eps", "eps_threshold", "tau1", "eps_s",
               "sigma_n")
_STR_KEYS = ("optimizer", "activation_pair", "loss", "mode", "model", "out",
             "data_train", "data_val", "data_test", "data", "sweep",
             "checkpoint")

_TRAIN_KEYS = _INT_KEYS + _FLOAT_KEYS + ("optimizer", "activation_pair",
                                         "loss")


def _defaults():
    cfg = {f.name: getattr(train.TrainConfig(), f.name)
           for f in train.TrainConfig.__dataclass_fields__.values()}
    cfg.update({"mode": None, "model": "fnn", "out": None, "data_train": None,
                "data_val": None, "data_test": None, "data": None,
                "sweep": None, "checkpoint": None})
    return cfg


def parse_config_file(path):
    """Strict flat key = value parser; unknown/duplicate keys are errors."""
    known = set(_INT_KEYS) | set(_FLOAT_KEYS) | set(_STR_KEYS)
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s: line %d: expected key = value" % (path, lineno))
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError("%s: line %d: unknown key %r" % (path, lineno, key))
            if key in out:
                raise ValueError("%s: line %d: duplicate key %r" % (path, lineno, key))
            try:
                if key in _INT_KEYS:
                    out[key] = int(value)
                elif key in _FLOAT_KEYS:
                    out[key] = float(value)
                else:
                    out[key] = value
            except ValueError:
                raise ValueError(
                    "%s: line %d: bad value for %r: %r" % (path, lineno, key, value)
                ) from None
    return out


def _merge_config(args):
    """Defaults, then config file, then flags; returns (cfg, explicit keys)."""
    cfg = _defaults()
    explicit = set()
    if args.config:
        file_cfg = parse_config_file(args.config)
        cfg.update(file_cfg)
        explicit.update(file_cfg)
    for key in list(cfg):
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            cfg[key] = flag_value
            explicit.add(key)
    return cfg, explicit


def _apply_chain_defaults(cfg, explicit):
    """Chain-protocol training defaults for keys the user left unset."""
    if cfg["model"] == "rbf":
        for key, value in train.CHAIN_DEFAULTS.items():
            if key not in explicit:
                cfg[key] = value


def _train_config(cfg):
    return train.TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS}).validate()


def _resolve_out(cfg, default_name):
    out = cfg["out"]
    if out is None:
        out = os.path.join(os.environ.get("GROWNET_OUT", "."), default_name)
    os.makedirs(out, exist_ok=True)
    cfg["out"] = out
    return out


def _echo(cfg):
    return {k: cfg[k] for k in sorted(cfg)}


# ---------------------------------------------------------------------------
# Dataset wiring
# ---------------------------------------------------------------------------

def _parse_kv_spec(body, defaults, what):
    values = dict(defaults)
    if body:
        for item in body.split(","):
            if "=" not in item:
                raise ValueError("%s spec: expected k=v, got %r" % (what, item))
            key, val = (part.strip() for part in item.split("=", 1))
            if key not in values:
                raise ValueError("%s spec: unknown key %r" % (what, key))
            kind = type(values[key])
            try:
                values[key] = kind(val)
            except ValueError:
                raise ValueError(
                    "%s spec: bad value for %r: %r" % (what, key, val)) from None
    return values


def _slice(ds, lo, hi, name):
    return data_mod.Dataset(ds.inputs[lo:hi], ds.labels[lo:hi], name=name)


def _generate(spec, seed):
    head, _, body = spec.partition(":")
    if head == "rbf":
        sizes = _parse_kv_spec(body, {"train": 5000, "val": 500, "test": 1000},
                               "rbf data")
        tr, va, te, _ = rbf.gen_rbf_dataset(seed, **sizes)
        return tr, va, te
    if head == "gaussian":
        g = _parse_kv_spec(body, {"train": 2000, "val": 500, "test": 1000,
                                  "n0": 4, "nT": 1, "scale": 1.0,
                                  "noise": 0.0, "hidden": 32}, "gaussian data")
        total = g["train"] + g["val"] + g["test"]
        ds = data_mod.gen_gaussian_regression(
            seed, total, g["n0"], g["nT"], teacher_scale=g["scale"],
            noise=g["noise"], hidden=g["hidden"])
        a, b = g["train"], g["train"] + g["val"]
        return (_slice(ds, 0, a, "train"), _slice(ds, a, b, "val"),
                _slice(ds, b, total, "test"))
    raise ValueError("unknown data generator %r (use rbf or gaussian)" % head)


def _load_datasets(cfg):
    """(train, val, test-or-None) from CSV paths or a generator spec."""
    if cfg["data_train"]:
        if not cfg["data_val"]:
            raise ValueError("data_train is set but data_val is missing")
        n0, nT = data_mod.peek_csv_header(cfg["data_train"])
        tr = data_mod.load_csv(cfg["data_train"], n0, nT)
        va = data_mod.load_csv(cfg["data_val"], n0, nT)
        te = (data_mod.load_csv(cfg["data_test"], n0, nT)
              if cfg["data_test"] else None)
        return tr, va, te
    spec = cfg["data"]
    if spec is None and cfg["model"] == "rbf":
        spec = "rbf"
    if spec is None:
        raise ValueError("no training data: set data_train/val or a data generator")
    return _generate(spec, cfg["seed"])


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------

def _predictions(model, ds):
    if isinstance(model, rbf.RbfChain):
        return model.predict(ds.inputs).reshape(-1, 1)
    trace, _ = network.forward(model, ds.inputs, ds.labels)
    return trace.states[-1]


def _test_metrics(model, test_ds, loss_kind):
    if test_ds is None:
        return {}
    metrics = {"test_loss": _model_loss(model, test_ds)}
    if loss_kind == "mse":
        pred = _predictions(model, test_ds)
        metrics["test_mse"] = float(np.mean((pred - test_ds.labels) ** 2))
    return metrics


def _model_loss(model, ds):
    return model.loss(ds.inputs, ds.labels)


def _write_artifacts(out, model, log, summary):
    train.write_run_log(log, os.path.join(out, "run_log.csv"))
    train.write_events(log, os.path.join(out, "events.jsonl"))
    train.write_summary(summary, os.path.join(out, "summary.json"))
    ckpt.save_checkpoint(model, os.path.join(out, "checkpoint.json"))


def _finish_growth(cfg, out, model, log, test_ds, extra=None):
    loss_kind = cfg["loss"] if cfg["model"] == "fnn" else "mse"
    summary = dict(log.summary)
    summary.update(_test_metrics(model, test_ds, loss_kind))
    summary["backend"] = backend_name()
    summary["config"] = _echo(cfg)
    if extra:
        summary.update(extra)
    _write_artifacts(out, model, log, summary)
    print("%s: %s after %d iteration(s), best val %.6g -> %s" % (
        summary["method"], summary["stop_reason"], summary["last_iteration"],
        summary["best_val_loss"], out))
    return summary


# ---------------------------------------------------------------------------
# Subcommand bodies (shared by the direct path and the sweep pool)
# ---------------------------------------------------------------------------

def _execute_grow(cfg):
    mode = cfg["mode"] or "semi"
    if mode not in ("semi", "auto"):
        raise ValueError("grow mode must be 'semi' or 'auto', got %r" % mode)
    cfg["mode"] = mode
    if cfg["model"] not in ("fnn", "rbf"):
        raise ValueError("model must be 'fnn' or 'rbf', got %r" % cfg["model"])
    out = _resolve_out(cfg, "grow-%s-seed%d" % (mode, cfg["seed"]))
    tr, va, te = _load_datasets(cfg)
    tc = _train_config(cfg)
    grow = train.grow_semi if mode == "semi" else train.grow_auto
    model, log = grow(tc, tr, va, kind=cfg["model"])
    return _finish_growth(cfg, out, model, log, te)


def _execute_baseline(cfg):
    mode = cfg["mode"]
    if mode is None:
        raise ValueError(
            "baseline needs --mode baseline:<%s>" % "|".join(train.STRATEGIES))
    strategy = mode[len("baseline:"):] if mode.startswith("baseline:") else mode
    if strategy not in train.STRATEGIES:
        raise ValueError("unknown baseline strategy %r" % strategy)
    cfg["mode"] = "baseline:" + strategy
    if cfg["model"] not in ("fnn", "rbf"):
        raise ValueError("model must be 'fnn' or 'rbf', got %r" % cfg["model"])
    out = _resolve_out(cfg, "baseline-%s-seed%d" % (strategy, cfg["seed"]))
    tr, va, te = _load_datasets(cfg)
    tc = _train_config(cfg)
    model, log = train.grow_baseline(strategy, tc, tr, va, kind=cfg["model"])
    return _finish_growth(cfg, out, model, log, te)


def _execute_rbf_demo(cfg):
    cfg["mode"] = "rbf-demo"
    cfg["model"] = "rbf"
    out = _resolve_out(cfg, "rbf-demo-seed%d" % cfg["seed"])
    tr, va, te = _load_datasets(cfg)
    tc = _train_config(cfg)
    rows = []

    def on_scan(iteration, model, report):
        if report.chosen is None or report.max_score < tc.eps_threshold:
            return
        best = report.best()
        numerical = rbf.numerical_derivative(
            model, tr.inputs, tr.labels, best.l, best.phi, [1e-4])[0]
        rows.append((iteration, model.layer_count,
                     _model_loss(model, tr),
                     _model_loss(model, te) if te is not None else float("nan"),
                     best.lam, float(numerical)))

    model, log = train.grow_semi(tc, tr, va, kind="rbf", on_scan=on_scan)
    demo_path = os.path.join(out, "rbf_demo.csv")
    with open(demo_path, "w", encoding="utf-8") as fh:
        fh.write("iteration,layer_count,train_loss,test_loss,"
                 "theoretical_dJ,numerical_dJ\n")
        for it, layers, tl, te_loss, theo, num in rows:
            fh.write("%d,%d,%s,%s,%s,%s\n"
                     % (it, layers, repr(tl), repr(te_loss), repr(theo), repr(num)))
    return _finish_growth(cfg, out, model, log, te,
                          extra={"demo_rows": len(rows)})


def _execute(command, cfg):
    if command == "grow":
        return _execute_grow(cfg)
    if command == "baseline":
        return _execute_baseline(cfg)
    if command == "rbf-demo":
        return _execute_rbf_demo(cfg)
    raise ValueError("unknown command %r" % command)


# ---------------------------------------------------------------------------
# Seed sweeps
# ---------------------------------------------------------------------------

def _parse_sweep(spec):
    if not spec.startswith("seeds="):
        raise ValueError("sweep must look like seeds=a..b, got %r" % spec)
    body = spec[len("seeds="):]
    lo, sep, hi = body.partition("..")
    if not sep:
        raise ValueError("sweep must look like seeds=a..b, got %r" % spec)
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise ValueError("sweep bounds must be integers: %r" % spec) from None
    if hi_i < lo_i:
        raise ValueError("sweep range is empty: %r" % spec)
    return list(range(lo_i, hi_i + 1))


def _sweep_child(payload):
    command, cfg = payload
    try:
        return cfg["seed"], 0, _execute(command, cfg)
    except ValueError as exc:
        return cfg["seed"], 2, {"error": str(exc)}
    except NumericError as exc:
        return cfg["seed"], 3, {"error": str(exc)}
    except OSError as exc:
        return cfg["seed"], 4, {"error": str(exc)}


def _run_sweep(command, cfg):
    seeds = _parse_sweep(cfg["sweep"])
    root = _resolve_out(cfg, "%s-sweep" % command)
    payloads = []
    for seed in seeds:
        child = dict(cfg)
        child["sweep"] = None
        child["seed"] = seed
        child["out"] = os.path.join(root, "seed_%d" % seed)
        payloads.append((command, child))
    workers = min(len(seeds), os.cpu_count() or 1)
    results = {}
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        for seed, code, summary in pool.map(_sweep_child, payloads):
            results[seed] = (code, summary)
    aggregate = {
        "command": command,
        "seeds": seeds,
        "results": {str(s): results[s][1] for s in seeds},
        "exit_codes": {str(s): results[s][0] for s in seeds},
    }
    for metric in ("test_mse", "test_loss", "best_val_loss"):
        values = [results[s][1][metric] for s in seeds
                  if metric in results[s][1]]
        if values:
            aggregate["median_" + metric] = float(np.median(values))
    train.write_summary(aggregate, os.path.join(root, "sweep_summary.json"))
    worst = max(code for code, _ in results.values())
    print("sweep: %d seed(s) -> %s (worst exit %d)" % (len(seeds), root, worst))
    return worst


# ---------------------------------------------------------------------------
# report / transfer-rank / gradcheck
# ---------------------------------------------------------------------------

def _load_model_and_data(cfg):
    if not cfg["checkpoint"]:
        raise ValueError("--checkpoint is required")
    data_path = cfg["data"] or cfg["data_train"]
    if not data_path:
        raise ValueError("--data is required")
    model = ckpt.load_checkpoint(cfg["checkpoint"])
    n0, nT = data_mod.peek_csv_header(data_path)
    ds = data_mod.load_csv(data_path, n0, nT)
    return model, ds


def _execute_report(cfg):
    mode = cfg["mode"] or "fixed"
    if mode not in ("fixed", "auto"):
        raise ValueError("report mode must be 'fixed' or 'auto', got %r" % mode)
    cfg["mode"] = mode
    model, ds = _load_model_and_data(cfg)
    if isinstance(model, rbf.RbfChain):
        report = rbf.scan_chain(model, ds.inputs, ds.labels)
    else:
        report = topo.scan_dataset(model, ds.inputs, ds.labels, mode=mode,
                                   m=cfg["m"], eps_s=cfg["eps_s"])
    payload = topo.report_to_dict(report)
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    out = _resolve_out(cfg, "report")
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return 0


def _execute_transfer_rank(cfg):
    model, ds = _load_model_and_data(cfg)
    if isinstance(model, rbf.RbfChain):
        raise ValueError("transfer-rank needs a residual-net checkpoint")
    _, ranked = topo.transfer_rank(model, ds.inputs, ds.labels, m=cfg["m"])
    payload = {
        "m": cfg["m"],
        "ranking": [
            {"l": e.l, "score": e.score, "lambda": e.lam, "m": e.m}
            for e in ranked
        ],
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    out = _resolve_out(cfg, "transfer-rank")
    with open(os.path.join(out, "transfer_rank.json"), "w",
              encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def _execute_gradcheck(cfg, trials=5):
    rng = make_rng(cfg["seed"])
    pairs = ("swish+tanh", "mish+tanh", "swish+mish")
    worst = 0.0
    for trial in range(trials):
        n0 = int(rng.integers(1, 4))
        nT = int(rng.integers(1, 4))
        loss_kind = "mse" if trial % 2 == 0 else "cross-entropy"
        spec = network.NetworkSpec(
            n0=n0, nT=nT, n=int(rng.integers(2, 7)),
            hidden_count=int(rng.integers(1, 4)),
            activation_pair=pairs[trial % 3], loss_kind=loss_kind,
        )
        net = network.init_network(spec, rng, sigma_n=0.4)
        s = 6
        inputs = rng.standard_normal((s, n0))
        if loss_kind == "mse":
            labels = rng.standard_normal((s, nT))
        else:
            labels = np.zeros((s, nT))
            labels[np.arange(s), rng.integers(0, nT, size=s)] = 1.0
        trace, _ = network.forward(net, inputs, labels)
        network.adjoint(net, trace)
        fd = network.fd_param_gradients(net, inputs, labels)
        scale = max(max(np.abs(f).max() for f in fd), 1e-12)
        err = max(np.abs(a - f).max() for a, f in zip(trace.param_grads, fd))
        worst = max(worst, err / scale)
    print("max relative gradient error: %.3e" % worst)
    return 0 if worst <= 1e-6 else 3


# ---------------------------------------------------------------------------
# Argument parsing and entry point
# ---------------------------------------------------------------------------

def _add_common_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--mode", help="variant: semi|auto (grow), "
                                  "baseline:<name> (baseline), "
                                  "fixed|auto (report)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: under GROWNET_OUT)")
    p.add_argument("--data-train", dest="data_train")
    p.add_argument("--data-val", dest="data_val")
    p.add_argument("--data-test", dest="data_test")
    p.add_argument("--data", help="CSV path (report/transfer-rank) or "
                                  "generator spec rbf[:k=v,...] / gaussian[:k=v,...]")
    p.add_argument("--sweep", help="seeds=a..b runs one seed per subdirectory")
    p.add_argument("--model", choices=["fnn", "rbf"])
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--epochs-base", dest="epochs_base", type=int)
    p.add_argument("--epochs-step", dest="epochs_step", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--init-layers", dest="init_layers", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-threshold", dest="eps_threshold", type=float)
    p.add_argument("--tau1", type=float)
    p.add_argument("--eps-s", dest="eps_s", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--sigma-n", dest="sigma_n", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--activation-pair", dest="activation_pair")
    p.add_argument("--loss", choices=["mse", "cross-entropy"])
    p.add_argument("--checkpoint", help="checkpoint path (report/transfer-rank)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grownet",
        description="Progressively deepen residual networks where the loss "
                    "is most sensitive to a new layer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("grow", "train with guided depth growth (semi or auto mode)"),
        ("baseline", "train with a comparison growth strategy"),
        ("rbf-demo", "scalar-chain demo comparing predicted and measured "
                     "insertion derivatives"),
        ("report", "scan a checkpoint against a dataset and emit the "
                   "interface report"),
        ("transfer-rank", "rank a checkpoint's interfaces for fine-tuning "
                          "on new data"),
        ("gradcheck", "verify adjoint gradients against finite differences"),
    ):
        _add_common_flags(sub.add_parser(name, help=blurb))
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg, explicit = _merge_config(args)
    command = args.command
    if command == "gradcheck":
        return _execute_gradcheck(cfg)
    if command == "report":
        return _execute_report(cfg)
    if command == "transfer-rank":
        return _execute_transfer_rank(cfg)
    if command == "rbf-demo":
        cfg["model"] = "rbf"
    _apply_chain_defaults(cfg, explicit)
    if cfg["sweep"]:
        return _run_sweep(command, cfg)
    _execute(command, cfg)
    return 0


def main(argv=None):
    try:
        return run(argv)
    except NumericError as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 3
    except ValueError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("io error: %s" % exc, file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
