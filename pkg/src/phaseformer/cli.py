"""Command-line operator surface.

Commands: train, eval, diagnose {mmd,pca,stability}, benchmark,
inspect-attention. Machine-readable output is JSON (stdout or files) and
CSV (files); human logs go to stderr. Every command is deterministic given
its resolved configuration and input files, and writes only inside --out.

Exit codes: 0 ok, 2 missing input file, 3 configuration mismatch,
4 invalid specification/config, 5 bad index, 1 anything else.
"""

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (SplitSpec, SyntheticLowRank, gen_drifting_cycles,
                   gen_low_rank, load_csv, standardize, windows)
from .diagnostics import (build_token_sets, effective_dim,
                          explained_variance_ratios, verify_stability,
                          weekly_drift)
from .errors import ConfigMismatchError, PhaseformerError, SpecError
from .model import (ModelConfig, count_params, estimate_flops, forward,
                    load_checkpoint, save_checkpoint)
from .preprocessing import estimate_period, phase_tokenize, revin_normalize
from .training import evaluate, train

# Per-dataset-family layer/router choices. The presets also enable the
# residual connection: without it, the attention output replaces the phase
# tokens outright, and at the small init scales training can converge into
# a washout saddle (all phases predicted identically) on strongly periodic
# data. The bare ModelConfig default keeps residual off.
PRESETS = {
    "ett": {"l_phase": 24, "embed_dim": 8, "n_routers": 8, "n_layers": 1,
            "residual": True},
    "traffic": {"l_phase": 24, "embed_dim": 8, "n_routers": 4, "n_layers": 2,
                "residual": True},
    "electricity": {"l_phase": 24, "embed_dim": 8, "n_routers": 4,
                    "n_layers": 2, "residual": True},
    "weather": {"l_phase": 24, "embed_dim": 8, "n_routers": 8, "n_layers": 3,
                "residual": True},
}

# The full key vocabulary of the INI run-config format; anything else is a
# hard error so typos cannot silently change a run.
CONFIG_KEYS = {
    "data": {"csv", "name", "freq"},
    "model": {"l_in", "l_out", "l_phase", "embed_dim", "n_routers",
              "n_layers", "n_heads", "residual", "seed"},
    "training": {"epochs", "batch_size", "patience", "lr"},
}

_MODEL_DEFAULTS = {"l_in": 720, "l_out": 96, "l_phase": "auto", "embed_dim": 8,
                   "n_routers": 8, "n_layers": 1, "n_heads": 1,
                   "residual": False, "seed": 0}
_TRAIN_DEFAULTS = {"epochs": 30, "batch_size": 256, "patience": 5, "lr": 1e-3}


def _log(msg):
    print(msg, file=sys.stderr)


def _require_file(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return p


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _parse_scalar(section, key, raw):
    if key in ("lr",):
        return float(raw)
    if key == "residual":
        lowered = str(raw).strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise SpecError(f"[{section}] {key} must be a boolean, got {raw!r}")
    if key == "l_phase" and str(raw).strip() == "auto":
        return "auto"
    if section in ("model", "training") and key != "lr":
        try:
            return int(raw)
        except ValueError:
            raise SpecError(f"[{section}] {key} must be an integer, got {raw!r}") from None
    return raw


def _read_config_file(path):
    _require_file(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise SpecError(f"cannot parse config file {path}: {exc}") from exc
    resolved = {}
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise SpecError(f"unknown config section [{section}] in {path}")
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise SpecError(f"unknown config key [{section}] {key} in {path}")
            resolved.setdefault(section, {})[key] = _parse_scalar(section, key, raw)
    return resolved


def _resolve_run_config(args):
    """defaults < config file < preset < explicit CLI flags."""
    cfg = {"data": {"freq": "unknown"},
           "model": dict(_MODEL_DEFAULTS),
           "training": dict(_TRAIN_DEFAULTS)}
    if getattr(args, "config", None):
        for section, kv in _read_config_file(args.config).items():
            cfg[section].update(kv)
    if getattr(args, "preset", None):
        cfg["model"].update(PRESETS[args.preset])
    flag_map = {
        ("data", "csv"): "data", ("data", "name"): "dataset_name",
        ("model", "l_in"): "l_in", ("model", "l_out"): "l_out",
        ("model", "l_phase"): "l_phase", ("model", "embed_dim"): "embed_dim",
        ("model", "n_routers"): "n_routers", ("model", "n_layers"): "n_layers",
        ("model", "n_heads"): "n_heads", ("model", "residual"): "residual",
        ("model", "seed"): "seed",
        ("training", "epochs"): "epochs",
        ("training", "batch_size"): "batch_size",
        ("training", "patience"): "patience", ("training", "lr"): "lr",
    }
    for (section, key), attr in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[section][key] = value
    if cfg["model"]["l_phase"] not in ("auto",):
        cfg["model"]["l_phase"] = int(cfg["model"]["l_phase"])
    return cfg


def _write_run_config(path, cfg):
    parser = configparser.ConfigParser()
    for section in ("data", "model", "training"):
        parser[section] = {k: str(v) for k, v in sorted(cfg[section].items())}
    with open(path, "w") as fh:
        parser.write(fh)


def _load_standardized(csv_path, name=None, freq="unknown"):
    _require_file(csv_path)
    dataset = load_csv(csv_path, name=name, freq=freq)
    splits = SplitSpec.for_dataset(dataset.name, dataset.values.shape[0])
    return standardize(dataset, splits), splits


def _auto_period(dataset, splits, l_in, method="dft"):
    lo, hi = splits.train
    series = dataset.values[lo:hi, 0]
    max_lag = max(2, min(l_in // 2, (hi - lo) // 2, 168))
    period = estimate_period(series, max_lag, method=method)
    _log(f"estimated period: {period}")
    return period


def _model_config(cfg_model, dataset=None, splits=None, period_method="dft"):
    model = dict(cfg_model)
    if model["l_phase"] == "auto":
        if dataset is None:
            raise SpecError("l_phase=auto needs a dataset to estimate from")
        model["l_phase"] = _auto_period(dataset, splits, model["l_in"],
                                        period_method)
    return ModelConfig(**model), model["l_phase"]


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args):
    cfg = _resolve_run_config(args)
    if not cfg["data"].get("csv"):
        raise SpecError("train needs --data (or [data] csv in the config file)")
    out = _out_dir(args)
    dataset, splits = _load_standardized(cfg["data"]["csv"],
                                         cfg["data"].get("name"),
                                         cfg["data"].get("freq", "unknown"))
    cfg["data"]["name"] = dataset.name
    config, l_phase = _model_config(cfg["model"], dataset, splits,
                                    args.period_method)
    cfg["model"]["l_phase"] = l_phase
    _log(f"training on {dataset.name}: {dataset.values.shape[0]} rows, "
         f"{dataset.values.shape[1]} channels, {count_params(config)} params")
    params, report = train(
        dataset, splits, config,
        epochs=cfg["training"]["epochs"],
        batch_size=cfg["training"]["batch_size"],
        patience=cfg["training"]["patience"],
        lr=cfg["training"]["lr"],
        seed=cfg["model"]["seed"])
    save_checkpoint(out / "checkpoint.phfm", config, params)
    _write_json(out / "train_report.json", report.to_json_dict())
    _write_run_config(out / "run_config.ini", cfg)
    _log(f"done: best epoch {report.best_epoch}, "
         f"test mse {report.test_mse:.6f}, mae {report.test_mae:.6f}")
    return 0


def cmd_eval(args):
    _require_file(args.checkpoint)
    config, params = load_checkpoint(args.checkpoint)
    dataset, splits = _load_standardized(args.data, args.dataset_name)
    horizon = args.horizon if args.horizon is not None else config.l_out
    if horizon > config.l_out:
        raise ConfigMismatchError(
            f"horizon {horizon} exceeds the checkpoint's l_out={config.l_out}")
    mse, mae = evaluate(params, dataset, splits.test, config, horizon=horizon)
    print(json.dumps({"mse": mse, "mae": mae}))
    return 0


def _drift_series(args):
    if args.data:
        dataset, _ = _load_standardized(args.data, args.dataset_name)
        if args.channel >= dataset.values.shape[1]:
            raise IndexError(f"channel {args.channel} out of range")
        return dataset.values[:, args.channel]
    return gen_drifting_cycles(args.weeks, args.l_phase, args.drift_rate,
                               args.seed or 0)


def cmd_diagnose_mmd(args):
    out = _out_dir(args)
    series = _drift_series(args)
    curves = weekly_drift(series, args.l_phase, args.periods_per_week)
    for kind, arr in (("phase", curves.phase_mmd), ("patch", curves.patch_mmd)):
        _write_csv(out / f"mmd_{kind}.csv", ["week", "mmd2"],
                   [(w + 1, float(v)) for w, v in enumerate(arr)])
    _write_json(out / "mmd_summary.json", curves.to_json_dict())
    _log(f"phase mean {curves.phase_mean:.6f}, patch mean {curves.patch_mean:.6f}")
    return 0


def cmd_diagnose_pca(args):
    out = _out_dir(args)
    if args.data:
        dataset, _ = _load_standardized(args.data, args.dataset_name)
        if args.channel >= dataset.values.shape[1]:
            raise IndexError(f"channel {args.channel} out of range")
        series = dataset.values[:, args.channel]
        phase_ts, patch_ts = build_token_sets(series, args.l_phase,
                                              args.periods_per_week)
        phase_tokens, patch_tokens = phase_ts.tokens, patch_ts.tokens
    else:
        clean = SyntheticLowRank.generate(args.rows, args.cols, args.rank,
                                          0.0, args.noise, args.seed or 0)
        x, _, _ = gen_low_rank(clean)
        phase_tokens = x.T
        drifted = SyntheticLowRank.generate(args.rows, args.cols, args.rank,
                                            args.eps, args.noise, args.seed or 0)
        _, x_t, _ = gen_low_rank(drifted)
        patch_tokens = x_t
    summary = {"threshold": args.threshold}
    for kind, tokens in (("phase", phase_tokens), ("patch", patch_tokens)):
        ratios = explained_variance_ratios(tokens)
        rows = [(i + 1, float(r), float(c))
                for i, (r, c) in enumerate(zip(ratios, np.cumsum(ratios)))]
        _write_csv(out / f"pca_{kind}.csv",
                   ["component", "explained_variance_ratio", "cumulative"], rows)
        summary[f"{kind}_effective_dim"] = effective_dim(tokens, args.threshold)
    _write_json(out / "pca_summary.json", summary)
    _log(f"effective dims: phase {summary['phase_effective_dim']}, "
         f"patch {summary['patch_effective_dim']}")
    return 0


def cmd_diagnose_stability(args):
    out = _out_dir(args)
    base_seed = args.seed or 0
    trials = []
    for i in range(args.trials):
        spec = SyntheticLowRank.generate(args.rows, args.cols, args.rank,
                                         args.eps, args.noise,
                                         seed=base_seed + i)
        trials.append(verify_stability(spec).to_json_dict())
    payload = {
        "n_trials": args.trials,
        "rows": args.rows, "cols": args.cols, "rank": args.rank,
        "noise": args.noise, "eps": args.eps, "seed": base_seed,
        "all_phase_within_bound": all(t["phase_within_bound"] for t in trials),
        "all_patch_above_bound": all(t["patch_above_bound"] for t in trials),
        "max_d_phase": max(t["d_phase"] for t in trials),
        "min_d_patch": min(t["d_patch"] for t in trials),
        "trials": trials,
    }
    _write_json(out / "stability_report.json", payload)
    _log(f"{args.trials} trials: phase within bound "
         f"{payload['all_phase_within_bound']}, patch above bound "
         f"{payload['all_patch_above_bound']}")
    return 0


def cmd_benchmark(args):
    cfg = _resolve_run_config(args)
    model_cfg = dict(cfg["model"])
    if model_cfg["l_phase"] == "auto":
        model_cfg["l_phase"] = 24
    config = ModelConfig(**model_cfg)
    print(json.dumps({"params": count_params(config),
                      "flops": estimate_flops(config)}))
    if args.sweep_l_in:
        out = _out_dir(args)
        rows = []
        for l_in in (int(tok) for tok in args.sweep_l_in.split(",")):
            swept = ModelConfig(**{**model_cfg, "l_in": l_in})
            rows.append((l_in, estimate_flops(swept)))
        _write_csv(out / "flops_sweep.csv", ["l_in", "flops"], rows)
    return 0


def cmd_inspect_attention(args):
    _require_file(args.checkpoint)
    config, params = load_checkpoint(args.checkpoint)
    dataset, splits = _load_standardized(args.data, args.dataset_name)
    split_range = getattr(splits, args.split)
    if args.channel >= dataset.values.shape[1] or args.channel < 0:
        raise IndexError(f"channel {args.channel} out of range")
    samples = windows(dataset, split_range, config.l_in, config.l_out)
    per_channel = len(samples) // dataset.values.shape[1]
    if args.window_index >= per_channel or args.window_index < 0:
        raise IndexError(
            f"window index {args.window_index} out of range "
            f"(split has {per_channel} windows per channel)")
    x, _, _ = samples[args.channel * per_channel + args.window_index]
    normalized, _ = revin_normalize(x)
    tokens = phase_tokenize(normalized, config.l_phase)
    _, cache = forward(params, tokens, config)
    out = _out_dir(args)
    for i, layer in enumerate(cache.layers):
        for kind, weights, col in (("agg", layer.agg.weights, "phase"),
                                   ("dist", layer.dist.weights, "router")):
            for h in range(config.n_heads):
                mat = weights[h]
                path = out / f"{kind}_weights_layer{i}_head{h}.csv"
                _write_csv(path, [f"{col}{j}" for j in range(mat.shape[1])],
                           [[float(v) for v in row] for row in mat])
    _write_json(out / "attention_meta.json", {
        "n_layers": config.n_layers, "n_heads": config.n_heads,
        "n_routers": config.n_routers, "l_phase": config.l_phase,
        "split": args.split, "channel": args.channel,
        "window_index": args.window_index,
    })
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_model_flags(p):
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--l-in", dest="l_in", type=int)
    p.add_argument("--l-out", dest="l_out", type=int)
    p.add_argument("--l-phase", dest="l_phase")
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--routers", dest="n_routers", type=int)
    p.add_argument("--layers", dest="n_layers", type=int)
    p.add_argument("--heads", dest="n_heads", type=int)
    p.add_argument("--residual", dest="residual", action="store_const", const=True)


def _add_common(p, need_out):
    p.add_argument("--config", help="INI run-config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=need_out, default=None,
                   help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phaseformer",
        description="Phase-token forecasting: training, evaluation, and "
                    "drift/stability diagnostics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a CSV dataset")
    p.add_argument("--data", help="dataset CSV path")
    p.add_argument("--dataset-name", dest="dataset_name")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--period-method", choices=("dft", "acf"), default="dft")
    _add_common(p, need_out=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--horizon", type=int)
    _add_common(p, need_out=False)
    p.set_defaults(func=cmd_eval)

    diag = sub.add_parser("diagnose", help="drift/dimension/stability diagnostics")
    dsub = diag.add_subparsers(dest="subcommand", required=True)

    p = dsub.add_parser("mmd", help="weekly distribution drift of both token kinds")
    p.add_argument("--data")
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--l-phase", dest="l_phase", type=int, default=24)
    p.add_argument("--periods-per-week", type=int, default=7)
    p.add_argument("--weeks", type=int, default=20)
    p.add_argument("--drift-rate", type=float, default=0.1)
    _add_common(p, need_out=True)
    p.set_defaults(func=cmd_diagnose_mmd)

    p = dsub.add_parser("pca", help="explained-variance spectra and effective dims")
    p.add_argument("--data")
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--l-phase", dest="l_phase", type=int, default=24)
    p.add_argument("--periods-per-week", type=int, default=7)
    p.add_argument("--rows", type=int, default=40)
    p.add_argument("--cols", type=int, default=28)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--noise", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1.5)
    p.add_argument("--threshold", type=float, default=0.9)
    _add_common(p, need_out=True)
    p.set_defaults(func=cmd_diagnose_pca)

    p = dsub.add_parser("stability", help="verify the subspace stability bounds")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--rows", type=int, default=40)
    p.add_argument("--cols", type=int, default=28)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--noise", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1e-3)
    _add_common(p, need_out=True)
    p.set_defaults(func=cmd_diagnose_stability)

    p = sub.add_parser("benchmark", help="parameter and FLOP accounting")
    _add_model_flags(p)
    p.add_argument("--sweep-l-in", dest="sweep_l_in",
                   help="comma-separated l_in values for a FLOP sweep CSV")
    _add_common(p, need_out=False)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("inspect-attention",
                       help="dump attention weights for one window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--window-index", dest="window_index", type=int, default=0)
    _add_common(p, need_out=True)
    p.set_defaults(func=cmd_inspect_attention)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return 2
    except ConfigMismatchError as exc:
        _log(f"config mismatch: {exc}")
        return 3
    except SpecError as exc:
        _log(f"invalid specification: {exc}")
        return 4
    except IndexError as exc:
        _log(f"bad index: {exc}")
        return 5
    except PhaseformerError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
