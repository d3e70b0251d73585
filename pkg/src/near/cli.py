"""Command-line interface.

    near score            --model mlp.json --data train-images.idx3-ubyte
    near estimate-sizes   --model template.json --data features.csv
    near rank             results.csv [PROXY@DATASET=path ...]
    near compare-hparams  --model mlp.json --data ... --activations SiLU,ReLU --inits XavierUniform,Uniform01

Reports are JSON with a ``schema`` version, a ``timestamp`` and a ``digest``
(SHA-256 of the canonical report without those two fields).  Failures print
a one-line JSON error record to stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .data import Dataset, load_csv, load_idx, load_score_table, standardize
from .errors import ConfigError, NearError
from .evalstats import average_rank, kendall_tau, pairwise_win_probability, spearman_rho
from .netdef import ACTIVATIONS, INIT_SCHEMES, Conv2D, InitScheme, ModelSpec
from .scoring import DEFAULT_REPETITIONS, near_score
from .sizing import DEFAULT_FRACTION, estimate_layer_sizes

log = logging.getLogger("near")

SCHEMA = "near.report/v1"
EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# helpers


def _csv_list(text: str | None) -> list[str]:
    if text is None:
        return []
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _int_list(text) -> list[int] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in _csv_list(text)]
    except ValueError:
        raise ConfigError(f"candidate sizes must be integers, got {text!r}") from None


def load_model(path) -> ModelSpec:
    return ModelSpec.from_json(Path(path).read_text())


def load_dataset(path, standardize_mode: str = "auto") -> Dataset:
    """CSV by extension, IDX (optionally gzipped) otherwise."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    is_csv = path.suffix.lower() == ".csv"
    ds = load_csv(path) if is_csv else load_idx(path)
    if standardize_mode == "on" or (standardize_mode == "auto" and is_csv):
        ds = standardize(ds)
    return ds


def _features_for(spec: ModelSpec, ds: Dataset) -> ModelSpec:
    """Fill ``input_shape`` for conv models from an image dataset."""
    if spec.input_shape is None and ds.image_shape is not None and isinstance(spec.layers[0], Conv2D):
        return replace(spec, input_shape=ds.image_shape)
    return spec


def finalize_report(body: dict) -> dict:
    """Attach schema, digest and timestamp.  The digest ignores the timestamp."""
    body = {"schema": SCHEMA, "version": __version__, **body}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    body["digest"] = hashlib.sha256(canonical.encode()).hexdigest()
    body["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return body


def write_report(body: dict, out: str | None) -> None:
    text = json.dumps(finalize_report(body), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _validate_common(cfg: argparse.Namespace) -> None:
    reps = getattr(cfg, "reps", None)
    if reps is not None and reps < 1:
        raise ConfigError(f"--reps must be >= 1, got {reps}")
    fraction = getattr(cfg, "fraction", None)
    if fraction is not None and not 0 < fraction < 1:
        raise ConfigError(f"--fraction must lie in (0, 1), got {fraction}")


# ---------------------------------------------------------------------------
# commands


def cmd_score(cfg: argparse.Namespace) -> int:
    _validate_common(cfg)
    spec = load_model(cfg.model)
    ds = load_dataset(cfg.data, cfg.standardize)
    spec = _features_for(spec, ds)
    rep = near_score(spec, ds.features, cfg.reps, cfg.seed, cfg.svd)
    write_report({
        "command": "score",
        "model": spec.to_dict(),
        "data": {"name": ds.name, "samples": ds.n_samples, "standardized": ds.standardized},
        "result": rep.to_dict(),
    }, cfg.out)
    print(f"NEAR score: {rep.mean_score:.4f} ± {rep.std_score:.4f} ({rep.repetitions} repetitions)",
          file=sys.stderr if not cfg.out else sys.stdout)
    return EXIT_OK


def cmd_estimate_sizes(cfg: argparse.Namespace) -> int:
    _validate_common(cfg)
    spec = load_model(cfg.model)
    ds = load_dataset(cfg.data, cfg.standardize)
    candidates = _int_list(cfg.candidate_sizes)
    rep = estimate_layer_sizes(spec, ds.features, candidates, cfg.reps, cfg.seed, cfg.fraction, cfg.svd)
    write_report({
        "command": "estimate-sizes",
        "model": spec.to_dict(),
        "data": {"name": ds.name, "samples": ds.n_samples, "standardized": ds.standardized},
        "seed": cfg.seed,
        "repetitions": cfg.reps,
        "result": rep.to_dict(),
    }, cfg.out)
    stream = sys.stdout if cfg.out else sys.stderr
    for ls in rep.layers:
        flag = " (extrapolated)" if ls.extrapolated else ""
        print(f"layer {ls.layer_index}: {ls.size} units  gamma={ls.fit.gamma:.3f}{flag}", file=stream)
    return EXIT_OK


def _parse_rank_input(item: str) -> tuple[str, str, str]:
    """``[PROXY@DATASET=]path`` -> (proxy, dataset, path)."""
    if "=" in item:
        label, path = item.split("=", 1)
        proxy, _, dataset = label.partition("@")
        return proxy or "score", dataset or Path(path).stem, path
    return "score", Path(item).stem, item


def cmd_rank(cfg: argparse.Namespace) -> int:
    if not cfg.inputs:
        raise ConfigError("rank needs at least one CSV input")
    results = []
    tables: dict[str, dict[str, float]] = {}
    for item in cfg.inputs:
        proxy, dataset, path = _parse_rank_input(item)
        if not Path(path).exists():
            raise FileNotFoundError(path)
        _, scores, accs = load_score_table(path)
        row = {
            "proxy": proxy,
            "dataset": dataset,
            "n": int(scores.size),
            "kendall_tau": kendall_tau(scores, accs),
            "spearman_rho": spearman_rho(scores, accs),
            "pairwise_win": pairwise_win_probability(scores, accs, cfg.pairs, cfg.seed),
        }
        results.append(row)
        tables.setdefault(dataset, {})[proxy] = row["spearman_rho"]
    body: dict = {"command": "rank", "seed": cfg.seed, "pairs": cfg.pairs, "results": results}
    stream = sys.stdout if cfg.out else sys.stderr
    for r in results:
        print(f"{r['proxy']:>12s} {r['dataset']:>14s}  tau={r['kendall_tau']:.4f}  "
              f"rho={r['spearman_rho']:.4f}  P(win)={r['pairwise_win']:.4f}", file=stream)
    if len(results) > 1:
        ranks = average_rank(list(tables.values()))
        body["average_rank"] = dict(sorted(ranks.items(), key=lambda kv: (kv[1], kv[0])))
        for proxy, r in body["average_rank"].items():
            print(f"average rank {proxy}: {r:.3f}", file=stream)
    write_report(body, cfg.out)
    return EXIT_OK


def cmd_compare_hparams(cfg: argparse.Namespace) -> int:
    _validate_common(cfg)
    activations = _csv_list(cfg.activations)
    inits = _csv_list(cfg.inits)
    if not activations or not inits:
        raise ConfigError("--activations and --inits must each name at least one choice")
    for a in activations:
        if a not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {a!r}; expected one of {ACTIVATIONS}")
    for i in inits:
        if i not in INIT_SCHEMES or i == "Custom":
            raise ConfigError(f"unknown init scheme {i!r}")
    base = load_model(cfg.model)
    ds = load_dataset(cfg.data, cfg.standardize)
    base = _features_for(base, ds)
    rows = []
    for act in activations:
        for init in inits:
            spec = replace(base, activation=act, init=InitScheme(init))
            rep = near_score(spec, ds.features, cfg.reps, cfg.seed, cfg.svd)
            rows.append({"activation": act, "init": init, "mean": rep.mean_score, "std": rep.std_score,
                         "result": rep.to_dict()})
    rows.sort(key=lambda r: (-r["mean"], r["activation"], r["init"]))
    write_report({
        "command": "compare-hparams",
        "model": base.to_dict(),
        "data": {"name": ds.name, "samples": ds.n_samples, "standardized": ds.standardized},
        "seed": cfg.seed,
        "repetitions": cfg.reps,
        "table": rows,
    }, cfg.out)
    stream = sys.stdout if cfg.out else sys.stderr
    for r in rows:
        print(f"{r['activation'] + ', ' + r['init']:<30s} {r['mean']:9.2f} ± {r['std']:.2f}", file=stream)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_scoring_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model spec JSON")
    p.add_argument("--data", required=True, help="dataset: .csv or IDX (optionally gzipped)")
    p.add_argument("--reps", type=int, default=DEFAULT_REPETITIONS, help="repetitions (default 32)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--standardize", choices=("on", "off", "auto"), default="auto",
                   help="per-feature z-score; auto = on for CSV, off for IDX")
    p.add_argument("--labels", help="IDX labels path (accepted, not used for scoring)")
    p.add_argument("--svd", choices=("lapack", "jacobi"), default="lapack",
                   help="singular value routine (default lapack)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="near", description="Training-free network scoring (NEAR).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of option defaults (keys = long option names)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="NEAR score of one model")
    _add_scoring_args(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("estimate-sizes", help="estimate hidden-layer widths of an MLP template")
    _add_scoring_args(p)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION,
                   help="slope threshold relative to the slope at width 1 (default 0.005)")
    p.add_argument("--candidate-sizes", help="comma-separated, strictly increasing widths")
    p.set_defaults(func=cmd_estimate_sizes)

    p = sub.add_parser("rank", help="rank correlations of proxy scores against accuracies")
    p.add_argument("inputs", nargs="*", help="CSV (id, score, accuracy), optionally PROXY@DATASET=path")
    p.add_argument("--pairs", type=int, default=1_000_000, help="Monte-Carlo pairs for P(win)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("compare-hparams", help="score activation x initialisation combinations")
    _add_scoring_args(p)
    p.add_argument("--activations", default="SiLU,ReLU,Tanh,Tanhshrink")
    p.add_argument("--inits", default="XavierUniform,KaimingUniform,Uniform01")
    p.set_defaults(func=cmd_compare_hparams)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices  # type: ignore[union-attr]
    command = next((a for a in argv if a in choices), None)
    if known.config and command is not None:
        defaults = json.loads(Path(known.config).read_text())
        if not isinstance(defaults, dict):
            raise ConfigError(f"{known.config}: expected a JSON object of option defaults")
        keys = {k.replace("-", "_") for k in defaults}
        sub = choices[command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        # required options satisfied by the config file
        for action in sub._actions:
            if action.dest in keys:
                action.required = False
    return parser.parse_args(argv)


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = _apply_config(parser, argv)
    except (OSError, json.JSONDecodeError, ConfigError) as err:
        return _error("ConfigError", str(err), EXIT_CONFIG)
    logging.basicConfig(level=logging.DEBUG if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return cfg.func(cfg)
    except ConfigError as err:
        return _error("ConfigError", str(err), EXIT_CONFIG)
    except FileNotFoundError as err:
        return _error("FileNotFound", str(err), EXIT_ERROR)
    except NearError as err:
        return _error(type(err).__name__, str(err), EXIT_ERROR)
    except (json.JSONDecodeError, ValueError) as err:
        return _error(type(err).__name__, str(err), EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
