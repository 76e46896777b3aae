"""Command-line entry point: ``fdi {ingest,stats,quantify,sweep,detect}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .archive import archive_digest, file_digest, load_archive, save_archive
from .binary import BinaryParams, theorem1_check
from .dataset import Role, binary_view, build_dataset, feature_degree_histogram, user_degree_histogram
from .distance import DistanceConfig, estimate_stats_table, idf_weights, theorem2_check
from .distribution import theorem3_check
from .exceptions import FDIError
from .harness import SweepConfig, sweep
from .ingestion import extract_http_features, parse_http_log, parse_snap_ego, parse_tsv
from .newuser import NewUserScanner, estimate_thresholds
from .reports import dumps_json, rows_to_csv, write_atomic

logger = logging.getLogger("fdi")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _resolve_seed(flag) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SEED must be an integer, got {env!r}")
    return 0


def _model_cfg(args, U=None) -> DistanceConfig:
    weights = None
    if getattr(args, "weights", "unit") == "idf":
        if U is None:
            raise UsageError("idf weights need a training dataset")
        weights = idf_weights(U)
    return DistanceConfig(args.combiner, args.norm, weights)


def _manifest(command: str, config: dict, inputs: list) -> dict:
    digests = {}
    for path in inputs:
        p = Path(path)
        if p.exists():
            digests[str(path)] = archive_digest(p) if p.is_dir() else file_digest(p)
    return {
        "command": command,
        "config": config,
        "inputs": digests,
        "tool_version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _emit(out, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(Path(out) / name, text)


# -- ingest ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    if args.format == "tsv":
        edges = []
        for path in args.inputs:
            edges.extend(parse_tsv(path, strict=args.strict))
    elif args.format == "snap":
        edges = parse_snap_ego(args.inputs if len(args.inputs) > 1 else args.inputs[0])
    else:
        records = []
        for path in args.inputs:
            records.extend(parse_http_log(path, strict=args.strict))
        edges = extract_http_features(records, include=args.http_features.split(","))
    d = build_dataset(edges, Role(args.role))
    save_archive(d, args.out)
    config = {"format": args.format, "strict": args.strict, "role": args.role}
    if args.format == "http":
        config["http_features"] = args.http_features
    write_atomic(
        Path(args.out) / "manifest.json",
        dumps_json(_manifest("ingest", config, args.inputs)),
    )
    print(f"n={d.n} N={d.N} relationships={d.n_relationships}")
    return EXIT_OK


# -- stats ----------------------------------------------------------------


def cmd_stats(args) -> int:
    d = load_archive(args.dataset)
    users = [{"degree": k, "count": v} for k, v in user_degree_histogram(d).items()]
    feats = [{"degree": k, "count": v} for k, v in feature_degree_histogram(d).items()]
    if args.out is None:
        sys.stdout.write("# user degree\n" + rows_to_csv(("degree", "count"), users))
        sys.stdout.write("# feature degree\n" + rows_to_csv(("degree", "count"), feats))
    else:
        _emit(args.out, "user_degree.csv", rows_to_csv(("degree", "count"), users))
        _emit(args.out, "feature_degree.csv", rows_to_csv(("degree", "count"), feats))
    print(f"n={d.n} N={d.N} relationships={d.n_relationships}", file=sys.stderr)
    return EXIT_OK


# -- quantify -------------------------------------------------------------


def cmd_quantify(args) -> int:
    U = load_archive(args.dataset, Role.TRAINING)
    V = load_archive(args.target, Role.TARGET) if args.target else U.with_role(Role.TARGET)
    seed = _resolve_seed(args.seed)
    K = args.k
    if args.model == "binary":
        p = 0.9 if args.p is None else args.p
        params = BinaryParams(p=p, N=U.N, K=K, delta=args.delta)
        report = theorem1_check(binary_view(U), binary_view(V), params)
    elif args.model == "distance":
        p = 0.8 if args.p is None else args.p
        cfg = _model_cfg(args, U)
        stats = estimate_stats_table(U, p, args.trials, seed, cfg)
        report = theorem2_check(U, V, K, args.delta, stats, U.N)
    else:
        p = 1.0 if args.p is None else args.p
        cfg = _model_cfg(args, U)
        sampling = None if p >= 1.0 else (p, args.trials, seed)
        report = theorem3_check(U, V, K, args.delta, cfg, xi=args.xi, sampling=sampling)
    report.params.update({"p": p, "seed": seed, "model": args.model})
    if args.out is None:
        sys.stdout.write(report.to_json())
    else:
        report.write(args.out)
        config = dict(vars(args), seed=seed, p=p)
        config.pop("func", None)
        write_atomic(
            Path(args.out) / "manifest.json",
            dumps_json(_manifest("quantify", config, [args.dataset] + ([args.target] if args.target else []))),
        )
        print(json.dumps({"inferable": report.inferable, "n_passed": report.n_passed, "m_tilde": report.m_tilde}))
    return EXIT_OK


# -- sweep ----------------------------------------------------------------

_SWEEP_KEYS = {"model", "p", "k", "reps", "seed", "jobs", "norm", "combiner", "binary-p", "weights"}


def read_config(path) -> dict:
    """Flat ``key = value`` lines (``#`` comments), or a sweep manifest in JSON."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        cfg = json.loads(text)["config"]
        return {
            "model": cfg["model"],
            "p": ",".join(repr(float(p)) for p in cfg["p_grid"]),
            "k": ",".join(str(k) for k in cfg["k_grid"]),
            "reps": str(cfg["reps"]),
            "seed": str(cfg["seed"]),
            "norm": str(cfg["norm"]),
            "combiner": cfg["combiner"],
            "binary-p": str(cfg["binary_p"]),
            "weights": cfg.get("weights", "unit"),
        }
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("_", "-")
        if key not in _SWEEP_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_k(token: str):
    token = token.strip()
    value = float(token)
    if 0.0 < value < 1.0:
        return value
    if value != int(value):
        raise UsageError(f"K must be an integer or a fraction in (0, 1), got {token!r}")
    return int(value)


def cmd_sweep(args) -> int:
    raw = load_archive(args.dataset)
    conf = read_config(args.config) if args.config else {}
    flag_map = {
        "model": args.model,
        "p": args.p_grid,
        "k": args.k_grid,
        "reps": args.reps,
        "seed": args.seed,
        "jobs": args.jobs,
        "norm": args.norm,
        "combiner": args.combiner,
        "binary-p": args.binary_p,
        "weights": args.weights,
    }
    for key, value in flag_map.items():
        if value is not None:
            conf[key] = str(value)
    try:
        p_grid = [float(x) for x in conf.get("p", "1.0").split(",")]
        k_grid = [_parse_k(x) for x in conf.get("k", "10").split(",")]
        reps = int(conf.get("reps", "10"))
        jobs = int(conf.get("jobs", "1"))
        norm = float(conf.get("norm", "2"))
        binary_p = float(conf.get("binary-p", "0.9"))
    except ValueError as exc:
        raise UsageError(f"bad sweep configuration: {exc}")
    seed = _resolve_seed(conf.get("seed"))
    weights_kind = conf.get("weights", "unit")
    if weights_kind not in ("unit", "idf"):
        raise UsageError(f"weights must be unit or idf, got {weights_kind!r}")
    weights = idf_weights(raw) if weights_kind == "idf" else None
    cfg = DistanceConfig(conf.get("combiner", "product"), norm, weights)
    config = SweepConfig(
        p_grid=tuple(p_grid),
        k_grid=tuple(k_grid),
        model=conf.get("model", "distance"),
        reps=reps,
        seed=seed,
        cfg=cfg,
        binary_p=binary_p,
        n_jobs=jobs,
    )
    result = sweep(raw, config)
    manifest = result.manifest()
    manifest["config"]["weights"] = weights_kind
    _emit(args.out, "sweep.csv", result.to_csv())
    if args.out is not None:
        full = _manifest("sweep", manifest["config"], [args.dataset])
        full["cells"] = manifest["cells"]
        write_atomic(Path(args.out) / "manifest.json", dumps_json(full))
    return EXIT_OK


# -- detect ---------------------------------------------------------------

DETECT_COLUMNS = ("user", "mode", "statistic", "threshold", "verdict", "confidence")


def cmd_detect(args) -> int:
    U = load_archive(args.training, Role.TRAINING)
    V = load_archive(args.target, Role.TARGET)
    V = V.reindex(U.space) if V.space != U.space else V
    seed = _resolve_seed(args.seed)
    cfg = _model_cfg(args, U)
    p = 0.8 if args.p is None else args.p
    th = estimate_thresholds(U, p, args.trials, seed, cfg, args.mode, args.xi)
    scanner = NewUserScanner(U, th, cfg)
    rows = [scanner.detect(v).as_row() for v in V]
    _emit(args.out, "detection.csv", rows_to_csv(DETECT_COLUMNS, rows))
    if args.out is not None:
        thresholds = {
            "mu_star_d": th.mu_star_d,
            "mu_star_s": th.mu_star_s,
            "xi": th.xi,
            "mode": th.mode.value,
            "zeta": th.zeta,
            "N": th.N,
            "precondition_met": th.precondition_met(),
        }
        write_atomic(Path(args.out) / "thresholds.json", dumps_json(thresholds))
        config = dict(vars(args), seed=seed, p=p)
        config.pop("func", None)
        write_atomic(
            Path(args.out) / "manifest.json",
            dumps_json(_manifest("detect", config, [args.training, args.target])),
        )
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_model_flags(sp, with_norm: bool = True) -> None:
    sp.add_argument("--combiner", default="product", choices=("product", "raw", "logproduct"))
    if with_norm:
        sp.add_argument("--norm", type=float, default=2.0, help="l-p norm order (>= 1)")
    sp.add_argument("--weights", default="unit", choices=("unit", "idf"), help="per-feature model weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdi", description="Feature-based data inferability toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="build a dataset archive from raw inputs")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--format", required=True, choices=("tsv", "snap", "http"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--strict", action="store_true", help="fail on malformed input lines")
    sp.add_argument("--role", default="training", choices=("training", "target"))
    sp.add_argument("--http-features", default="domain,path")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("stats", help="user and feature degree histograms")
    sp.add_argument("dataset")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("quantify", help="check the (delta, K) sufficient condition")
    sp.add_argument("dataset", help="training archive")
    sp.add_argument("--target", help="target archive (default: the training data)")
    sp.add_argument("--model", default="binary", choices=("binary", "distance", "distribution"))
    sp.add_argument("--p", type=float, help="preservation (binary) or sampling rate (others)")
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--delta", type=float, default=1.0)
    sp.add_argument("--xi", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=30)
    sp.add_argument("--seed", type=int)
    _add_model_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_quantify)

    sp = sub.add_parser("sweep", help="Top-K hit rates over a (p, K) grid")
    sp.add_argument("dataset")
    sp.add_argument("--config", help="key = value file or a previous sweep manifest")
    sp.add_argument("--model", choices=("binary", "distance", "distribution"))
    sp.add_argument("--p", dest="p_grid", help="comma-separated sampling rates")
    sp.add_argument("--k", dest="k_grid", help="comma-separated K values or fractions of n")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--norm", type=float)
    sp.add_argument("--combiner", choices=("product", "raw", "logproduct"))
    sp.add_argument("--weights", choices=("unit", "idf"))
    sp.add_argument("--binary-p", type=float, help="preservation probability for the binary model")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("detect", help="flag target users absent from the training data")
    sp.add_argument("training")
    sp.add_argument("target")
    sp.add_argument("--mode", default="distance", choices=("distance", "distribution"))
    sp.add_argument("--xi", type=float, default=0.5)
    sp.add_argument("--p", type=float, help="sampling rate for threshold estimation (default 0.8)")
    sp.add_argument("--trials", type=int, default=30)
    sp.add_argument("--seed", type=int)
    _add_model_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FDIError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
