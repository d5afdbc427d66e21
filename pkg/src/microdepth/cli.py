"""Command-line entry point: synth, extract, train, eval, ablate, bench.

Exit codes: 0 success, 1 user/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import statistics
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .errors import (ImageFormatError, InvalidDatasetError, InvalidInputError, LayoutMismatchError,
                     SingularSystemError, TrainingDivergedError)
from .grid import physics_features
from .image import load_image
from .pipeline import (FeatureTable, extract_dataset, image_features, read_embeddings,
                       read_feature_csv, write_feature_csv)
from .preprocess import prepare_frame
from .regress import DepthRegressor, evaluate, fuse_rows, split_indices, train_regressor
from .synth import SynthConfig, generate_dataset, read_labels

log = logging.getLogger("microdepth")

EXIT_OK, EXIT_USER, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SWEEP_FRACTIONS = (1.0, 0.8, 0.6, 0.4, 0.2)
ABLATION_GRIDS = (("u2", "uniform:2"), ("u4", "uniform:4"), ("u6", "uniform:6"),
                  ("u8", "uniform:8"), ("adaptive", "adaptive"))


def _dump(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "grid", None) is not None:
        cfg.grid = args.grid
    if getattr(args, "no_denoise", False):
        cfg.preprocess.denoise = False
    if getattr(args, "regressor", None) is not None:
        cfg.regressor.kind = args.regressor
    if getattr(args, "lam", None) is not None:
        cfg.regressor.lam = args.lam
    return cfg.validate()


def _fractions(text: str) -> list[float]:
    try:
        fr = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad --fraction list {text!r}") from None
    if not fr or any(not 0 < f <= 1 for f in fr):
        raise ConfigError(f"fractions must lie in (0, 1], got {text!r}")
    return fr


def _set_hash(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


def _design(table: FeatureTable, embeddings_path=None) -> tuple[np.ndarray, str]:
    """Fused design matrix and the layout hash it corresponds to."""
    base = table.meta.get("layout_hash")
    if base is None:
        raise ConfigError("feature file has no .meta.json sidecar with a layout hash; re-run extract")
    if embeddings_path is None:
        return fuse_rows(table.X), base
    emb = read_embeddings(embeddings_path)
    missing = [p for p in table.paths if p not in emb]
    if missing:
        raise InvalidDatasetError(f"no embedding for {len(missing)} images (first: {missing[0]})")
    X = fuse_rows(table.X, [emb[p] for p in table.paths])
    dim = X.shape[1] - table.X.shape[1]
    return X, hashlib.sha256(f"{base}|emb={dim}".encode()).hexdigest()[:16]


def _print_table(header, rows) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.6g}"


def _fit(cfg: RunConfig, X, y, layout: str) -> DepthRegressor:
    return train_regressor(X, y, layout, kind=cfg.regressor.kind, lam=cfg.regressor.lam,
                           mlp=cfg.regressor.mlp_params(cfg.seed), config=cfg.to_dict())


# --- commands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _resolve(args)
    overrides = {}
    if args.n is not None:
        overrides["n_samples"] = args.n
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.shape is not None:
        overrides["shape"] = args.shape
    if args.asymmetric is not None:
        overrides["asymmetric"] = args.asymmetric
    if args.depth_range is not None:
        lo, hi = (float(v) for v in args.depth_range.split(","))
        overrides["depth_range"] = (lo, hi)
    sc = SynthConfig.from_dict({**cfg.synth.to_dict(), **overrides})
    cfg.synth = sc
    manifest = generate_dataset(sc, args.out)
    manifest["run_config"] = cfg.to_dict()
    _dump(manifest, os.path.join(args.out, "manifest.json"))
    print(f"wrote {manifest['n_images']} images and labels.csv to {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _resolve(args)
    table, stats = extract_dataset(args.data, cfg)
    n_total = stats.n_ok + len(stats.failures)
    write_feature_csv(table, args.out, cfg.grid_spec())
    print(f"{stats.n_ok}/{n_total} images extracted ({cfg.grid_spec().label}, "
          f"{cfg.grid_spec().n_features} features); {stats.no_detection} fell back to full-frame grid; "
          f"{len(stats.failures)} skipped")
    for name, err in stats.failures[:10]:
        print(f"  skipped {name}: {err}", file=sys.stderr)
    if len(stats.failures) * 2 > n_total:
        print(f"error: more than half of the images failed ({len(stats.failures)}/{n_total})", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(args)
    frac = _fractions(args.fraction)
    if len(frac) != 1:
        raise ConfigError("train takes a single --fraction; use eval for a sweep")
    table = read_feature_csv(args.features)
    X, layout = _design(table, args.embeddings)
    tr, te = split_indices(len(table), frac[0], cfg.seed, cfg.test_frac)
    model = _fit(cfg, X[tr], table.depths[tr], layout)
    model.save(args.model)
    train_rep = evaluate(model.predict(X[tr]), table.depths[tr])
    test_rep = evaluate(model.predict(X[te]), table.depths[te])
    report = {"command": "train", "config": cfg.to_dict(), "features": os.fspath(args.features),
              "layout_hash": layout, "fraction": frac[0], "n_train": len(tr), "n_test": len(te),
              "test_set_hash": _set_hash([table.paths[i] for i in te]),
              "train": train_rep.to_dict(), "test": test_rep.to_dict(),
              "mse_um2": test_rep.mse, "r2": test_rep.r2}
    _print_table(["split", "n", "mse_um2", "r2"],
                 [["train", train_rep.n, _fmt(train_rep.mse), _fmt(train_rep.r2)],
                  ["test", test_rep.n, _fmt(test_rep.mse), _fmt(test_rep.r2)]])
    if args.report:
        _dump(report, args.report)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    table = read_feature_csv(args.features)
    X, layout = _design(table, args.embeddings)
    y = table.depths
    if args.model:
        model = DepthRegressor.load(args.model)
        model.check_layout(layout)
        idx = np.arange(len(table)) if args.all else split_indices(len(table), 1.0, cfg.seed, cfg.test_frac)[1]
        rep = evaluate(model.predict(X[idx]), y[idx])
        report = {"command": "eval", "config": cfg.to_dict(), "model": os.fspath(args.model),
                  "layout_hash": layout, "test_set_hash": _set_hash([table.paths[i] for i in idx]),
                  **rep.to_dict()}
        _print_table(["n", "mse_um2", "r2"], [[rep.n, _fmt(rep.mse), _fmt(rep.r2)]])
    else:
        fractions = _fractions(args.fraction) if args.fraction else list(SWEEP_FRACTIONS)
        rows = []
        test_hash = None
        for f in fractions:
            tr, te = split_indices(len(table), f, cfg.seed, cfg.test_frac)
            test_hash = _set_hash([table.paths[i] for i in te])
            model = _fit(cfg, X[tr], y[tr], layout)
            rep = evaluate(model.predict(X[te]), y[te])
            rows.append({"fraction": f, "n_train": len(tr), "n_test": len(te), **rep.to_dict()})
        report = {"command": "eval", "config": cfg.to_dict(), "layout_hash": layout,
                  "test_set_hash": test_hash, "sweep": rows}
        _print_table(["fraction", "n_train", "mse_um2", "r2"],
                     [[f"{r['fraction']:.0%}", r["n_train"], _fmt(r["mse_um2"]), _fmt(r["r2"])] for r in rows])
    if args.report:
        _dump(report, args.report)
    return EXIT_OK


def _load_frames(data_dir, cfg: RunConfig):
    labels = read_labels(data_dir)
    if not labels:
        raise InvalidDatasetError(f"{data_dir}: labels.csv lists no images")
    frames = []
    for name, _ in labels:
        frames.append(prepare_frame(load_image(os.path.join(data_dir, name)), cfg.preprocess))
    return [n for n, _ in labels], np.array([d for _, d in labels]), frames


def run_ablation(data_dir, cfg: RunConfig) -> dict:
    """Train and test every grid configuration on one shared split."""
    names, y, frames = _load_frames(data_dir, cfg)
    tr, te = split_indices(len(names), 1.0, cfg.seed, cfg.test_frac)
    test_hash = _set_hash([names[i] for i in te])
    rows = []
    for label, grid in ABLATION_GRIDS:
        c = copy.deepcopy(cfg)
        c.grid = grid
        spec = c.validate().grid_spec()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X = np.array([physics_features(f, spec, c.log_sigma, c.metrics)[0].values for f in frames])
        model = _fit(c, X[tr], y[tr], c.layout_hash())
        rep = evaluate(model.predict(X[te]), y[te])
        rows.append({"config": label, "grid": grid, "n_features": spec.n_features,
                     "test_set_hash": test_hash, **rep.to_dict()})
    return {"command": "ablate", "config": cfg.to_dict(), "n_train": len(tr), "n_test": len(te),
            "test_set_hash": test_hash, "rows": rows}


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    report = run_ablation(args.data, cfg)
    _print_table(["config", "features", "mse_um2", "r2"],
                 [[r["config"], r["n_features"], _fmt(r["mse_um2"]), _fmt(r["r2"])] for r in report["rows"]])
    if args.report:
        _dump(report, args.report)
    return EXIT_OK


def _rate(fn, items, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(items)
        times.append(time.perf_counter() - t0)
    return len(items) / statistics.median(times)


def run_bench(data_dir, cfg: RunConfig, warmup: int = 100, n: int = 500, repeats: int = 1,
              model: DepthRegressor | None = None) -> dict:
    """Images per second for feature extraction and for end-to-end prediction.

    Frames are decoded up front so disk I/O is excluded; warmup frames are
    processed but not timed.  Small datasets are cycled to reach ``n``.
    """
    labels = read_labels(data_dir)
    if not labels:
        raise InvalidDatasetError(f"{data_dir}: labels.csv lists no images")
    raw = [load_image(os.path.join(data_dir, name)) for name, _ in labels]
    depths = np.array([d for _, d in labels])
    pick = [i % len(raw) for i in range(warmup + n)]
    warm, timed = [raw[i] for i in pick[:warmup]], [raw[i] for i in pick[warmup:]]

    def extract(img):
        return image_features(img, cfg)[0].values

    def serial(items):
        return [extract(im) for im in items]

    workers = max(cfg.workers, os.cpu_count() or 1)

    def threaded(items):
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(extract, items))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        serial(warm)
        if model is None:
            X = np.array(serial(raw))
            model = _fit(cfg, X, depths, cfg.layout_hash())

        def end_to_end(items):
            return [model.predict(extract(im)[None, :])[0] for im in items]

        single = _rate(serial, timed, repeats)
        multi = _rate(threaded, timed, repeats)
        e2e = _rate(end_to_end, timed, repeats)
    return {"command": "bench", "config": cfg.to_dict(), "warmup": warmup, "n_timed": n,
            "repeats": repeats, "workers": workers,
            "throughput_img_s": {"extract": {"single_thread": single, "multi_thread": multi},
                                 "end_to_end_predict": e2e}}


def cmd_bench(args) -> int:
    cfg = _resolve(args)
    model = DepthRegressor.load(args.model) if args.model else None
    report = run_bench(args.data, cfg, args.warmup, args.n, args.repeats, model)
    _dump(report, args.report)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microdepth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        if grid:
            sp.add_argument("--grid", help="'adaptive' or 'uniform:K' (K in 2,4,6,8)")
            sp.add_argument("--no-denoise", action="store_true", help="skip the Wiener filter")

    sp = sub.add_parser("synth", help="generate a synthetic defocus dataset")
    common(sp, grid=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--shape", choices=["disc", "ring", "spheroid_pair"])
    sp.add_argument("--asymmetric", dest="asymmetric", action="store_true", default=None)
    sp.add_argument("--symmetric", dest="asymmetric", action="store_false")
    sp.add_argument("--depth-range", help="z_min,z_max in micrometres")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("extract", help="images + labels.csv -> feature CSV")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_extract)

    for name, func, help_ in (("train", cmd_train, "fit a depth regressor"),
                              ("eval", cmd_eval, "evaluate a model or run the training-fraction sweep")):
        sp = sub.add_parser(name, help=help_)
        common(sp, grid=False)
        sp.add_argument("--features", required=True)
        sp.add_argument("--embeddings", help="CSV of per-image deep features to fuse")
        sp.add_argument("--regressor", choices=["ridge", "mlp"])
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--report", help="write the JSON report here")
        if name == "train":
            sp.add_argument("--model", required=True)
            sp.add_argument("--fraction", default="1.0")
        else:
            sp.add_argument("--model")
            sp.add_argument("--fraction", help="comma-separated training fractions (default 1,.8,.6,.4,.2)")
            sp.add_argument("--all", action="store_true", help="evaluate the model on every row")
        sp.set_defaults(func=func)

    sp = sub.add_parser("ablate", help="compare uniform 2/4/6/8 grids with the adaptive grid")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("bench", help="feature-extraction and prediction throughput")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--model")
    sp.add_argument("--warmup", type=int, default=100)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--repeats", type=int, default=1)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LayoutMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (InvalidDatasetError, ImageFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, InvalidInputError, SingularSystemError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
