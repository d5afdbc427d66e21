"""Dataset-level plumbing: image folder -> feature table -> CSV and back."""

from __future__ import annotations

import csv
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import ImageFormatError, InvalidDatasetError
from .grid import feature_columns, mask_columns, physics_features
from .image import load_image
from .preprocess import prepare_frame
from .synth import read_labels

log = logging.getLogger(__name__)


@dataclass
class FeatureTable:
    paths: list[str]
    depths: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.paths)


@dataclass
class ExtractStats:
    n_ok: int = 0
    no_detection: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)


def image_features(img, cfg: RunConfig):
    """Preprocess one frame and compute its physics features and grid."""
    frame = prepare_frame(img, cfg.preprocess)
    return physics_features(frame, cfg.grid_spec(), cfg.log_sigma, cfg.metrics)


def _extract_one(args):
    path, cfg = args
    try:
        img = load_image(path)
    except (OSError, ImageFormatError) as exc:
        return None, str(exc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        feats, grid = image_features(img, cfg)
    return (feats, grid.detected), None


def extract_dataset(data_dir, cfg: RunConfig) -> tuple[FeatureTable, ExtractStats]:
    """Features for every labelled image in ``data_dir``.

    Unreadable images are skipped and recorded in the returned stats; row
    order follows labels.csv regardless of ``cfg.workers``.
    """
    data_dir = os.fspath(data_dir)
    try:
        labels = read_labels(data_dir)
    except FileNotFoundError:
        raise InvalidDatasetError(f"{data_dir}: no labels.csv found") from None
    if not labels:
        raise InvalidDatasetError(f"{data_dir}: labels.csv lists no images")
    jobs = [(os.path.join(data_dir, name), cfg) for name, _ in labels]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]

    stats = ExtractStats()
    paths, depths, rows, masks = [], [], [], []
    for (name, depth), (res, err) in zip(labels, results):
        if res is None:
            log.warning("skipping %s: %s", name, err)
            stats.failures.append((name, err))
            continue
        feats, detected = res
        stats.n_ok += 1
        stats.no_detection += not detected
        paths.append(name)
        depths.append(depth)
        rows.append(feats.values)
        masks.append(feats.mask)
    spec = cfg.grid_spec()
    X = np.array(rows).reshape(len(rows), spec.n_features)
    M = np.array(masks, dtype=bool).reshape(len(rows), spec.n_slots)
    meta = {"config": cfg.to_dict(), "layout_hash": cfg.layout_hash(), "grid": spec.label,
            "n_rows": len(paths), "no_detection": stats.no_detection,
            "skipped": [name for name, _ in stats.failures]}
    return FeatureTable(paths, np.array(depths, dtype=np.float64), X, M, meta), stats


def meta_path(csv_path) -> str:
    return os.fspath(csv_path) + ".meta.json"


def write_feature_csv(table: FeatureTable, path, spec) -> None:
    """One row per image: ``path, depth_um``, the feature columns, then the pad mask."""
    header = ["path", "depth_um"] + feature_columns(spec) + mask_columns(spec)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p, d, x, m in zip(table.paths, table.depths, table.X, table.mask):
            w.writerow([p, repr(float(d))] + [repr(float(v)) for v in x] + [int(b) for b in m])
    with open(meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(table.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_feature_csv(path) -> FeatureTable:
    path = os.fspath(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidDatasetError(f"{path}: empty feature file") from None
        rows = list(reader)
    if header[:2] != ["path", "depth_um"]:
        raise InvalidDatasetError(f"{path}: header must start with 'path,depth_um'")
    feat_idx = [i for i, h in enumerate(header) if h.startswith("m") and not h.startswith("mask_")]
    mask_idx = [i for i, h in enumerate(header) if h.startswith("mask_")]
    if len(feat_idx) != 6 * len(mask_idx):
        raise InvalidDatasetError(f"{path}: {len(feat_idx)} feature columns for {len(mask_idx)} patches")
    try:
        paths = [r[0] for r in rows]
        depths = np.array([float(r[1]) for r in rows], dtype=np.float64)
        X = np.array([[float(r[i]) for i in feat_idx] for r in rows], dtype=np.float64).reshape(len(rows), len(feat_idx))
        M = np.array([[r[i] == "1" for i in mask_idx] for r in rows], dtype=bool).reshape(len(rows), len(mask_idx))
    except (ValueError, IndexError) as exc:
        raise InvalidDatasetError(f"{path}: malformed row ({exc})") from None
    meta = {}
    if os.path.exists(meta_path(path)):
        with open(meta_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
    return FeatureTable(paths, depths, X, M, meta)


def read_embeddings(path) -> dict[str, np.ndarray]:
    """Per-image deep features from a CSV with header ``filename,e0,e1,...``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "filename":
            raise InvalidDatasetError(f"{path}: embedding file must start with a 'filename' column")
        out = {}
        for r in reader:
            try:
                out[r[0]] = np.array([float(v) for v in r[1:]], dtype=np.float64)
            except ValueError as exc:
                raise InvalidDatasetError(f"{path}: malformed embedding row for {r[0]} ({exc})") from None
    return out
