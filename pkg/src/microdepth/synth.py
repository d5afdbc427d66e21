"""Synthetic defocus dataset with known depth labels.

A textured silhouette is rendered at a random in-plane position, blurred
with sigma(z) = base_sigma + blur_coeff * |z|, optionally given a brightness
ramp when above focus (so the sign of z is observable), corrupted with
Gaussian noise and quantized to 8 bits.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .image import gaussian_blur, save_image

SHAPES = ("disc", "ring", "spheroid_pair")


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 500
    depth_range: tuple[float, float] = (-5.0, 5.0)
    blur_coeff: float = 0.4
    base_sigma: float = 0.3
    noise_std: float = 2.0
    shape: str = "disc"
    seed: int = 0
    size: int = 224
    asymmetric: bool = False
    ramp_gain: float = 6.0
    background: float = 90.0
    contrast: float = 80.0

    def __post_init__(self):
        lo, hi = self.depth_range
        if not lo < hi:
            raise InvalidInputError(f"depth_range needs z_min < z_max, got {self.depth_range}")
        if not self.blur_coeff > 0:
            raise InvalidInputError("blur_coeff must be positive")
        if self.base_sigma < 0 or self.noise_std < 0:
            raise InvalidInputError("base_sigma and noise_std must be non-negative")
        if self.shape not in SHAPES:
            raise InvalidInputError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.n_samples < 0 or self.size < 64:
            raise InvalidInputError("n_samples must be >= 0 and size >= 64")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["depth_range"] = list(self.depth_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "depth_range" in d:
            d["depth_range"] = tuple(d["depth_range"])
        return cls(**d)


@dataclass
class Sample:
    image: np.ndarray
    depth: float
    embedding: np.ndarray | None = None


def defocus_sigma(cfg: SynthConfig, z: float) -> float:
    return cfg.base_sigma + cfg.blur_coeff * abs(z)


def _silhouette(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = cfg.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    radius = rng.uniform(0.13, 0.18) * n
    margin = 1.4 * radius + 4
    cx, cy = rng.uniform(margin, n - margin, size=2)
    theta = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    v = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    if cfg.shape == "disc":
        body = np.hypot(u, v) <= radius
    elif cfg.shape == "ring":
        r = np.hypot(u, v)
        body = (r <= radius) & (r >= 0.55 * radius)
    else:
        body = (((u - 0.5 * radius) / (0.55 * radius)) ** 2 + (v / (0.8 * radius)) ** 2 <= 1) | \
               (((u + 0.5 * radius) / (0.55 * radius)) ** 2 + (v / (0.8 * radius)) ** 2 <= 1)
    # fine internal structure so focus loss is visible inside the body
    stripes = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * u / (0.22 * radius)))
    img = np.full((n, n), cfg.background)
    img[body] += cfg.contrast * (0.55 + 0.45 * stripes[body])
    return img


def render_sample(cfg: SynthConfig, z: float, rng: np.random.Generator | int | None = None) -> Sample:
    """Render one labelled frame at depth ``z`` (micrometres)."""
    lo, hi = cfg.depth_range
    if not lo <= z <= hi:
        raise InvalidInputError(f"depth {z} outside range {cfg.depth_range}")
    rng = np.random.default_rng(rng)
    img = gaussian_blur(_silhouette(cfg, rng), defocus_sigma(cfg, z))
    if cfg.asymmetric and z > 0:
        x = np.arange(cfg.size, dtype=np.float64) / (cfg.size - 1) - 0.5
        img = img + cfg.ramp_gain * z * x[None, :]
    noise = rng.standard_normal(img.shape)
    if cfg.noise_std > 0:
        img = img + cfg.noise_std * noise
    img = np.clip(np.floor(img + 0.5), 0, 255)
    return Sample(img, float(z))


def sample_streams(cfg: SynthConfig) -> tuple[np.ndarray, list[np.random.Generator]]:
    """Depth labels and one independent generator per sample, both derived from ``cfg.seed``."""
    root = np.random.SeedSequence(cfg.seed)
    depth_seq, *item_seqs = root.spawn(cfg.n_samples + 1)
    lo, hi = cfg.depth_range
    depths = np.random.default_rng(depth_seq).uniform(lo, hi, cfg.n_samples)
    return depths, [np.random.default_rng(s) for s in item_seqs]


def iter_samples(cfg: SynthConfig):
    depths, rngs = sample_streams(cfg)
    for z, rng in zip(depths, rngs):
        yield render_sample(cfg, float(z), rng)


def image_name(i: int) -> str:
    return f"img_{i:05d}.pgm"


def generate_dataset(cfg: SynthConfig, out_dir) -> dict:
    """Write ``n_samples`` PGM frames, ``labels.csv`` and ``manifest.json`` to ``out_dir``."""
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        rows = []
        for i, sample in enumerate(iter_samples(cfg)):
            name = image_name(i)
            save_image(sample.image, os.path.join(out_dir, name))
            rows.append((name, repr(sample.depth)))
        with open(os.path.join(out_dir, "labels.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["filename", "depth_um"])
            w.writerows(rows)
        manifest = {"generator": "microdepth.synth", "config": cfg.to_dict(), "n_images": len(rows),
                    "labels": "labels.csv"}
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write dataset to {out_dir}: {exc.strerror}", exc.filename) from exc
    return manifest


def read_labels(data_dir) -> list[tuple[str, float]]:
    """``(filename, depth_um)`` rows of a dataset's labels.csv."""
    path = os.path.join(os.fspath(data_dir), "labels.csv")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"filename", "depth_um"} <= set(reader.fieldnames):
            raise InvalidInputError(f"{path}: expected header 'filename,depth_um'")
        return [(r["filename"], float(r["depth_um"])) for r in reader]
