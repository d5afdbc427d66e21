"""Adaptive and uniform patch grids and the physics feature vector.

The adaptive layout puts a fine 6x6 grid over the (expanded) robot bounding
box and a coarse 4x4 grid over the full frame, then pads to 52 slots so every
image yields a vector of the same length.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, NoDetectionError
from .image import as_gray, gaussian_blur, gaussian_taps
from .metrics import METRIC_NAMES, N_METRICS, unchecked_vector
from .preprocess import BoundingBox, binarize, expand_bbox, largest_component_bbox, otsu_threshold

FOREGROUND = "foreground"
BACKGROUND = "background"
PAD = "pad"

UNIFORM_SIDES = (2, 4, 6, 8)


@dataclass(frozen=True)
class GridSpec:
    mode: str = "adaptive"
    k: int | None = None
    fg_grid: int = 6
    bg_grid: int = 4
    expansion_ratio: float = 1.2
    blur_sigma: float = 2.0

    def __post_init__(self):
        if self.mode == "uniform":
            if self.k not in UNIFORM_SIDES:
                raise InvalidInputError(f"uniform grid side must be one of {UNIFORM_SIDES}, got {self.k}")
        elif self.mode == "adaptive":
            if self.fg_grid <= self.bg_grid or self.bg_grid < 1:
                raise InvalidInputError("adaptive grid needs fg_grid > bg_grid >= 1")
        else:
            raise InvalidInputError(f"unknown grid mode {self.mode!r}")
        if self.expansion_ratio < 1 or not self.blur_sigma > 0:
            raise InvalidInputError("expansion_ratio must be >= 1 and blur_sigma > 0")

    @classmethod
    def parse(cls, text: str, **kw) -> "GridSpec":
        """``"adaptive"`` or ``"uniform:K"``."""
        text = text.strip().lower()
        if text == "adaptive":
            return cls(mode="adaptive", **kw)
        if text.startswith("uniform:"):
            try:
                k = int(text.split(":", 1)[1])
            except ValueError:
                raise InvalidInputError(f"bad uniform grid spec {text!r}") from None
            return cls(mode="uniform", k=k, **kw)
        raise InvalidInputError(f"bad grid spec {text!r}; use 'adaptive' or 'uniform:K'")

    @property
    def label(self) -> str:
        return "adaptive" if self.mode == "adaptive" else f"uniform:{self.k}"

    @property
    def n_slots(self) -> int:
        if self.mode == "adaptive":
            return self.fg_grid ** 2 + self.bg_grid ** 2
        return self.k ** 2

    @property
    def n_features(self) -> int:
        return self.n_slots * N_METRICS


@dataclass(frozen=True)
class Patch:
    box: BoundingBox | None
    tag: str


@dataclass
class PatchGrid:
    patches: list[Patch]
    shape: tuple[int, int]
    source_bbox: BoundingBox | None = None
    detected: bool = True

    def boxes(self, tag: str) -> list[BoundingBox]:
        return [p.box for p in self.patches if p.tag == tag]

    @property
    def mask(self) -> np.ndarray:
        return np.array([p.tag != PAD for p in self.patches], dtype=bool)


@dataclass
class PhysicsFeatures:
    """Patch-major feature vector (metrics in canonical order per patch) plus pad mask."""

    values: np.ndarray
    mask: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def matrix(self) -> np.ndarray:
        return self.values.reshape(-1, N_METRICS)


def split_axis(length: int, n: int) -> list[tuple[int, int]]:
    """Split ``length`` pixels into ``n`` runs; the last run absorbs the remainder."""
    if n < 1 or length < n:
        raise InvalidInputError(f"cannot split {length} pixels into {n} parts")
    base = length // n
    edges = [i * base for i in range(n)] + [length]
    return [(edges[i], edges[i + 1] - edges[i]) for i in range(n)]


def tile(region: BoundingBox, n: int) -> list[BoundingBox]:
    """Row-major n x n partition of ``region``."""
    rows = split_axis(region.h, n)
    cols = split_axis(region.w, n)
    return [BoundingBox(region.x0 + x, region.y0 + y, w, h) for (y, h) in rows for (x, w) in cols]


def detect_robot(img, spec: GridSpec | None = None) -> BoundingBox | None:
    """Blur, Otsu-segment and box the largest component; ``None`` if nothing is found."""
    spec = spec or GridSpec()
    img = as_gray(img)
    if img.shape[0] < 16 or img.shape[1] < 16:
        raise InvalidInputError(f"detection needs at least 16x16 pixels, got {img.shape[1]}x{img.shape[0]}")
    blurred = gaussian_blur(img, spec.blur_sigma)
    try:
        t = otsu_threshold(blurred)
        box = largest_component_bbox(binarize(blurred, t, "minority"))
    except (DegenerateInputError, NoDetectionError):
        return None
    return expand_bbox(box, spec.expansion_ratio, img.shape)


def build_grid(shape: tuple[int, int], bbox: BoundingBox | None, spec: GridSpec | None = None) -> PatchGrid:
    """Patch layout for an image of ``shape = (height, width)``.

    A missing ``bbox`` (no detection) makes the whole frame the foreground.
    """
    spec = spec or GridSpec()
    height, width = shape
    frame = BoundingBox(0, 0, width, height)
    if spec.mode == "uniform":
        return PatchGrid([Patch(b, FOREGROUND) for b in tile(frame, spec.k)], (height, width), None, True)
    detected = bbox is not None
    region = bbox if detected else frame
    if not region.fits(height, width):
        raise InvalidInputError(f"bbox {region} outside {width}x{height} image")
    patches = [Patch(b, FOREGROUND) for b in tile(region, spec.fg_grid)]
    patches += [Patch(b, BACKGROUND) for b in tile(frame, spec.bg_grid)]
    patches += [Patch(None, PAD)] * (spec.n_slots - len(patches))
    return PatchGrid(patches, (height, width), region, detected)


def _patch_metrics(patch: np.ndarray, taps: np.ndarray, enabled, notes: list[str], where: str) -> np.ndarray:
    h, w = patch.shape
    side = len(taps)
    fits = h >= side and w >= side
    if not fits:
        notes.append(f"{where}: {w}x{h} patch smaller than LoG kernel, M2 set to 0")
    if h < 3 or w < 3:
        notes.append(f"{where}: {w}x{h} patch smaller than 3x3, M3/M6 set to 0")
    out = unchecked_vector(patch, taps if fits else None)
    if enabled is not None:
        out[~enabled] = 0.0
    return out


def extract_features(img, grid: PatchGrid, log_sigma: float = 1.0, metrics=None) -> PhysicsFeatures:
    """Per-patch metric vectors, foreground row-major, then background, then zero pads.

    ``metrics`` optionally names the subset of measures to keep; disabled
    measures are written as zeros so the layout does not change.
    """
    img = as_gray(img)
    if img.shape != tuple(grid.shape):
        raise InvalidInputError(f"image shape {img.shape} does not match grid shape {grid.shape}")
    enabled = None
    if metrics is not None:
        unknown = set(metrics) - set(METRIC_NAMES)
        if unknown:
            raise InvalidInputError(f"unknown metrics {sorted(unknown)}")
        enabled = np.array([m in metrics for m in METRIC_NAMES])
    taps = gaussian_taps(log_sigma)
    notes: list[str] = []
    rows = []
    for i, p in enumerate(grid.patches):
        if p.tag == PAD:
            rows.append(np.zeros(N_METRICS))
        else:
            rows.append(_patch_metrics(p.box.slice(img), taps, enabled, notes, f"patch {i}"))
    for n in notes:
        warnings.warn(n, stacklevel=2)
    return PhysicsFeatures(np.concatenate(rows), grid.mask, notes)


def physics_features(img, spec: GridSpec | None = None, log_sigma: float = 1.0, metrics=None) -> tuple[PhysicsFeatures, PatchGrid]:
    """Detect, lay out and extract in one call."""
    spec = spec or GridSpec()
    img = as_gray(img)
    bbox = detect_robot(img, spec) if spec.mode == "adaptive" else None
    grid = build_grid(img.shape, bbox, spec)
    return extract_features(img, grid, log_sigma, metrics), grid


def feature_columns(spec: GridSpec) -> list[str]:
    """Feature CSV column names in vector order (``m{j}_p{i}``, patch-major)."""
    return [f"m{j + 1}_p{i}" for i in range(spec.n_slots) for j in range(N_METRICS)]


def mask_columns(spec: GridSpec) -> list[str]:
    return [f"mask_p{i}" for i in range(spec.n_slots)]


def layout_hash(spec: GridSpec, metrics=None, extra: str = "") -> str:
    """Short digest identifying a feature layout; models refuse data with a different one."""
    enabled = ",".join(metrics) if metrics is not None else ",".join(METRIC_NAMES)
    key = f"{spec.label}|fg={spec.fg_grid}|bg={spec.bg_grid}|metrics={enabled}|{extra}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]
