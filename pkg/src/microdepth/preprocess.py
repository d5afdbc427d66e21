"""Frame preprocessing and segmentation.

Covers the acquisition chain applied to raw microscope frames (Wiener
denoising, Otsu binarisation, Canny edges, centroid-centred ROI crop) and the
segmentation primitives the adaptive grid builds on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, InvalidInputError, NoDetectionError
from .image import as_gray, gaussian_blur, quantize, resize, sobel_gradients

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; ``(x0, y0)`` is the inclusive top-left pixel."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.w < 1 or self.h < 1:
            raise InvalidInputError(f"invalid bounding box {self}")

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits(self, height: int, width: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def slice(self, img: np.ndarray) -> np.ndarray:
        return img[self.y0:self.y1, self.x0:self.x1]

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.w, self.h)


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def wiener_denoise(img, window: int = 5) -> np.ndarray:
    """Pixel-wise adaptive Wiener filter.

    Local mean and variance come from a ``window`` x ``window`` neighbourhood;
    the noise power is estimated as the mean of all local variances.
    """
    if window < 3 or window % 2 == 0:
        raise InvalidInputError(f"Wiener window must be odd and >= 3, got {window}")
    img = as_gray(img)
    mean = ndimage.uniform_filter(img, size=window, mode="nearest")
    sq_mean = ndimage.uniform_filter(img * img, size=window, mode="nearest")
    var = np.maximum(sq_mean - mean * mean, 0.0)
    noise = float(var.mean())
    denom = np.maximum(var, noise)
    gain = np.divide(np.maximum(var - noise, 0.0), denom,
                     out=np.zeros_like(var), where=denom > 0)
    return mean + gain * (img - mean)


def otsu_threshold(img) -> int:
    """Otsu threshold on the 256-level histogram.

    Returns the smallest level ``t`` in 0..254 maximizing the between-class
    variance of the split ``{<= t}`` / ``{> t}``.  Scores are compared as exact
    rationals so ties are real ties.
    """
    q = quantize(as_gray(img))
    hist = np.bincount(q.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise DegenerateInputError("Otsu threshold needs at least two distinct intensity levels")
    n_total = int(q.size)
    s_total = int(np.dot(hist, np.arange(256)))
    n0s = np.cumsum(hist).tolist()
    s0s = np.cumsum(hist * np.arange(256)).tolist()
    # between-class variance = (N*S0 - S*n0)^2 / (N^2 * n0 * n1)
    best_t, best_num, best_den = -1, 0, 1
    for t in range(255):
        n0 = n0s[t]
        n1 = n_total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n_total * s0s[t] - s_total * n0) ** 2
        den = n0 * n1
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(img, t: int, polarity: str = "bright") -> np.ndarray:
    """Boolean mask of pixels whose quantized level exceeds ``t``.

    ``polarity`` selects the foreground class: ``"bright"`` (level > t),
    ``"dark"`` (level <= t) or ``"minority"`` (whichever class has fewer
    pixels; the bright class wins a tie).
    """
    if not 0 <= t <= 255:
        raise InvalidInputError(f"threshold must lie in [0, 255], got {t}")
    bright = quantize(as_gray(img)) > t
    if polarity == "bright":
        return bright
    if polarity == "dark":
        return ~bright
    if polarity == "minority":
        n_bright = int(bright.sum())
        return bright if n_bright <= bright.size - n_bright else ~bright
    raise InvalidInputError(f"unknown polarity {polarity!r}")


def largest_component_bbox(mask) -> BoundingBox:
    """Bounding box of the largest 8-connected foreground component.

    Equal-sized components are ranked by their box's ``(y0, x0)``.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {mask.shape}")
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        raise NoDetectionError("mask has no foreground pixels")
    sizes = np.bincount(labels.ravel())[1:]
    slices = ndimage.find_objects(labels)
    best = None
    for i in np.flatnonzero(sizes == sizes.max()):
        ys, xs = slices[i]
        key = (ys.start, xs.start)
        if best is None or key < best[0]:
            best = (key, BoundingBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start))
    return best[1]


def expand_bbox(box: BoundingBox, ratio: float = 1.2, bounds: tuple[int, int] | None = None) -> BoundingBox:
    """Scale ``box`` about its centre by ``ratio``, then clamp to ``bounds = (height, width)``."""
    if ratio < 1:
        raise InvalidInputError(f"expansion ratio must be >= 1, got {ratio}")
    w = _round_half_up(box.w * ratio)
    h = _round_half_up(box.h * ratio)
    cx = box.x0 + box.w / 2.0
    cy = box.y0 + box.h / 2.0
    x0 = _round_half_up(cx - w / 2.0)
    y0 = _round_half_up(cy - h / 2.0)
    x1, y1 = x0 + w, y0 + h
    x0, y0 = max(x0, 0), max(y0, 0)
    if bounds is not None:
        height, width = bounds
        x1, y1 = min(x1, width), min(y1, height)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def canny_edges(img, low: float | None = None, high: float | None = None, sigma: float = 1.4) -> np.ndarray:
    """Canny edge mask.

    When ``high`` is omitted it is the 90th percentile of the gradient
    magnitude; ``low`` then defaults to ``0.1 * high``.
    """
    img = as_gray(img)
    smooth = gaussian_blur(img, sigma) if sigma > 0 else img
    gx, gy = sobel_gradients(smooth)
    mag = np.hypot(gx, gy)
    # rounding residue from smoothing a flat region is not an edge
    mag[mag < 1e-9 * max(1.0, float(np.abs(smooth).max()))] = 0.0
    if high is None:
        high = float(np.percentile(mag, 90))
        if high <= 0:
            return np.zeros(img.shape, dtype=bool)
    if low is None:
        low = 0.1 * high
    if not 0 <= low < high:
        raise InvalidInputError(f"need 0 <= low < high, got low={low}, high={high}")

    # quantize direction to 0, 45, 90, 135 degrees
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4
    offsets = ((0, 1), (1, 1), (1, 0), (1, -1))  # (dy, dx) along the gradient
    padded = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dy, dx) in enumerate(offsets):
        fwd = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        # strict on one side so two-pixel plateaus thin to one pixel
        keep |= (sector == s) & (mag > bwd) & (mag >= fwd)
    nms = np.where(keep, mag, 0.0)

    strong = nms >= high
    weak = nms >= low
    labels, n = ndimage.label(weak, structure=EIGHT_CONNECTED)
    if n == 0:
        return np.zeros(img.shape, dtype=bool)
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels]


def foreground_centroid(img, polarity: str = "minority") -> tuple[float, float]:
    """Centroid ``(x, y)`` of the Otsu foreground; image centre if it is degenerate."""
    img = as_gray(img)
    try:
        mask = binarize(img, otsu_threshold(img), polarity)
    except DegenerateInputError:
        mask = np.zeros(img.shape, dtype=bool)
    if not mask.any():
        return ((img.shape[1] - 1) / 2.0, (img.shape[0] - 1) / 2.0)
    ys, xs = np.nonzero(mask)
    return float(xs.mean()), float(ys.mean())


def roi_window(img, size: int = 256, polarity: str = "minority") -> BoundingBox:
    img = as_gray(img)
    height, width = img.shape
    if height < size or width < size:
        raise InvalidInputError(f"image {width}x{height} smaller than the {size}x{size} ROI")
    cx, cy = foreground_centroid(img, polarity)
    x0 = min(max(_round_half_up(cx) - size // 2, 0), width - size)
    y0 = min(max(_round_half_up(cy) - size // 2, 0), height - size)
    return BoundingBox(x0, y0, size, size)


def roi_crop(img, size: int = 256, polarity: str = "minority") -> np.ndarray:
    """``size`` x ``size`` window centred on the foreground centroid, kept in bounds."""
    img = as_gray(img)
    return roi_window(img, size, polarity).slice(img)


@dataclass
class PreprocessParams:
    denoise: bool = True
    wiener_window: int = 5
    roi_size: int = 256
    input_size: int = 224
    polarity: str = "minority"


def prepare_frame(img, params: PreprocessParams | None = None) -> np.ndarray:
    """Bring a frame to network input size.

    Frames larger than the ROI are denoised, cropped around the robot and
    resized; frames already at input size are only denoised (if enabled).
    """
    p = params or PreprocessParams()
    img = as_gray(img)
    if p.denoise:
        img = wiener_denoise(img, p.wiener_window)
    if img.shape[0] > p.roi_size and img.shape[1] > p.roi_size:
        img = roi_crop(img, p.roi_size, p.polarity)
    if img.shape != (p.input_size, p.input_size):
        img = resize(img, p.input_size, p.input_size)
    return img
