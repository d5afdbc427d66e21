"""Grayscale image primitives: validation, convolution, gradients and PGM/PNG I/O.

Images are plain 2-D float64 numpy arrays indexed ``img[y, x]`` with
intensities nominally in [0, 255].  Filtering never re-quantizes; only the
histogram-based operations round to 256 levels.
"""

from __future__ import annotations

import functools
import math
import os

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError, MalformedImageError, UnsupportedBitDepthError

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()

LAPLACIAN_4 = np.array([[0.0, 1.0, 0.0],
                        [1.0, -4.0, 1.0],
                        [0.0, 1.0, 0.0]])

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def as_gray(img) -> np.ndarray:
    """Validate ``img`` and return it as a float64 (H, W) array.

    Nothing in the package writes into an image it was given.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"image must be at least 1x1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("image contains NaN or Inf intensities")
    return arr


def quantize(img) -> np.ndarray:
    """Round half-up and clamp to integer levels 0..255."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.int64)


def _check_kernel(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise InvalidInputError(f"kernel must be square with odd side, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise InvalidInputError("kernel weights must be finite")
    return k


def convolve(img, kernel, border: str = "replicate") -> np.ndarray:
    """True 2-D convolution (kernel flipped) with edge-replicated borders."""
    img = as_gray(img)
    k = _check_kernel(kernel)
    if border != "replicate":
        raise InvalidInputError(f"unsupported border mode {border!r}")
    if k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]:
        raise InvalidInputError(
            f"kernel {k.shape[0]}x{k.shape[1]} larger than image {img.shape[1]}x{img.shape[0]}")
    return ndimage.convolve(img, k, mode="nearest")


def correlate(img, kernel) -> np.ndarray:
    img = as_gray(img)
    k = _check_kernel(kernel)
    if k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]:
        raise InvalidInputError(
            f"kernel {k.shape[0]}x{k.shape[1]} larger than image {img.shape[1]}x{img.shape[0]}")
    return ndimage.correlate(img, k, mode="nearest")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 2-D Gaussian truncated at 3 sigma, normalized to unit sum."""
    g = gaussian_taps(sigma)
    return np.outer(g, g)


@functools.lru_cache(maxsize=32)
def _taps(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    g.flags.writeable = False
    return g


def gaussian_taps(sigma: float) -> np.ndarray:
    """1-D factor of :func:`gaussian_kernel` (the 2-D kernel is its outer product)."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    return _taps(float(sigma))


def _separable(img: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    # correlation with outer(col, row); replicate borders clamp each axis
    # independently, so two 1-D passes give the same result as one 2-D pass
    tmp = ndimage.correlate1d(img, row, axis=1, mode="nearest")
    return ndimage.correlate1d(tmp, col, axis=0, mode="nearest")


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Blur with :func:`gaussian_kernel`; ``sigma == 0`` returns the image unchanged."""
    if sigma == 0:
        return as_gray(img)
    img = as_gray(img)
    g = gaussian_taps(sigma)
    if len(g) > min(img.shape):
        raise InvalidInputError(f"kernel {len(g)}x{len(g)} larger than image {img.shape[1]}x{img.shape[0]}")
    return _separable(img, g, g)


def sobel_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses.

    Gx is positive where intensity increases with x, Gy where it increases
    with y.  Borders are edge-replicated.
    """
    img = as_gray(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise InvalidInputError(f"Sobel needs at least 3x3 pixels, got {img.shape[1]}x{img.shape[0]}")
    return _sobel(img)


def _pad1(a: np.ndarray) -> np.ndarray:
    """One-pixel edge-replicated border (np.pad(a, 1, "edge") without its overhead)."""
    h, w = a.shape
    p = np.empty((h + 2, w + 2))
    p[1:-1, 1:-1] = a
    p[0, 1:-1] = a[0]
    p[-1, 1:-1] = a[-1]
    p[:, 0] = p[:, 1]
    p[:, -1] = p[:, -2]
    return p


def _sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # correlation with SOBEL_X / SOBEL_Y on an edge-replicated copy
    p = _pad1(img)
    rows = p[:-2] + 2.0 * p[1:-1] + p[2:]
    cols = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    return rows[:, 2:] - rows[:, :-2], cols[2:] - cols[:-2]


def log_response(img, sigma: float = 1.0) -> np.ndarray:
    """Laplacian of the Gaussian-smoothed image (4-neighbour stencil)."""
    gaussian_taps(sigma)
    return _log(gaussian_blur(img, sigma))


def _log(blurred: np.ndarray) -> np.ndarray:
    b = _pad1(blurred)
    return b[:-2, 1:-1] + b[2:, 1:-1] + b[1:-1, :-2] + b[1:-1, 2:] - 4.0 * b[1:-1, 1:-1]


def resize(img, height: int, width: int) -> np.ndarray:
    """Bilinear resize to ``(height, width)``."""
    img = as_gray(img)
    if img.shape == (height, width):
        return img
    out = ndimage.zoom(img, (height / img.shape[0], width / img.shape[1]), order=1,
                       mode="nearest", grid_mode=True)
    if out.shape != (height, width):
        raise InvalidInputError(f"resize produced {out.shape}, wanted {(height, width)}")
    return out


# --- file I/O ---------------------------------------------------------------

def _pgm_tokens(buf: bytes, count: int, path) -> tuple[list[int], int]:
    tokens: list[int] = []
    pos = 2
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MalformedImageError(f"{path}: truncated or non-numeric PGM header")
        tokens.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise MalformedImageError(f"{path}: missing whitespace after PGM header")
    return tokens, pos + 1


def _read_pgm(path, buf: bytes) -> np.ndarray:
    (width, height, maxval), offset = _pgm_tokens(buf, 3, path)
    if width < 1 or height < 1:
        raise MalformedImageError(f"{path}: invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedBitDepthError(f"{path}: only 8-bit PGM (maxval 255) is supported, got maxval {maxval}")
    data = buf[offset:offset + width * height]
    if len(data) != width * height:
        raise MalformedImageError(f"{path}: expected {width * height} pixel bytes, found {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).astype(np.float64)


def _read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I", "F"):
            raise UnsupportedBitDepthError(f"{path}: unsupported PNG mode {im.mode}")
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64)
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    return rgb @ np.array(LUMA_WEIGHTS)


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale image (binary PGM, or PNG via Pillow).

    Color PNGs are reduced with the 0.299/0.587/0.114 luma weights.
    Raises FileNotFoundError, MalformedImageError or UnsupportedBitDepthError.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] == b"P5":
        return as_gray(_read_pgm(path, buf))
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return as_gray(_read_png(path))
    raise MalformedImageError(f"{path}: not a binary PGM (P5) or PNG file")


def save_image(img, path) -> None:
    """Write ``img`` as 8-bit binary PGM (or PNG if the suffix is .png)."""
    q = quantize(as_gray(img)).astype(np.uint8)
    path = os.fspath(path)
    if path.lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(q, mode="L").save(path)
        return
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(q.tobytes())
