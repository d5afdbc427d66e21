"""
Focus measures on a blurred texture
===================================

Each of the six measures is computed on a checkerboard with a little noise,
then on progressively blurred copies.  Sharpness-type measures drop as the
blur grows, which is what makes them usable as depth cues.
"""

import numpy as np

from microdepth import METRIC_NAMES, gaussian_blur, metric_vector

rng = np.random.default_rng(0)
yy, xx = np.mgrid[0:64, 0:64]
texture = np.where((yy // 4 + xx // 4) % 2 == 0, 60.0, 190.0)
texture = np.clip(texture + rng.normal(0, 10, texture.shape), 0, 255)

# one row per blur level, one column per measure
sigmas = [0, 0.5, 1, 2, 4]
table = np.array([metric_vector(gaussian_blur(texture, s)) for s in sigmas])

print("sigma " + " ".join(f"{n:>16s}" for n in METRIC_NAMES))
for s, row in zip(sigmas, table):
    print(f"{s:5.1f} " + " ".join(f"{v:16.4g}" for v in row))

# relative to the sharp image, how much of each measure is left at sigma = 4
left = table[-1] / table[0]
for name, frac in zip(METRIC_NAMES, left):
    print(f"{name:>16s}: {100 * frac:6.2f}% of the in-focus value")
