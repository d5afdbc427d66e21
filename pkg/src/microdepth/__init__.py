"""Physics-informed depth estimation from focus cues on adaptive patch grids."""

from .config import RunConfig, load_config
from .grid import (BACKGROUND, FOREGROUND, PAD, GridSpec, build_grid, detect_robot, extract_features,
                   physics_features)
from .image import gaussian_blur, load_image, save_image
from .metrics import METRIC_NAMES, metric_vector
from .pipeline import extract_dataset, read_feature_csv, write_feature_csv
from .regress import (DepthRegressor, MlpParams, evaluate, fit_mlp, fit_ridge, fuse, fuse_rows,
                      split_indices, train_regressor)
from .synth import SynthConfig, generate_dataset, iter_samples, render_sample

__all__ = [
    "RunConfig", "load_config",
    "BACKGROUND", "FOREGROUND", "PAD", "GridSpec", "build_grid", "detect_robot", "extract_features",
    "physics_features",
    "gaussian_blur", "load_image", "save_image",
    "METRIC_NAMES", "metric_vector",
    "extract_dataset", "read_feature_csv", "write_feature_csv",
    "DepthRegressor", "MlpParams", "evaluate", "fit_mlp", "fit_ridge", "fuse", "fuse_rows",
    "split_indices", "train_regressor",
    "SynthConfig", "generate_dataset", "iter_samples", "render_sample",
]

__version__ = "0.1.0"
