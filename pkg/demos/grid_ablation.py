"""
Uniform grids against the adaptive grid
=======================================

Builds a small asymmetric dataset on disk and runs the same comparison as
``microdepth ablate``: four uniform grids and the adaptive grid, all scored
on one shared test split.
"""

import tempfile

from microdepth import RunConfig, SynthConfig, generate_dataset
from microdepth.cli import run_ablation

with tempfile.TemporaryDirectory() as tmp:
    cfg = RunConfig(seed=7, synth=SynthConfig(n_samples=250, seed=7, asymmetric=True))
    generate_dataset(cfg.synth, tmp)
    report = run_ablation(tmp, cfg)

print(f"{report['n_train']} train / {report['n_test']} test, test set {report['test_set_hash']}")
for row in report["rows"]:
    print(f"{row['config']:>9s}  {row['n_features']:4d} features  MSE {row['mse_um2']:.4f}  R2 {row['r2']:.4f}")
