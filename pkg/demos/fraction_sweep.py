"""
How much training data is needed
================================

Trains ridge on nested subsets (100% down to 20%) of the training pool while
the test set stays fixed, mirroring ``microdepth eval --fraction``.
"""

import tempfile

from microdepth import RunConfig, SynthConfig, evaluate, extract_dataset, generate_dataset, split_indices, \
    train_regressor

with tempfile.TemporaryDirectory() as tmp:
    cfg = RunConfig(seed=7, synth=SynthConfig(n_samples=300, seed=7, asymmetric=True))
    generate_dataset(cfg.synth, tmp)
    table, stats = extract_dataset(tmp, cfg)

print(f"{stats.n_ok} frames, {stats.no_detection} without a detected robot")
base = None
for frac in (1.0, 0.8, 0.6, 0.4, 0.2):
    train, test = split_indices(len(table), frac, seed=cfg.seed)
    model = train_regressor(table.X[train], table.depths[train], cfg.layout_hash(), lam=1.0)
    mse = evaluate(model.predict(table.X[test]), table.depths[test]).mse
    base = base or mse
    print(f"{frac:4.0%}  n_train={len(train):3d}  MSE {mse:.4f}  ({mse / base:.2f}x full data)")
