"""
Depth regression on synthetic frames
====================================

Render a labelled set of defocused frames, extract physics features and fit
both regressors.  The asymmetric mode adds a faint brightness ramp above
focus; without it +z and -z look identical and no model can recover the
sign.
"""

import numpy as np

from microdepth import (GridSpec, MlpParams, SynthConfig, evaluate, fuse_rows, iter_samples,
                        physics_features, split_indices, train_regressor)
from microdepth.preprocess import wiener_denoise

spec = GridSpec()
cfg = SynthConfig(n_samples=200, seed=1, asymmetric=True)

X, y = [], []
for sample in iter_samples(cfg):
    feats, _ = physics_features(wiener_denoise(sample.image), spec)
    X.append(feats.values)
    y.append(sample.depth)
X, y = np.array(X), np.array(y)
print("design matrix:", X.shape)

train, test = split_indices(len(y), 1.0, seed=0)

ridge = train_regressor(X[train], y[train], "demo", kind="ridge", lam=1.0)
rep = evaluate(ridge.predict(X[test]), y[test])
print(f"ridge  test MSE {rep.mse:.4f} um^2, R2 {rep.r2:.4f}")

mlp = train_regressor(X[train], y[train], "demo", kind="mlp", mlp=MlpParams(epochs=100))
rep = evaluate(mlp.predict(X[test]), y[test])
print(f"mlp    test MSE {rep.mse:.4f} um^2, R2 {rep.r2:.4f}")

# deep features would arrive as opaque vectors; random ones only add noise
emb = np.random.default_rng(0).normal(size=(len(y), 32))
Xf = fuse_rows(X, emb)
fused = train_regressor(Xf[train], y[train], "demo-fused", lam=1.0)
rep = evaluate(fused.predict(Xf[test]), y[test])
print(f"fused  ({Xf.shape[1]} columns) test MSE {rep.mse:.4f} um^2")
