"""Declarative run configuration (JSON) shared by all CLI commands."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import InvalidInputError
from .grid import GridSpec, layout_hash
from .metrics import METRIC_NAMES
from .preprocess import PreprocessParams
from .regress import MlpParams
from .synth import SynthConfig


class ConfigError(InvalidInputError):
    pass


@dataclass
class GridOptions:
    fg_grid: int = 6
    bg_grid: int = 4
    expansion_ratio: float = 1.2
    blur_sigma: float = 2.0


@dataclass
class RegressorOptions:
    kind: str = "ridge"
    lam: float = 1.0
    hidden: list = field(default_factory=lambda: [64, 32])
    lr: float = 1e-3
    epochs: int = 200
    batch: int = 32

    def mlp_params(self, seed: int) -> MlpParams:
        return MlpParams(hidden=tuple(self.hidden), lr=self.lr, epochs=self.epochs, batch=self.batch, seed=seed)


@dataclass
class RunConfig:
    grid: str = "adaptive"
    grid_options: GridOptions = field(default_factory=GridOptions)
    metrics: list = field(default_factory=lambda: list(METRIC_NAMES))
    log_sigma: float = 1.0
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    regressor: RegressorOptions = field(default_factory=RegressorOptions)
    synth: SynthConfig = field(default_factory=SynthConfig)
    test_frac: float = 0.2
    seed: int = 0
    workers: int = 1

    def grid_spec(self) -> GridSpec:
        return GridSpec.parse(self.grid, **dataclasses.asdict(self.grid_options))

    def layout_hash(self, embedding_dim: int = 0) -> str:
        g = self.grid_options
        p = self.preprocess
        extra = (f"exp={g.expansion_ratio}|blur={g.blur_sigma}|log_sigma={self.log_sigma}"
                 f"|denoise={p.denoise}:{p.wiener_window}|input={p.input_size}|emb={embedding_dim}")
        return layout_hash(self.grid_spec(), self.metrics, extra)

    def validate(self) -> "RunConfig":
        self.grid_spec()
        unknown = set(self.metrics) - set(METRIC_NAMES)
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}")
        if self.regressor.kind not in ("ridge", "mlp"):
            raise ConfigError(f"regressor.kind must be 'ridge' or 'mlp', got {self.regressor.kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"] = self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        _reject_unknown(d, cls, "")
        nested = {"grid_options": GridOptions, "preprocess": PreprocessParams, "regressor": RegressorOptions}
        for key, sub in nested.items():
            if key in d:
                _reject_unknown(d[key], sub, key + ".")
                d[key] = sub(**d[key])
        if "synth" in d:
            _reject_unknown(d["synth"], SynthConfig, "synth.")
            d["synth"] = SynthConfig.from_dict(d["synth"])
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _reject_unknown(d, cls, prefix: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return RunConfig.from_dict(data)
