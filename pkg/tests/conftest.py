import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


def step_image(h=8, w=8, lo=0.0, hi=255.0):
    """Left half ``lo``, right half ``hi``."""
    img = np.full((h, w), lo)
    img[:, w // 2:] = hi
    return img


def texture_image(n=64, seed=0, square=4):
    """Checkerboard with additive Gaussian noise, clipped to [0, 255]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n]
    board = np.where(((yy // square) + (xx // square)) % 2 == 0, 60.0, 190.0)
    return np.clip(board + rng.normal(0, 10, (n, n)), 0, 255)


@pytest.fixture
def step8():
    return step_image()


@pytest.fixture
def texture64():
    return texture_image()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    """500 asymmetric synthetic frames (seed 7) and their adaptive feature table."""
    from types import SimpleNamespace

    from microdepth.config import RunConfig
    from microdepth.pipeline import extract_dataset
    from microdepth.synth import SynthConfig, generate_dataset

    t0 = time.perf_counter()
    cfg = RunConfig(seed=7, synth=SynthConfig(n_samples=500, seed=7, asymmetric=True))
    data_dir = tmp_path_factory.mktemp("benchmark")
    generate_dataset(cfg.synth, data_dir)
    table, stats = extract_dataset(data_dir, cfg)
    return SimpleNamespace(data_dir=data_dir, cfg=cfg, table=table, stats=stats,
                           build_seconds=time.perf_counter() - t0)


# (criterion number, passed, detail) appended by the acceptance tests
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
