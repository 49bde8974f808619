import dataclasses

import pytest

from railfuse.config import standard_benchmark
from railfuse.dataset import generate_dataset


def small_config(folds: int = 2, n_scenes: int = 60, seed: int = 11):
    """Benchmark settings shrunk to a few seconds of training."""
    cfg = standard_benchmark(seed=seed, n_scenes=n_scenes, folds=folds)
    cfg.vit = dataclasses.replace(cfg.vit, embed_dim=8, max_epochs=3)
    return cfg


@pytest.fixture(scope="session")
def small_run():
    from railfuse.pipeline import run_experiment

    cfg = small_config()
    scenes = generate_dataset(cfg.n_scenes, cfg.seed, cfg.scene, cfg.audio)
    return scenes, run_experiment(scenes, cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
