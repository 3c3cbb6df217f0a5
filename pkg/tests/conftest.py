import numpy as np
import pytest

from hamstyle.data import ToyDataset, fixture_pairs
from hamstyle.denoiser import Denoiser
from hamstyle.scheduler import build_schedule
from hamstyle.train import train

# training recipe for the shared toy model; bump the cache key when it changes
TRAIN_STEPS = 400
TRAIN_SEED = 0
CACHE_KEY = f"hamstyle-toy-ckpt-v1-{TRAIN_STEPS}-{TRAIN_SEED}"

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def trained_model(request):
    """Toy denoiser trained on the procedural dataset, cached across pytest runs."""
    cache_dir = request.config.cache.mkdir(CACHE_KEY)
    if (cache_dir / "manifest.txt").is_file():
        return Denoiser.load(cache_dir)
    result = train(ToyDataset(), TRAIN_STEPS, seed=TRAIN_SEED)
    result.model.save(cache_dir)
    return Denoiser.load(cache_dir)


@pytest.fixture(scope="session")
def schedule():
    return build_schedule()


@pytest.fixture(scope="session")
def pairs():
    return fixture_pairs(10, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
