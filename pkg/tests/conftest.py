from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CORPUS = DATA / "corpus"
TEST_IMAGES = ["lena", "camera", "ascent"]

ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def corpus():
    from svrdenoise.imagio import load_corpus
    return load_corpus(CORPUS, 100)


@pytest.fixture(scope="session")
def small_corpus(corpus):
    return corpus[:12]


@pytest.fixture(scope="session")
def test_images():
    from svrdenoise.imagio import load_image
    return {n: load_image(DATA / f"{n}256.pgm") for n in TEST_IMAGES}


@pytest.fixture(scope="session")
def lena(test_images):
    return test_images["lena"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
