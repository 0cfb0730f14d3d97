import os
from pathlib import Path

import numpy as np
import pytest

from cooc.data_io import SyntheticSpec, gen_synthetic

MNIST_DIR = Path(os.environ.get("COOC_MNIST_DIR", "/root/data/mnist"))
MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def mnist_available() -> bool:
    return all((MNIST_DIR / f).exists() for f in MNIST_FILES)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planted_spec():
    return SyntheticSpec(64, 8, 0.9, 0.05, 200, seed=7)


@pytest.fixture(scope="session")
def planted_maps(planted_spec):
    return gen_synthetic(planted_spec)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
