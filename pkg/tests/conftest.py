import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from setgame.io import load_spec  # noqa: E402


@pytest.fixture(scope="session")
def e1():
    return load_spec("e1")


@pytest.fixture(scope="session")
def e2():
    return load_spec("e2")


@pytest.fixture(scope="session")
def e3():
    return load_spec("e3")


@pytest.fixture(scope="session")
def e4():
    return load_spec("e4")
