from __future__ import annotations

import pytest

from dlczsim.figures import load_preset


@pytest.fixture(scope="session")
def figS1():
    return load_preset("figS1")


@pytest.fixture(scope="session")
def figS2():
    return load_preset("figS2")
