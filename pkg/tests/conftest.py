from __future__ import annotations

from pathlib import Path

import pytest

from graphsft.backend import BackendProfile
from graphsft.corpus import TextUnit
from graphsft.extraction import KnowledgeGraph
from graph_fixtures import build_yield_fixture

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def mock_profile() -> BackendProfile:
    return BackendProfile(kind="mock", seed=7)


@pytest.fixture
def corpus_dir() -> Path:
    return FIXTURES / "corpus"


@pytest.fixture
def yield_fixture() -> tuple[KnowledgeGraph, list[TextUnit]]:
    return build_yield_fixture()
