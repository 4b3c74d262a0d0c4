from __future__ import annotations

from pathlib import Path

import pytest

from ft_helpers import TRAIN_CONFIG_TEXT, write_dataset


@pytest.fixture
def train_config_file(tmp_path) -> Path:
    path = tmp_path / "train_config"
    path.write_text(TRAIN_CONFIG_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def small_dataset(tmp_path) -> Path:
    return write_dataset(tmp_path / "dataset.jsonl", 20)
