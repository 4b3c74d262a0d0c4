"""Editable plain-text prompt and query-template assets.

Query templates (``qt_*.txt``) hold one pattern per line with named
placeholders; prompt scaffolds (``*_prompt.txt``) are whole files. Both are
shipped as package data so they can be tweaked without touching code.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Return the full text of a prompt asset (without extension)."""
    return (
        resources.files(__package__).joinpath(f"{name}.txt").read_text("utf-8")
    )


@lru_cache(maxsize=None)
def load_patterns(name: str) -> tuple[str, ...]:
    """Return the nonempty, non-comment lines of a query-template asset."""
    lines = load_prompt(name).splitlines()
    patterns = tuple(
        line.strip() for line in lines if line.strip() and not line.startswith("#")
    )
    if not patterns:
        raise ValueError(f"template asset {name} has no patterns")
    return patterns
