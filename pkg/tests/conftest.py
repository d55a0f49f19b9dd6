from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fixtures  # noqa: E402


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("fixtures")
    fixtures.write_corpus(root / "corpus.jsonl")
    fixtures.write_taxonomy(root / "taxonomy.json")
    fixtures.write_population(root / "population.csv")
    fixtures.write_fulltext(root / "fulltext.jsonl")
    return root


@pytest.fixture()
def make_config(fixture_dir, tmp_path):
    """Write a config pointing at the shared fixtures and a fresh output dir."""

    def _make(name: str = "run", **extra: str) -> Path:
        out = tmp_path / name
        cfg = tmp_path / f"{name}.cfg"
        fixtures.write_config(
            cfg,
            corpus=fixture_dir / "corpus.jsonl",
            output_dir=out,
            taxonomy=fixture_dir / "taxonomy.json",
            fulltext=fixture_dir / "fulltext.jsonl",
            population=fixture_dir / "population.csv",
            **extra,
        )
        return cfg

    return _make
