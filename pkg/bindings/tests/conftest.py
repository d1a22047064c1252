"""Shared fixtures: a cooked corpus with matching CLI artifacts.

The corpus builders live in the core repo's test tree; the suites here
compare binding output against CLI output, so they reuse the exact same
synthetic clips.
"""

import importlib.util
import json
import sys
from pathlib import Path

import pytest

from signmask import cli

CORE_TESTS = Path(__file__).resolve().parents[2] / "tests"

_spec = importlib.util.spec_from_file_location("core_fixtures",
                                               CORE_TESTS / "conftest.py")
_core_fixtures = importlib.util.module_from_spec(_spec)
sys.modules["core_fixtures"] = _core_fixtures
_spec.loader.exec_module(_core_fixtures)
write_config = _core_fixtures.write_config
write_corpus = _core_fixtures.write_corpus

CORPUS_CLIPS = 100
SEED = 7


def run_cli(*argv) -> int:
    return cli.main([str(a) for a in argv])


def load_records(manifest: Path) -> list[dict]:
    """Manifest records with paths resolved against the manifest dir."""
    records = []
    for line in manifest.read_text().splitlines():
        rec = json.loads(line)
        for key in ("keypoints", "segments", "meta"):
            rec[key] = str(manifest.parent / rec[key])
        records.append(rec)
    return records


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Raw corpus -> preprocess -> genmask + heatmap via the CLI.

    Returns (cooked_dir, config_path, records) where records carry
    absolute bundle paths.
    """
    root = tmp_path_factory.mktemp("corpus")
    raw = root / "raw"
    raw.mkdir()
    write_corpus(raw, n_clips=CORPUS_CLIPS, frames=8, size=64, seed=3)
    cfg_path = root / "pipeline.cfg"
    write_config(cfg_path, crop_size=64)
    cooked = root / "cooked"
    assert run_cli("preprocess", "--manifest", raw / "manifest.jsonl",
                   "--out", cooked, "--config", cfg_path) == 0
    assert run_cli("genmask", "--manifest", cooked / "manifest.jsonl",
                   "--out", cooked, "--config", cfg_path,
                   "--seed", SEED, "--jobs", 1) == 0
    assert run_cli("heatmap", "--manifest", cooked / "manifest.jsonl",
                   "--out", cooked, "--config", cfg_path) == 0
    return cooked, cfg_path, load_records(cooked / "manifest.jsonl")
