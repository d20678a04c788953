from __future__ import annotations

import importlib.util
from pathlib import Path

from conftest import DATA

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "build_fixtures.py"


def _builder():
    spec = importlib.util.spec_from_file_location("build_fixtures", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_bundled_fixtures_regenerate_byte_identical(tmp_path):
    written = _builder().write_all(tmp_path)
    assert len(written) == 7
    for path in written:
        assert path.read_bytes() == (DATA / path.name).read_bytes(), path.name


def test_metric_fixture_mixes_languages():
    import json

    pairs = json.loads((DATA / "metric_pairs.json").read_text(encoding="utf-8"))
    assert len(pairs) == 20
    assert {p["lang_mode"] for p in pairs} == {"whitespace", "cjk-char"}
