from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hot.backends.markov import MarkovModel
from hot.corpus import fixture_path, load_corpus
from hot.dialogue import DialogueHistory

DATA = Path(str(resources.files("hot.data")))


@pytest.fixture
def dialogue():
    return DialogueHistory.from_pairs(
        [("Patient", "I have had a cough for two weeks."),
         ("Doctor", "Any fever?"),
         ("Patient", "No fever, just tired.")],
        sample_id="s1",
    )


@pytest.fixture(scope="session")
def en_samples():
    return load_corpus(fixture_path("en"))


@pytest.fixture(scope="session")
def zh_samples():
    return load_corpus(fixture_path("zh"))


@pytest.fixture
def two_state():
    return MarkovModel(("x", "y"), np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([0.5, 0.5]))


@pytest.fixture(scope="session")
def toy_model():
    return MarkovModel.from_file(DATA / "markov_toy.json")


@pytest.fixture(scope="session")
def metric_pairs():
    return json.loads((DATA / "metric_pairs.json").read_text(encoding="utf-8"))
