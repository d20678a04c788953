"""
Experiment tables on a constructed fixture
==========================================

The ordering mock replies to each fused prompt with the gold answer and to
the plain prompt with a generic one, so the expected table is known in advance.
"""

import tempfile
from dataclasses import replace
from importlib import resources
from pathlib import Path

from hot.backends import MockBackend
from hot.corpus import fixture_path
from hot.harness import (
    ExperimentConfig,
    ablation_matrix,
    budget_sweep,
    emit_report,
    run_experiment,
    template_sweep,
)
from hot.pipeline import record_responder

ordering = MockBackend.from_file(resources.files("hot.data").joinpath("mock_ordering.json"))
cfg = ExperimentConfig(str(fixture_path("en")), repetitions=1)

out = Path(tempfile.mkdtemp())
report = run_experiment(cfg, ordering, out / "run")
print(emit_report(report, "markdown"))
print(sorted(p.name for p in (out / "run").iterdir()))

# the four-way ablation; unscripted prompts fall back to the generic reply
print(emit_report(ablation_matrix(cfg, ordering), "csv"))

# a generic mock for the sweeps: cost columns are what matter here
mock = MockBackend(default="Drink water and rest.")
mock.responder = record_responder()
small = replace(cfg, limit=2)
print(emit_report(template_sweep(small, mock), "csv"))
print(emit_report(budget_sweep(small, mock, [1, 2, 4, 6]), "csv"))
