"""
Tests for the synthetic experiment engine
"""

import pytest

from config.settings import Config
from src.experiments import ExperimentEngine
from src.global_match import StabilityClassification
from src.serialization import read_json
from src.synth import BlobSpec, make_facet_set


@pytest.fixture
def engine(tmp_path):
    settings = Config(config_file=str(tmp_path / "missing.json"))
    settings.set("reports.dir", str(tmp_path / "reports"))
    return ExperimentEngine(settings)


class TestConsensus:

    def test_identity_purity(self, engine):
        results = engine.run_consensus_experiment(range(50))
        assert results["successful"] == 50
        assert results["summary"]["mean_purity"] >= 0.95
        assert results["parameters"]["facets"] == 4
        assert results["parameters"]["perturbations"] == [{"kind": "gaussian_noise", "sigma": 0.05}]

    def test_noise_free_facets_are_pure(self, engine):
        results = engine.run_consensus_experiment(range(10), sigma=0.0)
        assert results["successful"] == 10
        assert results["summary"]["mean_purity"] == 1.0
        assert results["summary"]["mean_stable_recall"] == 1.0
        assert results["summary"]["mean_noise_rejection"] is None
        assert all(run["purity"] == 1.0 for run in results["runs"])

    def test_summary_is_reproducible(self, engine, tmp_path):
        other = Config(config_file=str(tmp_path / "other.json"))
        other.set("reports.dir", str(tmp_path / "other_reports"))
        first = engine.run_consensus_experiment(range(5))
        second = ExperimentEngine(other).run_consensus_experiment(range(5))
        assert first["summary"] == second["summary"]
        assert [run["purity"] for run in first["runs"]] == [run["purity"] for run in second["runs"]]

    def test_failed_runs_are_captured(self, engine):
        results = engine.run_consensus_experiment([0, 1], width=16, height=16, blobs=10)
        assert results["failed"] == 2
        assert [error["seed"] for error in results["errors"]] == [0, 1]
        assert results["summary"]["mean_purity"] is None
        assert engine.get_engine_stats() == {"total_runs": 2, "successful_runs": 0, "failed_runs": 2}

    def test_recovery(self):
        blobs = [BlobSpec(0, (8, 8), 0.9, 2.0), BlobSpec(1, (8, 24), 0.8, 2.0)]
        facet_set = make_facet_set(blobs, 32, 16, facets=2, perturbations=(), cutoff=3.0)
        everything = frozenset((t, i) for t in range(2) for i in range(2))
        assert ExperimentEngine.recovery(facet_set, StabilityClassification(everything, frozenset())) == {
            "stable_recall": 1.0, "noise_rejection": None,
        }
        assert ExperimentEngine.recovery(facet_set, StabilityClassification(frozenset(), everything)) == {
            "stable_recall": 0.0, "noise_rejection": None,
        }


class TestSwap:

    def test_match_pair_beats_index_matching(self, engine):
        results = engine.run_swap_experiment(range(20))
        assert results["summary"]["match_pair_accuracy"] == 1.0
        assert results["summary"]["wasserstein_accuracy"] <= 0.5
        assert results["runs"][1]["truth"] == [(0, 1), (1, 0)]


class TestSweeps:

    def test_tau_sweep_shares_facet_sets(self, engine):
        results = engine.run_tau_sweep([3], taus=(0.1, 0.9), width=48, height=48, blobs=3)
        assert [entry["tau_primary"] for entry in results["summary"]] == [0.1, 0.9]
        by_tau = results["runs"][0]["by_tau"]
        assert by_tau[0]["features"] == by_tau[1]["features"]
        assert by_tau[1]["tracks"] >= by_tau[0]["tracks"]

    def test_dropout_sweep(self, engine):
        results = engine.run_dropout_sweep([2], rates=(0.0, 0.25), width=48, height=48, blobs=3)
        assert [entry["rate"] for entry in results["summary"]] == [0.0, 0.25]
        assert results["parameters"]["patch"] == 8
        assert results["successful"] == 1


class TestReports:

    def test_export_report(self, engine, tmp_path):
        results = engine.run_swap_experiment([0, 1])
        path = engine.export_report(results)
        assert path == str(tmp_path / "reports" / "swap_report.json")
        report = read_json(path)
        assert report["totals"] == {"runs": 2, "successful": 2, "failed": 0}
        assert report["summary"]["match_pair_accuracy"] == 1.0

    def test_custom_filename(self, engine, tmp_path):
        results = engine.run_tau_sweep([0], taus=(0.1,), width=48, height=48, blobs=2)
        assert engine.export_report(results, "sweep.json").endswith("sweep.json")
        assert (tmp_path / "reports" / "sweep.json").exists()

    def test_reset_stats(self, engine):
        engine.run_swap_experiment([0])
        assert engine.get_engine_stats()["successful_runs"] == 1
        engine.reset_stats()
        assert engine.get_engine_stats() == {"total_runs": 0, "successful_runs": 0, "failed_runs": 0}
