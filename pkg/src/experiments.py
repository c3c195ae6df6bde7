"""
Synthetic identity-recovery experiments for topo-match

This module handles:
- Consensus experiments: MATCH-Global identity purity on perturbed facet sets,
  and stable/transient recovery of consensus vs a fixed persistence threshold
- Swap experiments: MATCH-Pair vs the Wasserstein baseline on equal-persistence blobs
- Sensitivity sweeps over tau_primary and over the patch dropout rate
- Report export into the reports directory
"""

import logging
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from config.settings import config
from src.exceptions import TopoMatchError
from src.global_match import StabilityClassification, classify_by_persistence, classify_stability, match_global
from src.matching import match_pair, wasserstein_match
from src.persistence import compute_diagram
from src.serialization import write_json
from src.synth import (
    FacetSet,
    GaussianNoise,
    PatchDropout,
    Perturbation,
    identity_purity,
    make_facet_set,
    perturbation_to_dict,
    random_blobs,
    swap_scenario,
)

logger = logging.getLogger(__name__)


class ExperimentEngine:
    """Seeded experiment sweeps with per-run error capture"""

    def __init__(self, settings=config):
        """Initialize the engine from configuration"""
        self.config = settings
        self.stats = {
            "total_runs": 0,
            "successful_runs": 0,
            "failed_runs": 0,
        }
        logger.debug("Experiment engine initialized")

    @property
    def tau_primary(self) -> float:
        return self.config.get("matching.tau_primary", 0.1)

    @property
    def connectivity(self) -> str:
        return self.config.get("matching.connectivity", "eight")

    def _run_seeds(self, name: str, seeds: Sequence[int], run: Callable[[int], Dict[str, Any]]) -> Dict[str, Any]:
        """Run one experiment per seed; failures are recorded, never raised"""
        results: Dict[str, Any] = {
            "experiment": name,
            "total_runs": len(seeds),
            "successful": 0,
            "failed": 0,
            "runs": [],
            "errors": [],
        }
        started = time.perf_counter()

        for seed in seeds:
            try:
                outcome = run(seed)
                results["runs"].append({"seed": seed, **outcome})
                results["successful"] += 1
                self.stats["successful_runs"] += 1
            except TopoMatchError as e:
                logger.error(f"{name} run failed for seed {seed}: {e}")
                results["errors"].append({"seed": seed, "error": str(e)})
                results["failed"] += 1
                self.stats["failed_runs"] += 1
            finally:
                self.stats["total_runs"] += 1

        logger.info(f"{name}: {results['successful']}/{len(seeds)} runs in {time.perf_counter() - started:.2f}s")
        return results

    @staticmethod
    def _mean(runs: List[Dict[str, Any]], key: str) -> Optional[float]:
        values = [run[key] for run in runs if run.get(key) is not None]
        return float(np.mean(values)) if values else None

    # Consensus

    def _facet_set(self, seed: int, width: int, height: int, blobs: int, facets: int,
                   perturbations: Sequence[Perturbation]) -> FacetSet:
        layout = random_blobs(width, height, blobs, seed)
        return make_facet_set(layout, width, height, facets, perturbations, seed,
                              cutoff=self.config.get("synth.cutoff"), connectivity=self.connectivity)

    @staticmethod
    def recovery(facet_set: FacetSet, classification: StabilityClassification) -> Dict[str, Optional[float]]:
        """
        How well a classification separates blobs from noise

        stable_recall: share of blob features (the most persistent feature of
        each blob in each facet) classified as matched. noise_rejection: share
        of noise-born features classified as unmatched.
        """
        blob_hits = blob_total = noise_hits = noise_total = 0
        for t, (truth, diagram) in enumerate(zip(facet_set.truth, facet_set.diagrams)):
            primary: Dict[int, int] = {}
            for index, blob_id in truth.items():
                if blob_id is None:
                    noise_total += 1
                    noise_hits += (t, index) in classification.unmatched
                elif blob_id not in primary or diagram[index].persistence > diagram[primary[blob_id]].persistence:
                    primary[blob_id] = index
            blob_total += len(primary)
            blob_hits += sum((t, index) in classification.matched for index in primary.values())

        return {
            "stable_recall": blob_hits / blob_total if blob_total else None,
            "noise_rejection": noise_hits / noise_total if noise_total else None,
        }

    def _consensus_run(self, facet_set: FacetSet, tau: float, min_support: Optional[int],
                       phi: float) -> Dict[str, Any]:
        result = match_global(facet_set.facets, tau, self.connectivity, self.config.get_threads())
        consensus = classify_stability(result.tracks, min_support)
        baseline = classify_by_persistence(result.diagrams, phi)
        consensus_recovery = self.recovery(facet_set, consensus)
        baseline_recovery = self.recovery(facet_set, baseline)
        return {
            "purity": identity_purity(result.tracks, facet_set),
            "tracks": len(result.tracks.tracks),
            "features": sum(len(d) for d in result.diagrams),
            "stable_recall": consensus_recovery["stable_recall"],
            "noise_rejection": consensus_recovery["noise_rejection"],
            "baseline_stable_recall": baseline_recovery["stable_recall"],
            "baseline_noise_rejection": baseline_recovery["noise_rejection"],
        }

    def _summarize(self, runs: List[Dict[str, Any]]) -> Dict[str, Optional[float]]:
        keys = ("purity", "stable_recall", "noise_rejection", "baseline_stable_recall", "baseline_noise_rejection")
        return {f"mean_{key}": self._mean(runs, key) for key in keys}

    def run_consensus_experiment(self, seeds: Sequence[int], width: int = 64, height: int = 64,
                                 blobs: int = 5, facets: Optional[int] = None, sigma: float = 0.05,
                                 tau: Optional[float] = None, min_support: Optional[int] = None,
                                 phi: float = 0.7) -> Dict[str, Any]:
        """
        Identity purity of MATCH-Global tracks over noisy facet sets

        Args:
            seeds: One facet set per seed
            width, height: Image size
            blobs: Blobs per image (amplitudes in [0.8, 1.0])
            facets: Facets per set, defaults to the configured B
            sigma: Gaussian noise level of each facet
            tau: tau_primary, defaults to the configured value
            min_support: Consensus support, defaults to ceil(3T/4)
            phi: Persistence threshold of the baseline classification

        Returns:
            Results dictionary with per-seed runs, errors and summary means
        """
        facets = facets or self.config.get("global.facets", 4)
        tau = self.tau_primary if tau is None else tau
        perturbations = (GaussianNoise(sigma),)

        def run(seed: int) -> Dict[str, Any]:
            facet_set = self._facet_set(seed, width, height, blobs, facets, perturbations)
            return self._consensus_run(facet_set, tau, min_support, phi)

        results = self._run_seeds("consensus", seeds, run)
        results["parameters"] = {
            "width": width, "height": height, "blobs": blobs, "facets": facets,
            "perturbations": [perturbation_to_dict(p) for p in perturbations],
            "tau_primary": tau, "min_support": min_support, "phi": phi,
        }
        results["summary"] = self._summarize(results["runs"])
        return results

    # Swap

    def run_swap_experiment(self, seeds: Sequence[int], tau: Optional[float] = None) -> Dict[str, Any]:
        """Correspondence accuracy of MATCH-Pair and of the Wasserstein baseline on swap scenarios"""
        tau = self.tau_primary if tau is None else tau

        def run(seed: int) -> Dict[str, Any]:
            scenario = swap_scenario(seed)
            truth = set(scenario.correspondence)
            pair = match_pair(scenario.field1, scenario.field2, tau, self.connectivity)
            baseline = wasserstein_match(compute_diagram(scenario.field1, self.connectivity),
                                         compute_diagram(scenario.field2, self.connectivity))
            return {
                "truth": sorted(truth),
                "match_pair": pair.pairs(),
                "wasserstein": baseline.pairs(),
                "match_pair_correct": set(pair.pairs()) == truth,
                "wasserstein_correct": set(baseline.pairs()) == truth,
            }

        results = self._run_seeds("swap", seeds, run)
        runs = results["runs"]
        results["parameters"] = {"tau_primary": tau}
        results["summary"] = {
            "match_pair_accuracy": sum(r["match_pair_correct"] for r in runs) / len(runs) if runs else None,
            "wasserstein_accuracy": sum(r["wasserstein_correct"] for r in runs) / len(runs) if runs else None,
        }
        return results

    # Sweeps

    def run_tau_sweep(self, seeds: Sequence[int], taus: Sequence[float] = (0.05, 0.1, 0.2, 0.3, 0.5),
                      width: int = 64, height: int = 64, blobs: int = 5, facets: Optional[int] = None,
                      sigma: float = 0.05, min_support: Optional[int] = None, phi: float = 0.7) -> Dict[str, Any]:
        """Consensus purity and recovery as a function of tau_primary (facet sets shared across taus)"""
        facets = facets or self.config.get("global.facets", 4)
        perturbations = (GaussianNoise(sigma),)

        def run(seed: int) -> Dict[str, Any]:
            facet_set = self._facet_set(seed, width, height, blobs, facets, perturbations)
            return {
                "by_tau": [{"tau_primary": tau, **self._consensus_run(facet_set, tau, min_support, phi)}
                           for tau in taus]
            }

        results = self._run_seeds("tau-sweep", seeds, run)
        results["parameters"] = {"taus": list(taus), "width": width, "height": height, "blobs": blobs,
                                 "facets": facets, "sigma": sigma, "min_support": min_support}
        results["summary"] = [
            {"tau_primary": tau, **self._summarize([r["by_tau"][k] for r in results["runs"]])}
            for k, tau in enumerate(taus)
        ]
        return results

    def run_dropout_sweep(self, seeds: Sequence[int], rates: Sequence[float] = (0.0, 0.1, 0.2, 0.3),
                          patch: int = 8, width: int = 64, height: int = 64, blobs: int = 5,
                          facets: Optional[int] = None, sigma: float = 0.05,
                          min_support: Optional[int] = None, phi: float = 0.7) -> Dict[str, Any]:
        """Consensus purity and recovery as facets lose a growing share of patches"""
        facets = facets or self.config.get("global.facets", 4)
        tau = self.tau_primary

        def run(seed: int) -> Dict[str, Any]:
            by_rate = []
            for rate in rates:
                perturbations = (GaussianNoise(sigma), PatchDropout(rate, patch))
                facet_set = self._facet_set(seed, width, height, blobs, facets, perturbations)
                by_rate.append({"rate": rate, **self._consensus_run(facet_set, tau, min_support, phi)})
            return {"by_rate": by_rate}

        results = self._run_seeds("dropout-sweep", seeds, run)
        results["parameters"] = {"rates": list(rates), "patch": patch, "width": width, "height": height,
                                 "blobs": blobs, "facets": facets, "sigma": sigma, "tau_primary": tau,
                                 "min_support": min_support}
        results["summary"] = [
            {"rate": rate, **self._summarize([r["by_rate"][k] for r in results["runs"]])}
            for k, rate in enumerate(rates)
        ]
        return results

    # Reporting

    def export_report(self, results: Dict[str, Any], filename: Optional[str] = None) -> str:
        """
        Export experiment results to a JSON report in the reports directory

        Args:
            results: Results dictionary of one of the run_* methods
            filename: Optional custom filename (defaults to <experiment>_report.json)

        Returns:
            Report file path
        """
        name = results.get("experiment", "experiment")
        if not filename:
            filename = f"{name.replace('-', '_')}_report.json"

        report = {
            "experiment": name,
            "parameters": results.get("parameters", {}),
            "summary": results.get("summary", {}),
            "totals": {
                "runs": results.get("total_runs", 0),
                "successful": results.get("successful", 0),
                "failed": results.get("failed", 0),
            },
            "runs": results.get("runs", []),
            "errors": results.get("errors", []),
        }

        report_path = write_json(self.config.get_reports_dir() / filename, report)
        logger.info(f"Experiment report saved to {report_path}")
        return str(report_path)

    def get_engine_stats(self) -> Dict[str, int]:
        return dict(self.stats)

    def reset_stats(self):
        """Reset statistics counters"""
        self.stats = {
            "total_runs": 0,
            "successful_runs": 0,
            "failed_runs": 0,
        }
        logger.info("Statistics reset")
