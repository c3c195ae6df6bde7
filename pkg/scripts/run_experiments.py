"""
Run every synthetic experiment and export the reports

Usage:
    python scripts/run_experiments.py --seeds 50
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.settings import config, configure_logging  # noqa: E402
from src.experiments import ExperimentEngine  # noqa: E402

logger = logging.getLogger("run_experiments")


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the topo-match synthetic experiments")
    parser.add_argument("--seeds", type=int, default=50, help="Seeds per experiment")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--reports-dir", help="Override the configured reports directory")
    args = parser.parse_args()

    configure_logging(args.log_level)
    if args.reports_dir:
        config.set("reports.dir", args.reports_dir)

    engine = ExperimentEngine()
    seeds = list(range(args.seeds))
    runs = [
        engine.run_consensus_experiment(seeds),
        engine.run_swap_experiment(seeds),
        engine.run_tau_sweep(seeds),
        engine.run_dropout_sweep(seeds),
    ]

    print("TOPO-MATCH EXPERIMENTS")
    print("=" * 60)
    for results in runs:
        path = engine.export_report(results)
        print(f"\n{results['experiment'].upper()}: {results['successful']}/{results['total_runs']} runs")
        summary = results["summary"]
        rows = summary if isinstance(summary, list) else [summary]
        for row in rows:
            print("   " + ", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        print(f"   Report: {path}")

    stats = engine.get_engine_stats()
    print(f"\nTotal runs: {stats['total_runs']} ({stats['failed_runs']} failed)")
    return 0 if stats["failed_runs"] == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
