"""
Command-line frontend for topo-match

Subcommands: diagram, match-pair, match-global, loss, metrics, synth, viz and
experiment. Results are printed as JSON on standard output or written
atomically to the -o path. Exit codes: 0 success, 2 input or usage error,
3 internal invariant violation.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from config.settings import config, configure_logging
from src.exceptions import (
    InvalidParameterError,
    InvariantViolationError,
    TopoMatchError,
)
from src.experiments import ExperimentEngine
from src.field_io import FieldFormat, ScalarField, load_field, load_mask, save_field
from src.global_match import (
    GlobalTracks,
    StabilityClassification,
    classify_stability,
    match_global,
)
from src.matching import match_pair, wasserstein_distance, wasserstein_match
from src.metrics import evaluate_metrics
from src.persistence import Connectivity, compute_diagram, feature_weights
from src.serialization import read_json, to_json_text, write_json
from src.synth import (
    BlobSpec,
    make_facet_set,
    parse_perturbation,
    perturbation_to_dict,
    swap_scenario,
)
from src.topo_loss import (
    FacetGroup,
    build_loss_report,
    consistency_loss,
    supervised_loss,
)
from src.visualization import render_overlays

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_INVARIANT = 3

EXPERIMENTS = ("consensus", "swap", "tau-sweep", "dropout-sweep")


@dataclass
class CommandConfig:
    """Resolved options of one invocation; unset flags fall back to configuration"""

    subcommand: str
    inputs: List[str] = field(default_factory=list)
    output: Optional[str] = None
    format: Optional[str] = None
    connectivity: str = "eight"
    tau_primary: float = 0.1
    min_support: Optional[int] = None
    window: int = 256
    stride: Optional[int] = None
    threshold: float = 0.5
    seed: int = 0

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CommandConfig":
        def pick(name: str, key: str, default: Any = None) -> Any:
            value = getattr(args, name, None)
            return value if value is not None else config.get(key, default)

        return cls(
            subcommand=args.command,
            inputs=list(getattr(args, "inputs", None) or []),
            output=getattr(args, "output", None),
            format=getattr(args, "format", None),
            connectivity=pick("connectivity", "matching.connectivity", "eight"),
            tau_primary=pick("tau", "matching.tau_primary", 0.1),
            min_support=pick("min_support", "global.min_support"),
            window=pick("window", "metrics.window", 256),
            stride=pick("stride", "metrics.stride"),
            threshold=pick("threshold", "metrics.threshold", 0.5),
            seed=getattr(args, "seed", None) or 0,
        )


def _emit(obj: Any, output: Optional[str]) -> None:
    if output:
        path = write_json(output, obj)
        logger.info(f"Wrote {path}")
    else:
        sys.stdout.write(to_json_text(obj))


def _load_fields(paths: Sequence[str], fmt: Optional[str]) -> List[ScalarField]:
    return [load_field(path, fmt) for path in paths]


# Subcommands


def cmd_diagram(cfg: CommandConfig) -> Dict[str, Any]:
    """Persistence diagram and weights of one field"""
    field_ = load_field(cfg.inputs[0], cfg.format)
    diagram = compute_diagram(field_, cfg.connectivity)
    result = diagram.to_dict()
    result["weights"] = list(feature_weights(diagram))
    return result


def cmd_match_pair(cfg: CommandConfig, baseline: bool = False) -> Dict[str, Any]:
    """MATCH-Pair between two fields, optionally with the Wasserstein baseline alongside"""
    first, second = _load_fields(cfg.inputs[:2], cfg.format)
    result = match_pair(first, second, cfg.tau_primary, cfg.connectivity).to_dict()
    if baseline:
        diag1 = compute_diagram(first, cfg.connectivity)
        diag2 = compute_diagram(second, cfg.connectivity)
        result["wasserstein"] = wasserstein_match(diag1, diag2).to_dict()
        result["wasserstein"]["distance"] = wasserstein_distance(diag1, diag2)
    return result


def cmd_match_global(cfg: CommandConfig) -> Dict[str, Any]:
    """MATCH-Global tracks and the stability classification they induce"""
    if len(cfg.inputs) < 2:
        raise InvalidParameterError(f"match-global needs at least 2 field paths, got {len(cfg.inputs)}")
    result = match_global(_load_fields(cfg.inputs, cfg.format), cfg.tau_primary, cfg.connectivity)
    stability = classify_stability(result.tracks, cfg.min_support)
    document = result.tracks.to_dict(stability.min_support)
    document["graph"] = result.graph.to_dict()
    document["classification"] = stability.to_dict()
    return document


def _vertices(items: Any, what: str) -> frozenset:
    try:
        return frozenset((int(t), int(i)) for t, i in items)
    except (TypeError, ValueError) as e:
        raise InvalidParameterError(f"Malformed {what} list: {e}") from e


def _load_group(entry: Dict[str, Any], base: Path, manifest: Dict[str, Any], cfg: CommandConfig) -> FacetGroup:
    try:
        label = entry.get("label")
        paths = entry["fields"]
    except (AttributeError, KeyError) as e:
        raise InvalidParameterError(f"Facet group needs a 'fields' list: {e}") from e
    fields = _load_fields([str(base / path) for path in paths], cfg.format)
    connectivity = manifest.get("connectivity", cfg.connectivity)

    if "stability" not in entry:
        return FacetGroup.from_fields(label, fields, manifest.get("tau", cfg.tau_primary), connectivity,
                                      manifest.get("min_support", cfg.min_support))

    diagrams = tuple(compute_diagram(f, connectivity) for f in fields)
    classification = entry["stability"]
    if not isinstance(classification, dict):
        raise InvalidParameterError(f"Group {label!r}: stability must map 'matched'/'unmatched' to [t, i] lists")
    stability = StabilityClassification(
        _vertices(classification.get("matched", []), "matched"),
        _vertices(classification.get("unmatched", []), "unmatched"),
    )
    return FacetGroup(label, tuple(fields), diagrams, stability)


def cmd_loss(cfg: CommandConfig, include_gradient: bool = True) -> Dict[str, Any]:
    """
    Loss report of a group manifest

    Manifest keys: intra_groups / temp_groups (lists of {label, fields, stability?}),
    supervised {pred, target}, consistency {student, teacher}, iteration,
    total_iterations, k, lambda_cons, lambda_intra, lambda_temp, connectivity,
    tau, min_support. Paths are relative to the manifest's directory.
    """
    manifest_path = Path(cfg.inputs[0])
    manifest = read_json(manifest_path)
    if not isinstance(manifest, dict):
        raise InvalidParameterError("A loss manifest must be a JSON object")
    base = manifest_path.parent
    loss_config = config.get_loss_config()

    intra = [_load_group(entry, base, manifest, cfg) for entry in manifest.get("intra_groups", [])]
    temp = [_load_group(entry, base, manifest, cfg) for entry in manifest.get("temp_groups", [])]

    def manifest_field(section: str, key: str) -> ScalarField:
        try:
            path = manifest[section][key]
        except (KeyError, TypeError) as e:
            raise InvalidParameterError(f"Manifest section '{section}' needs a '{key}' path") from e
        return load_field(str(base / path), cfg.format)

    l_sup = 0.0
    if "supervised" in manifest:
        l_sup = supervised_loss(manifest_field("supervised", "pred"), manifest_field("supervised", "target"),
                                loss_config.get("dice_weight", 0.5), loss_config.get("ce_weight", 0.5))
    l_cons = 0.0
    if "consistency" in manifest:
        l_cons = consistency_loss(manifest_field("consistency", "student"), manifest_field("consistency", "teacher"))

    report = build_loss_report(
        intra, temp, l_sup, l_cons,
        lambda_cons=manifest.get("lambda_cons"),
        lambda_intra=manifest.get("lambda_intra", loss_config.get("lambda_intra", 0.001)),
        lambda_temp=manifest.get("lambda_temp", loss_config.get("lambda_temp", 0.001)),
        iteration=manifest.get("iteration"),
        total_iterations=manifest.get("total_iterations"),
        ramp_k=manifest.get("k", loss_config.get("ramp_k", 0.1)),
    )
    return report.to_dict(include_gradient)


def cmd_metrics(cfg: CommandConfig, facet_paths: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Betti error and matched feature error of a prediction against a ground-truth mask"""
    pred = load_field(cfg.inputs[0], cfg.format)
    gt = load_mask(cfg.inputs[1], cfg.format)
    facets = _load_fields(facet_paths, cfg.format) if facet_paths else []
    return evaluate_metrics(pred, gt, cfg.window, cfg.stride, cfg.threshold, cfg.tau_primary,
                            cfg.connectivity, facets).to_dict()


def cmd_synth(cfg: CommandConfig, out_dir: str) -> Dict[str, Any]:
    """
    Render a scenario descriptor into field files plus truth

    Descriptor: {width, height, background?, cutoff?, blobs: [...], facets?,
    perturbations?: [...], seed?}, or {"scenario": "swap", "seed": s}.
    """
    descriptor = read_json(cfg.inputs[0])
    if not isinstance(descriptor, dict):
        raise InvalidParameterError("A scenario descriptor must be a JSON object")
    out = Path(out_dir)
    fmt = FieldFormat(cfg.format) if cfg.format else FieldFormat.CSV
    suffix = ".f32" if fmt is FieldFormat.RAW_F32 else f".{fmt.value}"

    if descriptor.get("scenario") == "swap":
        seed = int(descriptor.get("seed", cfg.seed))
        scenario = swap_scenario(seed)
        paths = [save_field(scenario.field1, out / f"field_1{suffix}", fmt),
                 save_field(scenario.field2, out / f"field_2{suffix}", fmt)]
        return {"scenario": "swap", "seed": seed, "fields": [str(p) for p in paths],
                "correspondence": [list(pair) for pair in scenario.correspondence]}

    try:
        width, height = int(descriptor["width"]), int(descriptor["height"])
        blob_specs = [BlobSpec.from_dict(item) for item in descriptor.get("blobs", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidParameterError(f"Scenario descriptor needs width, height and blobs: {e}") from e
    perturbations = [parse_perturbation(item) for item in descriptor.get("perturbations", [])]
    seed = int(descriptor.get("seed", cfg.seed))

    facet_set = make_facet_set(
        blob_specs, width, height,
        facets=int(descriptor.get("facets", config.get("global.facets", 4))),
        perturbations=perturbations, seed=seed,
        background=float(descriptor.get("background", 0.0)),
        cutoff=descriptor.get("cutoff", config.get("synth.cutoff")),
        connectivity=cfg.connectivity,
    )
    base_path = save_field(facet_set.base, out / f"base{suffix}", fmt)
    facet_paths = [save_field(f, out / f"facet_{t}{suffix}", fmt) for t, f in enumerate(facet_set.facets)]
    return {
        "seed": seed,
        "base": str(base_path),
        "facets": [str(p) for p in facet_paths],
        "blobs": [b.to_dict() for b in facet_set.blobs],
        "perturbations": [perturbation_to_dict(p) for p in perturbations],
        "provenance": [p.to_dict() for p in facet_set.provenance],
        "truth": [[truth[i] for i in sorted(truth)] for truth in facet_set.truth],
    }


def cmd_viz(cfg: CommandConfig, tracks_path: str, out_dir: str,
            min_support: Optional[int] = None) -> Dict[str, Any]:
    """
    facet_<t>.ppm overlays colored by track

    Stability uses min_support when given, else the min_support recorded in
    the tracks document, else the configured default.
    """
    document = read_json(tracks_path)
    tracks = GlobalTracks.from_dict(document)
    if min_support is None and isinstance(document, dict):
        min_support = document.get("min_support")
    if min_support is None:
        min_support = cfg.min_support
    paths = render_overlays(_load_fields(cfg.inputs, cfg.format), tracks, out_dir, min_support, cfg.connectivity)
    return {"images": [str(p) for p in paths]}


def cmd_experiment(cfg: CommandConfig, name: str, seeds: int, report: Optional[str]) -> Dict[str, Any]:
    """Run one experiment sweep over seeds seed..seed+n-1 and export its report"""
    engine = ExperimentEngine()
    seed_list = list(range(cfg.seed, cfg.seed + seeds))
    if name == "consensus":
        results = engine.run_consensus_experiment(seed_list, tau=cfg.tau_primary, min_support=cfg.min_support)
    elif name == "swap":
        results = engine.run_swap_experiment(seed_list, tau=cfg.tau_primary)
    elif name == "tau-sweep":
        results = engine.run_tau_sweep(seed_list, min_support=cfg.min_support)
    else:
        results = engine.run_dropout_sweep(seed_list, min_support=cfg.min_support)

    report_path = engine.export_report(results, report)
    return {"experiment": name, "report": report_path, "summary": results["summary"],
            "failed": results["failed"]}


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topo-match", description="Spatially-aware topological matching")
    parser.add_argument("--log-level", help="Logging level (default from configuration)")
    parser.add_argument("--threads", type=int, help="Worker cap (overrides TOPO_MATCH_THREADS)")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="Write JSON here instead of standard output")
    common.add_argument("--format", choices=[f.value for f in FieldFormat], help="Input field format")
    common.add_argument("--connectivity", choices=[c.value for c in Connectivity])

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagram", parents=[common], help="Persistence diagram of a field")
    p.add_argument("inputs", nargs=1, metavar="FIELD")

    p = sub.add_parser("match-pair", parents=[common], help="MATCH-Pair between two fields")
    p.add_argument("inputs", nargs=2, metavar="FIELD")
    p.add_argument("--tau", type=float, help="tau_primary (default 0.1)")
    p.add_argument("--baseline", action="store_true", help="Also report the Wasserstein baseline")

    p = sub.add_parser("match-global", parents=[common], help="MATCH-Global over facets")
    p.add_argument("inputs", nargs="+", metavar="FIELD")
    p.add_argument("--tau", type=float)
    p.add_argument("--min-support", type=int)

    p = sub.add_parser("loss", parents=[common], help="Loss report of a group manifest")
    p.add_argument("inputs", nargs=1, metavar="MANIFEST")
    p.add_argument("--no-gradient", action="store_true", help="Omit the sparse gradient list")

    p = sub.add_parser("metrics", parents=[common], help="Topological metrics of a prediction")
    p.add_argument("inputs", nargs=2, metavar=("PRED", "GT"))
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--facets", nargs="+", metavar="FIELD", help="Facet maps for the uncertainty correlation")

    p = sub.add_parser("synth", parents=[common], help="Render a synthetic scenario")
    p.add_argument("inputs", nargs=1, metavar="DESCRIPTOR")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("viz", parents=[common], help="PPM overlays of tracks")
    p.add_argument("inputs", nargs="+", metavar="FIELD")
    p.add_argument("--tracks", required=True, help="Tracks JSON from match-global")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-support", type=int)

    p = sub.add_parser("experiment", parents=[common], help="Seeded synthetic experiments")
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--seeds", type=int, default=10, help="Number of seeds")
    p.add_argument("--seed", type=int, help="First seed (default 0)")
    p.add_argument("--tau", type=float)
    p.add_argument("--min-support", type=int)
    p.add_argument("--report", help="Report file name inside the reports directory")

    return parser


def run(args: argparse.Namespace) -> Any:
    cfg = CommandConfig.from_args(args)
    if args.command == "diagram":
        return cmd_diagram(cfg)
    if args.command == "match-pair":
        return cmd_match_pair(cfg, args.baseline)
    if args.command == "match-global":
        return cmd_match_global(cfg)
    if args.command == "loss":
        return cmd_loss(cfg, not args.no_gradient)
    if args.command == "metrics":
        return cmd_metrics(cfg, args.facets)
    if args.command == "synth":
        return cmd_synth(cfg, args.out_dir)
    if args.command == "viz":
        return cmd_viz(cfg, args.tracks, args.out_dir, args.min_support)
    return cmd_experiment(cfg, args.name, args.seeds, args.report)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT_ERROR

    configure_logging(args.log_level)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_INPUT_ERROR
        config.set("runtime.threads", args.threads)

    try:
        result = run(args)
        _emit(result, getattr(args, "output", None))
    except InvariantViolationError as e:
        logger.error(f"Internal invariant violated: {e}")
        print(f"error: internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except TopoMatchError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return EXIT_OK
