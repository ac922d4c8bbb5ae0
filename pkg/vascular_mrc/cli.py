"""
Command-line interface for the vascular_mrc package.
"""

import argparse
import csv
import json
import logging
import sys
import typing
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from rich.console import Console
from rich.table import Table

from .compensators import FlowSource, MotionCompensator, create_compensator
from .core.config import ConfigManager, RunConfig
from .core.models import FluoroSequence, VesselMask
from .evaluation.metrics import (
    FrameScore,
    score_frame,
    scores_as_dicts,
    summarize_scores,
    write_scores_csv,
)
from .evaluation.timing import TimingReport, host_info, time_pipeline
from .imaging.io import (
    MANIFEST_NAME,
    load_centerlines,
    load_reference_mask,
    load_sequence,
    read_manifest,
    read_mask,
    save_mask,
    write_overlay,
)
from .imaging.phantom import PhantomDataset, generate_phantom, load_phantom, save_phantom, truth_flowset
from .regression.gpr import GprEnsemble
from .utils.exceptions import CompensationError, ConfigurationError, EvaluationError
from .utils.serialization import load_model, save_model

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["mode", "gof", "MD", "R", "predict_time", "learn_time"]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def config_from_args(args: argparse.Namespace, **extra: Any) -> ConfigManager:
    """Build a ConfigManager from the config file and every flag that was given."""
    overrides = {key: getattr(args, key, None) for key in RunConfig.model_fields}
    overrides.update(extra)
    return ConfigManager(args.config, overrides)


def _require_path(value: Optional[Path], key: str) -> Path:
    if value is None:
        raise ConfigurationError(f"Missing required setting '{key}' (use --{key} or the config file)", config_field=key)
    return Path(value)


def load_inputs(config: RunConfig, need_truth: bool = False) -> Tuple[FluoroSequence, VesselMask, Dict[int, VesselMask], Optional[PhantomDataset]]:
    """Load the sequence, reference mask, labeled centerlines and (optionally) phantom truth."""
    sequence_dir = _require_path(config.sequence_dir, "sequence_dir")
    if need_truth:
        dataset = load_phantom(sequence_dir)
        return dataset.sequence, dataset.reference_mask, dataset.gt_centerlines, dataset
    manifest = read_manifest(sequence_dir / MANIFEST_NAME)
    sequence = load_sequence(sequence_dir, manifest)
    return sequence, load_reference_mask(sequence_dir, manifest), load_centerlines(sequence_dir, manifest), None


def oracle_source(dataset: PhantomDataset) -> FlowSource:
    """Flow source returning phantom ground truth instead of tracked flows."""
    return lambda positions, frame: truth_flowset(dataset, positions, frame.index)


def score_predictions(
    predictions, centerlines: Dict[int, VesselMask], baseline: VesselMask, pixel_spacing: float
) -> List[FrameScore]:
    """Score each prediction that has a labeled centerline."""
    scores = []
    for prediction in predictions:
        gt = centerlines.get(prediction.frame_index)
        if gt is None:
            continue
        scores.append(
            score_frame(
                gt,
                prediction.warped,
                pixel_spacing,
                prediction.frame_index,
                predict_ms=prediction.elapsed_s * 1000.0,
                baseline=baseline,
            )
        )
    return scores


def _emit(args: argparse.Namespace, title: str, payload: Dict[str, Any], rows: Optional[List[Dict[str, Any]]] = None) -> None:
    """Print a result as JSON or as rich tables."""
    if args.output_format == "json":
        body = dict(payload)
        if rows is not None:
            body["rows"] = rows
        print(json.dumps(body, indent=2, default=str))
        return

    console = Console()
    summary = Table(title=title, show_header=False)
    summary.add_column("key")
    summary.add_column("value")
    for key, value in payload.items():
        summary.add_row(str(key), _cell(value))
    console.print(summary)
    if rows:
        table = Table()
        for column in rows[0]:
            table.add_column(column)
        for row in rows:
            table.add_row(*(_cell(v) for v in row.values()))
        console.print(table)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, dict):
        return json.dumps(value, default=str)
    return "" if value is None else str(value)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def phantom_command(args: argparse.Namespace) -> int:
    """Generate and write a synthetic phantom dataset."""
    manager = config_from_args(args)
    out_dir = Path(args.out) if args.out else manager.config.output_dir
    dataset = generate_phantom(manager.phantom_config())
    manifest = save_phantom(dataset, out_dir)
    _emit(
        args,
        "Phantom",
        {
            "output_dir": str(out_dir),
            "frames": manifest.frame_count,
            "contrasted": manifest.contrasted_count,
            "size": f"{manifest.width}x{manifest.height}",
            "vessel_pixels": dataset.reference_mask.count(),
        },
    )
    return 0


def train_command(args: argparse.Namespace) -> int:
    """Learn a model from the contrasted frames and write it to model_file."""
    manager = config_from_args(args)
    config = manager.config
    sequence, mask, _, dataset = load_inputs(config, need_truth=args.oracle)
    compensator = create_compensator(manager, flow_source=oracle_source(dataset) if dataset else None)

    report = time_pipeline("learn", lambda: compensator.learn(sequence, mask), warmup=config.warmup)
    model_file = config.model_file or config.output_dir / f"model.{config.regressor}"
    Path(model_file).parent.mkdir(parents=True, exist_ok=True)
    save_model(compensator.model, model_file)
    _emit(
        args,
        "Training",
        {
            "regressor": config.regressor,
            "model_file": str(model_file),
            "n_vascular": compensator.corners.n_vascular,
            "n_non_vascular": compensator.corners.n_non_vascular,
            "learn_time_s": report.learn_time,
            "host": report.host,
        },
    )
    return 0


def predict_command(args: argparse.Namespace) -> int:
    """Predict live frames with a saved model; write warped masks, overlays and scores."""
    manager = config_from_args(args)
    config = manager.config
    model = load_model(_require_path(config.model_file, "model_file"))
    sequence, mask, centerlines, dataset = load_inputs(config, need_truth=args.oracle)
    regressor = "gpr" if isinstance(model, GprEnsemble) else "mrc"
    compensator = create_compensator(
        manager, flow_source=oracle_source(dataset) if dataset else None, regressor=regressor
    )
    compensator.attach(model, sequence.reference, mask)

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    predictions = compensator.predict_sequence(sequence.live_frames, warmup=config.warmup)
    timing = TimingReport(predict_times=[p.elapsed_s for p in predictions], host=host_info())
    frames = {frame.index: frame for frame in sequence.live_frames}
    for prediction in predictions:
        save_mask(prediction.warped, out_dir / f"warped_{prediction.frame_index:04d}.png")
        write_overlay(frames[prediction.frame_index], prediction.warped, out_dir / f"overlay_{prediction.frame_index:04d}.png")

    scores = score_predictions(predictions, centerlines, compensator.static_roadmap(), sequence.pixel_spacing)
    payload: Dict[str, Any] = {
        "regressor": regressor,
        "frames": len(predictions),
        "scored_frames": len(scores),
        "output_dir": str(out_dir),
    }
    if scores:
        write_scores_csv(scores, out_dir / "scores.csv")
        summary = summarize_scores(scores)
        payload["mean_R"] = summary["R"]["mean"]
        payload["mean_MD_mm"] = summary["MD_mm"]["mean"]
    else:
        logger.warning("No labeled centerlines for the live frames; scores not written")
    if timing.predict_times:
        payload["mean_predict_ms"] = timing.mean_predict * 1000.0
    payload["host"] = timing.host
    _emit(args, "Prediction", payload, scores_as_dicts(scores) or None)
    return 0


def evaluate_command(args: argparse.Namespace) -> int:
    """Score previously written warped masks against labeled centerlines."""
    manager = config_from_args(args)
    config = manager.config
    sequence, mask, centerlines, _ = load_inputs(config)
    warped_dir = Path(args.warped_dir) if args.warped_dir else config.output_dir
    scores = []
    for index, gt in sorted(centerlines.items()):
        path = warped_dir / f"warped_{index:04d}.png"
        if not path.is_file():
            logger.warning(f"No warped mask for frame {index} in {warped_dir}")
            continue
        scores.append(score_frame(gt, read_mask(path), sequence.pixel_spacing, index, baseline=mask))
    if not scores:
        raise EvaluationError(f"No warped masks in {warped_dir} match a labeled centerline")
    write_scores_csv(scores, warped_dir / "evaluation.csv")
    summary = summarize_scores(scores)
    _emit(
        args,
        "Evaluation",
        {"frames": len(scores), **{f"{k}_{s}": v for k, d in summary.items() for s, v in d.items()}},
        scores_as_dicts(scores),
    )
    return 0


def run_ablation(manager: ConfigManager, sequence: FluoroSequence, mask: VesselMask,
                 centerlines: Dict[int, VesselMask], flow_source: Optional[FlowSource] = None) -> List[Dict[str, Any]]:
    """Run {sparse, dense} x {GOF on, off} and return one row per combination."""
    if not centerlines:
        raise EvaluationError("Ablation needs labeled centerlines for the live frames")
    rows = []
    for mode in ("sparse", "dense"):
        learner = MotionCompensator(manager.with_overrides(flow_mode=mode, regressor="mrc"), flow_source=flow_source)
        learn = time_pipeline("learn", lambda: learner.learn(sequence, mask), warmup=manager.config.warmup)
        for use_gof in (True, False):
            predictor = MotionCompensator(
                manager.with_overrides(flow_mode=mode, regressor="mrc", gof=use_gof), flow_source=flow_source
            )
            predictor.attach(learner.model, sequence.reference, mask)
            predictions = predictor.predict_sequence(sequence.live_frames, warmup=manager.config.warmup)
            timing = learn.merge(TimingReport(predict_times=[p.elapsed_s for p in predictions]))
            scores = score_predictions(predictions, centerlines, mask, sequence.pixel_spacing)
            summary = summarize_scores(scores)
            rows.append(
                {
                    "mode": mode,
                    "gof": "on" if use_gof else "off",
                    "MD": summary["MD_mm"]["mean"],
                    "R": summary["R"]["mean"],
                    "predict_time": timing.mean_predict,
                    "learn_time": timing.learn_time,
                }
            )
            logger.info(f"Ablation {mode}/gof={rows[-1]['gof']}: MD {rows[-1]['MD']:.3f} mm, R {rows[-1]['R']:.3f}")
    return rows


def write_ablation_csv(rows: List[Dict[str, Any]], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def ablate_command(args: argparse.Namespace) -> int:
    """Ablation table over flow mode and outlier filtering."""
    manager = config_from_args(args)
    config = manager.config
    if config.sequence_dir is None:
        dataset = generate_phantom(manager.phantom_config())
        sequence, mask, centerlines = dataset.sequence, dataset.reference_mask, dataset.gt_centerlines
    else:
        sequence, mask, centerlines, dataset = load_inputs(config, need_truth=args.oracle)
    flow_source = oracle_source(dataset) if args.oracle and dataset is not None else None

    rows = run_ablation(manager, sequence, mask, centerlines, flow_source)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.output_dir / "ablation.csv"
    write_ablation_csv(rows, out_path)
    _emit(args, "Ablation", {"output": str(out_path), "host": host_info()}, rows)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _metavar(annotation: Any) -> str:
    if typing.get_origin(annotation) is typing.Union:
        annotation = next(a for a in typing.get_args(annotation) if a is not type(None))
    if typing.get_origin(annotation) is typing.Literal:
        return "|".join(str(a) for a in typing.get_args(annotation))
    name = getattr(annotation, "__name__", str(annotation))
    return {"bool": "on|off", "float": "FLOAT", "int": "INT", "Path": "PATH"}.get(name, name.upper())


def config_parent_parser() -> argparse.ArgumentParser:
    """Parser carrying one ``--<key>`` flag per RunConfig field."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration keys (flags override the config file)")
    for key, info in RunConfig.model_fields.items():
        default = info.default
        shown = "automatic/unset" if default is None else ("on" if default is True else "off" if default is False else default)
        group.add_argument(
            f"--{key}",
            dest=key,
            default=None,
            metavar=_metavar(info.annotation),
            help=f"{info.description} (default: {shown})",
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vascular-mrc",
        description="Vascular respiratory motion compensation with motion-related models",
    )
    parser.add_argument("--config", help="Path to a key=value config file")
    parser.add_argument(
        "--output-format",
        choices=["text", "json"],
        default="text",
        help="Output format (default: text)",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="WARNING",
        help="Logging level (default: WARNING)",
    )

    parent = config_parent_parser()
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    phantom_parser = subparsers.add_parser("phantom", parents=[parent], help="Generate a synthetic phantom dataset")
    phantom_parser.add_argument("--out", help="Output directory (default: output_dir)")
    phantom_parser.set_defaults(func=phantom_command)

    train_parser = subparsers.add_parser("train", parents=[parent], help="Train a model on the contrasted frames")
    train_parser.add_argument("--oracle", action="store_true", help="Use phantom ground-truth flows instead of tracking")
    train_parser.set_defaults(func=train_command)

    predict_parser = subparsers.add_parser("predict", parents=[parent], help="Predict live frames with a saved model")
    predict_parser.add_argument("--oracle", action="store_true", help="Use phantom ground-truth flows instead of tracking")
    predict_parser.set_defaults(func=predict_command)

    evaluate_parser = subparsers.add_parser("evaluate", parents=[parent], help="Score written warped masks")
    evaluate_parser.add_argument("--warped-dir", help="Directory with warped_NNNN.png masks (default: output_dir)")
    evaluate_parser.set_defaults(func=evaluate_command)

    ablate_parser = subparsers.add_parser("ablate", parents=[parent], help="Run the sparse/dense x GOF ablation")
    ablate_parser.add_argument("--oracle", action="store_true", help="Use phantom ground-truth flows instead of tracking")
    ablate_parser.set_defaults(func=ablate_command)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(1)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        code = args.func(args)
    except CompensationError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except Exception as e:
        logger.exception("Unexpected failure")
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
    sys.exit(code)


if __name__ == "__main__":
    main()
