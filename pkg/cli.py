"""
mirviz command line: feature extraction, reduction, symbolic analysis and
rendering pipelines.

Exit codes: 0 success, 1 usage error, 2 data/processing error.
Every successful run writes <output>.config.json with the effective
parameters (flags > --config file > config/defaults.yaml).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from audio_io import FrameSpec, read_wav
from beat_sync import AGGREGATES, beat_aggregate, estimate_beats, read_beats, write_beats
from config_utils import ConfigError, load_config_file, load_defaults, load_logging_settings, merge_config, write_sidecar
from errors import MirvizError, WrongKind
from pattern_graph import PatternGraph, SymbolSequence, check_sequence, export_dot, learn_pattern_graph, parse_phrases
from reduce import Embedding, SmoothingConfig, classical_mds, lpf_smooth, pca_project, tsne
from render import (
    boxplot_stats,
    colormap_by_name,
    render_bar_chart,
    render_boxplots,
    render_color_strip,
    render_heatmap,
    render_polar_correlation,
    render_trajectory,
)
from similarity import METRICS, DistanceMatrix, self_similarity, validate_correlation_matrix
from spectral import NOTE_NAMES, CqtSpec, FeatureMatrix, chroma, cqt, mfcc, onset_envelope, stft_power
from symbolic import (
    PitchClassSet,
    chord_degrees,
    estimate_key,
    interval_sequence,
    pc_transition_matrix,
    pitch_class_histogram,
    read_notes,
    set_partition,
    transition_profile,
)

logger = logging.getLogger(__name__)

FEATURES = ("stft", "mfcc", "cqt", "chroma")
FEATURE_KINDS = {"stft": "spectrogram", "mfcc": "mfcc", "cqt": "cqt", "chroma": "chroma"}
NOTE_SUFFIXES = (".mid", ".midi", ".smf", ".csv")

Artifact = Tuple[str, Union[str, bytes]]


class UsageError(Exception):
    pass


class MirvizArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors become UsageError (exit 1) instead of exit 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# ----------------------------- Logging -----------------------------

def setup_logging(verbose: bool = False):
    """Console logging, plus a log file when MIRVIZ_LOG names one."""
    settings = load_logging_settings()
    level = logging.DEBUG if verbose else getattr(logging, str(settings.get("level", "INFO")).upper(), logging.INFO)
    handlers = [logging.StreamHandler(sys.stderr)]
    log_path = os.environ.get("MIRVIZ_LOG")
    if log_path:
        handlers.append(logging.FileHandler(log_path))
    logging.basicConfig(
        level=level,
        format=settings.get("format", "%(asctime)s - %(levelname)s - %(message)s"),
        handlers=handlers,
        force=True,
    )


# ----------------------------- Parser -----------------------------

def _pitch_classes(text: str) -> PitchClassSet:
    try:
        return PitchClassSet(frozenset(int(tok) for tok in text.replace(",", " ").split()))
    except (ValueError, MirvizError) as e:
        raise argparse.ArgumentTypeError(f"expected pitch classes 0..11, got {text!r} ({e})")


def build_parser() -> argparse.ArgumentParser:
    common = MirvizArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON file with parameter values (flag names as keys)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("-o", "--output", required=True, help="Primary output path")

    analysis = MirvizArgumentParser(add_help=False)
    analysis.add_argument("--frame-length", dest="frame_length", type=int)
    analysis.add_argument("--hop", type=int)
    analysis.add_argument("--window", choices=("hann", "hamming", "rect"))
    analysis.add_argument("--n-mels", dest="n_mels", type=int)
    analysis.add_argument("--n-mfcc", dest="n_mfcc", type=int)
    analysis.add_argument("--f-min", dest="f_min", type=float)
    analysis.add_argument("--bins-per-octave", dest="bins_per_octave", type=int)
    analysis.add_argument("--n-bins", dest="n_bins", type=int)
    analysis.add_argument("--feature", choices=FEATURES, help="Feature computed when the input is a WAV file")
    beats = analysis.add_mutually_exclusive_group()
    beats.add_argument("--beats", dest="beats_path", help="Beat annotation file for beat-synchronous aggregation")
    beats.add_argument("--estimate-beats", action="store_true", help="Estimate a fixed-tempo beat grid")
    analysis.add_argument("--aggregate", choices=sorted(AGGREGATES))

    render_opts = MirvizArgumentParser(add_help=False)
    render_opts.add_argument("--colormap", choices=("gray", "grayscale", "heat"))

    parser = MirvizArgumentParser(prog="mirviz", description="Music information retrieval and visualization toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=MirvizArgumentParser)

    p = sub.add_parser("features", parents=[common, analysis, render_opts], help="Frame-level features from a WAV file")
    p.add_argument("kind", choices=FEATURES)
    p.add_argument("input")
    p.add_argument("--heatmap", help="Also render the feature as a PPM heatmap")

    p = sub.add_parser("beats", parents=[common, analysis], help="Estimate a beat grid from a WAV file")
    p.add_argument("input")

    p = sub.add_parser("ssm", parents=[common, analysis, render_opts], help="Self-similarity matrix")
    p.add_argument("input")
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--image", help="Also render the matrix as a PPM (low distance is bright)")

    p = sub.add_parser("reduce", parents=[common, analysis], help="PCA, classical MDS or t-SNE embedding")
    p.add_argument("method", choices=("pca", "mds", "tsne"))
    p.add_argument("input")
    p.add_argument("-k", dest="k", type=int)
    p.add_argument("--metric", choices=METRICS, help="Distance used for MDS on feature input")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--smooth", action="store_true", help="Low-pass the embedding over time (uses --alpha)")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("smooth", parents=[common, analysis], help="One-pole low-pass over frames")
    p.add_argument("input")
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("colorstrip", parents=[common], help="Color sequence from a 3-D embedding (PPM)")
    p.add_argument("input")
    p.add_argument("--column-width", dest="column_width", type=int)
    p.add_argument("--strip-height", dest="strip_height", type=int)

    p = sub.add_parser("trajectory", parents=[common], help="Order-annotated 3-D trajectory (SVG)")
    p.add_argument("input")
    p.add_argument("--label-stride", dest="label_stride", type=int)

    p = sub.add_parser("histogram", parents=[common], help="Pitch-class histogram of a note file")
    p.add_argument("input")
    p.add_argument("--weighting", choices=("count", "duration"))
    p.add_argument("--normalize", action="store_true", help="Probability normalization")
    p.add_argument("--chart", help="Also render an SVG bar chart")

    p = sub.add_parser("transitions", parents=[common], help="Pitch-class transition matrix (CSV)")
    p.add_argument("input")
    p.add_argument("--profile", action="store_true", help="Row-normalize into a transition profile")

    p = sub.add_parser("intervals", parents=[common], help="Interval and chord-degree sequences (JSON)")
    p.add_argument("input")
    p.add_argument("--root", type=int)

    p = sub.add_parser("sets", parents=[common], help="Pitch-class set partition (JSON)")
    p.add_argument("--a", dest="set_a", type=_pitch_classes, required=True, help='e.g. "0 2 4 5 7 9 11"')
    p.add_argument("--b", dest="set_b", type=_pitch_classes, required=True)

    p = sub.add_parser("key", parents=[common], help="Template-correlation key of a note file")
    p.add_argument("input")
    p.add_argument("--weighting", choices=("count", "duration"))

    p = sub.add_parser("boxplot", parents=[common], help="Boxplots from a label,value CSV (SVG)")
    p.add_argument("input")
    p.add_argument("--stats", help="Also write the per-group statistics as JSON")

    p = sub.add_parser("corrcheck", parents=[common], help="Correlation-matrix validity report (JSON)")
    p.add_argument("input")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--polar", help="Also render the polar correlation view (SVG)")

    p = sub.add_parser("patterngraph", help="Learn, check or export pattern graphs")
    actions = p.add_subparsers(dest="action", required=True, parser_class=MirvizArgumentParser)
    a = actions.add_parser("learn", parents=[common])
    a.add_argument("input", help="Phrase file (one phrase per line) or a note file")
    a.add_argument("--root", type=int, help="Root for chord degrees when the input is a note file")
    a.add_argument("--dot", help="Also export the graph as DOT")
    a = actions.add_parser("check", parents=[common])
    a.add_argument("graph")
    a.add_argument("input")
    a = actions.add_parser("dot", parents=[common])
    a.add_argument("graph")
    return parser


# ----------------------------- Input helpers -----------------------------

def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _frame_spec(params) -> FrameSpec:
    return FrameSpec(int(params["frame_length"]), int(params["hop"]), str(params["window"]))


def _cqt_spec(params) -> CqtSpec:
    return CqtSpec(float(params["f_min"]), int(params["bins_per_octave"]), int(params["n_bins"]))


def compute_feature(audio, kind: str, params) -> FeatureMatrix:
    spec = _frame_spec(params)
    if kind == "stft":
        return stft_power(audio, spec)
    if kind == "mfcc":
        return mfcc(audio, spec, int(params["n_mels"]), int(params["n_mfcc"]))
    if kind == "cqt":
        return cqt(audio, spec, _cqt_spec(params))
    return chroma(cqt(audio, spec, _cqt_spec(params)))


def _beat_grid(args, audio, params):
    if getattr(args, "beats_path", None):
        return read_beats(args.beats_path)
    if getattr(args, "estimate_beats", False):
        return estimate_beats(onset_envelope(stft_power(audio, _frame_spec(params))), audio.duration)
    return None


def _load_table(path) -> Union[FeatureMatrix, Embedding]:
    """Feature matrix or embedding written by an earlier run (CSV or JSON)."""
    if str(path).lower().endswith(".json"):
        text = _read_text(path)
        doc = json.loads(text)
        return Embedding.from_json(text) if "points" in doc else FeatureMatrix.from_json(text)
    columns = pd.read_csv(path, nrows=0).columns
    if len(columns) and columns[0] == "point":
        return Embedding.from_csv(path)
    return FeatureMatrix.from_csv(path)


def _convert_table(features: FeatureMatrix, kind: str) -> FeatureMatrix:
    """Bring a loaded table to the requested kind; only cqt converts (to chroma)."""
    if features.kind == FEATURE_KINDS[kind]:
        return features
    if kind == "chroma" and features.kind == "cqt":
        return chroma(features)
    raise WrongKind(f"Cannot turn a {features.kind} table into {kind} features")


def load_features(args, params, kind: str = None) -> FeatureMatrix:
    """Compute features from a WAV input (with optional beat aggregation) or load a saved table."""
    if str(args.input).lower().endswith(".wav"):
        audio = read_wav(args.input)
        features = compute_feature(audio, kind or params["feature"], params)
        grid = _beat_grid(args, audio, params)
        if grid is not None:
            features = beat_aggregate(features, grid, params["aggregate"])
        return features
    table = _load_table(args.input)
    features = table.as_features() if isinstance(table, Embedding) else table
    return _convert_table(features, kind) if kind else features


def load_embedding(path) -> Embedding:
    table = _load_table(path)
    if isinstance(table, Embedding):
        return table
    return Embedding.from_features(table, method=table.meta.get("method", "pca"))


def _table_payload(path, table) -> str:
    return table.to_json() if str(path).lower().endswith(".json") else table.to_csv()


# ----------------------------- Commands -----------------------------

def cmd_features(args, params) -> List[Artifact]:
    features = load_features(args, params, kind=args.kind)
    artifacts = [(args.output, _table_payload(args.output, features))]
    if args.heatmap:
        # dimensions on the vertical axis, lowest at the bottom
        image = render_heatmap(features.values.T, colormap_by_name(params["colormap"]))
        artifacts.append((args.heatmap, image.to_ppm()))
    return artifacts


def cmd_beats(args, params) -> List[Artifact]:
    audio = read_wav(args.input)
    grid = estimate_beats(onset_envelope(stft_power(audio, _frame_spec(params))), audio.duration)
    return [(args.output, write_beats(grid))]


def cmd_ssm(args, params) -> List[Artifact]:
    matrix = self_similarity(load_features(args, params), params["metric"])
    artifacts = [(args.output, matrix.to_csv())]
    if args.image:
        image = render_heatmap(matrix.values, colormap_by_name(params["colormap"]), invert=True)
        artifacts.append((args.image, image.to_ppm()))
    return artifacts


def cmd_reduce(args, params) -> List[Artifact]:
    k = int(params["k"])
    if args.method == "mds":
        if str(args.input).lower().endswith(".csv") and pd.read_csv(args.input, nrows=0).columns[0] == "label":
            embedding = classical_mds(DistanceMatrix.from_csv(args.input, metric=params["metric"]), k)
        else:
            features = load_features(args, params)
            embedding = classical_mds(self_similarity(features, params["metric"]), k)
            embedding.frame_times = features.frame_times
    else:
        features = load_features(args, params)
        if args.method == "pca":
            embedding = pca_project(features, k)
        else:
            embedding = tsne(features, k, float(params["perplexity"]), int(params["seed"]), int(params["iterations"]))
    if args.smooth:
        smoothed = lpf_smooth(embedding.as_features(), SmoothingConfig(float(params["alpha"])))
        embedding.points = smoothed.values
        embedding.meta["lpf_alpha"] = float(params["alpha"])
    return [(args.output, _table_payload(args.output, embedding))]


def cmd_smooth(args, params) -> List[Artifact]:
    cfg = SmoothingConfig(float(params["alpha"]))
    if not str(args.input).lower().endswith(".wav"):
        table = _load_table(args.input)
        if isinstance(table, Embedding):
            smoothed = lpf_smooth(table.as_features(), cfg)
            result = Embedding.from_features(smoothed, method=table.method)
            return [(args.output, _table_payload(args.output, result))]
    return [(args.output, _table_payload(args.output, lpf_smooth(load_features(args, params), cfg)))]


def cmd_colorstrip(args, params) -> List[Artifact]:
    image = render_color_strip(load_embedding(args.input), int(params["column_width"]), int(params["strip_height"]))
    return [(args.output, image.to_ppm())]


def cmd_trajectory(args, params) -> List[Artifact]:
    return [(args.output, render_trajectory(load_embedding(args.input), int(params["label_stride"])))]


def cmd_histogram(args, params) -> List[Artifact]:
    profile = pitch_class_histogram(read_notes(args.input), params["weighting"])
    if args.normalize:
        profile = profile.normalized()
    doc = dict(profile.to_dict(), labels=list(NOTE_NAMES), weighting=params["weighting"])
    artifacts = [(args.output, json.dumps(doc, sort_keys=True, indent=2) + "\n")]
    if args.chart:
        artifacts.append((args.chart, render_bar_chart(list(NOTE_NAMES), profile.weights, "Pitch classes")))
    return artifacts


def cmd_transitions(args, params) -> List[Artifact]:
    matrix = pc_transition_matrix(read_notes(args.input))
    values = transition_profile(matrix) if args.profile else matrix
    df = pd.DataFrame(values, index=list(NOTE_NAMES), columns=list(NOTE_NAMES))
    return [(args.output, df.to_csv(index_label="from", float_format="%.17g", lineterminator="\n"))]


def cmd_intervals(args, params) -> List[Artifact]:
    notes = read_notes(args.input)
    doc = {
        "intervals": interval_sequence(notes),
        "chord_degrees": chord_degrees(notes, int(params["root"])),
        "root": int(params["root"]),
    }
    return [(args.output, json.dumps(doc, sort_keys=True, indent=2) + "\n")]


def cmd_sets(args, params) -> List[Artifact]:
    parts = set_partition(args.set_a, args.set_b)
    doc = {
        "a": args.set_a.sorted(),
        "b": args.set_b.sorted(),
        "only_a": parts.only_a.sorted(),
        "both": parts.both.sorted(),
        "only_b": parts.only_b.sorted(),
        "union": args.set_a.union(args.set_b).sorted(),
        "complement_a": args.set_a.complement().sorted(),
        "complement_b": args.set_b.complement().sorted(),
    }
    return [(args.output, json.dumps(doc, sort_keys=True, indent=2) + "\n")]


def cmd_key(args, params) -> List[Artifact]:
    profile = pitch_class_histogram(read_notes(args.input), params["weighting"])
    key = estimate_key(profile, templates=params["key_templates"])
    doc = {"tonic": key.tonic, "mode": key.mode, "score": key.score, "name": f"{NOTE_NAMES[key.tonic]} {key.mode}"}
    logger.info(f"Estimated key: {doc['name']} (r={key.score:.3f})")
    return [(args.output, json.dumps(doc, sort_keys=True, indent=2) + "\n")]


def cmd_boxplot(args, params) -> List[Artifact]:
    df = pd.read_csv(args.input)
    if list(df.columns[:2]) != ["label", "value"]:
        raise MirvizError(f"{args.input}: expected columns label,value")
    df["value"] = pd.to_numeric(df["value"], errors="coerce")
    groups = [(str(label), boxplot_stats(group["value"].to_numpy())) for label, group in df.groupby("label", sort=False)]
    artifacts = [(args.output, render_boxplots(groups))]
    if args.stats:
        doc = {label: stats.to_dict() for label, stats in groups}
        artifacts.append((args.stats, json.dumps(doc, sort_keys=True, indent=2) + "\n"))
    return artifacts


def _read_matrix(path) -> np.ndarray:
    """Numeric square matrix from CSV, with or without a header row / label column."""
    df = pd.read_csv(path, header=None, comment="#").apply(pd.to_numeric, errors="coerce")
    if df.iloc[0].isna().all():
        df = df.iloc[1:]
    if df.iloc[:, 0].isna().all():
        df = df.iloc[:, 1:]
    return df.to_numpy(dtype=np.float64)


def cmd_corrcheck(args, params) -> List[Artifact]:
    report = validate_correlation_matrix(_read_matrix(args.input), float(params["tolerance"]))
    artifacts = [(args.output, report.to_json() + "\n")]
    if args.polar:
        artifacts.append((args.polar, render_polar_correlation(report)))
    return artifacts


def _load_sequences(args, params) -> List[SymbolSequence]:
    if str(args.input).lower().endswith(NOTE_SUFFIXES):
        return [SymbolSequence(chord_degrees(read_notes(args.input), int(params["root"])))]
    return parse_phrases(_read_text(args.input))


def cmd_patterngraph(args, params) -> List[Artifact]:
    if args.action == "learn":
        graph = learn_pattern_graph(_load_sequences(args, params))
        artifacts = [(args.output, graph.to_json() + "\n")]
        if args.dot:
            artifacts.append((args.dot, export_dot(graph)))
        return artifacts

    graph = PatternGraph.from_json(_read_text(args.graph))
    if args.action == "dot":
        return [(args.output, export_dot(graph))]

    results = []
    for seq in parse_phrases(_read_text(args.input)):
        outcome = check_sequence(graph, seq)
        results.append({
            "symbols": seq.symbols,
            "accepted": outcome.accepted,
            "run_index": outcome.run_index,
            "reason": outcome.reason,
            "word": outcome.word,
        })
    logger.info(f"{sum(r['accepted'] for r in results)} of {len(results)} phrase(s) conform")
    return [(args.output, json.dumps(results, indent=2) + "\n")]


COMMANDS = {
    "features": cmd_features,
    "beats": cmd_beats,
    "ssm": cmd_ssm,
    "reduce": cmd_reduce,
    "smooth": cmd_smooth,
    "colorstrip": cmd_colorstrip,
    "trajectory": cmd_trajectory,
    "histogram": cmd_histogram,
    "transitions": cmd_transitions,
    "intervals": cmd_intervals,
    "sets": cmd_sets,
    "key": cmd_key,
    "boxplot": cmd_boxplot,
    "corrcheck": cmd_corrcheck,
    "patterngraph": cmd_patterngraph,
}


# ----------------------------- Entry point -----------------------------

def _write_artifacts(artifacts: List[Artifact]):
    for path, payload in artifacts:
        if isinstance(payload, bytes):
            with open(path, "wb") as f:
                f.write(payload)
        else:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(payload)
        logger.info(f"Wrote {path}")


def _run_record(args, params: Dict, artifacts: List[Artifact]) -> Dict:
    command = " ".join(str(p) for p in (args.command, getattr(args, "kind", None), getattr(args, "method", None),
                                        getattr(args, "action", None)) if p)
    inputs = [getattr(args, name) for name in ("input", "graph", "beats_path") if getattr(args, name, None)]
    record = {
        "command": command,
        "inputs": inputs,
        "outputs": [path for path, _ in artifacts],
        "parameters": params,
    }
    if getattr(args, "estimate_beats", False):
        record["estimate_beats"] = True
    return record


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    setup_logging(args.verbose)
    try:
        defaults = load_defaults()
        file_config = load_config_file(args.config) if args.config else {}
        flags = {key: value for key, value in vars(args).items() if key in defaults}
        params = merge_config(defaults, file_config, flags)
    except (ConfigError, OSError) as e:
        print(f"mirviz: error: {e}", file=sys.stderr)
        return 1

    try:
        artifacts = COMMANDS[args.command](args, params)
        _write_artifacts(artifacts)
        write_sidecar(args.output, _run_record(args, params, artifacts))
    except (MirvizError, OSError, ValueError, KeyError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
