"""Command-line pipeline over the library modules.

Commands: ``extract`` (feature files), ``importance`` (masked-prediction
sweep, profiles, split renders), ``measures`` (four per-pixel maps per
image), ``match`` (measure top-halves vs important halves), ``ablate``
(zero-region study), ``report`` (everything).

All parallelism lives here: library calls run in a bounded worker pool where
per-image work is independent, and results are aggregated in input order so
artifacts are deterministic.  Timestamps go only to the run.log sidecar.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from qregion._binio import FormatError
from qregion.bridge import BridgeClient, BridgeError
from qregion.dataio import (
    DataError,
    DatasetRecord,
    RunConfig,
    decode_image,
    encode_image,
    load_dataset,
    load_run_config,
    render_masked_image,
)
from qregion.encoder import EncoderError, init_weights, predict
from qregion.evaluation import (
    MatchResult,
    StatsError,
    ablation_study,
    match_image,
    matching_degree,
    zero_regions,
)
from qregion.features import (
    FeatureMatrix,
    ImageBuffer,
    ImageError,
    baseline_heuristic_score,
    export_feature_matrix,
    extract_builtin,
)
from qregion.grid import BlockGrid, BlockSet, GridError, block_set_to_pixel_regions
from qregion.importance import (
    MODE_IMAGE_DEVIATION,
    EncoderPredictor,
    FunctionPredictor,
    ImportanceError,
    MaskedPredictionTable,
    block_importance_dataset,
    block_importance_image,
    format_importance_report,
    masked_prediction_sweep,
    sample_subsets,
)
from qregion.measures import (
    MeasureError,
    band_decompose,
    export_measure_map,
    export_measure_pgm,
    frequency_measure,
    fuse_average,
    load_external_map,
    objectness,
    spectral_residual_saliency,
)

__all__ = ["main"]

_MEASURE_ORDER = ("saliency", "frequency", "objectness", "averaged")
_ERRORS = (
    DataError,
    GridError,
    ImageError,
    EncoderError,
    ImportanceError,
    MeasureError,
    StatsError,
    FormatError,
    BridgeError,
)


class _CliError(RuntimeError):
    """Fatal pipeline condition reported as a diagnostic with exit 2."""


class _RunLog:
    """Timestamped sidecar log; the report artifacts stay timestamp-free."""

    def __init__(self, path: Path):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def line(self, message: str) -> None:
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        with self._lock:
            self._fh.write(f"[{stamp}] {message}\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


class _Pipeline:
    """Caches corpus stages so `report` composes commands without recompute."""

    def __init__(
        self,
        config: RunConfig,
        records: list[DatasetRecord],
        out_dir: Path,
        log: _RunLog,
        objectness_dir: Path | None = None,
    ):
        self.config = config
        self.records = records
        self.out = out_dir
        self.log = log
        self.objectness_dir = objectness_dir
        self._corpus: list[tuple[DatasetRecord, ImageBuffer, FeatureMatrix]] | None = None
        self._stems: list[str] | None = None
        self._subsets = None
        self._table: MaskedPredictionTable | None = None
        self._weights = None
        self._profiles = None
        self._measures: list[dict] | None = None
        self._bridge: BridgeClient | None = None
        self._tmpdir: tempfile.TemporaryDirectory | None = None
        self._tmp_count = 0

    # ---- lifecycle ----

    def close(self) -> None:
        if self._bridge is not None:
            self._bridge.close()
            self._bridge = None
        if self._tmpdir is not None:
            self._tmpdir.cleanup()
            self._tmpdir = None

    def _pool(self) -> ThreadPoolExecutor:
        workers = self.config.workers or os.cpu_count() or 1
        return ThreadPoolExecutor(max_workers=workers)

    # ---- corpus stages ----

    def corpus(self) -> list[tuple[DatasetRecord, ImageBuffer, FeatureMatrix]]:
        """Decoded images and their feature matrices; failures skip-and-log."""
        if self._corpus is None:

            def prepare(record: DatasetRecord):
                image = decode_image(record.image_path)
                feats = extract_builtin(
                    image, stride=self.config.stride, channels_out=self.config.channels
                )
                self.config.grid_for(feats.rows, feats.cols)  # undersized -> skip
                return image, feats

            with self._pool() as pool:
                futures = [pool.submit(prepare, r) for r in self.records]
            kept = []
            for record, future in zip(self.records, futures):
                try:
                    image, feats = future.result()
                except _ERRORS as exc:
                    self.log.line(f"skip {record.image_path}: {exc}")
                    continue
                kept.append((record, image, feats))
            if not kept:
                raise _CliError("every input image failed to load")
            self._corpus = kept
        return self._corpus

    def stems(self) -> list[str]:
        if self._stems is None:
            seen: dict[str, int] = {}
            stems = []
            for record, _, _ in self.corpus():
                stem = Path(record.image_path).stem
                if stem in seen:
                    seen[stem] += 1
                    stem = f"{stem}_{seen[stem]}"
                else:
                    seen[stem] = 1
                stems.append(stem)
            self._stems = stems
        return self._stems

    def grids(self) -> list[BlockGrid]:
        return [self.config.grid_for(f.rows, f.cols) for _, _, f in self.corpus()]

    def subsets(self):
        if self._subsets is None:
            block_count = self.config.grid_rows * self.config.grid_cols
            self._subsets = sample_subsets(
                block_count, self.config.subset_cap, self.config.seed
            )
        return self._subsets

    # ---- predictors ----

    def encoder_weights(self):
        if self._weights is None:
            self._weights = init_weights(
                self.config.encoder_config(), channels=self.config.channels
            )
        return self._weights

    def _temp_image_path(self, image: ImageBuffer) -> Path:
        if self._tmpdir is None:
            self._tmpdir = tempfile.TemporaryDirectory(prefix="qregion-cli-")
        self._tmp_count += 1
        path = Path(self._tmpdir.name) / f"img{self._tmp_count}.png"
        encode_image(image, path)
        return path

    def _bridge_client(self) -> BridgeClient:
        if self._bridge is None:
            command = shlex.split(self.config.predictor[len("bridge:") :])
            self._bridge = BridgeClient(command)
            self.log.line(f"bridge started: {' '.join(command)}")
        return self._bridge

    def _score_pixels(self, image: ImageBuffer) -> float:
        """Score a raw image with the configured non-encoder predictor."""
        if self.config.predictor == "builtin_heuristic":
            return baseline_heuristic_score(image)
        path = self._temp_image_path(image)
        try:
            return self._bridge_client().score(str(path))
        finally:
            path.unlink(missing_ok=True)

    def image_scorer(self):
        """Image -> score callable used by the ablation study."""
        if self.config.predictor == "builtin_encoder":
            weights = self.encoder_weights()
            config = self.config.encoder_config()

            def score(image: ImageBuffer) -> float:
                feats = extract_builtin(
                    image, stride=self.config.stride, channels_out=self.config.channels
                )
                grid = self.config.grid_for(feats.rows, feats.cols)
                empty = BlockSet.empty(grid.block_count)
                return predict(feats, empty, weights, config, grid)

            return score
        return self._score_pixels

    def _masked_predictor(self, image: ImageBuffer):
        """Per-image predictor evaluating one block mask of the sweep.

        The encoder masks attention keys; pixel predictors realize the same
        deletion by zeroing the blocks' pixel regions before scoring.
        """
        if self.config.predictor == "builtin_encoder":
            return EncoderPredictor(self.encoder_weights(), self.config.encoder_config())

        def evaluate(feats: FeatureMatrix, mask: BlockSet, grid: BlockGrid) -> float:
            rects = block_set_to_pixel_regions(mask, grid, image.height, image.width)
            return self._score_pixels(zero_regions(image, rects))

        return FunctionPredictor(evaluate)

    def table(self) -> MaskedPredictionTable:
        """Masked-prediction sweep over the corpus, one row per image."""
        if self._table is None:
            subsets = self.subsets()
            baselines, scores = [], []
            for (record, image, feats), grid in zip(self.corpus(), self.grids()):
                part = masked_prediction_sweep(
                    [feats], self._masked_predictor(image), grid, subsets
                )
                baselines.append(part.baseline)
                scores.append(part.scores)
            self._table = MaskedPredictionTable(
                subsets=tuple(subsets),
                baseline=np.concatenate(baselines),
                scores=np.vstack(scores),
                block_count=self.config.grid_rows * self.config.grid_cols,
            )
        return self._table

    def profiles(self) -> list:
        """One importance profile per image (corpus split replicated in
        dataset mode)."""
        if self._profiles is None:
            table = self.table()
            if self.config.mode == MODE_IMAGE_DEVIATION:
                self._profiles = [
                    block_importance_image(table, i) for i in range(table.n_images)
                ]
            else:
                corpus_profile = block_importance_dataset(table)
                self._profiles = [corpus_profile] * table.n_images
        return self._profiles

    def measure_maps(self) -> list[dict]:
        """Per image: {measure kind: MeasureMap} in _MEASURE_ORDER."""
        if self._measures is None:

            def compute(item):
                record, image, _ = item
                external = self._external_objectness(Path(record.image_path).stem, image)
                sal = spectral_residual_saliency(image)
                freq = frequency_measure(
                    band_decompose(image, self.config.pixels_per_degree)
                )
                obj = objectness(image, external)
                avg = fuse_average([sal, freq, obj])
                return {
                    "saliency": sal,
                    "frequency": freq,
                    "objectness": obj,
                    "averaged": avg,
                }

            with self._pool() as pool:
                self._measures = list(pool.map(compute, self.corpus()))
        return self._measures

    def _external_objectness(self, stem: str, image: ImageBuffer):
        if self.objectness_dir is None:
            return None
        for suffix in (".smp", ".pgm"):
            candidate = self.objectness_dir / (stem + suffix)
            if candidate.is_file():
                ext = load_external_map(candidate, kind="objectness")
                if (ext.height, ext.width) != (image.height, image.width):
                    raise DataError(
                        f"{candidate}: map size {ext.height}x{ext.width} does not "
                        f"match image {image.height}x{image.width}"
                    )
                return ext
        return None


# ---- commands ----


def _cmd_extract(p: _Pipeline) -> None:
    for (record, _, feats), stem in zip(p.corpus(), p.stems()):
        out = p.out / f"{stem}.fmx"
        export_feature_matrix(feats, out)
        p.log.line(
            f"extract {stem}: {feats.rows}x{feats.cols}x{feats.channels} -> {out.name}"
        )


def _cmd_importance(p: _Pipeline) -> None:
    profiles = p.profiles()
    subset_count = len(p.subsets())
    per_image = p.config.mode == MODE_IMAGE_DEVIATION
    if not per_image:
        grid = p.grids()[0]
        _write_text(
            p.out / "corpus_importance.csv", format_importance_report(profiles[0], grid)
        )
        p.log.line(f"importance corpus: {subset_count} subset evaluations per image")
    for (record, image, _), stem, grid, profile in zip(
        p.corpus(), p.stems(), p.grids(), profiles
    ):
        if per_image:
            _write_text(
                p.out / f"{stem}_importance.csv", format_importance_report(profile, grid)
            )
            p.log.line(f"importance {stem}: {subset_count} subset evaluations")
        render_masked_image(image, profile.important, grid, p.out / f"{stem}_important.pgm")
        render_masked_image(image, profile.trivial, grid, p.out / f"{stem}_trivial.pgm")


def _cmd_measures(p: _Pipeline) -> None:
    for stem, maps in zip(p.stems(), p.measure_maps()):
        for kind in _MEASURE_ORDER:
            export_measure_map(maps[kind], p.out / f"{stem}_{kind}.smp")
            export_measure_pgm(maps[kind], p.out / f"{stem}_{kind}.pgm")
        p.log.line(f"measures {stem}: wrote {len(_MEASURE_ORDER)} maps")


def _cmd_match(p: _Pipeline) -> None:
    thresholds = p.config.thresholds
    header = "image,measure,overlap," + ",".join(f"matched@{t}" for t in thresholds)
    rows = [header]
    results = []
    for (record, image, _), stem, grid, profile, maps in zip(
        p.corpus(), p.stems(), p.grids(), p.profiles(), p.measure_maps()
    ):
        full = BlockSet.full(grid.block_count)
        rects = block_set_to_pixel_regions(full, grid, image.height, image.width)
        for kind in _MEASURE_ORDER:
            means = [float(maps[kind].values[r0:r1, c0:c1].mean()) for r0, r1, c0, c1 in rects]
            overlap, _ = match_image(profile.important, means, thresholds[0])
            result = MatchResult(
                image=stem, measure=kind, overlap=overlap, half=grid.block_count // 2
            )
            results.append(result)
            flags = ",".join(str(int(result.matched(t))) for t in thresholds)
            rows.append(f"{stem},{kind},{overlap},{flags}")
    _write_text(p.out / "match.csv", "\n".join(rows) + "\n")

    summary = ["measure,threshold,matching_degree"]
    for kind in _MEASURE_ORDER:
        for t in thresholds:
            summary.append(f"{kind},{t},{matching_degree(results, kind, t):.9g}")
    _write_text(p.out / "match_summary.csv", "\n".join(summary) + "\n")
    p.log.line(f"match: {len(results)} image-measure pairs at thresholds {thresholds}")


def _cmd_ablate(p: _Pipeline) -> None:
    corpus = p.corpus()
    splits = []
    for (record, image, _), grid, profile in zip(corpus, p.grids(), p.profiles()):
        important = block_set_to_pixel_regions(
            profile.important, grid, image.height, image.width
        )
        trivial = block_set_to_pixel_regions(
            profile.trivial, grid, image.height, image.width
        )
        splits.append((important, trivial))

    mos = [record.mos for record, _, _ in corpus]
    mos_values = mos if all(m is not None for m in mos) else None
    if mos_values is None and any(m is not None for m in mos):
        p.log.line("ablate: some images lack mos; ground-truth PLCCs omitted")

    images = [image for _, image, _ in corpus]
    result = ablation_study(images, p.image_scorer(), splits, mos_values)

    def cell(value) -> str:
        return "" if value is None else f"{value:.9g}"

    lines = [
        f"# images={len(images)} predictor={p.config.predictor} mode={p.config.mode} "
        f"grid={p.config.grid_rows}x{p.config.grid_cols} seed={p.config.seed} "
        f"subsets={len(p.subsets())}",
        "metric,value",
        f"plcc_pred_vs_zeroed_important,{cell(result.plcc_pred_vs_zeroed_important)}",
        f"plcc_pred_vs_zeroed_trivial,{cell(result.plcc_pred_vs_zeroed_trivial)}",
        f"plcc_mos_vs_zeroed_important,{cell(result.plcc_mos_vs_zeroed_important)}",
        f"plcc_mos_vs_zeroed_trivial,{cell(result.plcc_mos_vs_zeroed_trivial)}",
    ]
    _write_text(p.out / "ablation.csv", "\n".join(lines) + "\n")
    p.log.line(
        "ablate: plcc important "
        f"{cell(result.plcc_pred_vs_zeroed_important)} vs trivial "
        f"{cell(result.plcc_pred_vs_zeroed_trivial)}"
    )


def _cmd_report(p: _Pipeline) -> None:
    _cmd_extract(p)
    _cmd_importance(p)
    _cmd_measures(p)
    _cmd_match(p)
    _cmd_ablate(p)
    p.log.line("report: all artifacts written")


_COMMANDS = {
    "extract": _cmd_extract,
    "importance": _cmd_importance,
    "measures": _cmd_measures,
    "match": _cmd_match,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


# ---- argument handling ----


def _parse_thresholds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"thresholds must be integers, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("images", nargs="*", help="image files (PNG, PGM, or PPM)")
    common.add_argument("--dataset", help="CSV with header image_path[,mos]")
    common.add_argument("--config", help="JSON config file (default: $QREGION_CONFIG)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker pool size (default: cores)")
    common.add_argument("--seed", type=int, help="seed for weights and subset sampling")
    common.add_argument("--grid-rows", type=int, dest="grid_rows")
    common.add_argument("--grid-cols", type=int, dest="grid_cols")
    common.add_argument(
        "--mode", help="importance mode: deviation (per image) or plcc (corpus)"
    )
    common.add_argument(
        "--cap", type=int, dest="subset_cap", help="max subsets per cardinality"
    )
    common.add_argument(
        "--predictor", help="builtin_encoder, builtin_heuristic, or bridge:<command>"
    )
    common.add_argument(
        "--ppd", type=float, dest="pixels_per_degree", help="pixels per visual degree"
    )
    common.add_argument("--thresholds", type=_parse_thresholds, help="e.g. 1,2,3,4,5")
    common.add_argument("--stride", type=int, help="feature cell size in pixels")
    common.add_argument("--channels", type=int, help="feature channels per cell")
    common.add_argument(
        "--objectness-dir",
        dest="objectness_dir",
        help="directory of externally computed objectness maps (<stem>.smp/.pgm)",
    )

    parser = argparse.ArgumentParser(
        prog="qregion",
        description="Region-importance analysis for image quality predictors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "extract": "write FMX feature files for each image",
        "importance": "run the masked-prediction sweep and write importance profiles",
        "measures": "write saliency/frequency/objectness/averaged maps per image",
        "match": "compare measure top-halves against important halves",
        "ablate": "zero important vs trivial regions and compare predictions",
        "report": "run every command into one output directory",
    }
    for name, fn in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


_OVERRIDE_KEYS = (
    "grid_rows",
    "grid_cols",
    "mode",
    "subset_cap",
    "seed",
    "predictor",
    "pixels_per_degree",
    "thresholds",
    "workers",
    "stride",
    "channels",
)


def _gather_records(args) -> list[DatasetRecord]:
    records = []
    if args.dataset:
        records.extend(load_dataset(args.dataset))
    for image in args.images:
        records.append(DatasetRecord(image_path=str(Path(image).resolve())))
    if not records:
        raise DataError("no inputs: pass image paths or --dataset")
    return records


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = {
            key: getattr(args, key)
            for key in _OVERRIDE_KEYS
            if getattr(args, key) is not None
        }
        if args.out is not None:
            overrides["output_dir"] = args.out
        config = load_run_config(args.config, overrides)
        records = _gather_records(args)
    except _ERRORS as exc:
        print(f"qregion: error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _RunLog(out_dir / "run.log")
    objectness_dir = Path(args.objectness_dir) if args.objectness_dir else None
    pipeline = _Pipeline(config, records, out_dir, log, objectness_dir=objectness_dir)
    log.line(f"{args.command}: {len(records)} input(s), predictor={config.predictor}")
    try:
        _COMMANDS[args.command](pipeline)
    except (_CliError, *_ERRORS) as exc:
        log.line(f"error: {exc}")
        print(f"qregion: error: {exc}", file=sys.stderr)
        return 2
    finally:
        try:
            pipeline.close()
        except BridgeError as exc:
            log.line(f"bridge shutdown: {exc}")
        log.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
