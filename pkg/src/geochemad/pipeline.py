"""End-to-end orchestration behind the command line.

``cmd_run`` executes ingest, abnormal-value handling, transform, feature
selection, detector fitting, scoring and the evaluation protocol, then writes
per-detector scored CSVs, JSON reports, a flat summary, a comparison table
(rows are datasets, columns detectors) and optional figures. A
``manifest.json`` always lists what was written; on failure it also names the
stage that failed, and every artifact written up to that point is kept.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import compositional as comp
from .config import PipelineConfig, load_config
from .detectors import make_detector, save_detector
from .errors import ConfigError, GeochemadError
from .eval import (
    EvalReport,
    evaluate_scores,
    flat_row,
    write_comparison_table,
    write_flat_csv,
    write_report_json,
)
from .geodata import deposit_positions, handle_abnormal_values, parse_deposits_csv, parse_survey_csv, survey_stats
from .spatial import GridSpec, SpatialIndex, average_sampling_distance, rasterize, write_ascii_grid

log = logging.getLogger(__name__)

SCORED_FIELDS = ("SAMPLEID", "x", "y", "score")


class StageError(GeochemadError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Prepared:
    """Everything the detectors see, plus metadata for snapshots."""

    survey: object
    deposits: list
    matrix: comp.CompositionMatrix
    positions: np.ndarray
    target: int | np.ndarray
    metadata: dict


@dataclass
class RunResult:
    out_dir: Path
    reports: dict[str, EvalReport] = field(default_factory=dict)
    artifacts: list[Path] = field(default_factory=list)


class _Manifest:
    def __init__(self, out_dir: Path, cfg: PipelineConfig | None):
        self.out_dir = out_dir
        self.cfg = cfg
        self.artifacts: list[Path] = []

    def add(self, path: Path) -> Path:
        self.artifacts.append(Path(path))
        return path

    def write(self, status: str, stage: str | None = None, error: str | None = None) -> Path:
        doc = {
            "status": status,
            "failed_stage": stage,
            "error": error,
            "artifacts": sorted(p.relative_to(self.out_dir).as_posix() for p in self.artifacts),
        }
        if self.cfg is not None:
            doc["dataset"] = self.cfg.dataset
            doc["detectors"] = [b.name for b in self.cfg.detectors]
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _stage(name: str):
    """Run the wrapped callable, converting failures to :class:`StageError`."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
                raise StageError(name, exc) from exc

        return inner

    return wrap


def _transform(matrix: comp.CompositionMatrix, kind: str) -> comp.CompositionMatrix:
    if kind == "clr":
        return comp.clr_transform(matrix)
    if kind == "ilr":
        return comp.ilr_transform(matrix)
    return matrix


def _target_values(raw: comp.CompositionMatrix, transformed: comp.CompositionMatrix,
                   symbol: str, standardize: bool) -> np.ndarray:
    """Target column in the transformed space; CLR when the space has no element columns."""
    names = [n.lower() for n in transformed.element_names]
    if symbol.lower() in names:
        return transformed.data[:, names.index(symbol.lower())].copy()
    c = comp.clr_transform(raw)
    col = c.data[:, [n.lower() for n in c.element_names].index(symbol.lower())]
    return (col - col.mean()) / (col.std() or 1.0) if standardize else col.copy()


def prepare(cfg: PipelineConfig) -> Prepared:
    """ingest -> abnormal -> transform -> standardize -> select (or select before transform)."""
    survey = _stage("ingest")(parse_survey_csv)(cfg.survey, cfg.elements)
    deposits = _stage("ingest")(parse_deposits_csv)(cfg.deposits)
    if not deposits:
        raise StageError("ingest", ConfigError(f"no deposits in {cfg.deposits}"))
    pre = cfg.preprocess
    survey = _stage("abnormal")(handle_abnormal_values)(survey, pre.abnormal)
    raw = comp.from_survey(survey)
    symbol = pre.target_element or raw.element_names[0]
    if symbol.lower() not in [n.lower() for n in raw.element_names]:
        raise StageError("select", ConfigError(f"target element {symbol!r} not in survey"))

    @_stage("transform")
    def transform(m):
        t = _transform(m, pre.transform)
        st = comp.Standardizer.fit(t.data)
        if pre.standardize:
            t = t.with_data(st.apply(t.data), space="zscore" if pre.transform == "raw" else t.space)
        return t, st

    @_stage("select")
    def select(m):
        s = pre.selection
        if s.strategy == "manual":
            sel = comp.manual_selection(m, s.elements)
        elif s.strategy == "pca":
            sel = comp.fit_pca(m, s.variance_threshold)
        else:
            sel = comp.FeatureSelection()
        return sel, comp.select_features(m, sel)

    if pre.order == "select_first":
        # the selected subcomposition is closed and transformed on its own
        sel, sub = select(raw)
        full, st = transform(sub)
        matrix = full
    else:
        full, st = transform(raw)
        sel, matrix = select(full)
    names = [n.lower() for n in matrix.element_names]
    if symbol.lower() in names:
        target = names.index(symbol.lower())
    else:
        target = _target_values(raw, full, symbol, pre.standardize)
    meta = {
        "dataset": cfg.dataset,
        "transform": pre.transform,
        "standardize": pre.standardize,
        "order": pre.order,
        "standardizer": {"mean": st.mean, "std": st.std},
        "selection": {
            "strategy": sel.strategy,
            "selected": list(sel.selected),
            "loadings": sel.loadings,
            "center": sel.center,
            "scale": sel.scale,
        },
        "elements_in": list(raw.element_names),
        "features": list(matrix.element_names),
        "target_element": symbol,
    }
    return Prepared(survey, deposits, matrix, survey.positions, target, meta)


def format_score(v: float) -> str:
    return f"{v:.10g}"


def write_scored_csv(path, ids, positions, scores) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORED_FIELDS)
        for sid, (x, y), s in zip(ids, positions, scores):
            w.writerow([sid, repr(float(x)), repr(float(y)), format_score(float(s))])
    return path


def read_scored_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, pos, scores = [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in SCORED_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{path}: scored CSV lacks column(s) {missing}")
        for row in reader:
            ids.append(row["SAMPLEID"])
            pos.append((float(row["x"]), float(row["y"])))
            scores.append(float(row["score"]))
    return ids, np.array(pos, dtype=float).reshape(-1, 2), np.array(scores)


def _fit_score(block, prep: Prepared):
    det = make_detector(block.kind, **block.params)

    @_stage(f"fit:{block.name}")
    def fit():
        det.fit(prep.matrix, coords=prep.positions, target=prep.target)

    @_stage(f"score:{block.name}")
    def score():
        s = det.score(prep.matrix, coords=prep.positions) if det.spatial else det.score(prep.matrix)
        if not np.all(np.isfinite(s)):
            raise ArithmeticError(f"{block.name} produced non-finite scores")
        return s

    fit()
    return det, score()


def cmd_run(config, jobs: int = 1) -> RunResult:
    """Run the configured pipeline; raises :class:`StageError` after writing the manifest."""
    cfg = _stage("config")(load_config)(config) if not isinstance(config, PipelineConfig) else config
    out = cfg.output.dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(out, cfg)
    result = RunResult(out)
    pool = None
    try:
        _stage("config")(cfg.check_paths)()
        prep = prepare(cfg)
        log.info("prepared %s: %d samples x %d features", cfg.dataset, *prep.matrix.shape)

        # results stream in config order, so artifacts of detectors that
        # finished before a failure are already on disk
        pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
        if pool is not None:
            fitted = pool.map(lambda b: _fit_score(b, prep), cfg.detectors)
        else:
            fitted = (_fit_score(b, prep) for b in cfg.detectors)

        ids = prep.survey.ids
        table: dict[str, float] = {}
        rows = []
        dep_xy = deposit_positions(prep.deposits)
        for block, (det, scores) in zip(cfg.detectors, fitted):
            manifest.add(write_scored_csv(out / f"scores_{block.name}.csv", ids, prep.positions, scores))
            if cfg.output.snapshots:
                manifest.add(save_detector(det, out / f"model_{block.name}.json", prep.metadata))
            # evaluate on the scores exactly as written, so reports match the CSV
            written = np.array([float(format_score(s)) for s in scores])
            report = _stage(f"evaluate:{block.name}")(evaluate_scores)(
                written, prep.positions, prep.deposits, cfg.protocol, block.name, det.config_hash())
            result.reports[block.name] = report
            manifest.add(write_report_json(report, out / f"report_{block.name}.json"))
            table[block.name] = report.auc_mean
            rows.append(flat_row(report, cfg.dataset))
            log.info("%s: mean AUC %.4f", block.name, report.auc_mean)
            if cfg.output.figures:
                from .plotting import plot_anomaly_map

                manifest.add(plot_anomaly_map(prep.positions, scores, out / f"map_{block.name}.png", dep_xy,
                                              f"{cfg.dataset}: {block.name}"))

        names = [b.name for b in cfg.detectors]
        manifest.add(write_flat_csv(rows, out / "summary.csv"))
        manifest.add(write_comparison_table({cfg.dataset: table}, names, out / "comparison.csv"))
        if cfg.output.figures:
            from .plotting import plot_auc_comparison

            reps = [result.reports[n] for n in names]
            manifest.add(plot_auc_comparison(names, [r.auc_mean for r in reps], [r.auc_var for r in reps],
                                             out / "auc_comparison.png", cfg.dataset))
    except StageError as exc:
        manifest.write("failed", exc.stage, str(exc.cause))
        raise
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    manifest.write("ok")
    result.artifacts = list(manifest.artifacts)
    return result


def cmd_gridmap(scored_csv, out_path, cell_size: float | None = None, method: str = "idw",
                deposits=None, nx: int | None = None, **params) -> dict[str, Path]:
    """Rasterise a scored CSV to an ESRI ASCII grid.

    Without ``cell_size`` the cell is the average sampling distance, or
    ``extent / nx`` when ``nx`` is given. With ``deposits`` a second grid
    counts deposits per cell.
    """
    _, pos, scores = read_scored_csv(scored_csv)
    index = SpatialIndex(pos)
    if cell_size is None:
        if nx:
            span = max(np.ptp(pos[:, 0]), np.ptp(pos[:, 1]), 1e-12)
            cell_size = span / nx
        else:
            cell_size = average_sampling_distance(index) if len(pos) > 1 else 1.0
    grid = GridSpec.covering(pos, cell_size)
    layer = rasterize(index, scores, grid, method, **params)
    out_path = Path(out_path)
    write_ascii_grid(layer, out_path)
    paths = {"scores": out_path}
    if deposits is not None:
        dep = deposit_positions(parse_deposits_csv(deposits)) if not isinstance(deposits, np.ndarray) else deposits
        counts = np.zeros((grid.ny, grid.nx))
        for x, y in dep:
            c = int((x - grid.origin[0]) // grid.cell_size)
            r = grid.ny - 1 - int((y - grid.origin[1]) // grid.cell_size)
            if 0 <= c < grid.nx and 0 <= r < grid.ny:
                counts[r, c] += 1
        dpath = out_path.with_name(out_path.stem + "_deposits" + out_path.suffix)
        write_ascii_grid(counts, dpath, grid)
        paths["deposits"] = dpath
    return paths


def cmd_synth(config=None, out_dir=".", prefix: str = "synth", seed: int | None = None,
              run_config: bool = True) -> dict[str, Path]:
    """Write a synthetic survey and, optionally, a ready-to-run pipeline config next to it."""
    import dataclasses

    import yaml

    from .synth import SynthConfig, write_synthetic

    if config is None:
        scfg = SynthConfig()
    elif isinstance(config, SynthConfig):
        scfg = config
    else:
        path = Path(config)
        if not path.is_file():
            raise ConfigError(f"synth config not found: {path}")
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise ConfigError("synth config must be a YAML mapping")
        try:
            scfg = SynthConfig(**doc)
        except TypeError as exc:
            raise ConfigError(f"synth config: {exc}") from None
    if seed is not None:
        scfg = dataclasses.replace(scfg, seed=seed)
    paths = write_synthetic(scfg, out_dir, prefix)
    if run_config:
        doc = {
            "dataset": prefix,
            "data": {"survey": paths["survey"].name, "deposits": paths["deposits"].name},
            "preprocess": {"transform": "clr", "standardize": True,
                           "target_element": scfg.element_table[scfg.target_element][0]},
            "detectors": [{"kind": "zscore"}, {"kind": "mahalanobis"}],
            "output": {"dir": f"{prefix}_out"},
        }
        rc = Path(out_dir) / f"{prefix}_run.yaml"
        rc.write_text(yaml.safe_dump(doc, sort_keys=False))
        paths["run_config"] = rc
    return paths


def cmd_inspect(survey_path, elements=None) -> dict:
    """Survey summary: N, C, extent and average sampling distance."""
    return survey_stats(parse_survey_csv(survey_path, elements))


def config_summary(cfg: PipelineConfig) -> dict:
    """JSON-friendly view of a parsed config (used by ``--dry-run``)."""
    doc = asdict(cfg)
    return json.loads(json.dumps(doc, default=str))
