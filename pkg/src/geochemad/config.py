"""Pipeline configuration: one YAML document with nested sections.

Schema (defaults in brackets)::

    dataset: name used in the comparison table [stem of the survey file]
    data:
      survey: path to the survey CSV (required)
      deposits: path to the deposit CSV (required)
      elements: optional list of element symbols to read [all]
    preprocess:
      abnormal: half_detection_limit | drop_sample [half_detection_limit]
      transform: raw | clr | ilr [clr]
      standardize: true | false [true]
      order: transform_first | select_first [transform_first]
      target_element: symbol used as the spatial-context target [first element]
      selection:
        strategy: all | manual | pca [all]
        elements: list of symbols or indices (manual only)
        variance_threshold: retained variance (pca only) [0.95]
    detectors:                      # one block per detector
      - kind: zscore                # see geochemad.detectors.KINDS
        name: optional label [kind]
        params: {hyperparameters}   # seed lives here too
    protocol: {n_runs, bg_per_pos, deposit_match_radius, exclusion_radius,
               dtd_top_fraction, seed}
    output:
      dir: output directory [$GEOCHEMAD_OUTPUT_DIR or ./geochemad_out]
      figures: render PNG anomaly maps and an AUC chart [true]
      snapshots: save fitted detectors as JSON snapshots [true]

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .detectors.base import KINDS
from .errors import ConfigError
from .eval import EvalProtocol

OUTPUT_ENV = "GEOCHEMAD_OUTPUT_DIR"
DEFAULT_OUTPUT = "geochemad_out"
TRANSFORMS = ("raw", "clr", "ilr")
ABNORMAL = ("half_detection_limit", "drop_sample")
SELECTIONS = ("all", "manual", "pca")
ORDERS = ("transform_first", "select_first")


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str = "all"
    elements: tuple = ()
    variance_threshold: float = 0.95

    def __post_init__(self):
        if self.strategy not in SELECTIONS:
            raise ConfigError(f"selection strategy must be one of {SELECTIONS}, got {self.strategy!r}")
        object.__setattr__(self, "elements", tuple(self.elements or ()))
        if self.strategy == "manual" and not self.elements:
            raise ConfigError("manual selection needs a non-empty 'elements' list")
        if not 0 < self.variance_threshold <= 1:
            raise ConfigError("variance_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class PreprocessConfig:
    abnormal: str = "half_detection_limit"
    transform: str = "clr"
    standardize: bool = True
    target_element: str | None = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    order: str = "transform_first"

    def __post_init__(self):
        if self.abnormal not in ABNORMAL:
            raise ConfigError(f"abnormal must be one of {ABNORMAL}, got {self.abnormal!r}")
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.order == "select_first" and self.selection.strategy == "pca":
            # principal components of raw concentrations are not a composition to log-ratio transform
            raise ConfigError("select_first order supports 'all' and 'manual' selection only")


@dataclass(frozen=True)
class DetectorBlock:
    kind: str
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown detector kind {self.kind!r}; known kinds: {', '.join(KINDS)}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if not isinstance(self.params, dict):
            raise ConfigError(f"detector {self.name!r}: params must be a mapping")


@dataclass(frozen=True)
class OutputConfig:
    dir: Path
    figures: bool = True
    snapshots: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str
    survey: Path
    deposits: Path
    elements: tuple[str, ...] | None
    preprocess: PreprocessConfig
    detectors: tuple[DetectorBlock, ...]
    protocol: EvalProtocol
    output: OutputConfig

    def check_paths(self):
        """Input files must exist at run time."""
        for label, p in (("survey", self.survey), ("deposits", self.deposits)):
            if not p.is_file():
                raise ConfigError(f"{label} file not found: {p}")


def _section(doc: dict, name: str) -> dict:
    val = doc.get(name) or {}
    if not isinstance(val, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return val


def _known(cls, block: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = sorted(set(block) - names)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")
    return block


def _resolve(base: Path, value) -> Path:
    p = Path(str(value)).expanduser()
    return p if p.is_absolute() else base / p


def parse_config(doc: dict, base_dir=".") -> PipelineConfig:
    """Validate a parsed YAML mapping and build a :class:`PipelineConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a YAML mapping")
    unknown = sorted(set(doc) - {"dataset", "data", "preprocess", "detectors", "protocol", "output"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    base = Path(base_dir)
    data = _section(doc, "data")
    for key in ("survey", "deposits"):
        if key not in data:
            raise ConfigError(f"data.{key} is required")
    survey = _resolve(base, data["survey"])
    deposits = _resolve(base, data["deposits"])
    elements = data.get("elements")
    elements = tuple(str(e) for e in elements) if elements else None

    pre = dict(_section(doc, "preprocess"))
    sel = SelectionConfig(**_known(SelectionConfig, _section(pre, "selection"), "preprocess.selection"))
    pre["selection"] = sel
    preprocess = PreprocessConfig(**_known(PreprocessConfig, pre, "preprocess"))

    blocks = doc.get("detectors")
    if not blocks or not isinstance(blocks, list):
        raise ConfigError("'detectors' must be a non-empty list")
    detectors = []
    for i, b in enumerate(blocks):
        if not isinstance(b, dict) or "kind" not in b:
            raise ConfigError(f"detector block {i} needs a 'kind'")
        detectors.append(DetectorBlock(**_known(DetectorBlock, b, f"detectors[{i}]")))
    names = [d.name for d in detectors]
    if len(set(names)) != len(names):
        raise ConfigError(f"detector names must be unique, got {names}")

    protocol = EvalProtocol(**_known(EvalProtocol, _section(doc, "protocol"), "protocol"))

    out = dict(_section(doc, "output"))
    _known(OutputConfig, out, "output")
    out_dir = out.pop("dir", None) or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    output = OutputConfig(_resolve(base, out_dir), **out)

    dataset = str(doc.get("dataset") or survey.stem)
    return PipelineConfig(dataset, survey, deposits, elements, preprocess, tuple(detectors), protocol, output)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(doc, path.parent)
