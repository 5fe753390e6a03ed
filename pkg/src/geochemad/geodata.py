"""Survey data model and the benchmark CSV schema.

A survey file carries ``SAMPLEID``, ``SAMPLETYPE``, ``x`` (longitude) and
``y`` (latitude) in GDA2020, followed by one column per element named
``<symbol>_<unit>`` with unit one of ppm, ppb or pct. A deposit file carries
``SiteID``, ``ProjectID``, ``x`` and ``y``.

Abnormal readings such as ``-9999`` or ``-0.5`` are kept verbatim by the
parser; :func:`handle_abnormal_values` is the separate cleaning step.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySurveyError, RowError, SchemaError, ValidationError

CRS_TAG = "GDA2020"
UNITS = ("ppm", "ppb", "pct")
SENTINEL_THRESHOLD = -9000.0

ELEMENT_COLUMN = re.compile(r"^(?P<symbol>[A-Za-z][A-Za-z0-9]*)_(?P<unit>ppm|ppb|pct)$", re.IGNORECASE)
META_COLUMNS = ("SAMPLEID", "SAMPLETYPE", "x", "y")
MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class ElementDescriptor:
    symbol: str
    unit: str
    column_name: str = ""

    def __post_init__(self):
        if not self.symbol:
            raise ValidationError("element symbol must be nonempty")
        if self.unit.lower() not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r} for {self.symbol}")
        if not self.column_name:
            object.__setattr__(self, "column_name", f"{self.symbol}_{self.unit}")
        elif self.column_name.lower() != f"{self.symbol}_{self.unit}".lower():
            raise ValidationError(f"column {self.column_name!r} does not match {self.symbol}_{self.unit}")

    @classmethod
    def from_column(cls, name: str) -> "ElementDescriptor | None":
        m = ELEMENT_COLUMN.match(name.strip())
        if m is None:
            return None
        return cls(m["symbol"], m["unit"], name.strip())


@dataclass(frozen=True)
class Sample:
    id: str
    sample_type: str
    position: tuple[float, float]
    values: tuple[float, ...]
    missing: tuple[bool, ...]

    def __post_init__(self):
        if len(self.values) != len(self.missing):
            raise ValidationError(f"sample {self.id}: values/missing length mismatch")


@dataclass(frozen=True)
class Survey:
    samples: tuple[Sample, ...]
    elements: tuple[ElementDescriptor, ...]
    crs_tag: str = CRS_TAG

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.samples:
            raise EmptySurveyError("survey has no samples")
        if not self.elements:
            raise ValidationError("survey has no element columns")
        c = len(self.elements)
        seen = set()
        for s in self.samples:
            if len(s.values) != c:
                raise ValidationError(f"sample {s.id} has {len(s.values)} values, expected {c}")
            if s.id in seen:
                raise ValidationError(f"duplicate SAMPLEID {s.id!r}")
            seen.add(s.id)

    def __len__(self):
        return len(self.samples)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def symbols(self) -> list[str]:
        return [e.symbol for e in self.elements]

    @cached_property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @cached_property
    def positions(self) -> np.ndarray:
        pos = np.array([s.position for s in self.samples], dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        return pos

    @cached_property
    def values(self) -> np.ndarray:
        """N x C matrix of raw readings; masked entries are NaN."""
        v = np.array([s.values for s in self.samples], dtype=float)
        v[self.missing] = np.nan
        v.setflags(write=False)
        return v

    @cached_property
    def missing(self) -> np.ndarray:
        m = np.array([s.missing for s in self.samples], dtype=bool).reshape(len(self.samples), -1)
        m.setflags(write=False)
        return m

    def element_index(self, symbol: str) -> int:
        for i, e in enumerate(self.elements):
            if e.symbol.lower() == symbol.lower():
                return i
        raise KeyError(f"element {symbol!r} not in survey")

    def equals(self, other: "Survey") -> bool:
        """Value-for-value equality (NaN-aware on masked entries)."""
        if self.elements != other.elements or len(self) != len(other):
            return False
        if self.ids != other.ids or [s.sample_type for s in self.samples] != [s.sample_type for s in other.samples]:
            return False
        if not np.array_equal(self.positions, other.positions):
            return False
        if not np.array_equal(self.missing, other.missing):
            return False
        return np.array_equal(self.values, other.values, equal_nan=True)


@dataclass(frozen=True)
class DepositSite:
    site_id: str
    project_id: str
    position: tuple[float, float]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.position):
            raise ValidationError(f"deposit {self.site_id}: non-finite position")


def deposit_positions(deposits: Sequence[DepositSite]) -> np.ndarray:
    return np.array([d.position for d in deposits], dtype=float).reshape(-1, 2)


def _header_lookup(header: list[str], name: str) -> int | None:
    for i, h in enumerate(header):
        if h.strip() == name:
            return i
    for i, h in enumerate(header):
        if h.strip().lower() == name.lower():
            return i
    return None


def _parse_float(text: str, line: int, column: str, path) -> float:
    try:
        v = float(text)
    except ValueError:
        raise RowError(line, f"column {column!r}: cannot parse {text!r} as a number", path) from None
    return v


def parse_survey_csv(path, element_filter: Iterable[str] | None = None) -> Survey:
    """Read a survey CSV; rows keep file order and abnormal sentinels are retained."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("SAMPLEID", path) from None
        cols = {}
        for name in ("SAMPLEID", "x", "y"):
            idx = _header_lookup(header, name)
            if idx is None:
                raise SchemaError(name, path)
            cols[name] = idx
        type_idx = _header_lookup(header, "SAMPLETYPE")

        wanted = None
        if element_filter is not None:
            wanted = {s.lower() for s in element_filter}
        elem_cols = []
        meta = {i for i in (cols["SAMPLEID"], cols["x"], cols["y"], type_idx) if i is not None}
        for i, h in enumerate(header):
            if i in meta:
                continue
            desc = ElementDescriptor.from_column(h)
            if desc is None:
                continue
            if wanted is not None and desc.symbol.lower() not in wanted:
                continue
            elem_cols.append((i, desc))
        if not elem_cols:
            raise SchemaError("<symbol>_<ppm|ppb|pct>", path)

        samples = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            x = _parse_float(row[cols["x"]], line, "x", path)
            y = _parse_float(row[cols["y"]], line, "y", path)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise RowError(line, "non-finite coordinate", path)
            vals, miss = [], []
            for i, desc in elem_cols:
                text = row[i].strip()
                if text.lower() in MISSING_TOKENS:
                    vals.append(math.nan)
                    miss.append(True)
                    continue
                v = _parse_float(text, line, desc.column_name, path)
                vals.append(v)
                miss.append(not math.isfinite(v))
            samples.append(
                Sample(
                    id=row[cols["SAMPLEID"]].strip(),
                    sample_type=row[type_idx].strip() if type_idx is not None else "",
                    position=(x, y),
                    values=tuple(vals),
                    missing=tuple(miss),
                )
            )
    if not samples:
        raise EmptySurveyError(f"{path}: no sample rows")
    return Survey(tuple(samples), tuple(d for _, d in elem_cols))


def write_survey_csv(survey: Survey, path) -> None:
    """Write ``survey`` in the canonical schema; floats use shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(META_COLUMNS) + [e.column_name for e in survey.elements])
        for s in survey.samples:
            cells = ["" if m else repr(float(v)) for v, m in zip(s.values, s.missing)]
            w.writerow([s.id, s.sample_type, repr(float(s.position[0])), repr(float(s.position[1]))] + cells)


def parse_deposits_csv(path) -> list[DepositSite]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("SiteID", path) from None
        cols = {}
        for name in ("SiteID", "x", "y"):
            idx = _header_lookup(header, name)
            if idx is None:
                raise SchemaError(name, path)
            cols[name] = idx
        proj = _header_lookup(header, "ProjectID")
        out = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            x = _parse_float(row[cols["x"]], line, "x", path)
            y = _parse_float(row[cols["y"]], line, "y", path)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise RowError(line, "non-finite coordinate", path)
            out.append(
                DepositSite(
                    site_id=row[cols["SiteID"]].strip(),
                    project_id=row[proj].strip() if proj is not None and proj < len(row) else "",
                    position=(x, y),
                )
            )
    return out


def write_deposits_csv(deposits: Sequence[DepositSite], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["SiteID", "ProjectID", "x", "y"])
        for d in deposits:
            w.writerow([d.site_id, d.project_id, repr(float(d.position[0])), repr(float(d.position[1]))])


def abnormal_mask(survey: Survey) -> np.ndarray:
    """True where an unmasked reading is nonpositive or a sentinel (<= -9000)."""
    raw = np.array([s.values for s in survey.samples], dtype=float)
    bad = (raw <= 0) | (raw <= SENTINEL_THRESHOLD)
    return bad & ~survey.missing


def handle_abnormal_values(survey: Survey, strategy: str = "half_detection_limit") -> Survey:
    """Remove or replace abnormal readings.

    ``drop_sample`` removes every sample with an abnormal reading.
    ``half_detection_limit`` replaces abnormal readings of element c by half the
    smallest strictly positive observed value of c; if c has no positive
    observation at all, the entry is masked as missing instead.
    """
    bad = abnormal_mask(survey)
    if not bad.any():
        return survey
    if strategy == "drop_sample":
        keep = ~bad.any(axis=1)
        samples = tuple(s for s, k in zip(survey.samples, keep) if k)
        if not samples:
            raise EmptySurveyError("no samples left after dropping abnormal values")
        return replace(survey, samples=samples)
    if strategy != "half_detection_limit":
        raise ValueError(f"unknown abnormal-value strategy {strategy!r}")

    raw = np.array([s.values for s in survey.samples], dtype=float)
    ok = ~survey.missing & ~bad
    fill = np.full(survey.n_elements, np.nan)
    for c in range(survey.n_elements):
        col = raw[ok[:, c], c]
        if col.size:
            fill[c] = 0.5 * col.min()
    new_samples = []
    for i, s in enumerate(survey.samples):
        if not bad[i].any():
            new_samples.append(s)
            continue
        vals = list(s.values)
        miss = list(s.missing)
        for c in np.flatnonzero(bad[i]):
            if np.isnan(fill[c]):
                vals[c] = math.nan
                miss[c] = True
            else:
                vals[c] = float(fill[c])
        new_samples.append(replace(s, values=tuple(vals), missing=tuple(miss)))
    return replace(survey, samples=tuple(new_samples))


def survey_stats(survey: Survey) -> dict:
    """Survey summary: sample count, element count, extent, mean NN distance."""
    from .spatial import build_index, average_sampling_distance

    pos = survey.positions
    stats = {
        "n_samples": len(survey),
        "n_elements": survey.n_elements,
        "x_min": float(pos[:, 0].min()),
        "x_max": float(pos[:, 0].max()),
        "y_min": float(pos[:, 1].min()),
        "y_max": float(pos[:, 1].max()),
    }
    stats["avg_sampling_distance"] = (
        average_sampling_distance(build_index(pos)) if len(survey) > 1 else float("nan")
    )
    return stats
