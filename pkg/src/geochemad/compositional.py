"""Log-ratio transforms, standardization and feature selection.

All functions take and return :class:`CompositionMatrix` values; the
``space`` tag records which transform produced the data so later stages can
check their preconditions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SelectionError, ValidationError

SPACES = ("raw", "clr", "ilr", "zscore", "pca")


@dataclass(frozen=True, eq=False)
class CompositionMatrix:
    data: np.ndarray
    space: str
    element_names: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValidationError("composition matrix must be 2-D")
        if not np.all(np.isfinite(data)):
            raise ValidationError("composition matrix contains NaN or Inf")
        if self.space not in SPACES:
            raise ValidationError(f"unknown space {self.space!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "element_names", tuple(self.element_names))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        if len(self.element_names) != data.shape[1]:
            raise ValidationError("element_names length does not match column count")
        if len(self.row_ids) != data.shape[0]:
            raise ValidationError("row_ids length does not match row count")

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data, space=None, element_names=None) -> "CompositionMatrix":
        return CompositionMatrix(
            data,
            space or self.space,
            self.element_names if element_names is None else element_names,
            self.row_ids,
        )

    def equals(self, other: "CompositionMatrix") -> bool:
        return (
            self.space == other.space
            and self.element_names == other.element_names
            and self.row_ids == other.row_ids
            and np.array_equal(self.data, other.data)
        )


def from_survey(survey, impute: str = "median") -> CompositionMatrix:
    """Raw-space matrix from a survey; masked entries take the column median.

    Columns with no observed value at all are dropped with a warning.
    """
    values = np.array(survey.values, dtype=float)
    missing = survey.missing
    names = list(survey.symbols)
    keep = ~missing.all(axis=0)
    if not keep.all():
        dropped = [n for n, k in zip(names, keep) if not k]
        warnings.warn(f"dropping elements with no observations: {dropped}", stacklevel=2)
        values = values[:, keep]
        missing = missing[:, keep]
        names = [n for n, k in zip(names, keep) if k]
    if missing.any():
        if impute != "median":
            raise ValueError(f"unknown imputation {impute!r}")
        med = np.nanmedian(np.where(missing, np.nan, values), axis=0)
        values = np.where(missing, med[None, :], values)
    return CompositionMatrix(values, "raw", names, survey.ids)


def _require_positive(matrix: CompositionMatrix):
    bad = np.argwhere(matrix.data <= 0)
    if bad.size:
        i, c = bad[0]
        raise DomainError(
            f"log-ratio needs strictly positive entries; row {matrix.row_ids[i]!r} "
            f"element {matrix.element_names[c]!r} has {matrix.data[i, c]!r}"
        )


def clr(x: np.ndarray) -> np.ndarray:
    logx = np.log(np.asarray(x, dtype=float))
    return logx - logx.mean(axis=-1, keepdims=True)


def clr_transform(matrix: CompositionMatrix) -> CompositionMatrix:
    _require_positive(matrix)
    return matrix.with_data(clr(matrix.data), space="clr")


def helmert_basis(c: int) -> np.ndarray:
    """C x (C-1) orthonormal basis of the zero-sum hyperplane.

    Column j contrasts the first j+1 parts against part j+1:
    ``[1, ..., 1, -(j+1), 0, ...] / sqrt((j+1)(j+2))``.
    """
    if c < 2:
        raise ValidationError("ILR needs at least two parts")
    v = np.zeros((c, c - 1))
    for j in range(c - 1):
        k = j + 1
        v[:k, j] = 1.0
        v[k, j] = -float(k)
        v[:, j] /= np.sqrt(k * (k + 1))
    return v


def ilr_transform(matrix: CompositionMatrix) -> CompositionMatrix:
    c = matrix.shape[1]
    if c < 2:
        raise ValidationError(f"ILR needs at least two parts, got {c}")
    _require_positive(matrix)
    y = clr(matrix.data) @ helmert_basis(c)
    names = [f"ilr{j + 1}" for j in range(c - 1)]
    return matrix.with_data(y, space="ilr", element_names=names)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # 0 marks a degenerate column (centered only)

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardizer":
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        scale = np.maximum(np.abs(mean), 1.0)
        std = np.where(std <= 1e-12 * scale, 0.0, std)
        return cls(mean, std)

    def apply(self, data: np.ndarray) -> np.ndarray:
        safe = np.where(self.std > 0, self.std, 1.0)
        return (data - self.mean) / safe


def standardize(matrix: CompositionMatrix) -> CompositionMatrix:
    """Column z-scores with population std; constant columns are only centered."""
    st = Standardizer.fit(matrix.data)
    return matrix.with_data(st.apply(matrix.data), space="zscore")


@dataclass(frozen=True, eq=False)
class FeatureSelection:
    strategy: str = "all"
    selected: tuple[int, ...] = ()
    loadings: np.ndarray | None = None
    explained_variance: np.ndarray | None = None
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    variance_threshold: float = 0.95

    @property
    def k(self) -> int:
        if self.strategy == "pca":
            return 0 if self.loadings is None else self.loadings.shape[1]
        return len(self.selected)

    def validate(self, n_columns: int):
        if self.strategy == "all":
            return
        if self.strategy == "manual":
            if len(set(self.selected)) != len(self.selected):
                raise SelectionError("manual selection has duplicate indices")
            for i in self.selected:
                if not 0 <= i < n_columns:
                    raise SelectionError(f"manual index {i} out of range for {n_columns} columns")
            if not self.selected:
                raise SelectionError("manual selection is empty")
            return
        if self.strategy == "pca":
            if self.loadings is None:
                raise SelectionError("pca selection is not fitted")
            if self.loadings.shape[0] != n_columns:
                raise SelectionError("pca loadings do not match column count")
            return
        raise SelectionError(f"unknown feature selection strategy {self.strategy!r}")


def manual_selection(matrix: CompositionMatrix, names_or_indices) -> FeatureSelection:
    idx = []
    for item in names_or_indices:
        if isinstance(item, str):
            low = [n.lower() for n in matrix.element_names]
            if item.lower() not in low:
                raise SelectionError(f"element {item!r} not among {matrix.element_names}")
            idx.append(low.index(item.lower()))
        else:
            idx.append(int(item))
    sel = FeatureSelection("manual", tuple(idx))
    sel.validate(matrix.shape[1])
    return sel


def fit_pca(matrix: CompositionMatrix, variance_threshold: float = 0.95) -> FeatureSelection:
    """PCA on the standardized matrix via covariance eigendecomposition.

    k is the smallest count whose cumulative explained variance reaches
    ``variance_threshold``. Each component is signed so that its
    largest-magnitude loading is positive.
    """
    if not 0 < variance_threshold <= 1:
        raise SelectionError("variance_threshold must lie in (0, 1]")
    st = Standardizer.fit(matrix.data)
    z = st.apply(matrix.data)
    cov = z.T @ z / z.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    for j in range(evecs.shape[1]):
        col = evecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            evecs[:, j] = -col
    total = evals.sum()
    if total <= 0:
        k = 1
    else:
        cum = np.cumsum(evals) / total
        k = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
        k = min(k, len(evals))
    return FeatureSelection(
        "pca",
        tuple(range(k)),
        loadings=evecs[:, :k].copy(),
        explained_variance=evals.copy(),
        center=st.mean,
        scale=st.std,
        variance_threshold=variance_threshold,
    )


def select_features(matrix: CompositionMatrix, selection: FeatureSelection) -> CompositionMatrix:
    selection.validate(matrix.shape[1])
    if selection.strategy == "all":
        return matrix
    if selection.strategy == "manual":
        cols = list(selection.selected)
        return matrix.with_data(
            matrix.data[:, cols], element_names=[matrix.element_names[i] for i in cols]
        )
    z = Standardizer(selection.center, selection.scale).apply(matrix.data)
    scores = z @ selection.loadings
    names = [f"PC{j + 1}" for j in range(scores.shape[1])]
    return matrix.with_data(scores, space="pca", element_names=names)


def pca_reconstruct(scores: np.ndarray, selection: FeatureSelection) -> np.ndarray:
    """Map PCA scores back to the original column space."""
    z = scores @ selection.loadings.T
    safe = np.where(selection.scale > 0, selection.scale, 1.0)
    return z * safe + selection.center
