"""PCA over stacked potential landscapes.

Rows are observations (one per scenario-hour slice), columns are grid cells.
The model is covariance PCA: columns are centered, never variance-scaled,
and eigenvalues are those of X^T X / (n - 1). Because the number of cells
usually dwarfs the number of slices, the decomposition runs through a thin
SVD of the centered matrix rather than the p x p covariance; spectra are
identical and only the min(n, p) components that can be nonzero are stored
(eigenvalues beyond min(n - 1, p) are structurally zero).

Scores follow the projection convention PC_k = x . w_k, so the sum of
squared scores of component k equals (n - 1) * lambda_k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateLabel, MixedGrids, NotCentered
from .grid import SliceLabel, SpatialGrid
from .hodge import PotentialField

_CENTER_RTOL = 1e-12


class ObservationMatrix:
    """Column-centered observation matrix with its labels and column means."""

    def __init__(self, X, row_labels: Sequence[SliceLabel], column_means, grid: SpatialGrid | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch(f"expected 2-d observations, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DimensionMismatch(f"need n >= 2 and p >= 1, got {X.shape}")
        labels = tuple(SliceLabel(str(s), int(h)) for s, h in row_labels)
        if len(labels) != n:
            raise DimensionMismatch(f"{len(labels)} labels for {n} rows")
        if len(set(labels)) != len(labels):
            raise DuplicateLabel("row labels must be unique")
        means = np.asarray(column_means, dtype=float)
        if means.shape != (p,):
            raise DimensionMismatch(f"column_means shape {means.shape} != ({p},)")
        _check_centered(X)
        self.X = X
        self.X.setflags(write=False)
        self.row_labels = labels
        self.column_means = means
        self.grid = grid

    @classmethod
    def from_rows(cls, rows, row_labels, grid: SpatialGrid | None = None) -> "ObservationMatrix":
        """Center raw observation rows and record the column means."""
        raw = np.asarray(rows, dtype=float)
        if raw.ndim != 2:
            raise DimensionMismatch(f"expected 2-d observations, got shape {raw.shape}")
        means = raw.mean(axis=0)
        return cls(raw - means, row_labels, means, grid=grid)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _check_centered(X: np.ndarray):
    col_scale = np.abs(X).max(axis=0) if X.size else np.zeros(X.shape[1])
    bad = np.abs(X.mean(axis=0)) > _CENTER_RTOL * col_scale
    if bad.any():
        raise NotCentered(f"column {int(np.argmax(bad))} is not mean-centered")


def stack_potentials(
    entries: Sequence[tuple[SliceLabel, PotentialField]],
) -> ObservationMatrix:
    """Stack labeled potential fields into a centered observation matrix.

    Row order follows the input order; column order is the grid order the
    potentials were solved on.
    """
    if not entries:
        raise DimensionMismatch("need at least one potential field")
    labels = [SliceLabel(str(lab[0]), int(lab[1])) for lab, _ in entries]
    fields = [f for _, f in entries]
    grid = fields[0].grid
    for f in fields[1:]:
        same = (f.grid is grid) or (grid is not None and f.grid == grid)
        if not (same or (grid is None and f.grid is None)):
            raise MixedGrids("potential fields reference different grids")
    raw = np.vstack([f.s for f in fields])
    return ObservationMatrix.from_rows(raw, labels, grid=grid)


@dataclass(frozen=True)
class PcaModel:
    """Eigenvalues (descending), orthonormal eigenvector columns, and the
    training scores, under the deterministic sign convention: each
    eigenvector's largest-magnitude entry is positive (ties break to the
    lowest index)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    scores: np.ndarray
    explained_variance_ratio: np.ndarray
    n_observations: int

    @property
    def n_components(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def p(self) -> int:
        return self.eigenvectors.shape[0]

    def rank(self, rel_tol: float = 1e-12) -> int:
        if self.n_components == 0 or self.eigenvalues[0] <= 0.0:
            return 0
        return int(np.sum(self.eigenvalues > rel_tol * self.eigenvalues[0]))


class ScreeRow(NamedTuple):
    k: int
    eigenvalue: float
    ratio: float
    cumulative: float


def fit(X: ObservationMatrix) -> PcaModel:
    """Eigendecomposition of the covariance X^T X / (n - 1) via thin SVD.

    Refuses input whose columns are not already centered rather than
    silently centering a second time.
    """
    _check_centered(X.X)  # NotCentered for hand-built matrices
    n = X.n
    _, sigma, Vt = np.linalg.svd(X.X, full_matrices=False)
    eigenvalues = sigma ** 2 / (n - 1)
    W = Vt.T.copy()
    for k in range(W.shape[1]):
        lead = int(np.argmax(np.abs(W[:, k])))
        if W[lead, k] < 0:
            W[:, k] = -W[:, k]
    scores = X.X @ W
    total = float(eigenvalues.sum())
    if total > 0.0:
        ratio = eigenvalues / total
    else:
        ratio = np.zeros_like(eigenvalues)
    return PcaModel(
        eigenvalues=eigenvalues,
        eigenvectors=W,
        scores=scores,
        explained_variance_ratio=ratio,
        n_observations=n,
    )


def scores(model: PcaModel, X: ObservationMatrix, l: int) -> np.ndarray:
    """Project observations onto the first l eigenvectors: PC_k = x . w_k."""
    if X.p != model.p:
        raise DimensionMismatch(f"observations have p={X.p}, model has p={model.p}")
    if not 1 <= l <= model.n_components:
        raise DimensionMismatch(f"l must be in 1..{model.n_components}, got {l}")
    return X.X @ model.eigenvectors[:, :l]


def reconstruct(model: PcaModel, score_row, l: int) -> np.ndarray:
    """Rebuild a centered observation from its first l scores:
    x = sum_k PC_k w_k. l = 0 returns the centered origin."""
    if not 0 <= l <= model.n_components:
        raise DimensionMismatch(f"l must be in 0..{model.n_components}, got {l}")
    row = np.asarray(score_row, dtype=float).ravel()
    if row.shape[0] < l:
        raise DimensionMismatch(f"score row has {row.shape[0]} entries, need {l}")
    if l == 0:
        return np.zeros(model.p)
    return model.eigenvectors[:, :l] @ row[:l]


def scree(model: PcaModel) -> list[ScreeRow]:
    """Eigenvalue, variance ratio, and cumulative ratio per component."""
    out = []
    cum = 0.0
    for k in range(model.n_components):
        cum += float(model.explained_variance_ratio[k])
        out.append(
            ScreeRow(k + 1, float(model.eigenvalues[k]), float(model.explained_variance_ratio[k]), cum)
        )
    return out
