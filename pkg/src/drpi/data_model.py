"""Core containers for outcome matrices with missingness, plus CSV I/O.

The outcome matrix stores NaN at unobserved cells; the binary mask is the
single source of truth for observability and no arithmetic ever reads a
masked cell.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import DataError


class MethodKind(str, Enum):
    """Estimators compared throughout the package.

    FULL is only valid in simulation mode, where an oracle complete matrix
    is available.
    """

    FULL = "full"
    COMPLETE = "complete"
    PLUGIN = "plugin"
    PLUGIN_MISSING = "plugin_missing"
    DR_W = "dr_w"
    DR_UW = "dr_uw"


@dataclass
class PeptideInference:
    """Per-column inference result for the covariate of interest."""

    peptide_id: str
    method: MethodKind
    beta: float
    se: float
    z: float
    p_value: float
    q_value: float = float("nan")
    selected: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class SkipRecord:
    peptide_id: str
    reason: str


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float) if a.dtype != np.int8 else a
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable outcome/mask/covariate bundle.

    y_obs : (n, p) float array, NaN wherever mask == 0.
    mask  : (n, p) int8 array of 0/1 observability indicators.
    w     : (n, q) float covariate matrix, full column rank, first column
            all-ones intercept unless intercept injection was disabled.
    """

    y_obs: np.ndarray
    mask: np.ndarray
    w: np.ndarray
    peptide_ids: tuple
    sample_ids: tuple
    covariate_names: tuple

    def __post_init__(self):
        y = np.asarray(self.y_obs, dtype=float)
        m = np.asarray(self.mask)
        w = np.asarray(self.w, dtype=float)
        if y.shape != m.shape:
            raise DataError(f"y_obs shape {y.shape} != mask shape {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise DataError("mask entries must be 0 or 1")
        m = m.astype(np.int8)
        n, p = y.shape
        if w.ndim != 2 or w.shape[0] != n:
            raise DataError(f"covariate rows {w.shape} do not match n={n}")
        q = w.shape[1]
        if n <= q:
            raise DataError(f"need n > q, got n={n}, q={q}")
        if np.linalg.matrix_rank(w) < q:
            raise DataError("covariate matrix is rank deficient")
        if not np.isfinite(y[m == 1]).all():
            raise DataError("non-finite value at an observed cell")
        if len(self.peptide_ids) != p or len(self.sample_ids) != n:
            raise DataError("label counts do not match matrix shape")
        if len(self.covariate_names) != q:
            raise DataError("covariate name count does not match q")
        for a in (y, m, w):
            a.setflags(write=False)
        object.__setattr__(self, "y_obs", y)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "peptide_ids", tuple(self.peptide_ids))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.y_obs.shape[0]

    @property
    def p(self) -> int:
        return self.y_obs.shape[1]

    @property
    def q(self) -> int:
        return self.w.shape[1]

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise DataError(
                f"unknown covariate {name!r}; have {list(self.covariate_names)}"
            ) from None

    def select_columns(self, cols: Sequence[int]) -> "Dataset":
        cols = list(cols)
        return Dataset(
            y_obs=self.y_obs[:, cols].copy(),
            mask=self.mask[:, cols].copy(),
            w=self.w.copy(),
            peptide_ids=tuple(self.peptide_ids[j] for j in cols),
            sample_ids=self.sample_ids,
            covariate_names=self.covariate_names,
        )

    def select_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = list(rows)
        return Dataset(
            y_obs=self.y_obs[rows].copy(),
            mask=self.mask[rows].copy(),
            w=self.w[rows].copy(),
            peptide_ids=self.peptide_ids,
            sample_ids=tuple(self.sample_ids[i] for i in rows),
            covariate_names=self.covariate_names,
        )


def _read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def load_dataset(
    outcome_path,
    covariate_path,
    missing_token: str = "",
    mask_path=None,
    add_intercept: bool = True,
) -> Dataset:
    """Load outcome and covariate CSVs into a validated Dataset.

    Outcome CSV: header row of peptide ids, one row per sample.  A cell is
    missing when it is empty or equals ``missing_token``.  An optional mask
    CSV of 0/1 entries overrides token detection.
    """
    pep_ids, y_rows = _read_csv(outcome_path)
    cov_names, w_rows = _read_csv(covariate_path)
    if len(y_rows) != len(w_rows):
        raise DataError(
            f"row count mismatch: {len(y_rows)} outcome rows vs "
            f"{len(w_rows)} covariate rows"
        )
    n, p = len(y_rows), len(pep_ids)
    y = np.full((n, p), np.nan)
    mask = np.ones((n, p), dtype=np.int8)
    for i, row in enumerate(y_rows):
        if len(row) != p:
            raise DataError(f"outcome row {i} has {len(row)} cells, expected {p}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell == missing_token:
                mask[i, j] = 0
                continue
            try:
                y[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric observed cell at row {i}, column "
                    f"{pep_ids[j]!r}: {cell!r}"
                ) from None

    if mask_path is not None:
        _, m_rows = _read_csv(mask_path)
        m = np.array([[int(c) for c in row] for row in m_rows], dtype=np.int8)
        if m.shape != (n, p):
            raise DataError("mask CSV shape does not match outcome CSV")
        mask = m
        y[mask == 0] = np.nan

    w = np.empty((len(w_rows), len(cov_names)))
    for i, row in enumerate(w_rows):
        if len(row) != len(cov_names):
            raise DataError(f"covariate row {i} has wrong cell count")
        try:
            w[i] = [float(c) for c in row]
        except ValueError:
            raise DataError(f"non-numeric covariate cell in row {i}") from None
    names = list(cov_names)
    if add_intercept:
        w = np.column_stack([np.ones(n), w])
        names = ["intercept"] + names

    empty = np.flatnonzero(mask.sum(axis=0) == 0)
    if empty.size:
        warnings.warn(
            f"{empty.size} all-missing column(s) retained; inference will "
            f"skip them (e.g. {pep_ids[empty[0]]!r})"
        )
    return Dataset(
        y_obs=y,
        mask=mask,
        w=w,
        peptide_ids=tuple(pep_ids),
        sample_ids=tuple(str(i) for i in range(n)),
        covariate_names=tuple(names),
    )


def write_dataset(d: Dataset, outcome_path, covariate_path, mask_path=None):
    """Write a Dataset back to CSV; inverse of load_dataset at observed cells."""
    with open(outcome_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(d.peptide_ids)
        for i in range(d.n):
            wr.writerow(
                [repr(float(d.y_obs[i, j])) if d.mask[i, j] else "" for j in range(d.p)]
            )
    with open(covariate_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        has_icpt = d.covariate_names and d.covariate_names[0] == "intercept"
        start = 1 if has_icpt else 0
        wr.writerow(d.covariate_names[start:])
        for i in range(d.n):
            wr.writerow([repr(float(v)) for v in d.w[i, start:]])
    if mask_path is not None:
        with open(mask_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(d.peptide_ids)
            for i in range(d.n):
                wr.writerow([int(v) for v in d.mask[i]])


def observation_rate(d: Dataset) -> np.ndarray:
    """Fraction of observed samples per column."""
    return d.mask.mean(axis=0)


def filter_by_rate(
    d: Dataset, threshold: float, feed_threshold: float = 0.2
) -> tuple:
    """Split columns into an inference set and a wider imputation feed set.

    Inference keeps columns with observation rate >= threshold; the feed set
    keeps columns with rate >= feed_threshold (default 0.2).
    """
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold must be in [0, 1], got {threshold}")
    rates = observation_rate(d)
    keep = np.flatnonzero(rates >= threshold)
    if keep.size == 0:
        raise DataError(f"no column passes observation-rate threshold {threshold}")
    feed = np.flatnonzero(rates >= min(threshold, feed_threshold))
    return d.select_columns(keep), d.select_columns(feed)


def write_results(results, path, float_fmt=repr):
    """Write inference results as CSV (peptide_id, method, beta, se, z,
    p_value, q_value, selected)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(
            ["peptide_id", "method", "beta", "se", "z", "p_value", "q_value", "selected"]
        )
        for r in results:
            wr.writerow(
                [
                    r.peptide_id,
                    r.method.value,
                    float_fmt(float(r.beta)),
                    float_fmt(float(r.se)),
                    float_fmt(float(r.z)),
                    float_fmt(float(r.p_value)),
                    "" if np.isnan(r.q_value) else float_fmt(float(r.q_value)),
                    int(r.selected),
                ]
            )
