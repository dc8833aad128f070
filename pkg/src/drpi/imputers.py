"""Pluggable conditional-mean imputers.

All backends return a fully dense fitted-mean matrix and never read a
masked cell of the outcome matrix.  The soft-impute backend serves as the
default augmented imputer; an externally computed matrix (e.g. from a deep
generative model) can be ingested through ``load_external_nu``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset
from .errors import DataError


@dataclass(frozen=True)
class ImputedMatrix:
    """Dense n x p matrix of fitted conditional means."""

    nu_hat: np.ndarray
    backend: str
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        nu = np.asarray(self.nu_hat, dtype=float)
        if not np.isfinite(nu).all():
            raise DataError("imputed matrix contains non-finite values")
        nu.setflags(write=False)
        object.__setattr__(self, "nu_hat", nu)


@dataclass
class ImputerConfig:
    backend: str = "soft"  # mean | lowdim | soft | knn | knn2 | external
    rank_penalty: float = float("nan")  # soft-impute lambda; NaN = auto
    max_rank: int = 10
    k_neighbors: int = 10
    max_iter: int = 500
    tol: float = 1e-5
    external_path: str = ""

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise DataError("k_neighbors must be >= 1")


def _column_means(d: Dataset) -> np.ndarray:
    counts = d.mask.sum(axis=0)
    sums = np.where(d.mask == 1, d.y_obs, 0.0).sum(axis=0)
    means = np.zeros(d.p)
    nz = counts > 0
    means[nz] = sums[nz] / counts[nz]
    if (~nz).any():
        warnings.warn(f"{(~nz).sum()} all-missing column(s) imputed as zero")
    return means


def impute_mean(d: Dataset) -> ImputedMatrix:
    """Observed column mean at every row."""
    means = _column_means(d)
    return ImputedMatrix(np.tile(means, (d.n, 1)), backend="mean")


def _lowdim_matrix(d: Dataset) -> np.ndarray:
    """Per-column OLS of observed outcomes on W, evaluated at all rows."""
    means = _column_means(d)
    nu = np.empty((d.n, d.p))
    for j in range(d.p):
        obs = d.mask[:, j] == 1
        if obs.sum() <= d.q:
            if obs.sum() > 0:
                warnings.warn(
                    f"column {d.peptide_ids[j]!r}: observed count <= q, "
                    f"falling back to mean imputation"
                )
            nu[:, j] = means[j]
            continue
        coef = np.linalg.lstsq(d.w[obs], d.y_obs[obs, j], rcond=None)[0]
        nu[:, j] = d.w @ coef
    return nu


def impute_lowdim(d: Dataset) -> ImputedMatrix:
    """Fitted means from per-column least squares on the covariates only."""
    return ImputedMatrix(_lowdim_matrix(d), backend="lowdim")


# default soft-impute penalty as a fraction of the residual matrix's top
# singular value; strong enough to keep same-data nuisance fits from
# overfitting their own column's noise
SOFT_LAMBDA_FRACTION = 0.1


def _svd_soft_threshold(x: np.ndarray, lam: float, max_rank: int):
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    if max_rank < s.size:
        s[max_rank:] = 0.0
    r = int((s > 0).sum())
    if r == 0:
        return np.zeros_like(x)
    return (u[:, :r] * s[:r]) @ vt[:r]


def impute_soft(d: Dataset, cfg: ImputerConfig = None) -> ImputedMatrix:
    """Low-rank completion of covariate-residualized outcomes.

    Observed entries are residualized on W column-wise; soft-impute then
    iterates SVD soft-thresholding on the residual matrix until the relative
    Frobenius change falls below tol.  The fitted means are the W-regression
    fit plus the completed residuals.
    """
    cfg = cfg or ImputerConfig(backend="soft")
    if cfg.max_rank > min(d.n, d.p):
        raise DataError("max_rank exceeds min(n, p)")
    wfit = _lowdim_matrix(d)
    obs = d.mask == 1
    resid = np.where(obs, d.y_obs - wfit, 0.0)

    lam = cfg.rank_penalty
    if not np.isfinite(lam):
        lam = SOFT_LAMBDA_FRACTION * np.linalg.svd(resid, compute_uv=False)[0]

    z = np.zeros_like(resid)
    converged = False
    for _ in range(cfg.max_iter):
        filled = np.where(obs, resid, z)
        z_new = _svd_soft_threshold(filled, lam, cfg.max_rank)
        delta = np.linalg.norm(z_new - z)
        z = z_new
        if delta <= cfg.tol * max(np.linalg.norm(z), 1.0):
            converged = True
            break
    if not converged:
        warnings.warn("soft-impute did not converge; returning last iterate")
    return ImputedMatrix(
        wfit + z,
        backend="soft",
        converged=converged,
        diagnostics={"lambda": lam},
    )


def _pairwise_stats(y, mask):
    """Co-observed counts, pairwise means, and correlations between columns."""
    obs = mask.astype(float)
    yz = np.where(mask == 1, y, 0.0)
    counts = obs.T @ obs  # co-observed counts
    sums_a = yz.T @ obs  # sum of col a over rows co-observed with col b
    prods = yz.T @ yz
    sq = (yz**2).T @ obs
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_a = sums_a / counts
        cov = prods / counts - mean_a * mean_a.T
        var_a = sq / counts - mean_a**2
        corr = cov / np.sqrt(var_a * var_a.T)
    corr = np.where(np.isfinite(corr), corr, 0.0)
    return counts, mean_a, corr


def impute_knn(
    d: Dataset, cfg: ImputerConfig = None, two_step: bool = False
) -> ImputedMatrix:
    """Mean of the k most-correlated peptide columns, mean-adjusted per pair.

    Similarity is the Pearson correlation over co-observed rows (minimum
    overlap 3, otherwise the pair is ignored).  Transferred values are
    shifted by the pairwise co-observed column means so a duplicate column
    reproduces its twin exactly.  The two-step variant follows with a
    closest-samples pass over the filled matrix.
    """
    cfg = cfg or ImputerConfig(backend="knn")
    k = cfg.k_neighbors
    if k >= d.p:
        raise DataError("k_neighbors must be < p")
    counts, mean_a, corr = _pairwise_stats(d.y_obs, d.mask)
    valid = counts >= 3  # overlap below 3 rows: pair carries no signal
    sim = np.where(valid, corr, -np.inf)
    np.fill_diagonal(sim, -np.inf)  # a column is never its own neighbor

    col_means = _column_means(d)
    nu = np.empty((d.n, d.p))
    yz = np.where(d.mask == 1, d.y_obs, 0.0)
    order = np.argsort(-sim, axis=1, kind="stable")
    for j in range(d.p):
        neigh = [l for l in order[j, :k] if np.isfinite(sim[j, l])]
        if not neigh:
            nu[:, j] = col_means[j]
            continue
        # transferred value from neighbor l at row i:
        #   mean_j|co(j,l) + (y_il - mean_l|co(j,l))
        vals = np.zeros(d.n)
        wts = np.zeros(d.n)
        for l in neigh:
            ok = d.mask[:, l] == 1
            shift = mean_a[j, l] - mean_a[l, j]
            vals[ok] += yz[ok, l] + shift
            wts[ok] += 1.0
        have = wts > 0
        nu[have, j] = vals[have] / wts[have]
        nu[~have, j] = col_means[j]

    if two_step:
        # fill missing cells, then re-impute them from the closest samples
        filled = np.where(d.mask == 1, d.y_obs, nu)
        centered = filled - filled.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1)
        norms[norms == 0] = 1.0
        rowsim = (centered / norms[:, None]) @ (centered / norms[:, None]).T
        np.fill_diagonal(rowsim, -np.inf)
        ksamp = min(cfg.k_neighbors, d.n - 1)
        nn = np.argsort(-rowsim, axis=1, kind="stable")[:, :ksamp]
        for i in range(d.n):
            miss = d.mask[i] == 0
            if miss.any():
                nu[i, miss] = filled[nn[i]][:, miss].mean(axis=0)

    return ImputedMatrix(nu, backend="knn2" if two_step else "knn")


def load_external_nu(path, d: Dataset) -> ImputedMatrix:
    """Ingest an externally imputed matrix CSV (header = peptide ids)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) != d.p or len(body) != d.n:
        raise DataError(
            f"external matrix is {len(body)}x{len(header)}, expected {d.n}x{d.p}"
        )
    try:
        nu = np.array([[float(c) for c in row] for row in body])
    except ValueError:
        raise DataError("non-numeric cell in external imputed matrix") from None
    return ImputedMatrix(nu, backend="external")


def impute(d: Dataset, cfg: ImputerConfig) -> ImputedMatrix:
    """Dispatch on cfg.backend."""
    if cfg.backend == "mean":
        return impute_mean(d)
    if cfg.backend == "lowdim":
        return impute_lowdim(d)
    if cfg.backend == "soft":
        return impute_soft(d, cfg)
    if cfg.backend == "knn":
        return impute_knn(d, cfg)
    if cfg.backend == "knn2":
        return impute_knn(d, cfg, two_step=True)
    if cfg.backend == "external":
        return load_external_nu(cfg.external_path, d)
    raise DataError(f"unknown imputer backend {cfg.backend!r}")
