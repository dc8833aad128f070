"""Pseudo-outcome construction and per-column regression inference.

Implements the six compared estimators: full-data OLS, complete-case OLS,
plugin, plugin-missing, and the two inverse-propensity debiased estimators
(conditioning on the low-dimensional covariates only, or augmented with the
remaining columns through a high-dimensional imputer).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import imputers, propensity
from .data_model import Dataset, MethodKind, PeptideInference, SkipRecord
from .errors import DataError, NumericalError
from .imputers import ImputedMatrix, ImputerConfig
from .propensity import PropensityFit


@dataclass(frozen=True)
class PseudoOutcome:
    y_tilde: np.ndarray
    method: MethodKind
    weights_used: np.ndarray  # C_i / delta_i


@dataclass(frozen=True)
class OlsFit:
    beta: np.ndarray
    cov: np.ndarray  # covariance of beta (already scaled by 1/n)
    residuals: np.ndarray
    variance_mode: str


@dataclass
class InferenceConfig:
    """Knobs shared by the per-column inference loop."""

    target: str = "a"
    variance_mode: str = ""  # "" -> per-method default
    prop_tol: float = 1e-8
    prop_max_iter: int = 100
    prop_clip: float = 0.01
    share_propensity: bool = False
    imputer: ImputerConfig = field(default_factory=ImputerConfig)


def pseudo_outcomes(
    y: np.ndarray, c: np.ndarray, delta_hat: np.ndarray, nu_hat: np.ndarray
) -> PseudoOutcome:
    """y_tilde_i = nu_i + (c_i / delta_i) * (y_i - nu_i); masked y never read."""
    c = np.asarray(c, dtype=float)
    delta_hat = np.asarray(delta_hat, dtype=float)
    nu_hat = np.asarray(nu_hat, dtype=float)
    if (delta_hat <= 0).any() or (delta_hat > 1).any():
        raise DataError("delta_hat entries must lie in (0, 1]")
    weights = c / delta_hat
    y_safe = np.where(c == 1, y, 0.0)
    if not np.isfinite(y_safe).all():
        raise DataError("non-finite observed outcome")
    y_tilde = nu_hat + weights * (y_safe - np.where(c == 1, nu_hat, 0.0))
    return PseudoOutcome(y_tilde=y_tilde, method=MethodKind.DR_UW, weights_used=weights)


def ols_sandwich(
    y_tilde: np.ndarray, w: np.ndarray, variance_mode: str = "sandwich"
) -> OlsFit:
    """Least squares with either the plug-in sandwich or homoskedastic cov.

    Sandwich: (1/n) * (W'W/n)^-1 [ (1/n) sum r_i^2 w_i w_i' ] (W'W/n)^-1,
    i.e. the plug-in asymptotic covariance scaled for CI construction.
    """
    w = np.asarray(w, dtype=float)
    y_tilde = np.asarray(y_tilde, dtype=float)
    n, q = w.shape
    if n <= q:
        raise DataError(f"need n > q, got n={n}, q={q}")
    gram = w.T @ w
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise NumericalError("singular W'W in least squares") from None
    beta = gram_inv @ (w.T @ y_tilde)
    resid = y_tilde - w @ beta
    if variance_mode == "sandwich":
        meat = (w * resid[:, None] ** 2).T @ w / n
        bread = gram_inv * n  # (W'W/n)^-1
        cov = bread @ meat @ bread / n
    elif variance_mode == "homoskedastic":
        sigma2 = float(resid @ resid) / (n - q)
        cov = sigma2 * gram_inv
    else:
        raise DataError(f"unknown variance mode {variance_mode!r}")
    return OlsFit(beta=beta, cov=cov, residuals=resid, variance_mode=variance_mode)


def _p_value(beta: float, se: float, variance_mode: str, df: int):
    """Two-sided p-value: normal reference for the sandwich estimator
    (asymptotic), Student-t otherwise."""
    if se > 0:
        z = beta / se
        if variance_mode == "sandwich":
            p = 2.0 * stats.norm.sf(abs(z))
        else:
            p = 2.0 * stats.t.sf(abs(z), df)
        return z, float(p), False
    # degenerate perfect fit
    if beta == 0.0:
        return 0.0, 1.0, True
    return float(np.sign(beta)) * np.inf, 0.0, True


def _default_variance(method: MethodKind) -> str:
    if method in (MethodKind.DR_W, MethodKind.DR_UW):
        return "sandwich"
    return "homoskedastic"


def infer_peptide(
    d: Dataset,
    j: int,
    method: MethodKind,
    cfg: InferenceConfig,
    nu_hat: ImputedMatrix = None,
    mu_hat: ImputedMatrix = None,
    prop: PropensityFit = None,
    oracle: np.ndarray = None,
):
    """Run one estimator on column j; returns PeptideInference or SkipRecord."""
    pid = d.peptide_ids[j]
    c = d.mask[:, j].astype(float)
    y = d.y_obs[:, j]
    variance_mode = cfg.variance_mode or _default_variance(method)
    tcol = d.covariate_index(cfg.target)

    if method is MethodKind.FULL:
        if oracle is None:
            raise DataError("method 'full' requires an oracle complete matrix")
        fit = ols_sandwich(oracle[:, j], d.w, variance_mode)
        rows = d.n
    elif method is MethodKind.COMPLETE:
        obs = c == 1
        rows = int(obs.sum())
        if rows < d.q + 2:
            return SkipRecord(pid, f"complete-case rows {rows} < q+2")
        fit = ols_sandwich(y[obs], d.w[obs], variance_mode)
    elif method is MethodKind.PLUGIN:
        if nu_hat is None:
            raise DataError("plugin requires an imputed matrix")
        fit = ols_sandwich(nu_hat.nu_hat[:, j], d.w, variance_mode)
        rows = d.n
    elif method is MethodKind.PLUGIN_MISSING:
        if nu_hat is None:
            raise DataError("plugin_missing requires an imputed matrix")
        nu = nu_hat.nu_hat[:, j]
        resp = nu + c * (np.where(c == 1, y, 0.0) - np.where(c == 1, nu, 0.0))
        fit = ols_sandwich(resp, d.w, variance_mode)
        rows = d.n
    elif method in (MethodKind.DR_W, MethodKind.DR_UW):
        source = mu_hat if method is MethodKind.DR_W else nu_hat
        if source is None:
            raise DataError(f"{method.value} requires an imputed matrix")
        if prop is None:
            prop = propensity.fit_logistic(
                c, d.w, cfg.prop_tol, cfg.prop_max_iter, cfg.prop_clip
            )
        po = pseudo_outcomes(y, c, prop.delta_hat, source.nu_hat[:, j])
        fit = ols_sandwich(po.y_tilde, d.w, variance_mode)
        rows = d.n
    else:
        raise DataError(f"unknown method {method!r}")

    beta = float(fit.beta[tcol])
    se = float(np.sqrt(max(fit.cov[tcol, tcol], 0.0)))
    z, p, degenerate = _p_value(beta, se, variance_mode, rows - d.q)
    return PeptideInference(
        peptide_id=pid,
        method=method,
        beta=beta,
        se=se,
        z=z,
        p_value=p,
        degenerate=degenerate,
    )


def _propensity_fits(d: Dataset, cfg: InferenceConfig):
    """Per-column logistic fits; identical masks can share one fit."""
    fits = []
    cache = {}
    for j in range(d.p):
        c = d.mask[:, j]
        key = c.tobytes() if cfg.share_propensity else j
        if key not in cache:
            cache[key] = propensity.fit_logistic(
                c.astype(float), d.w, cfg.prop_tol, cfg.prop_max_iter, cfg.prop_clip
            )
        fits.append(cache[key])
    return fits


def _needs_augmented(method: MethodKind) -> bool:
    return method in (MethodKind.PLUGIN, MethodKind.PLUGIN_MISSING, MethodKind.DR_UW)


def infer_all(
    d: Dataset,
    method: MethodKind,
    cfg: InferenceConfig,
    nu_hat: ImputedMatrix = None,
    mu_hat: ImputedMatrix = None,
    prop_fits=None,
    oracle: np.ndarray = None,
):
    """Apply one estimator over all columns in deterministic id order.

    Returns (results, skips).  All-missing columns are skipped, as are
    complete-case fits with too few rows.
    """
    if _needs_augmented(method) and nu_hat is None:
        nu_hat = imputers.impute(d, cfg.imputer)
    if method is MethodKind.DR_W and mu_hat is None:
        mu_hat = imputers.impute_lowdim(d)
    needs_prop = method in (MethodKind.DR_W, MethodKind.DR_UW)
    if needs_prop and prop_fits is None:
        prop_fits = _propensity_fits(d, cfg)

    results, skips = [], []
    for j in range(d.p):
        if d.mask[:, j].sum() == 0 and method is not MethodKind.FULL:
            skips.append(SkipRecord(d.peptide_ids[j], "all entries missing"))
            continue
        out = infer_peptide(
            d,
            j,
            method,
            cfg,
            nu_hat=nu_hat,
            mu_hat=mu_hat,
            prop=prop_fits[j] if needs_prop else None,
            oracle=oracle,
        )
        (skips if isinstance(out, SkipRecord) else results).append(out)
    return results, skips


def infer_cross_fit(
    d: Dataset,
    method: MethodKind,
    folds: int,
    cfg: InferenceConfig,
    seed: int = 0,
):
    """Cross-fit nuisances out-of-fold, then one OLS on assembled pseudo-outcomes.

    Supported for the DR estimators with row-predictive imputer backends
    (mean, lowdim): each fold's propensity and conditional-mean models are
    fit on the other folds and evaluated on the held-out rows.
    """
    if method not in (MethodKind.DR_W, MethodKind.DR_UW):
        raise DataError("cross-fitting applies to the DR estimators only")
    if folds < 2:
        raise DataError("need at least 2 folds")
    if d.n // folds <= d.q:
        raise DataError(f"fold size {d.n // folds} too small for q={d.q}")
    backend = "lowdim" if method is MethodKind.DR_W else cfg.imputer.backend
    if backend not in ("mean", "lowdim"):
        raise DataError(
            f"cross-fitting needs a row-predictive imputer (mean/lowdim), "
            f"got {backend!r}"
        )

    rng = np.random.default_rng(seed)
    perm = rng.permutation(d.n)
    fold_of = np.empty(d.n, dtype=int)
    for k in range(folds):
        fold_of[perm[k::folds]] = k

    tcol = d.covariate_index(cfg.target)
    results, skips = [], []
    for j in range(d.p):
        c = d.mask[:, j].astype(float)
        if c.sum() == 0:
            skips.append(SkipRecord(d.peptide_ids[j], "all entries missing"))
            continue
        y = d.y_obs[:, j]
        y_tilde = np.empty(d.n)
        try:
            for k in range(folds):
                test = fold_of == k
                train = ~test
                prop = propensity.fit_logistic(
                    c[train], d.w[train], cfg.prop_tol, cfg.prop_max_iter, cfg.prop_clip
                )
                delta = prop.predict(d.w[test])
                train_ds = d.select_rows(np.flatnonzero(train)).select_columns([j])
                if backend == "mean":
                    obs = train_ds.mask[:, 0] == 1
                    nu_test = np.full(int(test.sum()), train_ds.y_obs[obs, 0].mean())
                else:
                    obs = train_ds.mask[:, 0] == 1
                    if obs.sum() <= d.q:
                        raise DataError("too few observed training rows")
                    coef = np.linalg.lstsq(
                        train_ds.w[obs], train_ds.y_obs[obs, 0], rcond=None
                    )[0]
                    nu_test = d.w[test] @ coef
                po = pseudo_outcomes(y[test], c[test], delta, nu_test)
                y_tilde[test] = po.y_tilde
        except DataError as exc:
            skips.append(SkipRecord(d.peptide_ids[j], str(exc)))
            continue
        variance_mode = cfg.variance_mode or "sandwich"
        fit = ols_sandwich(y_tilde, d.w, variance_mode)
        beta = float(fit.beta[tcol])
        se = float(np.sqrt(max(fit.cov[tcol, tcol], 0.0)))
        z, p, degenerate = _p_value(beta, se, variance_mode, d.n - d.q)
        results.append(
            PeptideInference(
                peptide_id=d.peptide_ids[j],
                method=method,
                beta=beta,
                se=se,
                z=z,
                p_value=p,
                degenerate=degenerate,
            )
        )
    return results, skips
