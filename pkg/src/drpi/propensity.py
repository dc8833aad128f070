"""Logistic observation-probability model fit by IRLS with step-halving."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loglik(c, eta):
    # sum c*eta - log(1 + exp(eta)), stable for large |eta|
    return float(c @ eta - np.logaddexp(0.0, eta).sum())


@dataclass(frozen=True)
class PropensityFit:
    """Fitted logistic model with clipped observation probabilities."""

    coef: np.ndarray
    delta_hat: np.ndarray  # clipped to [clip_floor, 1]
    clip_floor: float
    converged: bool
    iterations: int
    separated: bool = False
    constant_value: float = float("nan")  # set when separated

    def predict(self, w_new: np.ndarray) -> np.ndarray:
        w_new = np.atleast_2d(np.asarray(w_new, dtype=float))
        if w_new.shape[1] != self.coef.shape[0]:
            raise DataError(
                f"covariate count {w_new.shape[1]} does not match fit "
                f"({self.coef.shape[0]})"
            )
        if self.separated:
            pred = np.full(w_new.shape[0], self.constant_value)
        else:
            pred = _sigmoid(w_new @ self.coef)
        return np.clip(pred, self.clip_floor, 1.0)


def fit_logistic(
    c: np.ndarray,
    w: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
    clip_floor: float = 0.01,
) -> PropensityFit:
    """Maximize the Bernoulli log-likelihood of c given covariates w.

    Convergence when the score max-norm or the relative log-likelihood
    change drops below tol.  Fitted probabilities are clipped to
    [clip_floor, 1] so inverse-propensity weights stay bounded.

    A constant response is returned as a constant-propensity fit with the
    `separated` flag set, so fully observed columns flow through the same
    pipeline.
    """
    c = np.asarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    n, q = w.shape
    if not np.isin(c, (0.0, 1.0)).all():
        raise DataError("response entries must be 0 or 1")

    if c.min() == c.max():
        const = 1.0 if c[0] == 1.0 else clip_floor
        return PropensityFit(
            coef=np.zeros(q),
            delta_hat=np.full(n, const),
            clip_floor=clip_floor,
            converged=True,
            iterations=0,
            separated=True,
            constant_value=float(c[0]),
        )

    beta = np.zeros(q)
    ll = _loglik(c, w @ beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = w @ beta
        prob = _sigmoid(eta)
        score = w.T @ (c - prob)
        if np.abs(score).max() <= tol:
            converged = True
            break
        weight = prob * (1.0 - prob)
        hess = w.T @ (w * weight[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, score, rcond=None)[0]
        # step-halving keeps the log-likelihood monotone
        scale = 1.0
        for _ in range(50):
            cand = beta + scale * step
            ll_new = _loglik(c, w @ cand)
            if ll_new >= ll:
                break
            scale *= 0.5
        else:
            converged = True  # no ascent direction left: at the optimum
            break
        beta = cand
        if np.linalg.norm(beta) > 1e6:
            raise NumericalError("IRLS diverged: coefficient norm exceeds 1e6")
        if ll_new - ll <= tol * max(abs(ll), 1.0):
            ll = ll_new
            converged = True
            break
        ll = ll_new

    delta = np.clip(_sigmoid(w @ beta), clip_floor, 1.0)
    return PropensityFit(
        coef=beta,
        delta_hat=delta,
        clip_floor=clip_floor,
        converged=converged,
        iterations=it,
    )


def predict(fit: PropensityFit, w_new: np.ndarray) -> np.ndarray:
    """Clipped fitted probabilities at new covariate rows."""
    return fit.predict(w_new)
