"""Regenerate the golden fixture pair and its expected results.

The expected values are computed here from first principles (scipy
optimizer for the propensity likelihood, explicit matrix algebra for the
regression) so the main library is never in the loop.  Run from the
repository root:

    python3 fixtures/make_fixtures.py
"""
import csv
import pathlib

import numpy as np
from scipy import optimize, stats

HERE = pathlib.Path(__file__).parent
N, P = 20, 10
CLIP = 0.01


def generate():
    rng = np.random.default_rng(20240817)
    a = (np.arange(N) % 2).astype(float)
    x = rng.uniform(size=N)
    w = np.column_stack([np.ones(N), a, x])
    effects = np.linspace(-1.0, 2.0, P)
    y = np.outer(a, effects) + x[:, None] + rng.normal(size=(N, P))
    mask = rng.random((N, P)) > 0.2
    mask[0] = True  # keep every column observed at least once
    return a, x, w, y, mask


def nll(coef, c, w):
    eta = w @ coef
    return float(np.logaddexp(0.0, eta).sum() - c @ eta)


def oracle_column(y, c, w):
    """DR pseudo-outcome inference with a lowdim conditional mean."""
    res = optimize.minimize(nll, np.zeros(w.shape[1]), args=(c, w), method="BFGS",
                            options={"gtol": 1e-12, "maxiter": 1000})
    delta = 1.0 / (1.0 + np.exp(-(w @ res.x)))
    delta = np.clip(delta, CLIP, 1.0)
    obs = c == 1
    coef = np.linalg.solve(w[obs].T @ w[obs], w[obs].T @ y[obs])
    mu = w @ coef
    y_tilde = mu + (c / delta) * (np.where(obs, y, 0.0) - np.where(obs, mu, 0.0))
    gram_inv = np.linalg.inv(w.T @ w)
    beta = gram_inv @ (w.T @ y_tilde)
    r = y_tilde - w @ beta
    n = len(y)
    meat = (w * r[:, None] ** 2).T @ w / n
    cov = (gram_inv * n) @ meat @ (gram_inv * n) / n
    se = float(np.sqrt(cov[1, 1]))
    z = float(beta[1]) / se
    p = float(2.0 * stats.norm.sf(abs(z)))
    return float(beta[1]), se, z, p


def bh(pvals):
    m = len(pvals)
    order = np.argsort(pvals, kind="stable")
    ranked = pvals[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum(np.minimum.accumulate(ranked[::-1])[::-1], 1.0)
    q = np.empty(m)
    q[order] = q_sorted
    return q


def main():
    a, x, w, y, mask = generate()
    with open(HERE / "outcomes.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"pep{j}" for j in range(P)])
        for i in range(N):
            wr.writerow([repr(float(y[i, j])) if mask[i, j] else "" for j in range(P)])
    with open(HERE / "covariates.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["a", "x"])
        for i in range(N):
            wr.writerow([repr(float(a[i])), repr(float(x[i]))])

    rows = []
    for j in range(P):
        beta, se, z, p = oracle_column(y[:, j], mask[:, j].astype(float), w)
        rows.append([f"pep{j}", beta, se, z, p])
    q = bh(np.array([r[4] for r in rows]))
    with open(HERE / "expected_results.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["peptide_id", "beta", "se", "z", "p_value", "q_value", "selected"])
        for row, qv in zip(rows, q):
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]]
                        + [repr(float(qv)), int(qv <= 0.05)])
    print("fixtures written to", HERE)


if __name__ == "__main__":
    main()
