"""Tour of the imputation backends on one dataset with held-out cells.

Hides 10% of the observed cells, imputes with each backend, and reports
the mean squared error on the hidden cells.
"""
import numpy as np

from drpi import Dataset, ImputerConfig, impute

rng = np.random.default_rng(3)
n, p = 80, 40

a = (np.arange(n) % 2).astype(float)
x = rng.uniform(size=n)
w = np.column_stack([np.ones(n), a, x])
factors = rng.normal(size=(n, 2)) @ rng.normal(size=(2, p))  # shared structure
y = x[:, None] + factors + 0.5 * rng.normal(size=(n, p))

mask = (rng.random((n, p)) > 0.2).astype(np.int8)
obs = np.argwhere(mask == 1)
held = obs[rng.permutation(len(obs))[: len(obs) // 10]]
mask[held[:, 0], held[:, 1]] = 0

d = Dataset(
    y_obs=np.where(mask == 1, y, np.nan),
    mask=mask,
    w=w,
    peptide_ids=tuple(f"pep{j}" for j in range(p)),
    sample_ids=tuple(str(i) for i in range(n)),
    covariate_names=("intercept", "a", "x"),
)

print(f"{'backend':<10}{'held-out MSE':>14}")
for backend in ("mean", "lowdim", "soft", "knn", "knn2"):
    cfg = ImputerConfig(backend=backend, k_neighbors=5, max_rank=5)
    nu = impute(d, cfg).nu_hat
    mse = np.mean((nu[held[:, 0], held[:, 1]] - y[held[:, 0], held[:, 1]]) ** 2)
    print(f"{backend:<10}{mse:>14.4f}")
