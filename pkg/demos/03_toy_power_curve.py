"""Power gain from augmenting the conditional mean with an auxiliary variable.

Y = beta*W + e is partially observed; an auxiliary U correlates with the
noise e at level rho.  The pseudo-outcome built from nu = E[Y|W,U] gains
power over the one built from mu = E[Y|W] as rho grows.
"""
from drpi import toy_power_experiment

rows = toy_power_experiment(
    [0.1, 0.3, 0.5, 0.7, 0.9], n=200, beta=0.2, delta=0.7, reps=2000, seed=0
)

print(f"{'rho':>5}{'power(W)':>12}{'power(UW)':>12}{'gain':>8}")
by = {(r["method"], r["rho"]): r["power"] for r in rows}
for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
    w, uw = by[("w", rho)], by[("uw", rho)]
    print(f"{rho:>5.1f}{w:>12.3f}{uw:>12.3f}{uw - w:>8.3f}")
