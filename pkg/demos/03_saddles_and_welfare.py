# %% [markdown]
# # Saddle values and distributional welfare

# %%
import numpy as np

from envbounds import apps as A
from envbounds.core import make_folds
from envbounds.errors import NoSaddle
from envbounds.saddle import best_case_welfare, find_saddle
from envbounds.simlab import reference_spec, simulate, true_psi

# %% [markdown]
# A pure saddle is a cell that is smallest in its row and largest in its
# column. Matching pennies has none.

# %%
print(find_saddle([[3.0, 1.0], [2.0, 0.0]]))
try:
    find_saddle([[1.0, -1.0], [-1.0, 1.0]])
except NoSaddle as exc:
    print("NoSaddle:", exc)

# %% [markdown]
# The saddle reference DGP plants a saddle in each covariate cell. The
# estimator averages the signal at each observation's fitted saddle.

# %%
spec, params = reference_spec("saddle", seed=0)
sample = simulate(spec, 4000, seed=0)
est = A.run_application("saddle", sample, make_folds(sample.n, 5, 0), params=params)["value"]
print(f"saddle value {est.psi_hat:.4f} (se {est.se:.4f}), truth {true_psi(spec, 'saddle')['value']:.4f}")

# %% [markdown]
# Worst-case and best-case welfare of the first-best policy at tau = 0.5.

# %%
spec, params = reference_spec("welfare_worst", seed=0)
sample = simulate(spec, 4000, seed=1)
nu = A.fit_arm_cdf_nuisance(sample, make_folds(sample.n, 5, 0))
grid_lo, grid_hi = np.array([0.0, 0.5]), np.array([0.5, 1.0])
worst = A.worst_case_welfare(sample, nu, 0.5, grid_lo)
best = best_case_welfare(sample, nu, 0.5, grid_hi)
print(f"worst {worst.psi_hat:.4f} (truth {true_psi(spec, 'welfare_worst', params)['value']:.4f})")
print(f"best  {best.psi_hat:.4f} (truth {true_psi(spec, 'welfare_best', params)['value']:.4f})")
print("share treated by the worst-case policy:", nu.policy(0.5, size=2).mean().round(3))
