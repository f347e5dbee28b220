# %% [markdown]
# # Error metrics
#
# Plain errors (MAE, RMSE, bad-pixel rates) measure the raw disparity.
# The affine-invariant errors first fit gt ~ a * estimate + b, which makes
# them blind to an unknown scale and offset.

# %%
import numpy as np

from qpdisp import affine_invariant, basic_metrics, evaluate

rep = basic_metrics(np.array([0.0, 3.0]), np.zeros(2))
print(f"MAE {rep.mae}  RMSE {rep.rmse:.4f}  >0.5: {rep.d05}%  >1: {rep.d1}%  >2: {rep.d2}%")

# %% [markdown]
# An estimate that is an affine function of the truth scores zero on both
# affine-invariant errors while its plain errors are large.

# %%
rng = np.random.default_rng(3)
gt = rng.normal(0, 2, (48, 64))
rep = evaluate(2 * gt + 0.5, gt)
print(f"MAE {rep.mae:.3f}  AI(1) {rep.ai1:.2e}  AI(2) {rep.ai2:.2e}  "
      f"fit a={rep.ai2_a:.3f} b={rep.ai2_b:.3f}")

# %% [markdown]
# The q = 1 fit is computed by re-weighted least squares and shrugs off a
# gross outlier that drags the least-squares slope negative.

# %%
gt4 = np.array([0.0, 1.0, 2.0, 10.0])
est4 = np.array([0.0, 1.0, 2.0, 0.0])
for q in (1, 2):
    value, a, b, iters = affine_invariant(est4, gt4, q)
    print(f"q={q}: AI={value:.4f} a={a:+.4f} b={b:+.4f} iterations={iters}")
