# %% [markdown]
# # Directional half-disk kernels
#
# Each side view integrates light from one half of the aperture, so its blur
# kernel is a half disk. The right kernel is rasterized analytically; the
# other four are exact mirrors, rotations and averages of it.

# %%
import math

import numpy as np

from qpdisp import psf

R = 3.0
kernels = {d: psf.make_kernel(R, d) for d in psf.DIRECTIONS}
np.set_printoptions(precision=3, suppress=True, linewidth=110)
print("right kernel, R = 3 px\n", kernels["right"].taps)

# %%
for d, k in kernels.items():
    cx, cy = psf.kernel_centroid(k)
    print(f"{d:>6}: sum {k.taps.sum():.12f}  centroid ({cx:+.5f}, {cy:+.5f})")
print(f"analytic half-disk centroid: {4 * R / (3 * math.pi):.5f}")

# %% [markdown]
# Points in front of the focal plane flip the kernels: the right view then
# receives the left half-aperture.

# %%
flipped = psf.view_kernel(-R, "right")
print(np.array_equal(flipped.taps, kernels["left"].taps))

# %% [markdown]
# Plot the five kernels when matplotlib is available.

# %%
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, axes = plt.subplots(1, 5, figsize=(12, 2.6))
    for ax, (d, k) in zip(axes, kernels.items()):
        ax.imshow(k.taps, cmap="magma")
        ax.set_title(d)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig("psf_kernels.png", dpi=100)
    print("wrote psf_kernels.png")
