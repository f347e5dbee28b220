# %% [markdown]
# # Defocus blur from depth
#
# A quad-pixel sensor sees a defocused point as a blur disk. Its signed
# radius in pixels (the circle of confusion) follows from the thin-lens model;
# the sign tells whether the point lies behind (+) or in front of (-) the
# focal plane. Disparity between the center view and a side view is the
# offset of the half-aperture blur's centroid, 4R/(3*pi) for a radius R.

# %%
import numpy as np

from qpdisp import CameraParams, DepthMap, coc_from_depth, disparity_from_coc

cam = CameraParams()     # 25 mm, f/1.8, focused at 4 m, 10.1 um pixels
print(cam)
print(f"CoC gain (limit for z -> infinity): {cam.coc_gain:.4f} px")

# %% [markdown]
# Sweep depth from 1 m to 100 m.

# %%
z = np.geomspace(1.0, 100.0, 9)[None, :]
coc = coc_from_depth(cam, DepthMap(z))
disp = disparity_from_coc(coc)
for zi, ci, di in zip(z[0], coc.values[0], disp.values[0]):
    print(f"z = {zi:7.2f} m   CoC = {ci:+7.3f} px   disparity = {di:+7.3f} px")

# %% [markdown]
# Focusing closer raises the gain sharply; a 1 m focus distance already
# produces several pixels of disparity for background points.

# %%
near = CameraParams(focus_distance_m=1.0)
print(f"gain at 1 m focus: {near.coc_gain:.2f} px")
