# %% [markdown]
# # Correlation volumes and multi-direction lookup
#
# Descriptors of the center view are correlated with each side view along
# rows (left/right) or columns (top/bottom). Repeated pooling of the shift
# axis builds a four-scale pyramid, and a window of 2r + 1 correlations is
# read around the position implied by the current disparity.

# %%
import numpy as np
from scipy import ndimage

from qpdisp import matcher
from qpdisp.renderer import QpFrameSet

rng = np.random.default_rng(1)
n, d = 64, 2.0
tex = ndimage.gaussian_filter(rng.random((n, n)), 2, mode="wrap")


def shifted(dx, dy):
    freq = ndimage.fourier_shift(np.fft.fft2(tex), (dy, dx))
    return np.real(np.fft.ifft2(freq))


frames = QpFrameSet({"center": tex, "right": shifted(d, 0), "left": shifted(-d, 0),
                     "top": shifted(0, -d), "bottom": shifted(0, d)})

center = matcher.extract_features(frames.views["center"], 1)
sides = {k: matcher.extract_features(frames.views[v], 1) for k, v in matcher.DIRECTION_VIEWS.items()}
print("descriptor channels:", center.channels)
pyramids = matcher.build_pyramids(center, sides)
print("pyramid lengths:", [lvl.values.shape[-1] for lvl in pyramids["r"].levels])

# %% [markdown]
# Looking up at the true disparity puts the correlation peak of every
# direction at the window center. Left and top are read with the disparity
# sign reversed.

# %%
feat = matcher.lookup(pyramids, np.full((n, n), d), r=4)
print("feature length:", feat.data.shape[-1])
win = feat.windows()[16:-16, 16:-16, :, 0].mean(axis=(0, 1))
for name, w in zip(matcher.DIRECTIONS, win):
    print(name, np.round(w, 3), "peak at offset", int(w.argmax()) - 4)

# %% [markdown]
# From zero disparity the fused window points straight at the shift.

# %%
scores, weights = matcher.fuse(matcher.lookup(pyramids, np.zeros((n, n)), r=4), scales=(1,))
offsets = scores.argmax(-1)[8:-8, 8:-8] - 4
print("fused peak offset (median over pixels):", int(np.median(offsets)))
print("weight per direction:", np.round(weights.mean(axis=(0, 1)).sum(axis=1), 3))
