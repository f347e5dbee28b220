# %% [markdown]
# # From RGB-D scenes to scores
#
# The command-line tool chains generation, estimation and evaluation. This
# script builds a tiny RGB-D root in a temporary directory and runs the
# same steps through the Python entry points (``qpdisp generate``,
# ``qpdisp estimate`` and ``qpdisp eval`` do the same from a shell).

# %%
import json
import tempfile
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from qpdisp import cli, dataset_io

root = Path(tempfile.mkdtemp(prefix="qpdisp_demo_"))
rng = np.random.default_rng(4)
for i, z in enumerate((2.0, 8.0, 25.0)):
    scene = root / "rgbd" / f"scene_{i}"
    scene.mkdir(parents=True)
    img = ndimage.gaussian_filter(rng.random((96, 96, 3)), (1.5, 1.5, 0))
    img = (255 * (img - img.min()) / np.ptp(img)).astype(np.uint8)
    cv2.imwrite(str(scene / "image.png"), img)
    dataset_io.write_pfm(scene / "depth.pfm", np.full((96, 96), z, np.float32))

# %%
config = cli.RunConfig()
print(cli.cmd_generate(config, root / "rgbd", root / "data", workers=2))
print(json.loads((root / "data" / "manifest.json").read_text())["split_sizes"])
print(sorted(p.name for p in (root / "data" / "scene_0").iterdir()))

# %%
print(cli.cmd_estimate(config, root / "data", root / "pred"))
print(cli.cmd_estimate(config, root / "data", root / "pred_noisy", variant="noisy"))

# %%
cli.cmd_eval(root / "pred", root / "data")
print((root / "pred" / "metrics.txt").read_text())
cli.cmd_eval(root / "pred_noisy", root / "data")
print((root / "pred_noisy" / "metrics.txt").read_text())
print("outputs under", root)
