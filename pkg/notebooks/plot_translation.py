"""
Recovering a subpixel translation
=================================

A smooth texture is moved by (1.0, 0.5) pixels and every estimator is asked
to recover the motion.
"""

import numpy as np

from pelrec import EngineConfig, MaskSpec, SceneSpec, estimate_field, make_sequence
from pelrec.metrics import endpoint_error, imc_frame, interior_mask

scene = SceneSpec(width=96, height=96, velocity=(1.0, 0.5), frame_count=2, texture_seed=3)
(prev, cur), (truth,) = make_sequence(scene)
print("frame range", prev.min().round(1), prev.max().round(1))

###############################################################################
# One field per estimator
# -----------------------
# The 5x5 window gives 25 equations in two unknowns at every pixel.

inner = interior_mask(prev.shape, 4)
for est in ("ols", "rls", "pcr1", "pcr2"):
    field = estimate_field(cur, prev, EngineConfig(estimator=est, mask=MaskSpec("square", 2)))
    epe, worst = endpoint_error(field, truth, inner)
    print(f"{est:5s} mean epe {epe:.4f}  max {worst:.4f}  imc {imc_frame(cur, prev, field):6.2f} dB")

###############################################################################
# Median vector
# -------------

print("median (dx, dy):", np.median(field.vectors[inner], axis=0))
