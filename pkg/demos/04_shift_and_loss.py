"""
Scale-invariant loss and the missing shift
==========================================

Normalising by the median and mean absolute deviation removes scale
and (for the affine loss) shift. The plain scale-invariant loss keeps
shift visible: adding c moves it by |c| / s, so a predicted shift is
needed to close the gap.
"""

import numpy as np

from panodepth import DepthMap, DisparityMap
from panodepth.loss import apply_shift, robust_stats, si_loss, ssi_loss
from panodepth.metrics import align, compute_metrics
from panodepth.sphere import depth_to_disparity

rng = np.random.default_rng(1)
gt_depth = DepthMap(rng.uniform(1.0, 8.0, (16, 32)))
gt = depth_to_disparity(gt_depth).values

print("si(3 d, d)      ", si_loss(3 * gt, gt).value)
print("si(d + 0.2, d)  ", si_loss(gt + 0.2, gt).value, " |c|/s =", 0.2 / robust_stats(gt).s)
print("ssi(3 d + 0.2, d)", ssi_loss(3 * gt + 0.2, gt).value)

# a network that outputs scaled disparity minus an unknown offset
raw = 2.5 * gt - 0.15
for shift in (0.0, 0.1, 0.15):
    pred = DisparityMap(apply_shift(raw, shift))
    depth = align(pred, gt_depth, "scale_disparity")
    print(f"shift {shift:4.2f}: si {si_loss(pred.values, gt).value:.4f}  "
          f"AbsRel {compute_metrics(depth, gt_depth).absrel:.4f}")
