"""Rendering geometry: periodic folding, masked layout, and exact inversion.

A 1-D window becomes a 2-D image by stacking consecutive periods as columns.
Temporal neighbors inside a period stay vertical neighbors; the step from the
last row of one column to the first row of the next is where the fold severs
true temporal adjacency.  When the image dimensions match the fold grid, the
whole render -> reconstruct cycle is exact to machine precision.
"""

import numpy as np

from foldcast.rendering import (
    RenderSpec, fold_to_grid, layout_widths, pad_left_replicate, reconstruct,
    render, unfold_from_grid,
)

rng = np.random.default_rng(0)

print("== padding and folding ==")
x = np.sin(2 * np.pi * np.arange(100) / 24.0)
padded = pad_left_replicate(x, 24)
print(f"T=100 at P=24 pads {padded.size - x.size} replicated steps on the left")
grid = fold_to_grid(padded, 24)
print(f"fold grid: {grid.shape[0]} rows (periodicity) x {grid.shape[1]} columns (periods)")
print(f"column boundary: grid[-1, 0] is step {np.where(padded == grid[-1, 0])[0][0]}, "
      f"grid[0, 1] is step {np.where(padded == grid[0, 1])[0][0]} (consecutive, but far apart in 2-D)")
assert np.array_equal(unfold_from_grid(grid), padded)
print("unfold(fold(x)) == x exactly")

print("\n== visible/masked layout ==")
spec = RenderSpec(periodicity=24, image_height=224, image_width=224, align_const=0.4)
w_vis, w_mask = layout_widths(1440, 96, spec)
print(f"T=1440, H=96, align 0.4: visible {w_vis}px, masked {w_mask}px of 224")
w_vis, w_mask = layout_widths(1440, 96, RenderSpec(align_const=1.0))
print(f"                align 1.0: visible {w_vis}px, masked {w_mask}px")

print("\n== exact round trip when dimensions are interpolation-free ==")
P, f_ctx, f_hor = 6, 5, 3
spec = RenderSpec(periodicity=P, image_height=P, image_width=f_ctx + f_hor,
                  align_const=1.0, patch_size=1)
context = rng.normal(size=P * f_ctx)
truth = rng.normal(size=P * f_hor)
ri = render(context, P * f_hor, spec)
decoded = np.concatenate([ri.pixels[:, :f_ctx], fold_to_grid(truth, P)], axis=1)
err = np.abs(reconstruct(decoded, ri) - truth).max()
print(f"render -> paste ground truth into the masked region -> reconstruct: max |err| = {err:.2e}")

print("\n== the usual case: bilinear resize into the image ==")
spec = RenderSpec(periodicity=24, image_height=64, image_width=64,
                  align_const=1.0, patch_size=16)
ri = render(np.sin(2 * np.pi * np.arange(288) / 24.0), 96, spec)
print(f"T=288 folds into 24 x {ri.periods_context}, resized to 64 x {ri.visible_width} "
      f"plus a {ri.masked_width}px masked region for the 96-step horizon")
