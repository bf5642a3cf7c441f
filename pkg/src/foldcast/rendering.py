"""Periodic folding of 1-D windows into 2-D grayscale images and its inverse.

A context of T steps is left-padded by replication to a multiple of the
periodicity P, folded into a P x F grid (each column = one period of P
consecutive steps), resized to the visible region of the target image, and
composed with a zero-valued masked region standing in for the horizon.  The
inverse maps a decoded image back to a forecast by resizing to the full
period grid and unfolding column-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RenderSpec:
    periodicity: int = 24
    image_height: int = 224
    image_width: int = 224
    align_const: float = 0.4
    patch_size: int = 16
    interpolation: str = "bilinear"

    def __post_init__(self):
        if self.periodicity < 1:
            raise ValueError("periodicity must be positive")
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise ValueError("image dims must be divisible by patch_size")
        if not 0.0 < self.align_const <= 1.0:
            raise ValueError("align_const must lie in (0, 1]")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")


@dataclass(frozen=True)
class RenderedImage:
    pixels: np.ndarray  # [image_height, W_total]
    visible_width: int
    masked_width: int
    pad_len: int
    periods_context: int
    context_len: int
    horizon_len: int
    spec: RenderSpec

    @property
    def total_width(self) -> int:
        return self.visible_width + self.masked_width

    @property
    def periods_total(self) -> int:
        p = self.spec.periodicity
        horizon_pad = -(-self.horizon_len // p) * p  # horizon rounded up to whole periods
        return (self.context_len + self.pad_len + horizon_pad) // p


def pad_left_replicate(x: np.ndarray, P: int) -> np.ndarray:
    """Prepend copies of x[0] until the length is divisible by P."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    p_l = (P - T % P) % P
    if p_l == 0:
        return x
    return np.concatenate([np.full(p_l, x[0]), x])


def fold_to_grid(x: np.ndarray, P: int) -> np.ndarray:
    """Fold a series of length P*F into a [P, F] grid, one period per column."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] % P:
        raise ValueError(f"length {x.shape[0]} not divisible by periodicity {P}")
    return x.reshape(-1, P).T


def unfold_from_grid(grid: np.ndarray) -> np.ndarray:
    """Inverse of fold_to_grid: column-major read-out back to a 1-D series."""
    return np.asarray(grid).T.reshape(-1)


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping.

    Source coordinate for output index i is (i + 0.5) * in/out - 0.5, clamped
    to the valid range; equal input/output dims return the input unchanged.
    """
    grid = np.asarray(grid, dtype=np.float64)
    in_h, in_w = grid.shape
    if (out_h, out_w) == (in_h, in_w):
        return grid.copy()
    y0, y1, ty = _sample_axis(in_h, out_h)
    x0, x1, tx = _sample_axis(in_w, out_w)
    ty = ty[:, None]
    tx = tx[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - tx) + grid[np.ix_(y0, x1)] * tx
    bot = grid[np.ix_(y1, x0)] * (1 - tx) + grid[np.ix_(y1, x1)] * tx
    return top * (1 - ty) + bot * ty


def resize_bilinear_backward(grad_out: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of resize_bilinear (scatter-add with the same weights)."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    out_h, out_w = grad_out.shape
    if (out_h, out_w) == (in_h, in_w):
        return grad_out.copy()
    y0, y1, ty = _sample_axis(in_h, out_h)
    x0, x1, tx = _sample_axis(in_w, out_w)
    ty = ty[:, None]
    tx = tx[None, :]
    gin = np.zeros((in_h, in_w))
    np.add.at(gin, np.ix_(y0, x0), grad_out * (1 - ty) * (1 - tx))
    np.add.at(gin, np.ix_(y0, x1), grad_out * (1 - ty) * tx)
    np.add.at(gin, np.ix_(y1, x0), grad_out * ty * (1 - tx))
    np.add.at(gin, np.ix_(y1, x1), grad_out * ty * tx)
    return gin


def _sample_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def layout_widths(T: int, H: int, spec: RenderSpec) -> tuple[int, int]:
    """Split the image width into visible (context) and masked (horizon) parts.

    Allocation is proportional to T/(T+H) in patch-column units, scaled by
    align_const and clamped to [1, n_cols - 1].
    """
    if T < 1 or H < 1:
        raise ValueError("T and H must be positive")
    n_cols = spec.image_width // spec.patch_size
    if n_cols < 2:
        raise ValueError("image width must hold at least 2 patch columns")
    n_vis = int(round(n_cols * (T / (T + H)) * spec.align_const))
    n_vis = min(max(n_vis, 1), n_cols - 1)
    w_vis = n_vis * spec.patch_size
    return w_vis, spec.image_width - w_vis


def render(context_norm: np.ndarray, horizon_len: int, spec: RenderSpec) -> RenderedImage:
    """Render one normalized 1-D context into a masked grayscale image."""
    x = np.asarray(context_norm, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("render expects a single-variable 1-D context")
    T = x.shape[0]
    P = spec.periodicity
    padded = pad_left_replicate(x, P)
    p_l = padded.shape[0] - T
    grid = fold_to_grid(padded, P)
    f_ctx = grid.shape[1]
    w_vis, w_mask = layout_widths(T, horizon_len, spec)
    visible = resize_bilinear(grid, spec.image_height, w_vis)
    pixels = np.concatenate(
        [visible, np.zeros((spec.image_height, w_mask))], axis=1
    )
    return RenderedImage(
        pixels=pixels,
        visible_width=w_vis,
        masked_width=w_mask,
        pad_len=p_l,
        periods_context=f_ctx,
        context_len=T,
        horizon_len=horizon_len,
        spec=spec,
    )


def to_three_channel(img: np.ndarray) -> np.ndarray:
    """Replicate a grayscale image across three identical channels."""
    img = np.asarray(img, dtype=np.float64)
    return np.repeat(img[None, :, :], 3, axis=0)


def grayscale(img3: np.ndarray) -> np.ndarray:
    """Mean over channels; inverse of to_three_channel for replicated input."""
    return np.asarray(img3, dtype=np.float64).mean(axis=0)


def reconstruct(decoded: np.ndarray, prov: RenderedImage) -> np.ndarray:
    """Map a decoded grayscale image back to a normalized-space forecast.

    The decoded image is resized to the full period grid [P, F_total], unfolded
    column-major, and the horizon slice [T : T+H] (after removing the left pad)
    is returned.
    """
    decoded = np.asarray(decoded, dtype=np.float64)
    spec = prov.spec
    expect = (spec.image_height, prov.total_width)
    if decoded.shape != expect:
        raise ValueError(f"decoded image shape {decoded.shape} != rendered {expect}")
    P = spec.periodicity
    f_total = prov.periods_total
    grid = resize_bilinear(decoded, P, f_total)
    series = unfold_from_grid(grid)
    start = prov.pad_len + prov.context_len
    return series[start : start + prov.horizon_len]


def reconstruct_backward(grad_forecast: np.ndarray, prov: RenderedImage) -> np.ndarray:
    """Adjoint of reconstruct: forecast-slice gradient back to image space."""
    spec = prov.spec
    P = spec.periodicity
    f_total = prov.periods_total
    series_grad = np.zeros(f_total * P)
    start = prov.pad_len + prov.context_len
    series_grad[start : start + prov.horizon_len] = grad_forecast
    grid_grad = series_grad.reshape(f_total, P).T
    return resize_bilinear_backward(grid_grad, spec.image_height, prov.total_width)
