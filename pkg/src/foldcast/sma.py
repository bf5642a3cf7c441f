"""Spectral magnitude aligner: enhance the Fourier magnitude of an image while
preserving its phase, then blend residually with the input.

Forward chain: rfft2 -> (magnitude, phase) -> conv/BN/ReLU/dropout/conv stack on
the magnitude -> recombine with the original phase -> irfft2 -> residual blend
I + lam * (I_enhanced - I).  All gradients are hand-derived; irfft2 is defined
as Re(ifft2(hermitian_embed(.))) so that its adjoint is exact even when the
enhanced half-spectrum is no longer Hermitian-consistent in the edge columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TINY = 1e-12


@dataclass
class SmaConfig:
    lam: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")


@dataclass
class EnhancerParams:
    conv1_w: np.ndarray  # [C, 1, 3, 3]
    conv1_b: np.ndarray  # [C]
    bn_gamma: np.ndarray  # [C]
    bn_beta: np.ndarray  # [C]
    bn_running_mean: np.ndarray  # [C] buffer
    bn_running_var: np.ndarray  # [C] buffer
    conv2_w: np.ndarray  # [1, C, 3, 3]
    conv2_b: np.ndarray  # [1]
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dropout_rate: float = 0.1

    def grad_keys(self):
        return ("conv1_w", "conv1_b", "bn_gamma", "bn_beta", "conv2_w", "conv2_b")


def init_enhancer(rng: np.random.Generator, channels: int = 16, dropout_rate: float = 0.1) -> EnhancerParams:
    """Fan-in-scaled uniform kernels, zero biases, identity batch norm."""
    b1 = 1.0 / np.sqrt(1 * 9)
    b2 = 1.0 / np.sqrt(channels * 9)
    return EnhancerParams(
        conv1_w=rng.uniform(-b1, b1, size=(channels, 1, 3, 3)),
        conv1_b=np.zeros(channels),
        bn_gamma=np.ones(channels),
        bn_beta=np.zeros(channels),
        bn_running_mean=np.zeros(channels),
        bn_running_var=np.ones(channels),
        conv2_w=rng.uniform(-b2, b2, size=(1, channels, 3, 3)),
        conv2_b=np.zeros(1),
        dropout_rate=dropout_rate,
    )


# ---------------------------------------------------------------------------
# half-spectrum transforms


def rfft2(image: np.ndarray) -> np.ndarray:
    """Real 2D FFT onto the non-negative horizontal frequencies [H, W/2+1]."""
    image = np.asarray(image)
    H, W = image.shape
    if H < 2 or W < 2:
        raise ValueError("rfft2 needs H, W >= 2")
    if W % 2:
        raise ValueError("rfft2 requires even W")
    return np.fft.rfft2(image)


def hermitian_embed(hs: np.ndarray, W: int) -> np.ndarray:
    """Extend a half-spectrum [H, W/2+1] to a full [H, W] spectrum."""
    H, Wh = hs.shape
    if Wh != W // 2 + 1 or W % 2:
        raise ValueError(f"half-spectrum width {Wh} does not match even W={W}")
    full = np.zeros((H, W), dtype=np.complex128)
    full[:, :Wh] = hs
    rows_rev = (-np.arange(H)) % H
    full[:, Wh:] = np.conj(hs[rows_rev][:, 1 : W // 2][:, ::-1])
    return full


def irfft2(hs: np.ndarray, H: int, W: int) -> np.ndarray:
    """Inverse of rfft2: Re(ifft2(hermitian_embed(hs)))."""
    if hs.shape[0] != H:
        raise ValueError(f"half-spectrum height {hs.shape[0]} != H={H}")
    return np.fft.ifft2(hermitian_embed(hs, W)).real


def rfft2_adjoint(grad_hs: np.ndarray, H: int, W: int) -> np.ndarray:
    """Adjoint of rfft2 as a real-linear map (gradient wrt the input image)."""
    full = np.zeros((H, W), dtype=np.complex128)
    full[:, : W // 2 + 1] = grad_hs
    return np.fft.ifft2(full).real * (H * W)


def irfft2_adjoint(grad_image: np.ndarray, W: int) -> np.ndarray:
    """Adjoint of irfft2: real image gradient back to half-spectrum gradient.

    Interior columns appear twice in the Hermitian extension, hence the factor
    of two; columns 0 and W/2 appear once.
    """
    g = np.asarray(grad_image, dtype=np.float64)
    H = g.shape[0]
    full = np.fft.fft2(g) / (H * W)
    out = full[:, : W // 2 + 1].copy()
    out[:, 1 : W // 2] *= 2.0
    return out


def decompose(hs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half-spectrum -> (magnitude, phase)."""
    return np.abs(hs), np.angle(hs)


def recombine(magnitude: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """(magnitude, phase) -> half-spectrum; negative magnitudes flip phase by pi."""
    if magnitude.shape != phase.shape:
        raise ValueError("magnitude and phase shapes differ")
    return magnitude * np.exp(1j * phase)


# ---------------------------------------------------------------------------
# conv / batchnorm / dropout primitives (3x3, stride 1, zero pad 1)


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.tile(b[:, None, None], (1, H, W))
    for i in range(3):
        for j in range(3):
            out += np.einsum("oc,chw->ohw", w[:, :, i, j], xp[:, i : i + H, j : j + W])
    return out


def conv3x3_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray):
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            gw[:, :, i, j] = np.einsum("ohw,chw->oc", g, xp[:, i : i + H, j : j + W])
            gxp[:, i : i + H, j : j + W] += np.einsum("oc,ohw->chw", w[:, :, i, j], g)
    return gw, g.sum(axis=(1, 2)), gxp[:, 1 : 1 + H, 1 : 1 + W]


def _bn_forward(x, p: EnhancerParams, train: bool):
    if train:
        mean = x.mean(axis=(1, 2))
        var = x.var(axis=(1, 2))  # population variance for normalization
        n = x.shape[1] * x.shape[2]
        unbiased = var * n / max(n - 1, 1)
        p.bn_running_mean = (1 - p.bn_momentum) * p.bn_running_mean + p.bn_momentum * mean
        p.bn_running_var = (1 - p.bn_momentum) * p.bn_running_var + p.bn_momentum * unbiased
    else:
        mean = p.bn_running_mean
        var = p.bn_running_var
    invstd = 1.0 / np.sqrt(var + p.bn_eps)
    xhat = (x - mean[:, None, None]) * invstd[:, None, None]
    out = p.bn_gamma[:, None, None] * xhat + p.bn_beta[:, None, None]
    return out, {"xhat": xhat, "invstd": invstd, "train": train}


def _bn_backward(g, cache, p: EnhancerParams):
    xhat = cache["xhat"]
    invstd = cache["invstd"][:, None, None]
    dgamma = (g * xhat).sum(axis=(1, 2))
    dbeta = g.sum(axis=(1, 2))
    gg = g * p.bn_gamma[:, None, None]
    if cache["train"]:
        mg = gg.mean(axis=(1, 2), keepdims=True)
        mgx = (gg * xhat).mean(axis=(1, 2), keepdims=True)
        dx = invstd * (gg - mg - xhat * mgx)
    else:
        dx = gg * invstd
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# enhancer and full aligner


def enhancer_forward(A: np.ndarray, p: EnhancerParams, mode: str = "eval", rng=None):
    """Conv -> BN -> ReLU -> dropout -> conv on the magnitude spectrum.

    Returns (A_enhanced, cache); cache records everything backward needs,
    including the dropout mask, so train-mode gradients are exact.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    x0 = A[None, :, :]
    h1 = conv3x3(x0, p.conv1_w, p.conv1_b)
    h2, bn_cache = _bn_forward(h1, p, train)
    relu_mask = h2 > 0
    h3 = h2 * relu_mask
    if train and p.dropout_rate > 0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = rng.random(h3.shape) >= p.dropout_rate
        drop_scale = keep / (1.0 - p.dropout_rate)
    else:
        drop_scale = None
    h4 = h3 * drop_scale if drop_scale is not None else h3
    h5 = conv3x3(h4, p.conv2_w, p.conv2_b)
    cache = {
        "x0": x0,
        "h1": h1,
        "bn": bn_cache,
        "relu_mask": relu_mask,
        "h4": h4,
        "drop_scale": drop_scale,
    }
    return h5[0], cache


def enhancer_backward(g_out: np.ndarray, cache, p: EnhancerParams):
    """Gradients of the enhancer wrt its parameters and its input magnitude."""
    g = g_out[None, :, :]
    gw2, gb2, gh4 = conv3x3_backward(g, cache["h4"], p.conv2_w)
    gh3 = gh4 * cache["drop_scale"] if cache["drop_scale"] is not None else gh4
    gh2 = gh3 * cache["relu_mask"]
    gh1, dgamma, dbeta = _bn_backward(gh2, cache["bn"], p)
    gw1, gb1, gx0 = conv3x3_backward(gh1, cache["x0"], p.conv1_w)
    grads = {
        "conv1_w": gw1,
        "conv1_b": gb1,
        "bn_gamma": dgamma,
        "bn_beta": dbeta,
        "conv2_w": gw2,
        "conv2_b": gb2,
    }
    return grads, gx0[0]


def sma_forward(
    image: np.ndarray,
    p: EnhancerParams,
    cfg: SmaConfig,
    mode: str = "eval",
    rng=None,
):
    """Full aligner pass; returns (blended image, cache for backward)."""
    I = np.asarray(image, dtype=np.float64)
    H, W = I.shape
    F = rfft2(I)
    A, phi = decompose(F)
    A_enh, enh_cache = enhancer_forward(A, p, mode, rng)
    Fp = recombine(A_enh, phi)
    I_enh = irfft2(Fp, H, W)
    if cfg.lam == 0.0:
        out = I.copy()
    else:
        out = I + cfg.lam * (I_enh - I)
    cache = {
        "A": A,
        "phi": phi,
        "A_enh": A_enh,
        "enh": enh_cache,
        "shape": (H, W),
        "lam": cfg.lam,
        "I_enh": I_enh,
    }
    return out, cache


def sma_backward(grad_out: np.ndarray, cache, p: EnhancerParams):
    """Gradients of the aligner wrt enhancer parameters and the input image."""
    H, W = cache["shape"]
    lam = cache["lam"]
    g = np.asarray(grad_out, dtype=np.float64)
    g_image = (1.0 - lam) * g
    if lam == 0.0:
        zero = {k: np.zeros_like(getattr(p, k)) for k in p.grad_keys()}
        return zero, g_image
    g_enh_img = lam * g

    gFp = irfft2_adjoint(g_enh_img, W)
    cos_phi = np.cos(cache["phi"])
    sin_phi = np.sin(cache["phi"])
    gA_enh = gFp.real * cos_phi + gFp.imag * sin_phi
    gphi = cache["A_enh"] * (-sin_phi * gFp.real + cos_phi * gFp.imag)

    grads, gA = enhancer_backward(gA_enh, cache["enh"], p)

    A_safe = np.maximum(cache["A"], _TINY)
    phase_ok = cache["A"] > _TINY
    gF_re = gA * cos_phi + np.where(phase_ok, -gphi * sin_phi / A_safe, 0.0)
    gF_im = gA * sin_phi + np.where(phase_ok, gphi * cos_phi / A_safe, 0.0)
    g_image = g_image + rfft2_adjoint(gF_re + 1j * gF_im, H, W)
    return grads, g_image
