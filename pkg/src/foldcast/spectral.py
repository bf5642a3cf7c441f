"""Power-spectrum-slope (PSS) analysis.

Pipeline: 2D DFT -> centered power spectrum -> radial averaging over integer
annuli -> ordinary least squares fit of log P against log f inside a frequency
mask.  The slope of the fit is -alpha for the power-law model P(f) ~ f^-alpha.
Includes a synthetic 1/f^alpha image generator used as the estimator's oracle,
plus readers that turn text and PGM images into analyzable arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pgm
from .data import Dataset
from .rendering import RenderSpec, render, resize_bilinear

DEFAULT_F_LO = 0.05
DEFAULT_F_HI = 0.5


@dataclass(frozen=True)
class PowerSpectrum2D:
    power: np.ndarray  # [H, W], zero frequency at (H//2, W//2)

    @property
    def shape(self):
        return self.power.shape


@dataclass(frozen=True)
class RadialSpectrum:
    freqs: np.ndarray  # f_k = k / r_max, strictly increasing
    power: np.ndarray  # mean power per annulus
    counts: np.ndarray  # pixels per annulus, sums to H*W
    r_max: float


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    intercept: float
    r_squared: float
    f_lo: float
    f_hi: float
    n_points: int


@dataclass(frozen=True)
class ModalityStats:
    alphas: np.ndarray
    mean: float
    std: float  # sample convention (N-1)
    n: int


def dft2(image: np.ndarray) -> np.ndarray:
    """Unnormalized 2D DFT (textbook double-sum convention)."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("dft2 expects a 2-D array")
    return np.fft.fft2(image)


def idft2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dft2 (includes the 1/(H*W) normalization)."""
    return np.fft.ifft2(coeffs)


def power_centered(image: np.ndarray) -> PowerSpectrum2D:
    """Squared DFT magnitude with the zero frequency shifted to the center."""
    coeffs = np.fft.fftshift(dft2(image))
    return PowerSpectrum2D(power=np.abs(coeffs) ** 2)


def radial_distances(H: int, W: int) -> np.ndarray:
    u = np.arange(H)[:, None] - H / 2
    v = np.arange(W)[None, :] - W / 2
    return np.sqrt(u * u + v * v)


def radial_average(ps: PowerSpectrum2D) -> RadialSpectrum:
    """Mean power per integer radial bin, bin(r) = floor(r); f_k = k / r_max."""
    H, W = ps.shape
    r = radial_distances(H, W)
    bins = np.floor(r).astype(np.int64).ravel()
    power = ps.power.ravel()
    counts = np.bincount(bins)
    sums = np.bincount(bins, weights=power)
    keep = counts > 0
    k = np.nonzero(keep)[0]
    r_max = float(np.sqrt((H / 2) ** 2 + (W / 2) ** 2))
    return RadialSpectrum(
        freqs=k / r_max,
        power=sums[keep] / counts[keep],
        counts=counts[keep],
        r_max=r_max,
    )


def fit_power_law(
    rs: RadialSpectrum, f_lo: float = DEFAULT_F_LO, f_hi: float = DEFAULT_F_HI
) -> PowerLawFit:
    """OLS fit of log P against log f on bins with f_lo < f < f_hi.

    Zero/negative-power bins inside the mask are dropped; fewer than 2 usable
    points is an error.  Returns alpha = -slope, the intercept, and R^2.
    """
    mask = (rs.freqs > f_lo) & (rs.freqs < f_hi) & (rs.power > 0)
    n = int(mask.sum())
    if n < 2:
        raise ValueError(f"power-law fit needs >= 2 usable bins in ({f_lo}, {f_hi}), got {n}")
    x = np.log(rs.freqs[mask])
    y = np.log(rs.power[mask])
    xm = x.mean()
    ym = y.mean()
    sxx = np.sum((x - xm) ** 2)
    sxy = np.sum((x - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    # constant data fits a zero-slope line exactly; guard the 0/0 against
    # float residue of the mean subtraction
    degenerate = 1e-20 * max(1.0, float(np.sum(y * y)))
    if ss_tot <= degenerate:
        r2 = 1.0 if ss_res <= degenerate else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return PowerLawFit(
        alpha=float(-slope),
        intercept=float(intercept),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        f_lo=f_lo,
        f_hi=f_hi,
        n_points=n,
    )


def pss_of_image(image: np.ndarray, f_lo: float = DEFAULT_F_LO, f_hi: float = DEFAULT_F_HI) -> PowerLawFit:
    """Full pipeline on one image: spectrum -> radial average -> fit."""
    return fit_power_law(radial_average(power_centered(image)), f_lo, f_hi)


def synth_power_law_image(alpha: float, H: int, W: int, seed: int = 0) -> np.ndarray:
    """Random real image whose radially binned power spectrum is exactly f^-alpha.

    The magnitude at each frequency is set from its annulus index (the same
    floor(r) binning the estimator uses, DC set to 0); phases come from the FFT
    of white noise, which guarantees the conjugate symmetry needed for a real
    inverse transform.
    """
    if H < 8 or W < 8:
        raise ValueError("synth_power_law_image needs H, W >= 8")
    rng = np.random.default_rng(seed)
    # annulus index per frequency, in unshifted coordinates
    fu = np.fft.fftfreq(H)[:, None] * H
    fv = np.fft.fftfreq(W)[None, :] * W
    k = np.floor(np.sqrt(fu * fu + fv * fv))
    r_max = float(np.sqrt((H / 2) ** 2 + (W / 2) ** 2))
    with np.errstate(divide="ignore"):
        magnitude = np.where(k > 0, np.maximum(k, 1.0) / r_max, 1.0) ** (-alpha / 2.0)
    magnitude[0, 0] = 0.0
    noise_fft = np.fft.fft2(rng.normal(size=(H, W)))
    mod = np.abs(noise_fft)
    phase = np.where(mod > 0, noise_fft / np.where(mod > 0, mod, 1.0), 1.0)
    spectrum = magnitude * phase
    image = np.fft.ifft2(spectrum)
    residue = float(np.abs(image.imag).max())
    if residue > 1e-9 * max(np.abs(image.real).max(), 1.0):
        raise AssertionError(f"imaginary residue {residue} exceeds tolerance")
    return image.real


def pss_of_series(
    ds: Dataset,
    spec: RenderSpec,
    n_samples: int,
    T: int,
    seed: int = 0,
    horizon: int = 96,
    f_lo: float = DEFAULT_F_LO,
    f_hi: float = DEFAULT_F_HI,
    workers: int = 1,
) -> ModalityStats:
    """PSS distribution over random single-variable windows of a dataset.

    Each sample draws a (start, variable) pair, z-scores the window, renders it
    exactly as the forecaster sees it (visible region at its layout width plus
    the zero-valued masked region), and fits the power law.  Analyzing the
    masked composite keeps the data's broadband content inside the fit range;
    resizing the visible grid alone to the full image would push everything
    above the bilinear-interpolation rolloff and saturate alpha for any input.
    """
    n_steps, n_vars = ds.values.shape
    if n_steps < T:
        raise ValueError(f"dataset of {n_steps} steps too short for windows of T={T}")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n_steps - T + 1, size=n_samples)
    variables = rng.integers(0, n_vars, size=n_samples)

    def one(i: int) -> float:
        x = ds.values[starts[i] : starts[i] + T, variables[i]]
        sd = max(float(x.std()), 1e-8)
        xn = (x - x.mean()) / sd
        image = render(xn, horizon, spec).pixels
        return pss_of_image(image, f_lo, f_hi).alpha

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            alphas = np.array(list(pool.map(one, range(n_samples))))
    else:
        alphas = np.array([one(i) for i in range(n_samples)])
    return summarize_alphas(alphas)


def summarize_alphas(alphas: np.ndarray) -> ModalityStats:
    alphas = np.asarray(alphas, dtype=np.float64)
    n = alphas.shape[0]
    std = float(alphas.std(ddof=1)) if n >= 2 else 0.0
    return ModalityStats(alphas=alphas, mean=float(alphas.mean()), std=std, n=n)


def ascii_text_to_image(text: str, H: int = 224, W: int = 224) -> np.ndarray:
    """Map characters to (code-32)/94 in [0, 1], tile/truncate to H*W, reshape."""
    if not text:
        raise ValueError("text must be non-empty")
    codes = np.frombuffer(text.encode("utf-8", errors="replace"), dtype=np.uint8)
    codes = np.clip(codes.astype(np.float64), 32.0, 126.0)
    vals = (codes - 32.0) / 94.0
    need = H * W
    reps = -(-need // vals.shape[0])
    return np.tile(vals, reps)[:need].reshape(H, W)


def load_grayscale_image(path, H: int = 224, W: int = 224) -> np.ndarray:
    """Read a PGM, bilinear-resize to [H, W], z-score to zero mean/unit variance."""
    img = pgm.read_pgm(path)
    img = resize_bilinear(img, H, W)
    sd = max(float(img.std()), 1e-8)
    return (img - img.mean()) / sd
