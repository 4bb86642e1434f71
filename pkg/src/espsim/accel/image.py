"""Night-vision kernels on 8-bit grayscale frames."""
import numpy as np

from ..errors import ModelError

N_BINS = 256


def _check(img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ModelError(f"expected a 2-D image, got shape {img.shape}")
    if img.size and (img.min() < 0 or img.max() > 255):
        raise ModelError("pixel values must lie in [0, 255]")
    return img.astype(np.int64)


def noise_filter(img) -> np.ndarray:
    """3x3 median with replicated borders."""
    img = _check(img)
    h, w = img.shape
    p = np.pad(img, 1, mode="edge")
    window = np.stack([p[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)])
    return np.partition(window, 4, axis=0)[4]


def histogram(img) -> np.ndarray:
    img = _check(img)
    return np.bincount(img.ravel(), minlength=N_BINS).astype(np.int64)


def hist_equalize(img, hist) -> np.ndarray:
    """CDF remap ``round(255 (cdf(v) - cdf_min) / (N - cdf_min))``.

    Rounds half up in integer arithmetic. A single-valued image has a zero
    denominator; every pixel then maps to 255.
    """
    img = _check(img)
    hist = np.asarray(hist, dtype=np.int64)
    if hist.shape != (N_BINS,):
        raise ModelError(f"histogram must have {N_BINS} bins, got {hist.shape}")
    n = img.size
    cdf = np.cumsum(hist)
    nz = cdf[cdf > 0]
    cdf_min = int(nz[0]) if nz.size else 0
    den = n - cdf_min
    if den <= 0:
        return np.full_like(img, 255)
    num = np.clip(cdf[img] - cdf_min, 0, None)
    out = (2 * 255 * num + den) // (2 * den)
    return np.clip(out, 0, 255)


def night_vision(img) -> np.ndarray:
    """Filter, histogram and equalization fused in one kernel."""
    f = noise_filter(img)
    return hist_equalize(f, histogram(f))
