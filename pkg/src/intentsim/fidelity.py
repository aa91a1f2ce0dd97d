"""Post-episode image evaluation: fidelity components and the intent score.

The fidelity score F blends three components over 224x224 grayscale images:

* f0 — semantic: embedding cosine similarity, globally and over a 4x4 grid
  of 56x56 patches, scaled by the fraction of patches above the similarity
  threshold (the coverage factor g_s);
* f1 — content: fraction of content-bearing 16x16 blocks (population
  variance above 10) whose variance survives reconstruction within a 2x
  ratio;
* f2 — structural: single-scale SSIM, 11x11 Gaussian window sigma 1.5,
  K1=0.01 K2=0.03, dynamic range 255, averaged over the valid map.

F = alpha*f0 + beta*f1 + gamma*f2 and the intent score equals F for
intent-relevant flows at or above the minimum acceptable fidelity, else 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PATCH_GRID = 4
EVAL_SIZE = 224


@dataclass
class FidelityWeights:
    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.3

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta),
                        ("gamma", self.gamma)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


@dataclass
class FidelityReport:
    f0: float
    f1: float
    f2: float
    g_s: float
    fidelity: float
    iss: float
    relevant: bool
    undecodable: bool
    valid: bool = True


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Rec.601 luma for HxWx3 input; pass-through for grayscale."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 3:
        return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    return arr


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resample with half-pixel centers (exact identity
    when sizes match)."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
        hi = np.clip(lo + 1, 0, n_in - 1)
        frac = np.clip(src - lo, 0.0, 1.0)
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    rows = img[y0] * (1 - fy)[:, None] + img[y1] * fy[:, None]
    return rows[:, x0] * (1 - fx) + rows[:, x1] * fx


def preprocess(pixels: np.ndarray) -> np.ndarray:
    """Common evaluation form: 224x224 grayscale, values 0..255."""
    gray = to_gray(pixels)
    if gray.size == 0:
        raise ValueError("zero-sized image")
    return resize_bilinear(gray, EVAL_SIZE, EVAL_SIZE)


# --- structural fidelity ----------------------------------------------------

def _gaussian_kernel(radius: int = 5, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()

_SSIM_KERNEL = _gaussian_kernel()


def _filter_valid(stack: np.ndarray) -> np.ndarray:
    """Separable Gaussian over the last two axes, valid region only.

    Border padding never reaches the cropped region, so this equals an
    unpadded windowed sum.
    """
    r = len(_SSIM_KERNEL) // 2
    out = correlate1d(stack, _SSIM_KERNEL, axis=-1, mode="constant")
    out = correlate1d(out, _SSIM_KERNEL, axis=-2, mode="constant")
    return out[..., r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 255.0) -> float:
    """Mean single-scale SSIM over the valid map, clamped to [0, 1]."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("ssim needs two equal-shape grayscale matrices")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    ux, uy, uxx, uyy, uxy = _filter_valid(
        np.stack([x, y, x * x, y * y, x * y]))
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    s = ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / \
        ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(min(1.0, max(0.0, s.mean())))


# --- content fidelity ---------------------------------------------------------

def block_variances(img: np.ndarray, block_px: int = 16) -> np.ndarray:
    h, w = img.shape
    gh, gw = h // block_px, w // block_px
    blocks = img[: gh * block_px, : gw * block_px] \
        .reshape(gh, block_px, gw, block_px)
    return blocks.var(axis=(1, 3))


def content_fidelity(a: np.ndarray, b: np.ndarray, block_px: int = 16,
                     var_threshold: float = 10.0, ratio: float = 0.5,
                     var_a: np.ndarray | None = None) -> float:
    """Fraction of content-bearing blocks whose variance survives.

    A block of the source is content-bearing iff its population variance
    exceeds the threshold; it is retained iff min/max of the two variances
    is at least ``ratio``.  With no content-bearing blocks the criterion is
    vacuous and f1 = 1.
    """
    if var_a is None:
        var_a = block_variances(np.asarray(a, dtype=np.float64), block_px)
    var_b = block_variances(np.asarray(b, dtype=np.float64), block_px)
    bearing = var_a > var_threshold
    n_bearing = int(bearing.sum())
    if n_bearing == 0:
        return 1.0
    va = var_a[bearing]
    vb = var_b[bearing]
    hi = np.maximum(va, vb)
    lo = np.minimum(va, vb)
    retained = int((lo >= ratio * hi).sum())
    return retained / n_bearing


# --- semantic fidelity --------------------------------------------------------

def _cos01(u: np.ndarray, v: np.ndarray) -> float:
    denom = float(np.linalg.norm(u) * np.linalg.norm(v))
    if denom == 0.0:
        return 0.0
    return min(1.0, max(0.0, float(np.dot(u, v)) / denom))


def split_patches(img: np.ndarray, grid: int = PATCH_GRID) -> list:
    h, w = img.shape
    ph, pw = h // grid, w // grid
    return [img[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
            for r in range(grid) for c in range(grid)]


def semantic_fidelity(a: np.ndarray, b: np.ndarray, provider,
                      threshold: float = 0.8,
                      embeds_a: tuple | None = None):
    """(f0, g_s) from global plus patch-level embedding similarity.

    ``embeds_a`` optionally carries precomputed (global, patches) embeddings
    of the source image; inputs must already be preprocessed.
    """
    if embeds_a is None:
        ea = provider.embed(a)
        pa = [provider.embed(p) for p in split_patches(a)]
    else:
        ea, pa = embeds_a
    eb = provider.embed(b)
    pb = [provider.embed(p) for p in split_patches(b)]
    f0_global = _cos01(ea, eb)
    sims = [_cos01(u, v) for u, v in zip(pa, pb)]
    f0_patch = sum(sims) / len(sims)
    g_s = sum(1 for s in sims if s >= threshold) / len(sims)
    f0 = (g_s / 2.0) * (f0_global + f0_patch)
    return f0, g_s


# --- score ---------------------------------------------------------------------

def fidelity_score(f0: float, f1: float, f2: float,
                   weights: FidelityWeights) -> float:
    return weights.alpha * f0 + weights.beta * f1 + weights.gamma * f2


def iss(fidelity: float, relevant: bool, f_min: float = 0.2) -> float:
    """Relevance-gated score: F when relevant and F >= f_min, else 0."""
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity outside [0, 1]")
    if relevant and fidelity >= f_min:
        return fidelity
    return 0.0


def evaluate_images(source_gray, recon_gray, provider, weights: FidelityWeights,
                    relevant: bool, f_min: float = 0.2, threshold: float = 0.8,
                    block_px: int = 16, var_threshold: float = 10.0,
                    var_ratio: float = 0.5, source_entry=None) -> FidelityReport:
    """Full evaluation chain for one reconstructed image.

    ``recon_gray`` of None means the reconstruction was undecodable, which
    pins F to 0.
    """
    if recon_gray is None:
        return FidelityReport(0.0, 0.0, 0.0, 0.0, 0.0,
                              iss(0.0, relevant, f_min), relevant, True)
    if source_entry is None:
        pre_a = preprocess(source_gray)
        embeds_a = None
        var_a = None
    else:
        pre_a, embeds_a, var_a = source_entry
    pre_b = preprocess(recon_gray)
    f0, g_s = semantic_fidelity(pre_a, pre_b, provider, threshold, embeds_a)
    f1 = content_fidelity(pre_a, pre_b, block_px, var_threshold, var_ratio, var_a)
    f2 = ssim(pre_a, pre_b)
    score = fidelity_score(f0, f1, f2, weights)
    return FidelityReport(f0, f1, f2, g_s, score, iss(score, relevant, f_min),
                          relevant, False)
