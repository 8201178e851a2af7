"""Quality measurement: PSNR, reconstruction error against the input,
synthetic degradations for restoration tests, Bradley-Terry ranking from
pairwise comparisons, and a self-contained round-trip oracle."""

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.sparse.csgraph import connected_components

from .config import HallucinationConfig
from .imgcore import downsample
from .pipeline import hallucinate
from .samples import SampleEntry, SampleSet

PEAK = 255.0


def psnr(a, b):
    """Peak signal-to-noise ratio in dB over all channels; inf when the
    images are identical."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def reconstruction_error(output, base, magnification):
    """RMS difference between the output area-downsampled by the
    magnification and the original input."""
    down = downsample(np.asarray(output, np.float64), magnification)
    base = np.asarray(base, np.float64)
    if down.shape != base.shape:
        raise ValueError(f"downsampled output {down.shape} does not match "
                         f"input {base.shape}")
    return float(np.sqrt(np.mean((down - base) ** 2)))


def bicubic_upsample(img, width, height):
    """Plain bicubic resize (comparison baseline), computed per channel in
    float to avoid quantization."""
    out = np.empty((height, width, 3))
    for c in range(3):
        ch = Image.fromarray(np.asarray(img[..., c], np.float32), mode="F")
        out[..., c] = np.asarray(
            ch.resize((width, height), Image.Resampling.BICUBIC), np.float64)
    return np.clip(out, 0.0, 255.0)


def _motion_kernel(length, angle):
    if length < 1:
        raise ValueError(f"blur length must be >= 1, got {length}")
    size = int(length) | 1
    k = np.zeros((size, size))
    c = size // 2
    dx, dy = math.cos(angle), math.sin(angle)
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0,
                         max(1, int(round(length)) * 4)):
        x, y = c + t * dx, c + t * dy
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        for (yy, xx, wgt) in ((y0, x0, (1 - fx) * (1 - fy)),
                              (y0, x0 + 1, fx * (1 - fy)),
                              (y0 + 1, x0, (1 - fx) * fy),
                              (y0 + 1, x0 + 1, fx * fy)):
            if 0 <= yy < size and 0 <= xx < size:
                k[yy, xx] += wgt
    return k / k.sum()


def degrade(img, kind, *, sigma=10.0, length=9, angle=0.0, seed=0):
    """Apply a synthetic degradation: 'noise' adds seeded Gaussian noise of
    the given sigma; 'blur' convolves with a normalized line kernel of the
    given length and angle (replicated boundaries).  Output stays in
    [0, 255]."""
    img = np.asarray(img, np.float64)
    if kind == "noise":
        rng = np.random.default_rng(seed)
        out = img + rng.normal(0.0, sigma, img.shape)
    elif kind == "blur":
        k = _motion_kernel(length, angle)
        out = np.empty_like(img)
        for c in range(3):
            out[..., c] = ndimage.convolve(img[..., c], k, mode="nearest")
    else:
        raise ValueError(f"unknown degradation {kind!r}; use 'noise' or 'blur'")
    return np.clip(out, 0.0, 255.0)


def bt_scores(counts, baseline=0, tol=1e-8, max_iter=100000):
    """Bradley-Terry strengths from a pairwise win-count matrix, fitted with
    minorization-maximization updates.

    counts[i, j] is how often item i beat item j.  Returns log-strength
    scores shifted so scores[baseline] == 0; the comparison graph must be
    connected or the fit is not identifiable (ValueError)."""
    counts = np.asarray(counts, np.float64)
    n = counts.shape[0]
    if counts.shape != (n, n):
        raise ValueError("counts must be square")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    games = counts + counts.T
    ncomp, labels = connected_components(games > 0, directed=False)
    if ncomp > 1:
        groups = [list(np.flatnonzero(labels == g)) for g in range(ncomp)]
        raise ValueError(f"comparison graph is disconnected: {groups}")
    wins = counts.sum(axis=1)
    p = np.ones(n)
    for _ in range(max_iter):
        denom = (games / (p[:, None] + p[None, :] + np.eye(n))).sum(axis=1)
        newp = np.where(denom > 0, wins / np.maximum(denom, 1e-300), p)
        newp = np.maximum(newp, 1e-300)
        newp /= np.exp(np.mean(np.log(newp)))
        if np.max(np.abs(np.log(newp) - np.log(p))) < tol:
            p = newp
            break
        p = newp
    else:
        raise ValueError("Bradley-Terry fit did not converge")
    scores = np.log(p)
    return scores - scores[baseline]


def bt_probability(scores, i, j):
    """Model probability that item i beats item j."""
    return float(np.exp(scores[i]) / (np.exp(scores[i]) + np.exp(scores[j])))


@dataclass
class SelfOracleReport:
    magnification: float
    psnr_result: float
    psnr_bicubic: float
    gain: float
    reconstruction_rms: float

    def __str__(self):
        return (f"{self.magnification:g}x round trip: "
                f"PSNR {self.psnr_result:.2f} dB "
                f"(bicubic {self.psnr_bicubic:.2f} dB, "
                f"gain {self.gain:+.2f} dB), "
                f"reconstruction RMS {self.reconstruction_rms:.2f}")


def self_oracle(truth, magnification, cfg=None):
    """Round-trip check with the ground truth as the only sample: the truth
    is downsampled by the magnification and upsampled back, so the ideal
    patches are known to exist.  The usual duplicate guard does not apply —
    using the truth is the point here."""
    if cfg is None:
        cfg = HallucinationConfig()
    truth = np.asarray(truth, np.float64)
    base = downsample(truth, magnification)
    samples = SampleSet(entries=[SampleEntry(image=truth, source_id="truth")])
    result = hallucinate(base, samples, magnification, cfg)
    rh, rw = result.shape[:2]
    truth_c = truth
    if truth.shape[:2] != (rh, rw):
        truth_c = bicubic_upsample(truth, rw, rh)
    cubic = bicubic_upsample(base, rw, rh)
    p_res = psnr(result, truth_c)
    p_cub = psnr(cubic, truth_c)
    return SelfOracleReport(
        magnification=magnification, psnr_result=p_res, psnr_bicubic=p_cub,
        gain=p_res - p_cub,
        reconstruction_rms=reconstruction_error(result, base, magnification))
