"""Image containers, resampling, gradients, frequency splitting and patch extraction.

Images are numpy arrays of shape (height, width, 3), float64, nominal range
[0, 255].  Values may leave that range during optimization; they are clamped
only when written to disk.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage


def image_dims(img):
    """(width, height) of an image array."""
    return img.shape[1], img.shape[0]


def validate_image(img):
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image dimensions must be >= 1")
    return img


def load_image(path):
    """Load a PNG/JPEG file as a float64 (h, w, 3) array in [0, 255]."""
    with PILImage.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64)


def save_image(path, img):
    """Clamp to [0, 255], round to 8-bit and write a PNG."""
    validate_image(img)
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    PILImage.fromarray(out, mode="RGB").save(path)


@dataclass
class GradientField:
    """Forward-difference gradients, one plane pair per channel."""

    gx: np.ndarray  # (h, w, 3)
    gy: np.ndarray  # (h, w, 3)


@dataclass
class ColorAdjustment:
    """Per-channel gain/bias applied to a source patch before matching."""

    gain: np.ndarray  # (3,) in [1.0, 1.3]
    bias: np.ndarray  # (3,) in [-20, 20]

    @classmethod
    def identity(cls):
        return cls(gain=np.ones(3), bias=np.zeros(3))


@dataclass
class PatchTransform:
    """One nearest-neighbor-field entry.

    (sx, sy) is the top-left corner of the source patch in candidate-image
    coordinates (subpixel); with scale 1, theta 0 and no reflection the
    extraction is a plain block copy from there.
    """

    sx: float
    sy: float
    scale: float = 1.0
    theta: float = 0.0
    reflect: bool = False
    dist: float = np.inf
    adjust: ColorAdjustment = None

    def __post_init__(self):
        if self.adjust is None:
            self.adjust = ColorAdjustment.identity()


@dataclass
class Patch:
    """A z x z patch with colors and both gradient planes."""

    colors: np.ndarray  # (z, z, 3)
    gx: np.ndarray  # (z, z, 3)
    gy: np.ndarray  # (z, z, 3)

    @property
    def z(self):
        return self.colors.shape[0]


def _area_weights(n_in, n_out):
    """Row-stochastic (n_out, n_in) box-overlap weight matrix."""
    s = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * s, (i + 1) * s
        j0, j1 = int(np.floor(lo)), min(int(np.ceil(hi)), n_in)
        for j in range(j0, j1):
            w[i, j] = max(0.0, min(hi, j + 1) - max(lo, j))
    w /= w.sum(axis=1, keepdims=True)
    return w


def resample_area(img, out_w, out_h):
    """Area-averaging resample to exact output dims (antialiased shrink)."""
    validate_image(img)
    h, w = img.shape[:2]
    if out_w < 1 or out_h < 1:
        raise ValueError("output dims must be >= 1")
    wy = _area_weights(h, out_h)
    wx = _area_weights(w, out_w)
    # out[y, x, c] = sum_j sum_i wy[y, j] * img[j, i, c] * wx[x, i]
    return np.einsum("yj,jic,xi->yxc", wy, img, wx, optimize=True)


def resample_bilinear(img, out_w, out_h):
    """Bilinear resample to exact output dims, half-pixel-center convention."""
    validate_image(img)
    h, w = img.shape[:2]
    if out_w < 1 or out_h < 1:
        raise ValueError("output dims must be >= 1")
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def downsample(img, factor):
    """Antialiased (area-averaging) downsample by `factor` > 1."""
    if factor <= 1:
        raise ValueError(f"downsample factor must be > 1, got {factor}")
    h, w = img.shape[:2]
    out_w = max(1, int(round(w / factor)))
    out_h = max(1, int(round(h / factor)))
    return resample_area(img, out_w, out_h)


def upsample_bilinear(img, factor):
    """Bilinear upsample by `factor` > 1."""
    if factor <= 1:
        raise ValueError(f"upsample factor must be > 1, got {factor}")
    h, w = img.shape[:2]
    return resample_bilinear(img, int(round(w * factor)), int(round(h * factor)))


def gradient(img):
    """Forward-difference gradients per channel; last column/row is zero."""
    validate_image(img)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return GradientField(gx=gx, gy=gy)


def freq_split(img, base_w, base_h):
    """Split into (low, high) bands relative to a base resolution.

    low is the round-trip through the base resolution; high = img - low, so
    the two bands always sum back to the input exactly.
    """
    validate_image(img)
    h, w = img.shape[:2]
    if base_w > w or base_h > h:
        raise ValueError("base dims must not exceed image dims")
    low = resample_bilinear(resample_area(img, base_w, base_h), w, h)
    return low, img - low


def low_pass(c, img):
    """Blur by a round trip: shrink by factor c, then bilinear back up."""
    if c <= 1:
        raise ValueError(f"low_pass factor must be > 1, got {c}")
    h, w = img.shape[:2]
    small = downsample(img, c)
    return resample_bilinear(small, w, h)


def resize_closest(target_w, target_h, sample):
    """Uniformly rescale `sample` so its area is closest to the target area.

    Aspect ratio is preserved; no cropping.  Shrinking uses area averaging,
    growing uses bilinear.
    """
    if target_w < 1 or target_h < 1:
        raise ValueError("target dims must be >= 1")
    h, w = sample.shape[:2]
    s = np.sqrt((target_w * target_h) / (w * h))
    out_w = max(1, int(round(s * w)))
    out_h = max(1, int(round(s * h)))
    if out_w == w and out_h == h:
        return sample.copy()
    if s < 1:
        return resample_area(sample, out_w, out_h)
    return resample_bilinear(sample, out_w, out_h)


def _bilinear_at(plane_stack, xs, ys):
    """Sample (h, w, 3) stack at float coords (clamped), arrays xs/ys."""
    h, w = plane_stack.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    return (
        plane_stack[y0, x0] * (1 - fx) * (1 - fy)
        + plane_stack[y0, x1] * fx * (1 - fy)
        + plane_stack[y1, x0] * (1 - fx) * fy
        + plane_stack[y1, x1] * fx * fy
    )


def extract_patch(img, grad, t, z):
    """Extract the z x z source patch under a similarity transform.

    Rotation/scale/reflection act about the patch center; colors and both
    gradient planes are bilinearly sampled with replicate clamping at the
    image border.  A patch whose center falls outside the image is an error.
    """
    validate_image(img)
    if z < 2:
        raise ValueError("patch size must be >= 2")
    h, w = img.shape[:2]
    cc = (z - 1) / 2.0
    cx, cy = t.sx + cc, t.sy + cc
    if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
        raise ValueError(f"patch center ({cx:.1f}, {cy:.1f}) outside image")
    u = np.arange(z, dtype=np.float64) - cc
    v = np.arange(z, dtype=np.float64) - cc
    du, dv = np.meshgrid(u, v)  # du varies along x, dv along y
    if t.reflect:
        du = -du
    ct, st = np.cos(t.theta), np.sin(t.theta)
    xs = cx + t.scale * (ct * du - st * dv)
    ys = cy + t.scale * (st * du + ct * dv)
    colors = _bilinear_at(img, xs, ys)
    gx = _bilinear_at(grad.gx, xs, ys)
    gy = _bilinear_at(grad.gy, xs, ys)
    return Patch(colors=colors, gx=gx, gy=gy)
