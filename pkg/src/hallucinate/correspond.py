"""Nearest-neighbor-field construction: patch distance with color adjustment,
radius-limited generalized PatchMatch per candidate image, NNF initialization
and cross-scale upsampling."""

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import NoSamplesError
from .imgcore import (ColorAdjustment, Patch, PatchTransform, gradient,
                      resample_area)


def patch_distance(p, q, lam=5.0):
    """L2 color distance plus lam times L2 distance of both gradient planes."""
    if p.z != q.z:
        raise ValueError(f"patch sizes differ: {p.z} vs {q.z}")
    d = np.sum((p.colors - q.colors) ** 2)
    d += lam * (np.sum((p.gx - q.gx) ** 2) + np.sum((p.gy - q.gy) ** 2))
    return float(d)


def compute_color_adjustment(source, target, gain_min=1.0, gain_max=1.3,
                             bias_max=20.0, sigma_floor=5.0):
    """Per-channel gain/bias matching source moments to the target's.

    Gain is frozen at 1 when the source channel has too little variation,
    so flat patches are shifted but never amplified."""
    gain = np.ones(3)
    bias = np.zeros(3)
    for c in range(3):
        mu_s = float(np.mean(source.colors[..., c]))
        mu_t = float(np.mean(target.colors[..., c]))
        sig_s = float(np.std(source.colors[..., c]))
        sig_t = float(np.std(target.colors[..., c]))
        if sig_s >= sigma_floor:
            gain[c] = min(max(sig_t / sig_s, gain_min), gain_max)
        bias[c] = min(max(mu_t - gain[c] * mu_s, -bias_max), bias_max)
    return ColorAdjustment(gain=gain, bias=bias)


def apply_color_adjustment(patch, adj):
    """g * colors + b per channel; gradients scale by g (bias cancels)."""
    return Patch(colors=patch.colors * adj.gain + adj.bias,
                 gx=patch.gx * adj.gain,
                 gy=patch.gy * adj.gain)


@dataclass
class NNF:
    """Per-target-anchor transform field into one candidate image.

    Grid dims are (target_h - z + 1) x (target_w - z + 1); entries are stored
    as parallel arrays for the kernels."""

    sx: np.ndarray       # (gh, gw) source top-left x, subpixel
    sy: np.ndarray
    scale: np.ndarray
    theta: np.ndarray
    reflect: np.ndarray  # uint8
    dist: np.ndarray
    gain: np.ndarray     # (gh, gw, 3)
    bias: np.ndarray
    cand_index: int
    target_w: int
    target_h: int
    cand_w: int
    cand_h: int
    z: int

    @property
    def grid_shape(self):
        return self.sx.shape

    @classmethod
    def _blank(cls, target_dims, cand_dims, z, cand_index):
        tw, th = target_dims
        cw, ch = cand_dims
        gh, gw = th - z + 1, tw - z + 1
        if gh < 1 or gw < 1 or cw < z or ch < z:
            raise ValueError("target/candidate smaller than patch size")
        return cls(sx=np.zeros((gh, gw)), sy=np.zeros((gh, gw)),
                   scale=np.ones((gh, gw)), theta=np.zeros((gh, gw)),
                   reflect=np.zeros((gh, gw), np.uint8),
                   dist=np.full((gh, gw), np.inf),
                   gain=np.ones((gh, gw, 3)), bias=np.zeros((gh, gw, 3)),
                   cand_index=cand_index, target_w=tw, target_h=th,
                   cand_w=cw, cand_h=ch, z=z)

    @classmethod
    def identity(cls, target_dims, cand_dims, z, cand_index=0):
        nnf = cls._blank(target_dims, cand_dims, z, cand_index)
        gh, gw = nnf.grid_shape
        yy, xx = np.mgrid[0:gh, 0:gw].astype(np.float64)
        nnf.sx = np.minimum(xx, nnf.cand_w - z)
        nnf.sy = np.minimum(yy, nnf.cand_h - z)
        return nnf

    @classmethod
    def random(cls, target_dims, cand_dims, z, cand_index=0, seed=0):
        nnf = cls._blank(target_dims, cand_dims, z, cand_index)
        gh, gw = nnf.grid_shape
        rng = np.random.default_rng(seed)
        nnf.sx = rng.integers(0, nnf.cand_w - z + 1, (gh, gw)).astype(np.float64)
        nnf.sy = rng.integers(0, nnf.cand_h - z + 1, (gh, gw)).astype(np.float64)
        return nnf

    def copy(self):
        return NNF(sx=self.sx.copy(), sy=self.sy.copy(),
                   scale=self.scale.copy(), theta=self.theta.copy(),
                   reflect=self.reflect.copy(), dist=self.dist.copy(),
                   gain=self.gain.copy(), bias=self.bias.copy(),
                   cand_index=self.cand_index, target_w=self.target_w,
                   target_h=self.target_h, cand_w=self.cand_w,
                   cand_h=self.cand_h, z=self.z)

    def entry(self, x, y):
        """The PatchTransform at anchor (x, y)."""
        return PatchTransform(
            sx=float(self.sx[y, x]), sy=float(self.sy[y, x]),
            scale=float(self.scale[y, x]), theta=float(self.theta[y, x]),
            reflect=bool(self.reflect[y, x]), dist=float(self.dist[y, x]),
            adjust=ColorAdjustment(gain=self.gain[y, x].copy(),
                                   bias=self.bias[y, x].copy()))

    def dump(self, path):
        """Binary diagnostic dump: 16-byte header then one record per entry."""
        gh, gw = self.grid_shape
        with open(path, "wb") as f:
            f.write(b"NNF1")
            f.write(struct.pack("<III", gw, gh, self.cand_index))
            rec = struct.Struct("<IIffffBf")
            for y in range(gh):
                for x in range(gw):
                    f.write(rec.pack(x, y, self.sx[y, x], self.sy[y, x],
                                     self.scale[y, x], self.theta[y, x],
                                     int(self.reflect[y, x]),
                                     self.dist[y, x]))


def _recompute(nnf, target, tgrad, cand, cgrad, cfg):
    K.nnf_recompute(target, tgrad.gx, tgrad.gy, cand, cgrad.gx, cgrad.gy,
                    nnf.sx, nnf.sy, nnf.scale, nnf.theta, nnf.reflect,
                    nnf.dist, nnf.gain, nnf.bias,
                    nnf.z, cfg.lam, 1 if cfg.color_adjust else 0,
                    cfg.gain_min, cfg.gain_max, cfg.bias_max, cfg.sigma_floor)


def _radius_schedule(radius):
    radii = []
    r = int(radius)
    while r >= 1:
        radii.append(float(r))
        r //= 2
    return np.asarray(radii if radii else [1.0])


def search(target, nnfs, candidates, cfg):
    """Generalized PatchMatch over each candidate independently.

    Distance caches are rebuilt against the current target first, then
    cfg.pm_iters alternating scan passes of propagation plus random search
    run per candidate.  Entries are replaced only on strict improvement.
    When cfg.search_radius > 0, random-search positions stay within a box of
    that radius around the entry's previous position; a non-positive radius
    searches the whole candidate image (test mode)."""
    tgrad = gradient(target)
    out = []
    for i, nnf in enumerate(nnfs):
        nnf = nnf.copy()
        cand = np.ascontiguousarray(candidates[i])
        cgrad = gradient(cand)
        if cfg.search_radius and cfg.search_radius > 0:
            radii = _radius_schedule(cfg.search_radius)
        else:
            radii = _radius_schedule(max(nnf.cand_w, nnf.cand_h))
        _recompute(nnf, target, tgrad, cand, cgrad, cfg)
        for p in range(cfg.pm_iters):
            K.pm_pass(target, tgrad.gx, tgrad.gy, cand, cgrad.gx, cgrad.gy,
                      nnf.sx, nnf.sy, nnf.scale, nnf.theta, nnf.reflect,
                      nnf.dist, nnf.gain, nnf.bias,
                      nnf.z, cfg.lam, 1 if cfg.color_adjust else 0,
                      cfg.gain_min, cfg.gain_max, cfg.bias_max,
                      cfg.sigma_floor,
                      cfg.scale_min, cfg.scale_max, cfg.theta_max,
                      1 if cfg.allow_reflect else 0,
                      radii, p % 2, cfg.seed, nnf.cand_index, p, 2.0)
        out.append(nnf)
    return out


def _flow_pyramid(target, cand, z):
    """Coarse-to-fine dense translation field from target into cand."""
    half = 3
    levels = [(target, cand)]
    while levels[-1][0].shape[1] > 64 and len(levels) < 4:
        t, c = levels[-1]
        t2 = resample_area(t, max(1, t.shape[1] // 2), max(1, t.shape[0] // 2))
        c2 = resample_area(c, max(1, c.shape[1] // 2), max(1, c.shape[0] // 2))
        levels.append((t2, c2))
    t, c = levels[-1]
    fx, fy = K.flow_exhaustive(np.ascontiguousarray(t), np.ascontiguousarray(c), half)
    for t, c in reversed(levels[:-1]):
        h, w = t.shape[:2]
        # nearest-neighbor upsample of the flow, doubled in magnitude
        ys = np.minimum((np.arange(h) // 2), fx.shape[0] - 1)
        xs = np.minimum((np.arange(w) // 2), fx.shape[1] - 1)
        fx = 2.0 * fx[np.ix_(ys, xs)]
        fy = 2.0 * fy[np.ix_(ys, xs)]
        fx, fy = K.flow_refine(np.ascontiguousarray(t), np.ascontiguousarray(c),
                               fx, fy, half, 2)
    return fx, fy


def init_nnfs(target, candidates, cfg):
    """Initialize one NNF per candidate with a coarse-to-fine dense matcher.

    Exhaustive translation matching at the coarsest pyramid level (<= 64 px
    wide), propagated and refined (+-2 px) at each finer level; transforms
    start at identity scale/rotation/no-reflection.  Candidates smaller than
    the patch size are skipped with a warning."""
    z = cfg.patch_size
    th, tw = target.shape[:2]
    tgrad = gradient(target)
    out = []
    for m, cand in enumerate(candidates):
        ch, cw = cand.shape[:2]
        if cw < z or ch < z:
            warnings.warn(f"candidate {m} ({cw}x{ch}) smaller than patch "
                          f"size {z}; skipped", RuntimeWarning)
            continue
        fx, fy = _flow_pyramid(target, cand, z)
        nnf = NNF._blank((tw, th), (cw, ch), z, m)
        gh, gw = nnf.grid_shape
        yy, xx = np.mgrid[0:gh, 0:gw]
        nnf.sx = np.clip(xx + fx[:gh, :gw], 0, cw - z).astype(np.float64)
        nnf.sy = np.clip(yy + fy[:gh, :gw], 0, ch - z).astype(np.float64)
        cand = np.ascontiguousarray(cand)
        _recompute(nnf, target, tgrad, cand, gradient(cand), cfg)
        out.append(nnf)
    if not out:
        raise NoSamplesError("all candidates smaller than the patch size")
    return out


def upsample_nnfs(nnfs, c, new_target_dims, new_cand_dims):
    """Carry NNFs to the next scale.

    Each new anchor inherits the nearest old anchor's transform with the
    source position scaled by c; distances are invalidated (rebuilt by the
    next search call)."""
    if c <= 1:
        raise ValueError(f"scale step must be > 1, got {c}")
    tw, th = new_target_dims
    out = []
    for i, old in enumerate(nnfs):
        cw, ch = new_cand_dims[i]
        nnf = NNF._blank((tw, th), (cw, ch), old.z, old.cand_index)
        gh, gw = nnf.grid_shape
        ogh, ogw = old.grid_shape
        xs = np.clip(np.rint(np.arange(gw) / c).astype(np.intp), 0, ogw - 1)
        ys = np.clip(np.rint(np.arange(gh) / c).astype(np.intp), 0, ogh - 1)
        sel = np.ix_(ys, xs)
        nnf.sx = np.clip(old.sx[sel] * c, 0, cw - old.z)
        nnf.sy = np.clip(old.sy[sel] * c, 0, ch - old.z)
        nnf.scale = old.scale[sel].copy()
        nnf.theta = old.theta[sel].copy()
        nnf.reflect = old.reflect[sel].copy()
        nnf.gain = old.gain[sel].copy()
        nnf.bias = old.bias[sel].copy()
        nnf.dist = np.full((gh, gw), np.inf)
        out.append(nnf)
    return out
