"""End-to-end upsampling: geometric scale schedule, per-scale candidate
preparation, and the alternating search / merge / vote / blend / detail
injection loop."""

import csv
import logging
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correspond import init_nnfs, search, upsample_nnfs
from .errors import InputTooSmallError, NoSamplesError
from .fuse import (coherence_field, contribution, dump_map, merge,
                   screened_poisson, vote)
from .imgcore import (freq_split, low_pass, resample_area, resample_bilinear,
                      resize_closest, save_image)

log = logging.getLogger(__name__)

SCALE_STEP_BOUND = 1.2
ALPHA_DECAY = 0.8
ITERS_FIRST = 8
ITERS_LAST = 1


@dataclass
class ScaleSchedule:
    magnification: float
    n: int                 # number of scales
    c: float               # per-scale factor, magnification ** (1 / n)
    dims: list = field(default_factory=list)   # [(w, h)] for k = 0 .. n
    alphas: list = field(default_factory=list)  # injection weight, k = 1 .. n
    iters: list = field(default_factory=list)   # iterations, k = 1 .. n


def compute_schedule(magnification, width, height, patch_size=32,
                     alpha_decay=ALPHA_DECAY):
    """Geometric schedule of intermediate sizes from (width, height) up to
    the requested magnification.

    The number of scales is the smallest n with magnification <= 1.2 ** n,
    so every step's factor c = magnification ** (1/n) stays at most 1.2.
    Scale-k dims are round(c**k * original), keeping rounding error from
    accumulating across scales.  Iterations ramp down linearly from 8 at the
    first scale to 1 at the last; the detail-injection weight decays as
    0.8 ** (k - 1)."""
    if magnification <= 1.0:
        raise ValueError(f"magnification must be > 1, got {magnification}")
    if width < 1 or height < 1:
        raise ValueError("empty input image")
    n = max(1, math.ceil(math.log(magnification) / math.log(SCALE_STEP_BOUND)
                         - 1e-12))
    c = magnification ** (1.0 / n)
    sched = ScaleSchedule(magnification=magnification, n=n, c=c)
    sched.dims = [(int(round(c ** k * width)), int(round(c ** k * height)))
                  for k in range(n + 1)]
    w1, h1 = sched.dims[1]
    if min(w1, h1) < patch_size:
        raise InputTooSmallError(
            f"input {width}x{height} gives a first scale of {w1}x{h1}, "
            f"smaller than the {patch_size}-pixel patch; "
            f"use a larger input or a smaller patch size")
    for k in range(1, n + 1):
        sched.alphas.append(alpha_decay ** (k - 1))
        if n == 1:
            sched.iters.append(ITERS_FIRST)
        else:
            sched.iters.append(math.ceil(
                ITERS_FIRST - (ITERS_FIRST - ITERS_LAST) * (k - 1) / (n - 1)))
    return sched


def prepare_candidates(images, target_dims, c, patch_size):
    """Resize each sample near the working size (preserving aspect ratio)
    and low-pass a copy for the first search iteration of the scale.

    Returns (kept_indices, candidates, lowpass_candidates).  Samples that
    come out smaller than the patch size are dropped with a warning; if
    nothing survives a NoSamplesError is raised."""
    tw, th = target_dims
    kept, cands, lows = [], [], []
    for i, img in enumerate(images):
        cand = resize_closest(tw, th, img)
        ch, cw = cand.shape[:2]
        if cw < patch_size or ch < patch_size:
            warnings.warn(f"sample {i} resizes to {cw}x{ch}, smaller than "
                          f"the {patch_size}-pixel patch; dropped",
                          RuntimeWarning)
            continue
        kept.append(i)
        cands.append(cand)
        lows.append(low_pass(c, cand))
    if not cands:
        raise NoSamplesError("no sample survives resizing to the working "
                             "size at the patch size")
    return kept, cands, lows


def inject(base, current, alpha, factor):
    """Constrain the low frequencies of the working image toward the input.

    The working image is split at the input's band; its high band is kept
    and its low band is blended with the plain upsampled input:
    high + alpha * upsample(base) + (1 - alpha) * low, computed as
    current + alpha * (upsample(base) - low) so alpha = 0 is exactly the
    identity."""
    h0, w0 = base.shape[:2]
    h, w = current.shape[:2]
    if (w, h) != (int(round(factor * w0)), int(round(factor * h0))):
        raise ValueError(
            f"working image {w}x{h} does not match factor {factor} applied "
            f"to input {w0}x{h0}")
    low, _ = freq_split(current, w0, h0)
    up = resample_bilinear(base, w, h)
    return current + alpha * (up - low)


def energy(target, base, nnfs, nnf_map, prev_map, cfg):
    """Diagnostic energy terms: mean squared reconstruction error of the
    area-downsampled working image against the input, and the mean selected
    patch energy (distance plus weighted coherence and contribution)."""
    h0, w0 = base.shape[:2]
    down = resample_area(target, w0, h0)
    recon = float(np.mean((down - base) ** 2))
    patch = 0.0
    for nnf in nnfs:
        sel = nnf_map == nnf.cand_index
        if not np.any(sel):
            continue
        term = (nnf.dist
                + cfg.alpha_coh * coherence_field(nnf, cfg.coherence_window)
                + cfg.alpha_con * contribution(nnf.cand_index, prev_map))
        patch += float(np.sum(term[sel]))
    return recon, patch / nnf_map.size


def hallucinate(base, samples, magnification, cfg):
    """Upsample `base` by `magnification` using the sample images.

    The image grows through the schedule's scales; at each scale the
    nearest-neighbor fields are carried over (or initialized at the first
    scale), then each iteration searches, picks a candidate per patch, votes
    colors and gradients, blends them with a screened Poisson solve, and
    re-injects the input's low frequencies."""
    base = np.asarray(base, np.float64)
    h0, w0 = base.shape[:2]
    sched = compute_schedule(magnification, w0, h0, cfg.patch_size,
                             cfg.alpha_decay)
    images = [e.image for e in samples.entries]
    kept, _, _ = prepare_candidates(images, sched.dims[1], sched.c,
                                    cfg.patch_size)
    images = [images[i] for i in kept]

    writer = csvf = None
    if cfg.log_csv:
        csvf = open(cfg.log_csv, "w", newline="")
        writer = csv.writer(csvf)
        writer.writerow(["scale", "iteration", "recon", "patch"]
                        + [f"contrib_{m}" for m in range(len(images))])

    current = base
    nnfs = None
    prev_map = None
    try:
        for k in range(1, sched.n + 1):
            wk, hk = sched.dims[k]
            current = resample_bilinear(current, wk, hk)
            _, cands, lows = prepare_candidates(images, (wk, hk), sched.c,
                                                cfg.patch_size)
            if nnfs is None:
                nnfs = init_nnfs(current, cands, cfg)
            else:
                nnfs = upsample_nnfs(
                    nnfs, sched.c, (wk, hk),
                    [(c.shape[1], c.shape[0]) for c in cands])
            alpha = sched.alphas[k - 1]
            for it in range(sched.iters[k - 1]):
                nnfs = search(current, nnfs, lows if it == 0 else cands, cfg)
                nnf_map = merge(nnfs, prev_map, cfg)
                vt = vote((wk, hk), nnf_map, nnfs, cands, cfg)
                current = screened_poisson(vt, cfg)
                current = inject(base, current, alpha,
                                 sched.c ** k)
                if writer is not None:
                    recon, patch = energy(current, base, nnfs, nnf_map,
                                          prev_map, cfg)
                    writer.writerow(
                        [k, it + 1, f"{recon:.6f}", f"{patch:.6f}"]
                        + [f"{contribution(m, nnf_map):.6f}"
                           for m in range(len(images))])
                prev_map = nnf_map
                log.info("scale %d/%d iter %d/%d done", k, sched.n, it + 1,
                         sched.iters[k - 1])
            if cfg.dump_intermediate:
                os.makedirs(cfg.dump_intermediate, exist_ok=True)
                save_image(os.path.join(cfg.dump_intermediate,
                                        f"scale_{k:02d}.png"), current)
                dump_map(prev_map, os.path.join(cfg.dump_intermediate,
                                                f"map_{k:02d}.png"))
            if cfg.dump_nnf:
                os.makedirs(cfg.dump_nnf, exist_ok=True)
                for nnf in nnfs:
                    nnf.dump(os.path.join(
                        cfg.dump_nnf, f"scale_{k:02d}_cand_{nnf.cand_index}.nnf"))
    finally:
        if csvf is not None:
            csvf.close()
    return np.clip(current, 0.0, 255.0)
