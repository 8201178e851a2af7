"""Fusing per-candidate NNFs into one image: coherence/contribution-weighted
candidate selection, smoothing of the selection map, coherency-weighted
voting of colors and gradients, and a screened Poisson blend."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels as K
from .errors import SolverError

POS_TOL = 2.0
SCALE_TOL = 0.01
THETA_TOL = math.pi / 20.0
MIN_VOTE_WEIGHT = 1e-4


def check_coherence(t1, anchor1, t2, anchor2,
                    pos_tol=POS_TOL, scale_tol=SCALE_TOL, theta_tol=THETA_TOL):
    """Whether two anchors' transforms agree up to small tolerances.

    Positions are compared as offsets relative to each transform's own
    anchor, so a rigidly shifted field is fully coherent."""
    dx = (t1.sx - anchor1[0]) - (t2.sx - anchor2[0])
    dy = (t1.sy - anchor1[1]) - (t2.sy - anchor2[1])
    if abs(dx) > pos_tol or abs(dy) > pos_tol:
        return False
    if abs(t1.scale - t2.scale) > scale_tol:
        return False
    if abs(t1.theta - t2.theta) > theta_tol:
        return False
    return bool(t1.reflect) == bool(t2.reflect)


def coherence(x, y, nnf, window=33):
    """Negative fraction of same-candidate neighbors (within a centered
    window) whose transforms agree with the one at (x, y); in [-1, 0]."""
    gh, gw = nnf.grid_shape
    half = window // 2
    t = nnf.entry(x, y)
    cnt = tot = 0
    for ny in range(max(0, y - half), min(gh, y + half + 1)):
        for nx in range(max(0, x - half), min(gw, x + half + 1)):
            if nx == x and ny == y:
                continue
            tot += 1
            if check_coherence(t, (x, y), nnf.entry(nx, ny), (nx, ny)):
                cnt += 1
    return -cnt / tot if tot else 0.0


def coherence_field(nnf, window=33):
    """coherence() for every anchor at once."""
    return K.coherence_map(nnf.sx, nnf.sy, nnf.scale, nnf.theta, nnf.reflect,
                           window, POS_TOL, SCALE_TOL, THETA_TOL)


def contribution(m, prev_map):
    """Fraction of anchors the candidate m covered in the previous selection
    map; 0 when there is no previous map yet."""
    if prev_map is None or prev_map.size == 0:
        return 0.0
    return float(np.count_nonzero(prev_map == m)) / prev_map.size


def majority_smooth(nnf_map, kernel):
    """Replace every label by the most frequent label in a kernel-sized box
    around it (ties go to the smallest label).  Box counts come from
    per-label integral images."""
    gh, gw = nnf_map.shape
    half_lo = kernel // 2
    half_hi = (kernel - 1) // 2
    labels = int(nnf_map.max()) + 1
    counts = np.empty((labels, gh, gw))
    for m in range(labels):
        ind = (nnf_map == m).astype(np.float64)
        s = np.zeros((gh + 1, gw + 1))
        np.cumsum(np.cumsum(ind, axis=0), axis=1, out=s[1:, 1:])
        y0 = np.clip(np.arange(gh) - half_lo, 0, gh)
        y1 = np.clip(np.arange(gh) + half_hi + 1, 0, gh)
        x0 = np.clip(np.arange(gw) - half_lo, 0, gw)
        x1 = np.clip(np.arange(gw) + half_hi + 1, 0, gw)
        counts[m] = (s[np.ix_(y1, x1)] - s[np.ix_(y0, x1)]
                     - s[np.ix_(y1, x0)] + s[np.ix_(y0, x0)])
    return np.argmax(counts, axis=0).astype(np.int32)


def merge(nnfs, prev_map, cfg, smooth=True):
    """Pick, per anchor, the candidate minimizing cached patch distance plus
    weighted coherence and contribution penalties, then optionally smooth
    the selection map with a patch-sized majority filter."""
    energy = np.stack([
        nnf.dist
        + cfg.alpha_coh * coherence_field(nnf, cfg.coherence_window)
        + cfg.alpha_con * contribution(nnf.cand_index, prev_map)
        for nnf in nnfs])
    nnf_map = np.argmin(energy, axis=0).astype(np.int32)
    if smooth and len(nnfs) > 1:
        nnf_map = majority_smooth(nnf_map, cfg.patch_size)
    return nnf_map


@dataclass
class VoteTarget:
    colors: np.ndarray   # (h, w, 3) weighted-average colors
    gx: np.ndarray       # (h, w, 3) weighted-average x-gradients
    gy: np.ndarray
    weights: np.ndarray  # (h, w) accumulated weight per pixel


def _stack_candidates(nnfs, candidates):
    from .imgcore import gradient
    m = len(candidates)
    hmax = max(c.shape[0] for c in candidates)
    wmax = max(c.shape[1] for c in candidates)
    cimgs = np.zeros((m, hmax, wmax, 3))
    cgxs = np.zeros((m, hmax, wmax, 3))
    cgys = np.zeros((m, hmax, wmax, 3))
    cdims = np.zeros((m, 2), np.int64)
    for i, c in enumerate(candidates):
        h, w = c.shape[:2]
        g = gradient(c)
        cimgs[i, :h, :w] = c
        cgxs[i, :h, :w] = g.gx
        cgys[i, :h, :w] = g.gy
        cdims[i] = (h, w)
    return cimgs, cgxs, cgys, cdims


def vote(target_dims, nnf_map, nnfs, candidates, cfg):
    """Per-pixel weighted average of colors and gradients over all selected
    patches covering the pixel; each patch's weight is its anchor's
    coherency score (fraction of agreeing same-candidate neighbors among
    anchors that kept their selected candidate), floored at 1e-4."""
    tw, th = target_dims
    sxs = np.stack([n.sx for n in nnfs])
    sys_ = np.stack([n.sy for n in nnfs])
    scs = np.stack([n.scale for n in nnfs])
    ths = np.stack([n.theta for n in nnfs])
    rfs = np.stack([n.reflect for n in nnfs])
    gains = np.stack([n.gain for n in nnfs])
    biases = np.stack([n.bias for n in nnfs])
    weights = K.vote_weights(nnf_map, sxs, sys_, scs, ths, rfs,
                             cfg.coherence_window, POS_TOL, SCALE_TOL,
                             THETA_TOL)
    weights = np.clip(weights, MIN_VOTE_WEIGHT, 1.0)
    cimgs, cgxs, cgys, cdims = _stack_candidates(nnfs, candidates)
    colors, gx, gy, wsum = K.vote_gather(
        nnf_map, sxs, sys_, scs, ths, rfs, gains, biases, weights,
        cimgs, cgxs, cgys, cdims, nnfs[0].z, th, tw)
    colors /= wsum[..., None]
    gx /= wsum[..., None]
    gy /= wsum[..., None]
    return VoteTarget(colors=colors, gx=gx, gy=gy, weights=wsum)


def _grad_x(u):
    g = np.zeros_like(u)
    g[:, :-1] = u[:, 1:] - u[:, :-1]
    return g


def _grad_y(u):
    g = np.zeros_like(u)
    g[:-1, :] = u[1:, :] - u[:-1, :]
    return g


def _grad_x_t(v):
    g = np.zeros_like(v)
    g[:, 0] = -v[:, 0]
    g[:, 1:-1] = v[:, :-2] - v[:, 1:-1]
    g[:, -1] = v[:, -2]
    return g


def _grad_y_t(v):
    g = np.zeros_like(v)
    g[0, :] = -v[0, :]
    g[1:-1, :] = v[:-2, :] - v[1:-1, :]
    g[-1, :] = v[-2, :]
    return g


def screened_poisson(vote_target, cfg):
    """Blend voted colors and gradients by minimizing
    sum (I - colors)^2 + lambda * |grad I - (gx, gy)|^2 per channel,
    with natural (Neumann) boundaries, via conjugate gradients."""
    lam = cfg.poisson_lambda
    h, w = vote_target.colors.shape[:2]
    n = h * w

    def apply_a(flat):
        u = flat.reshape(h, w)
        r = u + lam * (_grad_x_t(_grad_x(u)) + _grad_y_t(_grad_y(u)))
        return r.ravel()

    op = LinearOperator((n, n), matvec=apply_a, dtype=np.float64)
    out = np.empty((h, w, 3))
    for c in range(3):
        b = (vote_target.colors[..., c]
             + lam * (_grad_x_t(vote_target.gx[..., c])
                      + _grad_y_t(vote_target.gy[..., c])))
        x0 = vote_target.colors[..., c].ravel()
        sol, info = cg(op, b.ravel(), x0=x0, rtol=0.0, atol=cfg.poisson_tol,
                       maxiter=cfg.poisson_maxiter)
        res = float(np.max(np.abs(b.ravel() - apply_a(sol))))
        if info != 0 or res > cfg.poisson_tol:
            raise SolverError(
                f"screened Poisson solve did not converge (channel {c})", res)
        out[..., c] = sol.reshape(h, w)
    return out


def screened_poisson_dense(vote_target, lam=5.0):
    """Direct dense solve of the same normal equations; reference for small
    images only (quadratic memory in pixel count)."""
    h, w = vote_target.colors.shape[:2]
    n = h * w
    idx = np.arange(n).reshape(h, w)
    gxm = np.zeros((n, n))
    gym = np.zeros((n, n))
    for y in range(h):
        for x in range(w):
            if x + 1 < w:
                gxm[idx[y, x], idx[y, x + 1]] = 1.0
                gxm[idx[y, x], idx[y, x]] = -1.0
            if y + 1 < h:
                gym[idx[y, x], idx[y + 1, x]] = 1.0
                gym[idx[y, x], idx[y, x]] = -1.0
    a = np.eye(n) + lam * (gxm.T @ gxm + gym.T @ gym)
    out = np.empty((h, w, 3))
    for c in range(3):
        b = (vote_target.colors[..., c].ravel()
             + lam * (gxm.T @ vote_target.gx[..., c].ravel()
                      + gym.T @ vote_target.gy[..., c].ravel()))
        out[..., c] = np.linalg.solve(a, b).reshape(h, w)
    return out


def dump_map(nnf_map, path):
    """Write the selection map as an indexed 8-bit PNG (diagnostic)."""
    from PIL import Image
    img = Image.fromarray(nnf_map.astype(np.uint8), mode="P")
    palette = []
    for m in range(256):
        palette += [(m * 53) % 256, (m * 101) % 256, (m * 197) % 256]
    img.putpalette(palette)
    img.save(path)
