"""Numba kernels for the hot loops: patch evaluation, PatchMatch passes,
coherence counting, voting and dense-flow initialization.

All kernels are deterministic: random numbers come from a counter-based
splitmix64 hash seeded per (seed, candidate, pass, anchor), so results do not
depend on thread scheduling.
"""

import numpy as np
from numba import njit, prange

BIG = 1e30

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always", cache=True)
def _sm_next(state):
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(inline="always", cache=True)
def _sm_unit(state):
    """Advance state; return (state, uniform float in [0, 1))."""
    state, z = _sm_next(state)
    return state, (z >> np.uint64(11)) * _INV53


@njit(inline="always", cache=True)
def _anchor_seed(seed, cand, pass_idx, idx):
    s = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15)
    s ^= np.uint64(cand + 1) * np.uint64(0xC2B2AE3D27D4EB4F)
    s ^= np.uint64(pass_idx + 1) * np.uint64(0x165667B19E3779F9)
    s ^= np.uint64(idx) * np.uint64(0x27D4EB2F165667C5)
    return s


@njit(inline="always", cache=True)
def _sample3(img, xs, ys, cw, ch):
    """Clamped bilinear sample of a 3-channel image; returns a 3-tuple."""
    if xs < 0.0:
        xs = 0.0
    elif xs > cw - 1:
        xs = cw - 1.0
    if ys < 0.0:
        ys = 0.0
    elif ys > ch - 1:
        ys = ch - 1.0
    x0 = int(xs)
    y0 = int(ys)
    x1 = x0 + 1 if x0 + 1 < cw else x0
    y1 = y0 + 1 if y0 + 1 < ch else y0
    fx = xs - x0
    fy = ys - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    s0 = (w00 * img[y0, x0, 0] + w01 * img[y0, x1, 0]
          + w10 * img[y1, x0, 0] + w11 * img[y1, x1, 0])
    s1 = (w00 * img[y0, x0, 1] + w01 * img[y0, x1, 1]
          + w10 * img[y1, x0, 1] + w11 * img[y1, x1, 1])
    s2 = (w00 * img[y0, x0, 2] + w01 * img[y0, x1, 2]
          + w10 * img[y1, x0, 2] + w11 * img[y1, x1, 2])
    return s0, s1, s2


@njit(inline="always", cache=True)
def _eval_entry(timg, tgx, tgy, ax, ay,
                cimg, cgx, cgy,
                psx, psy, psc, pth, prf,
                z, lam, adjust, gmin, gmax, bmax, sfloor,
                best, prescreen, out_gb):
    """Distance of the adjusted source patch (psx..prf) vs the target patch
    anchored at (ax, ay).  Returns BIG when the source patch center is out of
    bounds or the distance provably exceeds `best`; otherwise returns the
    exact distance and writes gain/bias into out_gb (g0 g1 g2 b0 b1 b2).

    `prescreen` > 0 enables a heuristic reject: a mean-corrected SSD over a
    subsampled grid must not exceed prescreen * best, otherwise the proposal
    is discarded without a full evaluation."""
    ch, cw = cimg.shape[0], cimg.shape[1]
    cc = (z - 1) * 0.5
    cx = psx + cc
    cy = psy + cc
    if cx < 0.0 or cx > cw - 1 or cy < 0.0 or cy > ch - 1:
        return BIG

    fast = (psc == 1.0 and pth == 0.0 and prf == 0
            and psx == np.floor(psx) and psy == np.floor(psy)
            and psx >= 0.0 and psy >= 0.0
            and psx + z <= cw and psy + z <= ch)

    ct = np.cos(pth)
    st = np.sin(pth)

    if prescreen > 0.0 and best < BIG and z >= 16:
        step = z // 8
        nsub = 0.0
        pS0 = 0.0; pS1 = 0.0; pS2 = 0.0
        pT0 = 0.0; pT1 = 0.0; pT2 = 0.0
        cssd = 0.0
        gssd = 0.0
        isx = int(psx)
        isy = int(psy)
        for v in range(0, z, step):
            dv = v - cc
            for u in range(0, z, step):
                if fast:
                    s0 = cimg[isy + v, isx + u, 0]
                    s1 = cimg[isy + v, isx + u, 1]
                    s2 = cimg[isy + v, isx + u, 2]
                    h0 = cgx[isy + v, isx + u, 0]
                    h1 = cgx[isy + v, isx + u, 1]
                    h2 = cgx[isy + v, isx + u, 2]
                    k0 = cgy[isy + v, isx + u, 0]
                    k1 = cgy[isy + v, isx + u, 1]
                    k2 = cgy[isy + v, isx + u, 2]
                else:
                    du = u - cc
                    if prf != 0:
                        du = -du
                    xs = cx + psc * (ct * du - st * dv)
                    ys = cy + psc * (st * du + ct * dv)
                    s0, s1, s2 = _sample3(cimg, xs, ys, cw, ch)
                    h0, h1, h2 = _sample3(cgx, xs, ys, cw, ch)
                    k0, k1, k2 = _sample3(cgy, xs, ys, cw, ch)
                t0 = timg[ay + v, ax + u, 0]
                t1 = timg[ay + v, ax + u, 1]
                t2 = timg[ay + v, ax + u, 2]
                pS0 += s0; pS1 += s1; pS2 += s2
                pT0 += t0; pT1 += t1; pT2 += t2
                cssd += ((s0 - t0) ** 2 + (s1 - t1) ** 2 + (s2 - t2) ** 2)
                e0 = h0 - tgx[ay + v, ax + u, 0]
                e1 = h1 - tgx[ay + v, ax + u, 1]
                e2 = h2 - tgx[ay + v, ax + u, 2]
                f0 = k0 - tgy[ay + v, ax + u, 0]
                f1 = k1 - tgy[ay + v, ax + u, 1]
                f2 = k2 - tgy[ay + v, ax + u, 2]
                gssd += (e0 * e0 + e1 * e1 + e2 * e2
                         + f0 * f0 + f1 * f1 + f2 * f2)
                nsub += 1.0
        if adjust != 0:
            # discount the part of the color SSD a bias shift would remove
            for k in range(3):
                if k == 0:
                    md = (pT0 - pS0) / nsub
                elif k == 1:
                    md = (pT1 - pS1) / nsub
                else:
                    md = (pT2 - pS2) / nsub
                shift = md
                if shift > bmax:
                    shift = bmax
                elif shift < -bmax:
                    shift = -bmax
                resid = md - shift
                cssd -= nsub * (md * md - resid * resid)
        est = cssd + lam * gssd
        if est < 0.0:
            est = 0.0
        est *= (z * z) / nsub
        if est > prescreen * best:
            return BIG

    n = float(z * z)
    sS0 = 0.0; sS1 = 0.0; sS2_ = 0.0
    sQ0 = 0.0; sQ1 = 0.0; sQ2 = 0.0
    sP0 = 0.0; sP1 = 0.0; sP2 = 0.0
    sT0 = 0.0; sT1 = 0.0; sT2 = 0.0
    sU0 = 0.0; sU1 = 0.0; sU2 = 0.0

    if fast:
        isx = int(psx)
        isy = int(psy)
        for v in range(z):
            for u in range(z):
                t0 = timg[ay + v, ax + u, 0]
                t1 = timg[ay + v, ax + u, 1]
                t2 = timg[ay + v, ax + u, 2]
                s0 = cimg[isy + v, isx + u, 0]
                s1 = cimg[isy + v, isx + u, 1]
                s2 = cimg[isy + v, isx + u, 2]
                sS0 += s0; sQ0 += s0 * s0; sP0 += s0 * t0
                sS1 += s1; sQ1 += s1 * s1; sP1 += s1 * t1
                sS2_ += s2; sQ2 += s2 * s2; sP2 += s2 * t2
                sT0 += t0; sU0 += t0 * t0
                sT1 += t1; sU1 += t1 * t1
                sT2 += t2; sU2 += t2 * t2
    else:
        for v in range(z):
            dv = v - cc
            bx = cx - psc * st * dv
            by = cy + psc * ct * dv
            dxu = psc * ct
            dyu = psc * st
            if prf != 0:
                dxu = -dxu
                dyu = -dyu
            for u in range(z):
                du = u - cc
                xs = bx + dxu * du
                ys = by + dyu * du
                if xs < 0.0:
                    xs = 0.0
                elif xs > cw - 1:
                    xs = cw - 1.0
                if ys < 0.0:
                    ys = 0.0
                elif ys > ch - 1:
                    ys = ch - 1.0
                x0 = int(xs)
                y0 = int(ys)
                x1 = x0 + 1 if x0 + 1 < cw else x0
                y1 = y0 + 1 if y0 + 1 < ch else y0
                fx = xs - x0
                fy = ys - y0
                w00 = (1.0 - fx) * (1.0 - fy)
                w01 = fx * (1.0 - fy)
                w10 = (1.0 - fx) * fy
                w11 = fx * fy
                t0 = timg[ay + v, ax + u, 0]
                t1 = timg[ay + v, ax + u, 1]
                t2 = timg[ay + v, ax + u, 2]
                s0 = (w00 * cimg[y0, x0, 0] + w01 * cimg[y0, x1, 0]
                      + w10 * cimg[y1, x0, 0] + w11 * cimg[y1, x1, 0])
                s1 = (w00 * cimg[y0, x0, 1] + w01 * cimg[y0, x1, 1]
                      + w10 * cimg[y1, x0, 1] + w11 * cimg[y1, x1, 1])
                s2 = (w00 * cimg[y0, x0, 2] + w01 * cimg[y0, x1, 2]
                      + w10 * cimg[y1, x0, 2] + w11 * cimg[y1, x1, 2])
                sS0 += s0; sQ0 += s0 * s0; sP0 += s0 * t0
                sS1 += s1; sQ1 += s1 * s1; sP1 += s1 * t1
                sS2_ += s2; sQ2 += s2 * s2; sP2 += s2 * t2
                sT0 += t0; sU0 += t0 * t0
                sT1 += t1; sU1 += t1 * t1
                sT2 += t2; sU2 += t2 * t2

    # per-channel gain/bias (moment matching with hard clamps)
    g0 = 1.0; g1 = 1.0; g2 = 1.0
    b0 = 0.0; b1 = 0.0; b2 = 0.0
    if adjust != 0:
        mus = sS0 / n
        mut = sT0 / n
        vars_ = sQ0 / n - mus * mus
        vart = sU0 / n - mut * mut
        ss = np.sqrt(vars_ if vars_ > 0.0 else 0.0)
        tt = np.sqrt(vart if vart > 0.0 else 0.0)
        if ss >= sfloor:
            g0 = tt / ss
            if g0 < gmin:
                g0 = gmin
            elif g0 > gmax:
                g0 = gmax
        b0 = mut - g0 * mus
        if b0 < -bmax:
            b0 = -bmax
        elif b0 > bmax:
            b0 = bmax

        mus = sS1 / n
        mut = sT1 / n
        vars_ = sQ1 / n - mus * mus
        vart = sU1 / n - mut * mut
        ss = np.sqrt(vars_ if vars_ > 0.0 else 0.0)
        tt = np.sqrt(vart if vart > 0.0 else 0.0)
        if ss >= sfloor:
            g1 = tt / ss
            if g1 < gmin:
                g1 = gmin
            elif g1 > gmax:
                g1 = gmax
        b1 = mut - g1 * mus
        if b1 < -bmax:
            b1 = -bmax
        elif b1 > bmax:
            b1 = bmax

        mus = sS2_ / n
        mut = sT2 / n
        vars_ = sQ2 / n - mus * mus
        vart = sU2 / n - mut * mut
        ss = np.sqrt(vars_ if vars_ > 0.0 else 0.0)
        tt = np.sqrt(vart if vart > 0.0 else 0.0)
        if ss >= sfloor:
            g2 = tt / ss
            if g2 < gmin:
                g2 = gmin
            elif g2 > gmax:
                g2 = gmax
        b2 = mut - g2 * mus
        if b2 < -bmax:
            b2 = -bmax
        elif b2 > bmax:
            b2 = bmax

    d = (g0 * g0 * sQ0 + n * b0 * b0 + sU0
         + 2.0 * g0 * b0 * sS0 - 2.0 * g0 * sP0 - 2.0 * b0 * sT0)
    d += (g1 * g1 * sQ1 + n * b1 * b1 + sU1
          + 2.0 * g1 * b1 * sS1 - 2.0 * g1 * sP1 - 2.0 * b1 * sT1)
    d += (g2 * g2 * sQ2 + n * b2 * b2 + sU2
          + 2.0 * g2 * b2 * sS2_ - 2.0 * g2 * sP2 - 2.0 * b2 * sT2)
    if d < 0.0:
        d = 0.0
    if d >= best:
        return BIG

    # gradient term, accumulated with early exit per row
    if fast:
        isx = int(psx)
        isy = int(psy)
        for v in range(z):
            for u in range(z):
                e0 = g0 * cgx[isy + v, isx + u, 0] - tgx[ay + v, ax + u, 0]
                e1 = g1 * cgx[isy + v, isx + u, 1] - tgx[ay + v, ax + u, 1]
                e2 = g2 * cgx[isy + v, isx + u, 2] - tgx[ay + v, ax + u, 2]
                f0 = g0 * cgy[isy + v, isx + u, 0] - tgy[ay + v, ax + u, 0]
                f1 = g1 * cgy[isy + v, isx + u, 1] - tgy[ay + v, ax + u, 1]
                f2 = g2 * cgy[isy + v, isx + u, 2] - tgy[ay + v, ax + u, 2]
                d += lam * (e0 * e0 + e1 * e1 + e2 * e2
                            + f0 * f0 + f1 * f1 + f2 * f2)
            if d >= best:
                return BIG
    else:
        for v in range(z):
            dv = v - cc
            bx = cx - psc * st * dv
            by = cy + psc * ct * dv
            dxu = psc * ct
            dyu = psc * st
            if prf != 0:
                dxu = -dxu
                dyu = -dyu
            for u in range(z):
                du = u - cc
                xs = bx + dxu * du
                ys = by + dyu * du
                if xs < 0.0:
                    xs = 0.0
                elif xs > cw - 1:
                    xs = cw - 1.0
                if ys < 0.0:
                    ys = 0.0
                elif ys > ch - 1:
                    ys = ch - 1.0
                x0 = int(xs)
                y0 = int(ys)
                x1 = x0 + 1 if x0 + 1 < cw else x0
                y1 = y0 + 1 if y0 + 1 < ch else y0
                fx = xs - x0
                fy = ys - y0
                w00 = (1.0 - fx) * (1.0 - fy)
                w01 = fx * (1.0 - fy)
                w10 = (1.0 - fx) * fy
                w11 = fx * fy
                e0 = g0 * (w00 * cgx[y0, x0, 0] + w01 * cgx[y0, x1, 0]
                           + w10 * cgx[y1, x0, 0] + w11 * cgx[y1, x1, 0]) \
                    - tgx[ay + v, ax + u, 0]
                e1 = g1 * (w00 * cgx[y0, x0, 1] + w01 * cgx[y0, x1, 1]
                           + w10 * cgx[y1, x0, 1] + w11 * cgx[y1, x1, 1]) \
                    - tgx[ay + v, ax + u, 1]
                e2 = g2 * (w00 * cgx[y0, x0, 2] + w01 * cgx[y0, x1, 2]
                           + w10 * cgx[y1, x0, 2] + w11 * cgx[y1, x1, 2]) \
                    - tgx[ay + v, ax + u, 2]
                f0 = g0 * (w00 * cgy[y0, x0, 0] + w01 * cgy[y0, x1, 0]
                           + w10 * cgy[y1, x0, 0] + w11 * cgy[y1, x1, 0]) \
                    - tgy[ay + v, ax + u, 0]
                f1 = g1 * (w00 * cgy[y0, x0, 1] + w01 * cgy[y0, x1, 1]
                           + w10 * cgy[y1, x0, 1] + w11 * cgy[y1, x1, 1]) \
                    - tgy[ay + v, ax + u, 1]
                f2 = g2 * (w00 * cgy[y0, x0, 2] + w01 * cgy[y0, x1, 2]
                           + w10 * cgy[y1, x0, 2] + w11 * cgy[y1, x1, 2]) \
                    - tgy[ay + v, ax + u, 2]
                d += lam * (e0 * e0 + e1 * e1 + e2 * e2
                            + f0 * f0 + f1 * f1 + f2 * f2)
            if d >= best:
                return BIG

    out_gb[0] = g0
    out_gb[1] = g1
    out_gb[2] = g2
    out_gb[3] = b0
    out_gb[4] = b1
    out_gb[5] = b2
    return d


@njit(cache=True, parallel=True)
def nnf_recompute(timg, tgx, tgy, cimg, cgx, cgy,
                  sx, sy, sc, th, rf, dist, gain, bias,
                  z, lam, adjust, gmin, gmax, bmax, sfloor):
    """Rebuild the distance/adjustment caches of every entry."""
    gh, gw = sx.shape
    for y in prange(gh):
        gb = np.empty(6)
        for x in range(gw):
            d = _eval_entry(timg, tgx, tgy, x, y, cimg, cgx, cgy,
                            sx[y, x], sy[y, x], sc[y, x], th[y, x], rf[y, x],
                            z, lam, adjust, gmin, gmax, bmax, sfloor,
                            BIG, 0.0, gb)
            dist[y, x] = d
            for k in range(3):
                gain[y, x, k] = gb[k]
                bias[y, x, k] = gb[3 + k]


@njit(cache=True)
def pm_pass(timg, tgx, tgy, cimg, cgx, cgy,
            sx, sy, sc, th, rf, dist, gain, bias,
            z, lam, adjust, gmin, gmax, bmax, sfloor,
            smin, smax, tmax, allow_reflect,
            radii, reverse, seed, cand_idx, pass_idx, prescreen):
    """One PatchMatch scan (propagation + random search) over the whole grid.

    Entries are replaced only when the new distance is strictly lower, so
    cached distances never increase within a pass.
    """
    gh, gw = sx.shape
    ch, cw = cimg.shape[0], cimg.shape[1]
    maxsx = float(cw - z)
    maxsy = float(ch - z)
    nrad = radii.shape[0]
    gb = np.empty(6)
    srange = 0.5 * (smax - smin)
    geom = srange > 0.0 or tmax > 0.0 or allow_reflect != 0

    for yy in range(gh):
        y = gh - 1 - yy if reverse != 0 else yy
        for xx in range(gw):
            x = gw - 1 - xx if reverse != 0 else xx
            cur = dist[y, x]

            # propagation from the two already-visited neighbors
            for pn in range(2):
                if reverse == 0:
                    nx = x - 1 if pn == 0 else x
                    ny = y if pn == 0 else y - 1
                    step = 1.0
                else:
                    nx = x + 1 if pn == 0 else x
                    ny = y if pn == 0 else y + 1
                    step = -1.0
                if nx < 0 or ny < 0 or nx >= gw or ny >= gh:
                    continue
                nsc = sc[ny, nx]
                nth = th[ny, nx]
                nrf = rf[ny, nx]
                ctn = np.cos(nth)
                stn = np.sin(nth)
                if pn == 0:  # horizontal step
                    fxs = -1.0 if nrf != 0 else 1.0
                    dx = nsc * ctn * fxs * step
                    dy = nsc * stn * fxs * step
                else:  # vertical step
                    dx = -nsc * stn * step
                    dy = nsc * ctn * step
                psx = sx[ny, nx] + dx
                psy = sy[ny, nx] + dy
                if psx < 0.0:
                    psx = 0.0
                elif psx > maxsx:
                    psx = maxsx
                if psy < 0.0:
                    psy = 0.0
                elif psy > maxsy:
                    psy = maxsy
                if (np.abs(psx - sx[y, x]) < 1e-12
                        and np.abs(psy - sy[y, x]) < 1e-12
                        and nsc == sc[y, x] and nth == th[y, x]
                        and nrf == rf[y, x]):
                    continue
                d = _eval_entry(timg, tgx, tgy, x, y, cimg, cgx, cgy,
                                psx, psy, nsc, nth, nrf,
                                z, lam, adjust, gmin, gmax, bmax, sfloor,
                                cur, prescreen, gb)
                if d < cur:
                    cur = d
                    dist[y, x] = d
                    sx[y, x] = psx
                    sy[y, x] = psy
                    sc[y, x] = nsc
                    th[y, x] = nth
                    rf[y, x] = nrf
                    for k in range(3):
                        gain[y, x, k] = gb[k]
                        bias[y, x, k] = gb[3 + k]

            # random search around the entry's position at this point
            state = _anchor_seed(seed, cand_idx, pass_idx, y * gw + x)
            bx0 = sx[y, x]
            by0 = sy[y, x]
            decay = 1.0
            for ri in range(nrad):
                r = radii[ri]
                state, u1 = _sm_unit(state)
                state, u2 = _sm_unit(state)
                psx = bx0 + np.floor(u1 * (2.0 * r + 1.0)) - r
                psy = by0 + np.floor(u2 * (2.0 * r + 1.0)) - r
                if psx < 0.0:
                    psx = 0.0
                elif psx > maxsx:
                    psx = maxsx
                if psy < 0.0:
                    psy = 0.0
                elif psy > maxsy:
                    psy = maxsy
                psc = sc[y, x]
                pth = th[y, x]
                prf = rf[y, x]
                if geom:
                    if srange > 0.0:
                        state, u3 = _sm_unit(state)
                        psc = psc + (2.0 * u3 - 1.0) * srange * decay
                        if psc < smin:
                            psc = smin
                        elif psc > smax:
                            psc = smax
                    if tmax > 0.0:
                        state, u4 = _sm_unit(state)
                        pth = pth + (2.0 * u4 - 1.0) * tmax * decay
                        if pth < -tmax:
                            pth = -tmax
                        elif pth > tmax:
                            pth = tmax
                    if allow_reflect != 0:
                        state, u5 = _sm_unit(state)
                        prf = np.uint8(1) if u5 < 0.5 else np.uint8(0)
                if (np.abs(psx - sx[y, x]) < 1e-12
                        and np.abs(psy - sy[y, x]) < 1e-12
                        and psc == sc[y, x] and pth == th[y, x]
                        and prf == rf[y, x]):
                    decay *= 0.5
                    continue
                d = _eval_entry(timg, tgx, tgy, x, y, cimg, cgx, cgy,
                                psx, psy, psc, pth, prf,
                                z, lam, adjust, gmin, gmax, bmax, sfloor,
                                cur, prescreen, gb)
                if d < cur:
                    cur = d
                    dist[y, x] = d
                    sx[y, x] = psx
                    sy[y, x] = psy
                    sc[y, x] = psc
                    th[y, x] = pth
                    rf[y, x] = prf
                    for k in range(3):
                        gain[y, x, k] = gb[k]
                        bias[y, x, k] = gb[3 + k]
                decay *= 0.5


@njit(cache=True, parallel=True)
def coherence_map(sx, sy, sc, th, rf, window, pos_tol, scale_tol, theta_tol):
    """Per-anchor coherence score in [-1, 0]: negated fraction of in-grid
    neighbors (self excluded) whose entry is close in every dimension."""
    gh, gw = sx.shape
    half = window // 2
    out = np.zeros((gh, gw))
    for y in prange(gh):
        for x in range(gw):
            ox = sx[y, x] - x
            oy = sy[y, x] - y
            s0 = sc[y, x]
            t0 = th[y, x]
            r0 = rf[y, x]
            j0 = y - half if y - half > 0 else 0
            j1 = y + half + 1 if y + half + 1 < gh else gh
            i0 = x - half if x - half > 0 else 0
            i1 = x + half + 1 if x + half + 1 < gw else gw
            cnt = 0
            tot = (j1 - j0) * (i1 - i0) - 1
            for j in range(j0, j1):
                for i in range(i0, i1):
                    if i == x and j == y:
                        continue
                    if (np.abs((sx[j, i] - i) - ox) <= pos_tol
                            and np.abs((sy[j, i] - j) - oy) <= pos_tol
                            and np.abs(sc[j, i] - s0) <= scale_tol
                            and np.abs(th[j, i] - t0) <= theta_tol
                            and rf[j, i] == r0):
                        cnt += 1
            if tot > 0:
                out[y, x] = -cnt / tot
    return out


@njit(cache=True, parallel=True)
def vote_weights(nnf_map, sxs, sys, scs, ths, rfs,
                 window, pos_tol, scale_tol, theta_tol):
    """Coherency weight in [0, 1] per anchor against the winning map.

    Neighbors whose winning candidate differs are never coherent."""
    gh, gw = nnf_map.shape
    half = window // 2
    out = np.zeros((gh, gw))
    for y in prange(gh):
        for x in range(gw):
            m = nnf_map[y, x]
            ox = sxs[m, y, x] - x
            oy = sys[m, y, x] - y
            s0 = scs[m, y, x]
            t0 = ths[m, y, x]
            r0 = rfs[m, y, x]
            j0 = y - half if y - half > 0 else 0
            j1 = y + half + 1 if y + half + 1 < gh else gh
            i0 = x - half if x - half > 0 else 0
            i1 = x + half + 1 if x + half + 1 < gw else gw
            cnt = 0
            tot = (j1 - j0) * (i1 - i0) - 1
            for j in range(j0, j1):
                for i in range(i0, i1):
                    if i == x and j == y:
                        continue
                    if nnf_map[j, i] != m:
                        continue
                    if (np.abs((sxs[m, j, i] - i) - ox) <= pos_tol
                            and np.abs((sys[m, j, i] - j) - oy) <= pos_tol
                            and np.abs(scs[m, j, i] - s0) <= scale_tol
                            and np.abs(ths[m, j, i] - t0) <= theta_tol
                            and rfs[m, j, i] == r0):
                        cnt += 1
            if tot > 0:
                out[y, x] = cnt / tot
    return out


@njit(cache=True, parallel=True)
def vote_gather(nnf_map, sxs, sys, scs, ths, rfs, gains, biases, weights,
                cimgs, cgxs, cgys, cdims, z, out_h, out_w):
    """Weighted gather of adjusted source colors and gradients.

    For every output pixel, accumulates over all patches covering it (gather
    formulation: deterministic and parallel-safe).  Returns accumulated
    colors, gx, gy and the per-pixel weight sum (not yet normalized)."""
    colors = np.zeros((out_h, out_w, 3))
    gxo = np.zeros((out_h, out_w, 3))
    gyo = np.zeros((out_h, out_w, 3))
    wsum = np.zeros((out_h, out_w))
    gh, gw = nnf_map.shape
    cc = (z - 1) * 0.5
    for y in prange(out_h):
        ay0 = y - z + 1 if y - z + 1 > 0 else 0
        ay1 = y if y < gh - 1 else gh - 1
        for x in range(out_w):
            ax0 = x - z + 1 if x - z + 1 > 0 else 0
            ax1 = x if x < gw - 1 else gw - 1
            c0 = 0.0; c1 = 0.0; c2 = 0.0
            x0a = 0.0; x1a = 0.0; x2a = 0.0
            y0a = 0.0; y1a = 0.0; y2a = 0.0
            ws = 0.0
            for ay in range(ay0, ay1 + 1):
                for ax in range(ax0, ax1 + 1):
                    m = nnf_map[ay, ax]
                    w = weights[ay, ax]
                    ch = cdims[m, 0]
                    cw = cdims[m, 1]
                    u = x - ax
                    v = y - ay
                    psc = scs[m, ay, ax]
                    pth = ths[m, ay, ax]
                    prf = rfs[m, ay, ax]
                    psx = sxs[m, ay, ax]
                    psy = sys[m, ay, ax]
                    if psc == 1.0 and pth == 0.0 and prf == 0 \
                            and psx == np.floor(psx) and psy == np.floor(psy) \
                            and psx >= 0.0 and psy >= 0.0 \
                            and psx + z <= cw and psy + z <= ch:
                        yy = int(psy) + v
                        xx = int(psx) + u
                        for k in range(3):
                            g = gains[m, ay, ax, k]
                            b = biases[m, ay, ax, k]
                            if k == 0:
                                c0 += w * (g * cimgs[m, yy, xx, 0] + b)
                                x0a += w * g * cgxs[m, yy, xx, 0]
                                y0a += w * g * cgys[m, yy, xx, 0]
                            elif k == 1:
                                c1 += w * (g * cimgs[m, yy, xx, 1] + b)
                                x1a += w * g * cgxs[m, yy, xx, 1]
                                y1a += w * g * cgys[m, yy, xx, 1]
                            else:
                                c2 += w * (g * cimgs[m, yy, xx, 2] + b)
                                x2a += w * g * cgxs[m, yy, xx, 2]
                                y2a += w * g * cgys[m, yy, xx, 2]
                    else:
                        du = float(u) - cc
                        if prf != 0:
                            du = -du
                        dv = float(v) - cc
                        ct = np.cos(pth)
                        st = np.sin(pth)
                        xs = psx + cc + psc * (ct * du - st * dv)
                        ys = psy + cc + psc * (st * du + ct * dv)
                        if xs < 0.0:
                            xs = 0.0
                        elif xs > cw - 1:
                            xs = cw - 1.0
                        if ys < 0.0:
                            ys = 0.0
                        elif ys > ch - 1:
                            ys = ch - 1.0
                        ix0 = int(xs)
                        iy0 = int(ys)
                        ix1 = ix0 + 1 if ix0 + 1 < cw else ix0
                        iy1 = iy0 + 1 if iy0 + 1 < ch else iy0
                        fx = xs - ix0
                        fy = ys - iy0
                        w00 = (1.0 - fx) * (1.0 - fy)
                        w01 = fx * (1.0 - fy)
                        w10 = (1.0 - fx) * fy
                        w11 = fx * fy
                        g = gains[m, ay, ax, 0]
                        b = biases[m, ay, ax, 0]
                        c0 += w * (g * (w00 * cimgs[m, iy0, ix0, 0]
                                        + w01 * cimgs[m, iy0, ix1, 0]
                                        + w10 * cimgs[m, iy1, ix0, 0]
                                        + w11 * cimgs[m, iy1, ix1, 0]) + b)
                        x0a += w * g * (w00 * cgxs[m, iy0, ix0, 0]
                                        + w01 * cgxs[m, iy0, ix1, 0]
                                        + w10 * cgxs[m, iy1, ix0, 0]
                                        + w11 * cgxs[m, iy1, ix1, 0])
                        y0a += w * g * (w00 * cgys[m, iy0, ix0, 0]
                                        + w01 * cgys[m, iy0, ix1, 0]
                                        + w10 * cgys[m, iy1, ix0, 0]
                                        + w11 * cgys[m, iy1, ix1, 0])
                        g = gains[m, ay, ax, 1]
                        b = biases[m, ay, ax, 1]
                        c1 += w * (g * (w00 * cimgs[m, iy0, ix0, 1]
                                        + w01 * cimgs[m, iy0, ix1, 1]
                                        + w10 * cimgs[m, iy1, ix0, 1]
                                        + w11 * cimgs[m, iy1, ix1, 1]) + b)
                        x1a += w * g * (w00 * cgxs[m, iy0, ix0, 1]
                                        + w01 * cgxs[m, iy0, ix1, 1]
                                        + w10 * cgxs[m, iy1, ix0, 1]
                                        + w11 * cgxs[m, iy1, ix1, 1])
                        y1a += w * g * (w00 * cgys[m, iy0, ix0, 1]
                                        + w01 * cgys[m, iy0, ix1, 1]
                                        + w10 * cgys[m, iy1, ix0, 1]
                                        + w11 * cgys[m, iy1, ix1, 1])
                        g = gains[m, ay, ax, 2]
                        b = biases[m, ay, ax, 2]
                        c2 += w * (g * (w00 * cimgs[m, iy0, ix0, 2]
                                        + w01 * cimgs[m, iy0, ix1, 2]
                                        + w10 * cimgs[m, iy1, ix0, 2]
                                        + w11 * cimgs[m, iy1, ix1, 2]) + b)
                        x2a += w * g * (w00 * cgxs[m, iy0, ix0, 2]
                                        + w01 * cgxs[m, iy0, ix1, 2]
                                        + w10 * cgxs[m, iy1, ix0, 2]
                                        + w11 * cgxs[m, iy1, ix1, 2])
                        y2a += w * g * (w00 * cgys[m, iy0, ix0, 2]
                                        + w01 * cgys[m, iy0, ix1, 2]
                                        + w10 * cgys[m, iy1, ix0, 2]
                                        + w11 * cgys[m, iy1, ix1, 2])
                    ws += w
            colors[y, x, 0] = c0
            colors[y, x, 1] = c1
            colors[y, x, 2] = c2
            gxo[y, x, 0] = x0a
            gxo[y, x, 1] = x1a
            gxo[y, x, 2] = x2a
            gyo[y, x, 0] = y0a
            gyo[y, x, 1] = y1a
            gyo[y, x, 2] = y2a
            wsum[y, x] = ws
    return colors, gxo, gyo, wsum


@njit(cache=True)
def flow_exhaustive(timg, cimg, half):
    """Per-pixel exhaustive translation matching with a small color window.

    Ties and the initial guess favor the same position, so identical images
    produce a zero flow field."""
    th_, tw = timg.shape[0], timg.shape[1]
    ch, cw = cimg.shape[0], cimg.shape[1]
    fx = np.zeros((th_, tw))
    fy = np.zeros((th_, tw))
    for y in range(th_):
        for x in range(tw):
            bx = x if x < cw else cw - 1
            by = y if y < ch else ch - 1
            best = _window_ssd(timg, cimg, x, y, bx, by, half, BIG)
            for cy in range(ch):
                for cx in range(cw):
                    if cx == bx and cy == by:
                        continue
                    d = _window_ssd(timg, cimg, x, y, cx, cy, half, best)
                    if d < best:
                        best = d
                        bx = cx
                        by = cy
            fx[y, x] = bx - x
            fy[y, x] = by - y
    return fx, fy


@njit(inline="always", cache=True)
def _window_ssd(timg, cimg, tx, ty, cx, cy, half, best):
    th_, tw = timg.shape[0], timg.shape[1]
    ch, cw = cimg.shape[0], cimg.shape[1]
    d = 0.0
    for dv in range(-half, half + 1):
        for du in range(-half, half + 1):
            ax = tx + du
            ay = ty + dv
            if ax < 0:
                ax = 0
            elif ax >= tw:
                ax = tw - 1
            if ay < 0:
                ay = 0
            elif ay >= th_:
                ay = th_ - 1
            bx = cx + du
            by = cy + dv
            if bx < 0:
                bx = 0
            elif bx >= cw:
                bx = cw - 1
            if by < 0:
                by = 0
            elif by >= ch:
                by = ch - 1
            for k in range(3):
                e = timg[ay, ax, k] - cimg[by, bx, k]
                d += e * e
        if d >= best:
            return BIG
    return d


@njit(cache=True, parallel=True)
def flow_refine(timg, cimg, fx_in, fy_in, half, radius):
    """Local refinement of an upsampled flow field (+- radius search)."""
    th_, tw = timg.shape[0], timg.shape[1]
    ch, cw = cimg.shape[0], cimg.shape[1]
    fx = np.empty((th_, tw))
    fy = np.empty((th_, tw))
    for y in prange(th_):
        for x in range(tw):
            bx = int(np.rint(x + fx_in[y, x]))
            by = int(np.rint(y + fy_in[y, x]))
            if bx < 0:
                bx = 0
            elif bx >= cw:
                bx = cw - 1
            if by < 0:
                by = 0
            elif by >= ch:
                by = ch - 1
            best = _window_ssd(timg, cimg, x, y, bx, by, half, BIG)
            bbx = bx
            bby = by
            for dv in range(-radius, radius + 1):
                for du in range(-radius, radius + 1):
                    if du == 0 and dv == 0:
                        continue
                    cx = bx + du
                    cy = by + dv
                    if cx < 0 or cx >= cw or cy < 0 or cy >= ch:
                        continue
                    d = _window_ssd(timg, cimg, x, y, cx, cy, half, best)
                    if d < best:
                        best = d
                        bbx = cx
                        bby = cy
            fx[y, x] = bbx - x
            fy[y, x] = bby - y
    return fx, fy
