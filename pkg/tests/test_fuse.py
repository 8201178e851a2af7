import math

import numpy as np
import pytest

from hallucinate.config import HallucinationConfig
from hallucinate.correspond import NNF
from hallucinate.errors import SolverError
from hallucinate.fuse import (VoteTarget, check_coherence, coherence,
                              coherence_field, contribution, majority_smooth,
                              merge, screened_poisson, screened_poisson_dense,
                              vote)
from hallucinate.imgcore import (ColorAdjustment, PatchTransform,
                                 extract_patch, gradient)
from tests.conftest import synth_photo


def t(sx, sy, scale=1.0, theta=0.0, reflect=False):
    return PatchTransform(sx=sx, sy=sy, scale=scale, theta=theta,
                          reflect=reflect)


class TestCheckCoherence:
    def test_equal_offsets(self):
        assert check_coherence(t(10, 10), (5, 5), t(12, 12), (7, 7))

    def test_position_over_threshold(self):
        assert not check_coherence(t(13, 10), (5, 5), t(12, 12), (7, 7))

    def test_small_scale_and_theta_diffs_pass(self):
        assert check_coherence(t(10, 10, scale=1.005, theta=0.1), (5, 5),
                               t(10, 10, scale=1.0, theta=0.0), (5, 5))

    def test_scale_over_threshold(self):
        assert not check_coherence(t(10, 10, scale=1.02), (5, 5),
                                   t(10, 10), (5, 5))

    def test_theta_over_threshold(self):
        assert not check_coherence(t(10, 10, theta=math.pi / 19), (5, 5),
                                   t(10, 10), (5, 5))

    def test_reflect_mismatch(self):
        assert not check_coherence(t(10, 10, reflect=True), (5, 5),
                                   t(10, 10), (5, 5))


def random_nnf(gh, gw, seed, z=8):
    nnf = NNF.random((gw + z - 1, gh + z - 1), (gw + z + 20, gh + z + 20), z,
                     seed=seed)
    return nnf


class TestCoherence:
    def test_rigid_field_fully_coherent(self):
        nnf = NNF.identity((40, 40), (40, 40), 8)
        assert coherence(16, 16, nnf, window=9) == -1.0

    def test_incoherent_entry_scores_zero(self):
        nnf = NNF.identity((40, 40), (40, 40), 8)
        nnf.sx[16, 16] += 20.0
        assert coherence(16, 16, nnf, window=9) == 0.0

    def test_random_field_mostly_incoherent(self):
        nnf = random_nnf(57, 57, seed=1)
        field = coherence_field(nnf, window=33)
        assert field.mean() > -0.1

    def test_field_matches_scalar_oracle(self):
        nnf = random_nnf(12, 12, seed=2)
        nnf.sx = np.rint(nnf.sx / 4) * 4  # induce some agreement
        nnf.sy = np.rint(nnf.sy / 4) * 4
        field = coherence_field(nnf, window=9)
        for y in range(12):
            for x in range(12):
                assert field[y, x] == pytest.approx(
                    coherence(x, y, nnf, window=9), abs=1e-12)

    def test_range(self):
        nnf = random_nnf(20, 20, seed=3)
        field = coherence_field(nnf, window=33)
        assert np.all(field <= 0.0) and np.all(field >= -1.0)


class TestContribution:
    def test_full_coverage(self):
        assert contribution(2, np.full((5, 5), 2, np.int32)) == 1.0 * -0 + 1.0

    def test_absent(self):
        assert contribution(3, np.zeros((5, 5), np.int32)) == 0.0

    def test_half(self):
        m = np.zeros((4, 4), np.int32)
        m[:2] = 1
        assert contribution(1, m) == 0.5

    def test_no_previous_map(self):
        assert contribution(0, None) == 0.0


class TestMajoritySmooth:
    def test_uniform_unchanged(self):
        m = np.full((10, 10), 3, np.int32)
        assert np.array_equal(majority_smooth(m, 5), m)

    def test_single_flip_restored(self):
        m = np.zeros((16, 16), np.int32)
        m[8, 8] = 1
        assert not majority_smooth(m, 8).any()

    def test_matches_window_count_oracle(self):
        rng = np.random.default_rng(4)
        m = rng.integers(0, 3, (13, 17)).astype(np.int32)
        kernel = 5
        out = majority_smooth(m, kernel)
        for y in range(13):
            for x in range(17):
                win = m[max(0, y - 2):y + 3, max(0, x - 2):x + 3]
                counts = np.bincount(win.ravel(), minlength=3)
                assert out[y, x] == np.argmax(counts), (x, y)

    def test_split_boundary_moves_at_most_half_kernel(self):
        m = np.zeros((20, 20), np.int32)
        m[:, 10:] = 1
        out = majority_smooth(m, 6)
        # columns far from the split keep their label
        assert not out[:, :7].any()
        assert np.all(out[:, 13:] == 1)


def make_nnfs(target, cands, z, seed=0):
    rng = np.random.default_rng(seed)
    th, tw = target.shape[:2]
    nnfs = []
    for m, c in enumerate(cands):
        ch, cw = c.shape[:2]
        nnf = NNF.random((tw, th), (cw, ch), z, cand_index=m,
                         seed=seed + m)
        nnf.dist = rng.uniform(0, 100, nnf.grid_shape)
        nnf.gain = rng.uniform(1.0, 1.3, nnf.gain.shape)
        nnf.bias = rng.uniform(-20, 20, nnf.bias.shape)
        nnfs.append(nnf)
    return nnfs


class TestMerge:
    def setup_method(self):
        self.cfg = HallucinationConfig(patch_size=8, coherence_window=9)

    def test_single_candidate_all_zero(self):
        target = synth_photo(24, 24, seed=5)
        nnfs = make_nnfs(target, [synth_photo(32, 32, seed=6)], 8)
        assert not merge(nnfs, None, self.cfg).any()

    def test_dominant_candidate_wins_everywhere(self):
        target = synth_photo(24, 24, seed=7)
        cands = [synth_photo(32, 32, seed=8), synth_photo(32, 32, seed=9)]
        nnfs = make_nnfs(target, cands, 8)
        nnfs[0].sx = nnfs[1].sx.copy()
        nnfs[0].sy = nnfs[1].sy.copy()
        nnfs[0].scale = nnfs[1].scale.copy()
        nnfs[0].theta = nnfs[1].theta.copy()
        nnfs[0].dist = nnfs[1].dist - 10.0  # equal H terms, lower distance
        assert not merge(nnfs, None, self.cfg, smooth=False).any()

    def test_matches_bruteforce_argmin(self):
        target = synth_photo(23, 23, seed=10)  # 16x16 grid at z=8
        cands = [synth_photo(32, 32, seed=11 + i) for i in range(3)]
        nnfs = make_nnfs(target, cands, 8, seed=20)
        prev = np.random.default_rng(5).integers(0, 3, (16, 16)).astype(
            np.int32)
        got = merge(nnfs, prev, self.cfg, smooth=False)
        for y in range(16):
            for x in range(16):
                energies = [
                    nnf.dist[y, x]
                    + self.cfg.alpha_coh * coherence(x, y, nnf, window=9)
                    + self.cfg.alpha_con * contribution(m, prev)
                    for m, nnf in enumerate(nnfs)]
                assert got[y, x] == int(np.argmin(energies)), (x, y)

    def test_smoothing_removes_isolated_winner(self):
        target = synth_photo(15, 15, seed=30)  # 8x8 grid
        cands = [synth_photo(20, 20, seed=31), synth_photo(20, 20, seed=32)]
        nnfs = make_nnfs(target, cands, 8, seed=33)
        nnfs[0].dist[:] = 1.0
        nnfs[1].dist[:] = 2.0
        nnfs[1].dist[4, 4] = 0.0  # lone anchor prefers candidate 1
        raw = merge(nnfs, None, self.cfg, smooth=False)
        assert raw[4, 4] == 1 and raw.sum() == 1
        assert not merge(nnfs, None, self.cfg, smooth=True).any()


def brute_force_vote(target_dims, nnf_map, nnfs, cands, cfg):
    """Independent per-pixel accumulation over every covering patch."""
    tw, th = target_dims
    z = nnfs[0].z
    gh, gw = nnf_map.shape
    acc = np.zeros((th, tw, 3))
    accx = np.zeros((th, tw, 3))
    accy = np.zeros((th, tw, 3))
    wsum = np.zeros((th, tw))
    grads = [gradient(c) for c in cands]
    weights = np.zeros((gh, gw))
    half = cfg.coherence_window // 2
    for y in range(gh):
        for x in range(gw):
            m = nnf_map[y, x]
            cnt = tot = 0
            for ny in range(max(0, y - half), min(gh, y + half + 1)):
                for nx in range(max(0, x - half), min(gw, x + half + 1)):
                    if nx == x and ny == y:
                        continue
                    tot += 1
                    if nnf_map[ny, nx] != m:
                        continue
                    if check_coherence(nnfs[m].entry(x, y), (x, y),
                                       nnfs[m].entry(nx, ny), (nx, ny)):
                        cnt += 1
            weights[y, x] = cnt / tot if tot else 0.0
    weights = np.clip(weights, 1e-4, 1.0)
    for y in range(gh):
        for x in range(gw):
            m = nnf_map[y, x]
            tr = nnfs[m].entry(x, y)
            patch = extract_patch(cands[m], grads[m], tr, z)
            w = weights[y, x]
            adj_c = patch.colors * tr.adjust.gain + tr.adjust.bias
            acc[y:y + z, x:x + z] += w * adj_c
            accx[y:y + z, x:x + z] += w * patch.gx * tr.adjust.gain
            accy[y:y + z, x:x + z] += w * patch.gy * tr.adjust.gain
            wsum[y:y + z, x:x + z] += w
    return acc / wsum[..., None], accx / wsum[..., None], wsum


class TestVote:
    def setup_method(self):
        self.cfg = HallucinationConfig(patch_size=8, coherence_window=9)

    def test_identity_field_reproduces_image(self):
        img = synth_photo(24, 24, seed=40)
        nnf = NNF.identity((24, 24), (24, 24), 8)
        nnf_map = np.zeros(nnf.grid_shape, np.int32)
        vt = vote((24, 24), nnf_map, [nnf], [img], self.cfg)
        out = screened_poisson(vt, self.cfg)
        assert np.allclose(vt.colors, img, atol=1e-9)
        assert np.max(np.abs(out - img)) < 1e-3

    def test_weights_cover_every_pixel(self):
        target = synth_photo(24, 30, seed=41)
        cands = [synth_photo(30, 36, seed=42 + i) for i in range(2)]
        nnfs = make_nnfs(target, cands, 8, seed=43)
        nnf_map = merge(nnfs, None, self.cfg, smooth=False)
        vt = vote((30, 24), nnf_map, nnfs, cands, self.cfg)
        assert np.all(vt.weights > 0)

    def test_matches_bruteforce_oracle(self):
        target = synth_photo(20, 22, seed=44)
        cands = [synth_photo(28, 28, seed=45 + i) for i in range(3)]
        nnfs = make_nnfs(target, cands, 8, seed=46)
        nnf_map = merge(nnfs, None, self.cfg, smooth=False)
        vt = vote((22, 20), nnf_map, nnfs, cands, self.cfg)
        colors, gx, wsum = brute_force_vote((22, 20), nnf_map, nnfs, cands,
                                            self.cfg)
        assert np.max(np.abs(vt.colors - colors)) < 1e-6
        assert np.max(np.abs(vt.gx - gx)) < 1e-6
        assert np.max(np.abs(vt.weights - wsum)) < 1e-9


class TestScreenedPoisson:
    def setup_method(self):
        self.cfg = HallucinationConfig(patch_size=8)

    def test_consistent_input_is_fixed_point(self):
        img = synth_photo(24, 24, seed=50)
        g = gradient(img)
        vt = VoteTarget(colors=img, gx=g.gx, gy=g.gy,
                        weights=np.ones(img.shape[:2]))
        out = screened_poisson(vt, self.cfg)
        assert np.max(np.abs(out - img)) < 1e-3

    def test_constant_exact(self):
        img = np.full((10, 10, 3), 40.0)
        vt = VoteTarget(colors=img, gx=np.zeros_like(img),
                        gy=np.zeros_like(img), weights=np.ones((10, 10)))
        out = screened_poisson(vt, self.cfg)
        assert np.max(np.abs(out - 40.0)) < 1e-9

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(51)
        a = rng.uniform(0, 255, (32, 32, 3))
        gb = gradient(rng.uniform(0, 255, (32, 32, 3)))
        vt = VoteTarget(colors=a, gx=gb.gx, gy=gb.gy,
                        weights=np.ones((32, 32)))
        fast = screened_poisson(vt, self.cfg)
        dense = screened_poisson_dense(vt, self.cfg.poisson_lambda)
        assert np.max(np.abs(fast - dense)) < 1e-3

    def test_linear_in_inputs(self):
        rng = np.random.default_rng(52)

        def rand_vt(seed):
            r = np.random.default_rng(seed)
            g = gradient(r.uniform(0, 255, (16, 16, 3)))
            return VoteTarget(colors=r.uniform(0, 255, (16, 16, 3)),
                              gx=g.gx, gy=g.gy, weights=np.ones((16, 16)))

        v1, v2 = rand_vt(1), rand_vt(2)
        a, b = 0.3, 1.7
        mix = VoteTarget(colors=a * v1.colors + b * v2.colors,
                         gx=a * v1.gx + b * v2.gx,
                         gy=a * v1.gy + b * v2.gy,
                         weights=np.ones((16, 16)))
        s1 = screened_poisson(v1, self.cfg)
        s2 = screened_poisson(v2, self.cfg)
        sm = screened_poisson(mix, self.cfg)
        assert np.max(np.abs(sm - (a * s1 + b * s2))) < 1e-2

    def test_nonconvergence_raises_with_residual(self):
        cfg = HallucinationConfig(patch_size=8, poisson_maxiter=1,
                                  poisson_tol=1e-12)
        rng = np.random.default_rng(53)
        g = gradient(rng.uniform(0, 255, (24, 24, 3)))
        vt = VoteTarget(colors=rng.uniform(0, 255, (24, 24, 3)),
                        gx=g.gx, gy=g.gy, weights=np.ones((24, 24)))
        with pytest.raises(SolverError) as exc:
            screened_poisson(vt, cfg)
        assert exc.value.residual > 0
