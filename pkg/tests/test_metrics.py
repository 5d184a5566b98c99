import math

import numpy as np
import pytest

from hvppnet.metrics import RdCurve, RdPoint, bd_rate, ms_ssim, msssim_to_db, psnr

from reference_metrics import bd_rate_dense, msssim_reference


class TestPsnr:
    def test_identical_planes_inf(self):
        plane = np.random.default_rng(0).integers(0, 256, (16, 16), dtype=np.uint8)
        assert psnr(plane, plane.copy()) == math.inf

    def test_uniform_diff_one(self):
        ref = np.full((32, 32), 100, np.uint8)
        test = np.full((32, 32), 101, np.uint8)
        expected = 20 * math.log10(255)  # 48.1308... dB
        assert psnr(ref, test) == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(48.1308, abs=1e-4)

    def test_full_swing_zero_db(self):
        ref = np.zeros((8, 8), np.uint8)
        test = np.full((8, 8), 255, np.uint8)
        assert psnr(ref, test) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_monotone_in_noise_amplitude(self):
        rng = np.random.default_rng(1)
        base = rng.integers(0, 256, (64, 64)).astype(np.float64)
        means = []
        for amp in (1.0, 3.0, 9.0, 27.0):
            vals = []
            for seed in range(5):
                noise = np.random.default_rng(seed).normal(0, amp, base.shape)
                vals.append(psnr(base, np.clip(base + noise, 0, 255)))
            means.append(np.mean(vals))
        assert all(b < a for a, b in zip(means, means[1:]))


class TestMsSsim:
    def test_identical_planes_one(self):
        plane = np.random.default_rng(2).integers(0, 256, (64, 64), dtype=np.uint8)
        assert ms_ssim(plane, plane.copy()) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 256, (64, 64), dtype=np.uint8)
        b = np.clip(a + rng.normal(0, 5, a.shape), 0, 255).astype(np.uint8)
        assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-15)

    def test_matches_independent_reference_64(self):
        # fixed pseudo-random pair, 3-scale fallback at 64x64
        rng = np.random.default_rng(1234)
        base = rng.integers(0, 256, (64, 64)).astype(np.float64)
        smooth = (base + np.roll(base, 1, 0) + np.roll(base, 1, 1)) / 3.0
        a = np.clip(smooth, 0, 255)
        b = np.clip(smooth + rng.normal(0, 4.0, smooth.shape), 0, 255)
        got = ms_ssim(a, b)
        expected = msssim_reference(a, b)
        assert got == pytest.approx(expected, abs=1e-9)
        assert 0.0 < got < 1.0

    def test_matches_reference_other_sizes(self):
        rng = np.random.default_rng(99)
        for shape in ((48, 32), (24, 40)):
            a = rng.uniform(0, 255, shape)
            b = np.clip(a + rng.normal(0, 6, shape), 0, 255)
            assert ms_ssim(a, b) == pytest.approx(msssim_reference(a, b), abs=1e-9)

    def test_one_iff_identical(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 256, (32, 32)).astype(np.uint8)
        b = a.copy()
        b[5, 5] = (int(b[5, 5]) + 40) % 256
        assert ms_ssim(a, b) < 1.0 - 1e-12
        assert ms_ssim(a, a) == 1.0

    def test_degenerate_constant_planes(self):
        const = np.full((32, 32), 77, np.uint8)
        assert ms_ssim(const, const.copy()) == 1.0
        other = np.full((32, 32), 177, np.uint8)
        assert ms_ssim(const, other) < 1.0

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            a = rng.uniform(0, 255, (32, 32))
            b = rng.uniform(0, 255, (32, 32))
            v = ms_ssim(a, b)
            assert 0.0 < v <= 1.0

    def test_plane_too_small(self):
        with pytest.raises(ValueError):
            ms_ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestMsssimToDb:
    def test_closed_forms(self):
        assert msssim_to_db(0.9) == pytest.approx(10.0, abs=1e-12)
        assert msssim_to_db(0.99) == pytest.approx(20.0, abs=1e-12)

    def test_rejects_one(self):
        with pytest.raises(ValueError):
            msssim_to_db(1.0)


class TestRdCurve:
    def test_requires_four_points(self):
        with pytest.raises(ValueError):
            RdCurve([RdPoint(1, 30), RdPoint(2, 31), RdPoint(3, 32)])

    def test_requires_monotone(self):
        with pytest.raises(ValueError):
            RdCurve([RdPoint(1, 30), RdPoint(2, 31), RdPoint(3, 30.5), RdPoint(4, 33)])
        with pytest.raises(ValueError):
            RdCurve([RdPoint(1, 30), RdPoint(0.5, 31), RdPoint(3, 32), RdPoint(4, 33)])

    def test_requires_positive_rate_finite_quality(self):
        with pytest.raises(ValueError):
            RdCurve([RdPoint(0, 30), RdPoint(2, 31), RdPoint(3, 32), RdPoint(4, 33)])
        with pytest.raises(ValueError):
            RdCurve([RdPoint(1, 30), RdPoint(2, 31), RdPoint(3, 32), RdPoint(4, math.inf)])


def curve(rates, quals, label=""):
    return RdCurve([RdPoint(r, q) for r, q in zip(rates, quals)], label)


ANCHOR_RATES = [100.0, 200.0, 400.0, 800.0]
ANCHOR_QUALS = [30.0, 33.0, 36.0, 39.0]


class TestBdRate:
    def test_identical_curves_zero(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        b = curve(ANCHOR_RATES, ANCHOR_QUALS)
        assert bd_rate(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_double_rate_plus_100(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        b = curve([2 * r for r in ANCHOR_RATES], ANCHOR_QUALS)
        assert bd_rate(a, b) == pytest.approx(100.0, abs=1e-4)

    def test_ninety_percent_rate_minus_10(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        b = curve([0.9 * r for r in ANCHOR_RATES], ANCHOR_QUALS)
        assert bd_rate(a, b) == pytest.approx(-10.0, abs=1e-4)

    def test_constant_scaling_rule(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        for k in (0.5, 1.25, 3.0):
            b = curve([k * r for r in ANCHOR_RATES], ANCHOR_QUALS)
            assert bd_rate(a, b) == pytest.approx((k - 1) * 100.0, abs=1e-6)

    def test_non_uniform_matches_dense_integration(self):
        a_rates = [100.0, 210.0, 395.0, 800.0]
        a_quals = [30.0, 32.5, 35.1, 38.2]
        t_rates = [90.0, 180.0, 380.0, 750.0]
        t_quals = [30.5, 33.2, 35.9, 38.8]
        got = bd_rate(curve(a_rates, a_quals), curve(t_rates, t_quals))
        expected = bd_rate_dense(a_rates, a_quals, t_rates, t_quals)
        assert got == pytest.approx(expected, abs=1e-4)
        assert got < 0  # the test curve is cheaper at equal quality

    def test_antisymmetry_on_shared_quality_grid(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        b = curve([110.0, 190.0, 420.0, 760.0], ANCHOR_QUALS)
        forward = bd_rate(a, b)
        backward = bd_rate(b, a)
        assert (1 + forward / 100.0) * (1 + backward / 100.0) == pytest.approx(1.0, abs=1e-6)

    def test_no_overlap_error(self):
        a = curve(ANCHOR_RATES, ANCHOR_QUALS)
        b = curve(ANCHOR_RATES, [40.0, 41.0, 42.0, 43.0])
        with pytest.raises(ValueError, match="overlap"):
            bd_rate(a, b)
