import numpy as np
import pytest

from foldcast import data, pgm, spectral
from foldcast.rendering import RenderSpec


def dft2_oracle(img):
    """Direct O(N^2) double-sum DFT."""
    H, W = img.shape
    out = np.zeros((H, W), dtype=complex)
    for u in range(H):
        for v in range(W):
            s = 0.0 + 0.0j
            for x in range(H):
                for y in range(W):
                    s += img[x, y] * np.exp(-2j * np.pi * (u * x / H + v * y / W))
            out[u, v] = s
    return out


def radial_oracle(power):
    """Exhaustive per-pixel binning by floor of the centered radius."""
    H, W = power.shape
    sums, counts = {}, {}
    for u in range(H):
        for v in range(W):
            r = int(np.floor(np.sqrt((u - H / 2) ** 2 + (v - W / 2) ** 2)))
            sums[r] = sums.get(r, 0.0) + power[u, v]
            counts[r] = counts.get(r, 0) + 1
    ks = sorted(sums)
    return np.array(ks), np.array([sums[k] / counts[k] for k in ks]), np.array([counts[k] for k in ks])


class TestDft2:
    def test_matches_double_sum_oracle(self):
        rng = np.random.default_rng(0)
        img = rng.normal(size=(4, 4))
        assert np.abs(spectral.dft2(img) - dft2_oracle(img)).max() < 1e-10

    def test_constant_image(self):
        X = spectral.dft2(np.full((3, 5), 2.0))
        assert X[0, 0] == pytest.approx(2.0 * 15, abs=1e-12)
        X[0, 0] = 0
        assert np.abs(X).max() < 1e-12

    def test_delta_gives_ones(self):
        img = np.zeros((4, 6))
        img[0, 0] = 1.0
        assert np.abs(spectral.dft2(img) - 1.0).max() < 1e-12

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(1)
        img = rng.normal(size=(7, 5))
        assert np.abs(spectral.idft2(spectral.dft2(img)) - img).max() < 1e-10

    def test_parseval(self):
        rng = np.random.default_rng(2)
        img = rng.normal(size=(8, 8))
        spatial = np.sum(img**2)
        freq = np.sum(np.abs(spectral.dft2(img)) ** 2) / img.size
        assert abs(spatial - freq) / spatial < 1e-9


class TestPowerCentered:
    def test_constant_single_center_peak(self):
        ps = spectral.power_centered(np.full((6, 6), 1.5))
        assert ps.power[3, 3] > 0
        masked = ps.power.copy()
        masked[3, 3] = 0
        assert masked.max() < 1e-12

    def test_point_symmetry_for_real_input(self):
        rng = np.random.default_rng(3)
        ps = spectral.power_centered(rng.normal(size=(8, 8))).power
        # P(H/2+u, W/2+v) == P(H/2-u, W/2-v) up to the wrap at the edges
        for u in range(-3, 4):
            for v in range(-3, 4):
                a = ps[4 + u, 4 + v]
                b = ps[4 - u, 4 - v]
                assert abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1e-12)

    def test_2x2_hand_dft(self):
        ps = spectral.power_centered(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert np.abs(ps.power - 1.0).max() < 1e-12


class TestRadialAverage:
    def test_constant_power(self):
        ps = spectral.PowerSpectrum2D(power=np.full((8, 8), 3.0))
        rs = spectral.radial_average(ps)
        assert np.abs(rs.power - 3.0).max() < 1e-12

    @pytest.mark.parametrize("shape", [(4, 4), (5, 7), (16, 16), (9, 12)])
    def test_matches_exhaustive_oracle(self, shape):
        rng = np.random.default_rng(4)
        power = rng.uniform(0.1, 2.0, size=shape)
        rs = spectral.radial_average(spectral.PowerSpectrum2D(power=power))
        ks, means, counts = radial_oracle(power)
        r_max = np.sqrt((shape[0] / 2) ** 2 + (shape[1] / 2) ** 2)
        assert np.allclose(rs.freqs, ks / r_max, atol=1e-12)
        assert np.allclose(rs.power, means, atol=1e-12)
        assert np.array_equal(rs.counts, counts)

    def test_counts_sum_to_pixels(self):
        ps = spectral.PowerSpectrum2D(power=np.ones((10, 14)))
        assert spectral.radial_average(ps).counts.sum() == 140


class TestFitPowerLaw:
    def synthetic_rs(self, alpha, c=1.0):
        freqs = np.linspace(0.01, 0.7, 120)
        power = c * freqs ** (-alpha)
        return spectral.RadialSpectrum(
            freqs=freqs, power=power, counts=np.ones(120, dtype=int), r_max=100.0
        )

    def test_exact_minus_two(self):
        fit = spectral.fit_power_law(self.synthetic_rs(2.0))
        assert abs(fit.alpha - 2.0) < 1e-12
        assert abs(fit.r_squared - 1.0) < 1e-12

    def test_flat_gives_zero(self):
        fit = spectral.fit_power_law(self.synthetic_rs(0.0, c=3.0))
        assert abs(fit.alpha) < 1e-12
        assert fit.r_squared == 1.0

    def test_noisy_recovery(self):
        rng = np.random.default_rng(5)
        rs = self.synthetic_rs(1.5)
        noisy = spectral.RadialSpectrum(
            freqs=rs.freqs,
            power=rs.power * (1.0 + 0.01 * rng.normal(size=rs.freqs.size)),
            counts=rs.counts, r_max=rs.r_max,
        )
        fit = spectral.fit_power_law(noisy)
        assert abs(fit.alpha - 1.5) < 0.05

    def test_mask_bounds_respected(self):
        rs = self.synthetic_rs(2.0)
        fit = spectral.fit_power_law(rs, f_lo=0.1, f_hi=0.3)
        inside = (rs.freqs > 0.1) & (rs.freqs < 0.3)
        assert fit.n_points == int(inside.sum())

    def test_zero_power_bins_dropped(self):
        rs = self.synthetic_rs(1.0)
        power = rs.power.copy()
        power[30:40] = 0.0
        fit = spectral.fit_power_law(
            spectral.RadialSpectrum(rs.freqs, power, rs.counts, rs.r_max)
        )
        assert abs(fit.alpha - 1.0) < 1e-10

    def test_too_few_points(self):
        rs = spectral.RadialSpectrum(
            freqs=np.array([0.01, 0.2]), power=np.array([1.0, 0.0]),
            counts=np.array([1, 1]), r_max=10.0,
        )
        with pytest.raises(ValueError, match="usable bins"):
            spectral.fit_power_law(rs)


class TestSynthImage:
    def test_seed_determinism(self):
        a = spectral.synth_power_law_image(2.0, 32, 32, seed=3)
        b = spectral.synth_power_law_image(2.0, 32, 32, seed=3)
        assert np.array_equal(a, b)

    def test_recovery_small(self):
        for alpha in (1.0, 2.5):
            img = spectral.synth_power_law_image(alpha, 64, 64, seed=1)
            fit = spectral.pss_of_image(img)
            assert abs(fit.alpha - alpha) < 0.05

    def test_flat_alpha_zero(self):
        img = spectral.synth_power_law_image(0.0, 64, 64, seed=2)
        assert abs(spectral.pss_of_image(img).alpha) < 0.05

    def test_min_size(self):
        with pytest.raises(ValueError, match=">= 8"):
            spectral.synth_power_law_image(1.0, 4, 64)


class TestAsciiImage:
    def test_spaces_zero(self):
        assert np.all(spectral.ascii_text_to_image(" " * 10, 4, 4) == 0.0)

    def test_tilde_one(self):
        assert np.all(spectral.ascii_text_to_image("~" * 3, 4, 4) == 1.0)

    def test_tiling(self):
        img = spectral.ascii_text_to_image("ab", 2, 2)
        a = (97 - 32) / 94
        b = (98 - 32) / 94
        assert np.allclose(img, [[a, b], [a, b]], atol=1e-15)

    def test_nonprintable_clamped(self):
        img = spectral.ascii_text_to_image("\n\t", 2, 2)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spectral.ascii_text_to_image("")


class TestLoadGrayscale:
    def test_uniform_zero_after_zscore(self, tmp_path):
        p = tmp_path / "u.pgm"
        pgm.write_pgm16(p, np.full((16, 16), 9.0))
        assert np.all(spectral.load_grayscale_image(p, 16, 16) == 0.0)

    def test_no_resize_at_native(self, tmp_path):
        rng = np.random.default_rng(6)
        img = rng.normal(size=(224, 224))
        p = tmp_path / "n.pgm"
        pgm.write_pgm16(p, img)
        out = spectral.load_grayscale_image(p)
        zs = (img - img.mean()) / img.std()
        assert np.abs(out - zs).max() < 1e-3  # 16-bit quantization

    def test_p3_rejected(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P3\n2 2\n255\n0 0 0 0 0 0 0 0 0 0 0 0\n")
        with pytest.raises(ValueError, match="unsupported"):
            spectral.load_grayscale_image(p)


class TestPgm:
    def test_16bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        img = rng.normal(size=(9, 13)) * 4.2
        p = tmp_path / "r.pgm"
        pgm.write_pgm16(p, img)
        back = pgm.read_pgm(p)
        step = (img.max() - img.min()) / 65535.0
        assert np.abs(back - img).max() <= step

    def test_p2_ascii(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2\n# comment\n3 2\n255\n0 10 20\n30 40 250\n")
        img = pgm.read_pgm(p)
        assert img.shape == (2, 3)
        assert img[1, 2] == 250

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n65535\n\x00\x01")
        with pytest.raises(ValueError, match="truncated"):
            pgm.read_pgm(p)

    def test_corrupt_header(self, tmp_path):
        p = tmp_path / "h.pgm"
        p.write_bytes(b"P5\nxx yy\n255\n")
        with pytest.raises(ValueError, match="corrupt"):
            pgm.read_pgm(p)


class TestPssOfSeries:
    def test_deterministic(self):
        ds = data.synth_series("sinusoid_mix", 2000, 24, amplitude=1.0, noise_std=0.5, seed=1)
        spec = RenderSpec(periodicity=24, image_height=64, image_width=64, patch_size=16)
        a = spectral.pss_of_series(ds, spec, 5, 480, seed=3, horizon=96)
        b = spectral.pss_of_series(ds, spec, 5, 480, seed=3, horizon=96)
        assert np.array_equal(a.alphas, b.alphas)
        assert np.isfinite(a.mean)

    def test_worker_count_invariance(self):
        ds = data.synth_series("sinusoid_mix", 2000, 24, amplitude=1.0, noise_std=0.5, seed=1)
        spec = RenderSpec(periodicity=24, image_height=64, image_width=64, patch_size=16)
        a = spectral.pss_of_series(ds, spec, 6, 480, seed=3, horizon=96, workers=1)
        b = spectral.pss_of_series(ds, spec, 6, 480, seed=3, horizon=96, workers=3)
        assert np.array_equal(a.alphas, b.alphas)

    def test_too_short(self):
        ds = data.synth_series("noise", 100, 10, noise_std=1.0, seed=0)
        spec = RenderSpec(periodicity=10, image_height=32, image_width=32, patch_size=16)
        with pytest.raises(ValueError, match="too short"):
            spectral.pss_of_series(ds, spec, 3, 500)

    def test_sample_std_convention(self):
        stats = spectral.summarize_alphas(np.array([1.0, 2.0, 3.0]))
        assert stats.std == pytest.approx(1.0)  # ddof=1
        assert stats.mean == pytest.approx(2.0)
