import math

import numpy as np
import pytest

from specfid.errors import DataError, ImageError
from specfid.imagecore import Image
from specfid.spectrum import (
    SpectralProfile,
    azimuthal_integral,
    batch_profiles,
    dft2,
    direct_dft2,
    fft1d,
    power_spectrum,
    profile_length,
    profile_stats,
    read_profile_csv,
    read_stats_csv,
    ring_index,
    write_profile_csv,
    write_stats_csv,
)


def _delta(n):
    pixels = np.zeros((n, n))
    pixels[0, 0] = 1.0
    return Image(pixels)


def test_zero_image_has_zero_spectrum():
    assert np.all(dft2(Image(np.zeros((8, 8)))).values == 0)


def test_delta_has_flat_spectrum():
    values = dft2(_delta(8)).values
    assert np.allclose(values, 1.0 + 0.0j, atol=1e-12)


def test_fft_matches_quadruple_sum(random_image):
    image = random_image(8)
    assert np.max(np.abs(dft2(image).values - direct_dft2(image).values)) < 1e-9


def test_fft_matches_direct_and_numpy(rng):
    for _ in range(200):
        n = int(2 ** rng.integers(1, 5))
        image = Image(rng.random((n, n)))
        fast = dft2(image, method="fft").values
        assert np.max(np.abs(fast - dft2(image, method="direct").values)) < 1e-9
        assert np.max(np.abs(fast - np.fft.fft2(image.pixels))) < 1e-9


def test_non_power_of_two_uses_direct_path(rng):
    image = Image(rng.random((6, 5)))
    assert np.max(np.abs(dft2(image).values - np.fft.fft2(image.pixels))) < 1e-9
    with pytest.raises(ValueError):
        dft2(image, method="fft")


def test_fft1d_rejects_odd_length():
    with pytest.raises(ValueError):
        fft1d(np.zeros(3))


def test_real_input_is_conjugate_symmetric(random_image):
    values = dft2(random_image(16)).values
    n = values.shape[0]
    k, l = np.indices((n, n))
    mirrored = values[(-k) % n, (-l) % n]
    assert np.max(np.abs(values - np.conj(mirrored))) < 1e-9


def test_power_of_delta_is_all_ones():
    assert np.allclose(power_spectrum(dft2(_delta(8)), shifted=True), 1.0)


def test_power_of_constant_sits_at_centre():
    c, n = 0.25, 8
    power = power_spectrum(dft2(Image(np.full((n, n), c))), shifted=True)
    expected = np.zeros((n, n))
    expected[n // 2, n // 2] = (c * n * n) ** 2
    assert np.allclose(power, expected, atol=1e-9)
    unshifted = power_spectrum(dft2(Image(np.full((n, n), c))), shifted=False)
    assert unshifted[0, 0] == pytest.approx((c * n * n) ** 2)


def test_parseval(random_image):
    image = random_image(16)
    power = power_spectrum(dft2(image))
    assert power.sum() / 16**2 == pytest.approx(np.sum(image.pixels**2), rel=1e-12)


@pytest.mark.parametrize("n,expected", [(2, 3), (8, 7), (16, 13), (32, 24), (64, 47), (128, 92)])
def test_profile_length(n, expected):
    assert profile_length(n) == expected == math.ceil(n / math.sqrt(2)) + 1


def test_ring_index_covers_every_radius():
    for n in (8, 16, 32, 64, 128):
        rings = ring_index(n)
        assert rings[n // 2, n // 2] == 0
        assert rings.max() <= profile_length(n) - 1


def test_zero_image_profile():
    profile = azimuthal_integral(Image(np.zeros((16, 16))))
    assert len(profile) == profile_length(16)
    assert np.all(profile.values == 0)


def test_constant_profile_is_dc_only():
    c, n = 0.5, 16
    profile = azimuthal_integral(Image(np.full((n, n), c)), mode="binned")
    assert profile.values[0] == pytest.approx((c * n * n) ** 2)
    assert np.allclose(profile.values[1:], 0.0, atol=1e-9)


@pytest.mark.parametrize("n", [8, 16, 32, 64])
def test_binned_profile_partitions_power(rng, n):
    for _ in range(25):
        image = Image(rng.random((n, n)))
        profile = azimuthal_integral(image, mode="binned")
        total = power_spectrum(dft2(image)).sum()
        assert profile.values.sum() == pytest.approx(total, rel=1e-12)
        assert len(profile) == profile_length(n)
        assert profile.n == n


def test_interpolated_profile_shape(random_image):
    image = random_image(16)
    interpolated = azimuthal_integral(image, mode="interpolated")
    binned = azimuthal_integral(image, mode="binned")
    assert len(interpolated) == len(binned)
    assert interpolated.values[0] == pytest.approx(binned.values[0])
    assert np.all(interpolated.values >= 0)


def test_profile_rejects_bad_input():
    with pytest.raises(ImageError):
        azimuthal_integral(Image(np.zeros((8, 4))))
    with pytest.raises(ImageError):
        azimuthal_integral(Image(np.zeros((1, 1))))
    with pytest.raises(ValueError):
        azimuthal_integral(Image(np.zeros((8, 8))), mode="polar")


def test_batch_profiles_keep_order(rng):
    images = [Image(rng.random((8, 8))) for _ in range(6)]
    batched = batch_profiles(images, workers=3)
    for image, profile in zip(images, batched):
        assert np.array_equal(profile.values, azimuthal_integral(image).values)


class TestProfileStats:
    def test_single_profile(self):
        profile = SpectralProfile(np.array([3.0, 1.0, 2.0]), 2)
        mean, std = profile_stats([profile])
        assert np.array_equal(mean.values, profile.values)
        assert np.all(std.values == 0)

    def test_symmetric_pair(self):
        m = np.array([4.0, 3.0, 2.0])
        v = np.array([1.0, 5.0, 2.5])
        mean, _ = profile_stats([SpectralProfile(v, 2), SpectralProfile(-v + 2 * m, 2)])
        assert np.allclose(mean.values, m, atol=1e-12)

    def test_matches_two_pass(self, rng):
        rows = rng.random((100, 7)) * 50
        mean, std = profile_stats([SpectralProfile(row, 8) for row in rows])
        naive_mean = [sum(rows[:, j]) / 100 for j in range(7)]
        naive_std = [math.sqrt(sum((x - naive_mean[j]) ** 2 for x in rows[:, j]) / 100) for j in range(7)]
        assert np.allclose(mean.values, naive_mean, atol=1e-12, rtol=0)
        assert np.allclose(std.values, naive_std, atol=1e-12, rtol=0)

    def test_rejects_empty_and_ragged(self):
        with pytest.raises(ValueError):
            profile_stats([])
        with pytest.raises(ValueError):
            profile_stats([SpectralProfile(np.ones(3), 2), SpectralProfile(np.ones(4), 4)])


class TestProfileCsv:
    def test_values_are_preserved(self, tmp_path, rng):
        path = str(tmp_path / "profiles.csv")
        matrix = rng.random((3, 7))
        write_profile_csv(path, ["real", "generated", "real"], matrix)
        labels, read = read_profile_csv(path)
        assert labels == ["real", "generated", "real"]
        assert np.array_equal(read, matrix)

    def test_header_is_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("name,r0\nreal,1.0\n")
        with pytest.raises(DataError):
            read_profile_csv(str(path))

    @pytest.mark.parametrize(
        "body",
        ["fake,1.0,2.0\n", "real,1.0\n", "real,abc,1.0\n", "real,-1.0,1.0\n", "real,nan,1.0\n", ""],
    )
    def test_bad_rows_are_rejected(self, tmp_path, body):
        path = tmp_path / "bad.csv"
        path.write_text("label,r0,r1\n" + body)
        with pytest.raises(DataError):
            read_profile_csv(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_profile_csv(str(tmp_path / "missing.csv"))


class TestStatsCsv:
    def test_values_are_preserved(self, tmp_path, rng):
        path = str(tmp_path / "stats.csv")
        mean, std = rng.random(5) * 100, rng.random(5)
        write_stats_csv(path, mean, std)
        read_mean, read_std = read_stats_csv(path)
        assert np.array_equal(read_mean, mean)
        assert np.array_equal(read_std, std)

    def test_profile_reader_refuses_stats(self, tmp_path):
        path = str(tmp_path / "stats.csv")
        write_stats_csv(path, np.ones(3), np.zeros(3))
        with pytest.raises(DataError, match="statistics"):
            read_profile_csv(path)

    def test_stats_reader_refuses_profiles(self, tmp_path, rng):
        path = str(tmp_path / "profiles.csv")
        write_profile_csv(path, ["real", "real"], rng.random((2, 3)))
        with pytest.raises(DataError):
            read_stats_csv(path)

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            write_stats_csv(str(tmp_path / "stats.csv"), np.ones(3), np.ones(2))
