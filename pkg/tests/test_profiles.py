import numpy as np
import pytest

from loadveil.profiles import (
    InvalidInputError,
    LoadProfile,
    NoiseProfile,
    constant_profile,
    first_differences,
    make_rng,
    oplus,
    sample_noise,
)


class TestLoadProfile:
    def test_rejects_short_negative_and_nonfinite(self):
        with pytest.raises(InvalidInputError):
            LoadProfile([4.0])
        with pytest.raises(InvalidInputError):
            LoadProfile([1.0, -0.1])
        with pytest.raises(InvalidInputError):
            LoadProfile([1.0, np.nan])
        with pytest.raises(InvalidInputError):
            LoadProfile([1.0, 2.0], freq=0)

    def test_values_are_read_only(self):
        x = LoadProfile([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            x.values[0] = 5.0

    def test_replace_keeps_metadata(self):
        x = LoadProfile([1.0, 2.0], freq=48, id="a")
        y = x.replace([3.0, 4.0])
        assert (y.freq, y.id) == (48, "a")
        assert np.array_equal(y.values, [3.0, 4.0])


class TestFirstDifferences:
    @pytest.mark.parametrize(
        "values, expected",
        [((1, 2, 4), (1, 2)), ((3, 3, 3), (0, 0)), ((0.5, 0.2, 0.9), (-0.3, 0.7))],
    )
    def test_examples(self, values, expected):
        np.testing.assert_allclose(first_differences(LoadProfile(values)).values, expected, atol=1e-15)

    def test_telescoping_sum(self):
        x = make_rng(3).random(50)
        d = first_differences(LoadProfile(x)).values
        assert d.size == 49
        assert np.isclose(d.sum(), x[-1] - x[0])


class TestSampleNoise:
    def test_deterministic(self):
        a = sample_noise(4, 1.0, 11)
        b = sample_noise(4, 1.0, 11)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, sample_noise(4, 1.0, 12).values)

    def test_range(self):
        u = sample_noise(10_000, 0.5, 2)
        assert np.all(np.abs(u.values) <= 0.5)

    def test_mean_of_million_draws(self):
        # Uniform[-1, 1] has mean 0 and sd 1/sqrt(3); the sample mean of 1e6
        # draws has sd ~ 5.8e-4, so 0.01 is a very loose bound.
        assert abs(sample_noise(1_000_000, 1.0, 0).values.mean()) < 0.01

    def test_rejects_nonpositive_amplitude(self):
        with pytest.raises(InvalidInputError):
            sample_noise(4, 0.0, 1)

    def test_noise_profile_checks_amplitude(self):
        with pytest.raises(InvalidInputError):
            NoiseProfile(np.array([0.2, 0.7]), 0.5, 0)


def _reference_oplus(x, u, tol=1e-9):
    """Straight transcription of the clip-and-redistribute loop."""
    x = np.asarray(x, float)
    target = x.sum()
    y = np.maximum(x + np.asarray(u, float), 0.0)
    for _ in range(100):
        s = target - y.sum()
        if abs(s) <= tol * target:
            return y
        pos = y > 0
        y = np.where(pos, y + s * y / y[pos].sum(), 0.0)
        y = np.maximum(y, 0.0)
    raise AssertionError("no convergence")


class TestOplus:
    def test_zero_noise_is_identity(self):
        x = LoadProfile([1.0, 1.0, 1.0, 1.0])
        assert np.array_equal(oplus(x, [0, 0, 0, 0]).values, x.values)

    def test_no_clipping_adds_exactly(self):
        np.testing.assert_array_equal(oplus(LoadProfile([1.0, 1.0]), [0.5, -0.5]).values, [1.5, 0.5])

    def test_clipping_example(self):
        # [DERIVED] by the reference loop: y' = (0, 2.3), surplus 0.3 taken
        # from the only positive entry -> (0, 2.0).
        y = oplus(LoadProfile([0.2, 1.8]), [-0.5, 0.5]).values
        np.testing.assert_allclose(y, _reference_oplus([0.2, 1.8], [-0.5, 0.5]), atol=1e-12)
        np.testing.assert_allclose(y, [0.0, 2.0], atol=1e-12)

    def test_matches_reference_on_random_cases(self):
        rng = make_rng(5)
        for _ in range(200):
            x = rng.random(20) * rng.integers(0, 2, 20)
            if x.sum() == 0:
                continue
            u = rng.uniform(-1, 1, 20)
            np.testing.assert_allclose(
                oplus(LoadProfile(x), u).values, _reference_oplus(x, u), rtol=1e-9, atol=1e-12
            )

    def test_all_zero_profile_is_returned(self):
        x = LoadProfile([0.0, 0.0, 0.0])
        assert np.array_equal(oplus(x, [0.3, -0.2, 0.1]).values, x.values)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            oplus(LoadProfile([1.0, 2.0]), [0.1, 0.2, 0.3])


class TestConstantProfile:
    def test_mean(self):
        c = constant_profile(LoadProfile([1.0, 2.0, 3.0], freq=3))
        assert np.array_equal(c.values, [2.0, 2.0, 2.0])
        assert c.freq == 3

    def test_zero(self):
        assert np.array_equal(constant_profile(LoadProfile([0.0, 0.0])).values, [0.0, 0.0])
