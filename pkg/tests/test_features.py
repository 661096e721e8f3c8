import numpy as np
import pytest

from condmon import dataset, features
from condmon.features import (
    ZeroVarianceError,
    average_downsample,
    crest_factor,
    handcrafted_vector,
    kurtosis,
    peak_to_peak,
    rms,
    skewness,
)


# Plain-Python moment oracle, independent of the numpy implementations.
def moment(x, k):
    mu = sum(x) / len(x)
    return sum((v - mu) ** k for v in x) / len(x)


def oracle_rms(x):
    return (sum(v * v for v in x) / len(x)) ** 0.5


class TestAverageDownsample:
    def test_block_means(self):
        out = average_downsample([1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
        assert out.tolist() == [3.0, 8.0]

    def test_constant_vector(self):
        out = average_downsample(np.full(25, 4.2))
        assert out.shape == (5,)
        np.testing.assert_allclose(out, 4.2)

    def test_full_snapshot_length(self):
        out = average_downsample(np.zeros(20480))
        assert out.shape == (4096,)

    def test_non_divisible_length_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            average_downsample(np.zeros(2048))

    def test_preserves_global_mean(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.normal(3.0, 2.0, size=5 * int(rng.integers(2, 400)))
            out = average_downsample(x)
            assert abs(out.mean() - x.mean()) <= 1e-12 * max(abs(x.mean()), 1.0)


class TestScalarFeatures:
    def test_rms_symmetric_pair(self):
        assert rms([-3.7, 3.7]) == pytest.approx(3.7, rel=1e-15)

    def test_rms_zero(self):
        assert rms([0.0, 0.0, 0.0]) == 0.0

    def test_rms_matches_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            x = rng.normal(size=rng.integers(2, 500))
            assert rms(x) == pytest.approx(oracle_rms(x.tolist()), rel=1e-12)

    def test_kurtosis_known_value(self):
        # m2 = 2, m4 = 6.8 for 1..5
        assert kurtosis([1, 2, 3, 4, 5]) == pytest.approx(1.7, rel=1e-12)

    def test_kurtosis_standard_normal(self):
        x = np.random.default_rng(13).normal(size=100_000)
        assert kurtosis(x) == pytest.approx(3.0, abs=0.2)

    def test_kurtosis_constant_rejected(self):
        with pytest.raises(ZeroVarianceError):
            kurtosis(np.full(10, 2.0))

    def test_skewness_symmetric_is_zero(self):
        x = np.array([-2.0, -1.0, 1.0, 2.0])
        assert abs(skewness(x)) < 1e-12

    def test_skewness_matches_oracle(self):
        x = [0.0, 0.0, 1.0]
        expect = moment(x, 3) / moment(x, 2) ** 1.5
        assert skewness(x) == pytest.approx(expect, rel=1e-12)
        assert skewness(x) == pytest.approx(0.7071067811865475, rel=1e-12)

    def test_skewness_constant_rejected(self):
        with pytest.raises(ZeroVarianceError):
            skewness(np.ones(5))

    def test_crest_factor_constant_is_one(self):
        assert crest_factor(np.full(8, -2.5)) == pytest.approx(1.0, rel=1e-15)

    def test_crest_factor_sine(self):
        t = np.arange(5000) / 5000
        x = np.sin(2 * np.pi * 7 * t)
        assert crest_factor(x) == pytest.approx(np.sqrt(2.0), rel=0.01)

    def test_crest_factor_known_value(self):
        assert crest_factor([0.0, 0.0, 5.0]) == pytest.approx(5.0 / (25 / 3) ** 0.5, rel=1e-12)

    def test_crest_factor_all_zero_rejected(self):
        with pytest.raises(ZeroVarianceError):
            crest_factor(np.zeros(4))

    def test_peak_to_peak_basic(self):
        assert peak_to_peak([-1.0, 5.0]) == 6.0
        assert peak_to_peak(np.full(7, 3.3)) == 0.0

    def test_peak_to_peak_matches_sort_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            x = rng.normal(size=rng.integers(2, 300))
            s = sorted(x.tolist())
            assert peak_to_peak(x) == pytest.approx(s[-1] - s[0], rel=1e-15)

    def test_empty_input_rejected(self):
        for fn in (rms, peak_to_peak, kurtosis, skewness, crest_factor):
            with pytest.raises(ValueError):
                fn([])


class TestHandcraftedVector:
    def test_composition(self):
        x = np.random.default_rng(15).normal(size=1000)
        vec = handcrafted_vector(x)
        assert vec.tolist() == [rms(x), kurtosis(x), skewness(x), crest_factor(x), peak_to_peak(x)]
        assert len(features.FEATURE_NAMES) == 5

    def test_faulty_snapshot_more_impulsive(self):
        healthy = dataset.synth_bearing(
            dataset.SyntheticConfig(n_snapshots=1, snapshot_len=4000, rng_seed=4)
        )[0]
        faulty = dataset.synth_bearing(
            dataset.SyntheticConfig(
                n_snapshots=1, fault_onset=0, impulse_base=6.0, snapshot_len=4000, rng_seed=4
            )
        )[0]
        assert kurtosis(faulty) > kurtosis(healthy)
        assert crest_factor(faulty) > crest_factor(healthy)

    def test_constant_rejected(self):
        with pytest.raises(ZeroVarianceError):
            handcrafted_vector(np.full(100, 1.0))


class TestInvarianceProperties:
    def test_scale_properties(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            x = rng.normal(size=400)
            a = float(rng.uniform(0.1, 50.0))
            assert kurtosis(a * x) == pytest.approx(kurtosis(x), rel=1e-9)
            assert skewness(a * x) == pytest.approx(skewness(x), rel=1e-9)
            assert crest_factor(a * x) == pytest.approx(crest_factor(x), rel=1e-9)
            assert rms(a * x) == pytest.approx(a * rms(x), rel=1e-9)
            assert peak_to_peak(a * x) == pytest.approx(a * peak_to_peak(x), rel=1e-9)

    def test_shift_properties(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=400)
        c = 7.5
        assert kurtosis(x + c) == pytest.approx(kurtosis(x), rel=1e-9)
        assert skewness(x + c) == pytest.approx(skewness(x), abs=1e-9)
        assert peak_to_peak(x + c) == pytest.approx(peak_to_peak(x), rel=1e-9)
        assert rms(x + c) != pytest.approx(rms(x), rel=1e-3)
        assert crest_factor(x + c) != pytest.approx(crest_factor(x), rel=1e-3)
