import numpy as np
import pytest
from scipy import integrate, stats

from csdm.fields import Grid2D, ScalarField2D
from csdm.measurement import (TruncatedGaussianMeasurement,
                              WrappedPhaseMeasurement, measurement_from_dict,
                              phase_from_displacement, phase_noise_pdf,
                              sample_phase_noise, sample_truncated_gaussian,
                              wrap_phase)
from csdm.rng import derive_rng

# std of a +-3 sigma truncated standard normal:
# sqrt(1 - 2*3*phi(3)/(2*Phi(3)-1))
TRUNC_FACTOR = float(np.sqrt(1 - 6 * stats.norm.pdf(3)
                             / (2 * stats.norm.cdf(3) - 1)))


class TestTruncatedGaussian:
    def test_factor_matches_closed_form(self):
        assert TRUNC_FACTOR == pytest.approx(0.9865783925581086, abs=1e-12)

    def test_bounds_strict(self):
        draws = sample_truncated_gaussian(0.7, derive_rng(0), size=200000)
        assert np.abs(draws).max() <= 3 * 0.7

    def test_empirical_std_within_one_percent(self):
        draws = sample_truncated_gaussian(1.0, derive_rng(1), size=1_000_000)
        assert abs(draws.std() / TRUNC_FACTOR - 1.0) < 0.01
        assert abs(draws.mean()) < 0.005

    def test_scales_with_sigma(self):
        a = sample_truncated_gaussian(1.0, derive_rng(2), size=1000)
        b = sample_truncated_gaussian(2.5, derive_rng(2), size=1000)
        np.testing.assert_allclose(2.5 * a, b, rtol=1e-12)

    def test_deterministic(self):
        a = sample_truncated_gaussian(1.0, derive_rng(3), size=64)
        b = sample_truncated_gaussian(1.0, derive_rng(3), size=64)
        np.testing.assert_array_equal(a, b)


class TestPhaseConversion:
    def test_hand_value_100nm(self):
        # 4*pi*1.4*1e-4 mm / 8e-4 mm
        assert phase_from_displacement(1e-4) == pytest.approx(
            2.199114857512855, abs=1e-12)

    def test_linear(self):
        assert phase_from_displacement(2e-4) == pytest.approx(
            2 * phase_from_displacement(1e-4), rel=1e-14)


class TestWrapPhase:
    @pytest.mark.parametrize("phi,expected", [
        (0.0, 0.0),
        (np.pi, np.pi),
        (-np.pi, np.pi),
        (3 * np.pi / 2, -np.pi / 2),
        (2 * np.pi, 0.0),
        (-0.1, -0.1),
    ])
    def test_hand_values(self, phi, expected):
        assert wrap_phase(phi) == pytest.approx(expected, abs=1e-12)

    def test_range_property(self):
        phis = derive_rng(4).uniform(-40, 40, size=10000)
        w = wrap_phase(phis)
        assert np.all(w > -np.pi) and np.all(w <= np.pi)

    def test_periodicity(self):
        phis = derive_rng(5).uniform(-3, 3, size=100)
        np.testing.assert_allclose(wrap_phase(phis + 6 * np.pi),
                                   wrap_phase(phis), atol=1e-9)


class TestPhaseNoisePdf:
    @pytest.mark.parametrize("k", [0.5, 1.0, 5.0, 20.0, 50.0])
    def test_integrates_to_one(self, k):
        val, err = integrate.quad(lambda p: phase_noise_pdf(p, k),
                                  -np.pi, np.pi, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_symmetric_and_peaked_at_zero(self):
        grid = np.linspace(-np.pi, np.pi, 2001)
        for k in (1.0, 10.0):
            pdf = phase_noise_pdf(grid, k)
            np.testing.assert_allclose(pdf, pdf[::-1], atol=1e-12)
            assert np.argmax(pdf) == 1000
            # roundoff can leave ~-1e-22 at the +/-pi tails for large k
            assert np.all(pdf >= -1e-15)

    def test_large_k_gaussian_limit(self):
        # at high SNR the density approaches N(0, 1/k^2)
        k = 50.0
        grid = np.linspace(-0.05, 0.05, 101)
        gauss = stats.norm.pdf(grid, scale=1 / k)
        np.testing.assert_allclose(phase_noise_pdf(grid, k), gauss,
                                   rtol=2e-3)


class TestPhaseNoiseSampling:
    def test_all_in_principal_range(self):
        draws = sample_phase_noise(2.0, derive_rng(6), size=50000)
        assert np.all(draws > -np.pi) and np.all(draws <= np.pi)

    def test_std_approaches_inverse_k(self):
        draws = sample_phase_noise(50.0, derive_rng(7), size=200000)
        assert abs(draws.std() * 50.0 - 1.0) < 0.1

    def test_histogram_matches_pdf(self):
        k = 3.0
        draws = sample_phase_noise(k, derive_rng(8), size=400000)
        hist, edges = np.histogram(draws, bins=40,
                                   range=(-np.pi, np.pi), density=True)
        mids = 0.5 * (edges[:-1] + edges[1:])
        np.testing.assert_allclose(hist, phase_noise_pdf(mids, k), atol=0.02)

    def test_scalar_passthrough(self):
        v = sample_phase_noise(5.0, derive_rng(9))
        assert np.isscalar(v) or np.ndim(v) == 0


class TestMeasurementModels:
    def field(self):
        g = Grid2D(nx=6, ny=5, dx=0.1, dy=0.1)
        rng = derive_rng(10)
        return ScalarField2D(g, rng.normal(size=(2, 5, 6)))

    def test_truncated_gaussian_sigma_semantics(self):
        u = self.field()
        meas = TruncatedGaussianMeasurement(sigma_frac=0.05)
        y = meas.apply(u, derive_rng(11), u_scale=2.0)
        noise = y.data - u.data
        assert np.abs(noise).max() <= 3 * 0.05 * 2.0
        assert np.abs(noise).max() > 0

    def test_truncated_gaussian_deterministic(self):
        u = self.field()
        meas = TruncatedGaussianMeasurement(sigma_frac=0.1)
        a = meas.apply(u, derive_rng(12), u_scale=1.0)
        b = meas.apply(u, derive_rng(12), u_scale=1.0)
        np.testing.assert_array_equal(a.data, b.data)

    def test_wrapped_phase_range_and_shape(self):
        u = self.field()
        meas = WrappedPhaseMeasurement(k_profile=(20.0,))
        y = meas.apply(u, derive_rng(13))
        assert y.data.shape == u.data.shape
        assert np.all(y.data > -np.pi) and np.all(y.data <= np.pi)

    def test_wrapped_phase_row_profile_matches_scalar(self):
        u = self.field()
        scalar = WrappedPhaseMeasurement(k_profile=(20.0,))
        table = WrappedPhaseMeasurement(k_profile=(20.0,) * 5)
        a = scalar.apply(u, derive_rng(14))
        b = table.apply(u, derive_rng(14))
        np.testing.assert_array_equal(a.data, b.data)

    def test_wrapped_phase_pipeline_decomposition(self):
        # apply == wrap(phase(u) + noise) with the same stream
        u = self.field()
        meas = WrappedPhaseMeasurement(k_profile=(15.0,))
        got = meas.apply(u, derive_rng(15))
        rng = derive_rng(15)
        phi = phase_from_displacement(u.data)
        noise = sample_phase_noise(np.broadcast_to(15.0, phi.shape), rng)
        want = wrap_phase(phi + noise)
        np.testing.assert_array_equal(got.data, want)

    @pytest.mark.parametrize("meas", [
        TruncatedGaussianMeasurement(sigma_frac=0.025),
        WrappedPhaseMeasurement(k_profile=(30.0,)),
        WrappedPhaseMeasurement(k_profile=(10.0, 20.0, 30.0)),
    ])
    def test_dict_roundtrip(self, meas):
        clone = measurement_from_dict(meas.to_dict())
        assert clone == meas
