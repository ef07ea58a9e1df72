"""Annealed Langevin sampler, step-size diagnostic, posterior statistics."""

import numpy as np
import pytest

import csdm.sampler as sampler_module
from csdm import (
    NonFiniteStateError,
    NormalizationStats,
    PosteriorSummary,
    SamplerConfig,
    annealed_langevin,
    check_epsilon,
    epsilon_grid_search,
    make_schedule,
    posterior_stats,
)
from csdm.errors import BadOrderingError, TooFewSamplesError

# ratio of consecutive levels for the 20 -> 0.01, 128-level ladder
REFERENCE_GAMMA = 1.0616768855862784


class TestCheckEpsilon:
    def test_reference_value_squared_form(self):
        got = check_epsilon(5.7e-6, 0.01, REFERENCE_GAMMA, 5)
        assert got == pytest.approx(1.0837302378868212, rel=1e-12)

    def test_reference_value_printed_form(self):
        got = check_epsilon(5.7e-6, 0.01, REFERENCE_GAMMA, 5, form="printed")
        assert got == pytest.approx(1.514652655300548, rel=1e-12)

    def test_vanishing_step_limit_is_gamma_squared(self):
        # eps -> 0+ freezes the within-level recursion at gamma^2
        got = check_epsilon(1e-15, 0.01, REFERENCE_GAMMA, 5)
        assert got == pytest.approx(REFERENCE_GAMMA ** 2, rel=1e-6)

    def test_printed_form_second_term_is_constant_two(self):
        # D = eps collapses 2 eps / D to 2 identically
        for eps in (1e-8, 1e-6, 1e-5):
            base = (1 - eps / 0.01 ** 2) ** 10
            want = base * (REFERENCE_GAMMA ** 2 - 2.0) + 2.0
            got = check_epsilon(eps, 0.01, REFERENCE_GAMMA, 5, form="printed")
            assert got == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("kwargs", [
        dict(eps=0.0), dict(eps=-1e-6), dict(sigma_l=0.0), dict(gamma=1.0),
        dict(gamma=0.5), dict(T=0),
    ])
    def test_invalid_arguments(self, kwargs):
        args = dict(eps=1e-6, sigma_l=0.01, gamma=1.05, T=5)
        args.update(kwargs)
        with pytest.raises(BadOrderingError):
            check_epsilon(args["eps"], args["sigma_l"], args["gamma"], args["T"])

    def test_unknown_form(self):
        with pytest.raises(ValueError, match="form"):
            check_epsilon(1e-6, 0.01, 1.05, 5, form="cubed")

    def test_degenerate_denominator(self):
        # eps = 2 sigma_l^2 makes (1 - eps/sigma_l^2)^2 = 1 in the squared form
        with pytest.raises(BadOrderingError, match="denominator"):
            check_epsilon(2 * 0.01 ** 2, 0.01, 1.05, 5)


class TestEpsilonGridSearch:
    def test_returns_grid_argmin(self):
        sigma_l, gamma, T, num = 0.01, REFERENCE_GAMMA, 5, 200
        got = epsilon_grid_search(sigma_l, gamma, T, num=num)
        grid = sigma_l ** 2 * np.logspace(-6, np.log10(1.9), num)
        vals = [abs(check_epsilon(float(e), sigma_l, gamma, T) - 1.0)
                for e in grid]
        assert got == pytest.approx(float(grid[int(np.argmin(vals))]), rel=0)

    def test_statistic_near_one_at_result(self):
        eps = epsilon_grid_search(0.01, REFERENCE_GAMMA, 100)
        assert abs(check_epsilon(eps, 0.01, REFERENCE_GAMMA, 100) - 1.0) < 0.1


class TestSamplerConfig:
    def test_to_dict(self):
        cfg = SamplerConfig(epsilon=1e-5, steps_per_level=3, n_samples=10,
                            batch_size=4, seed=9)
        assert cfg.to_dict() == {"epsilon": 1e-5, "steps_per_level": 3,
                                 "n_samples": 10, "batch_size": 4, "seed": 9}

    def test_nonpositive_epsilon_rejected(self):
        with pytest.raises(BadOrderingError):
            SamplerConfig(epsilon=0.0)

    @pytest.mark.parametrize("kwargs", [
        dict(steps_per_level=0), dict(n_samples=0), dict(batch_size=0),
    ])
    def test_nonpositive_counts_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SamplerConfig(epsilon=1e-5, **kwargs)


class _FlatGen:
    """Stand-in stream: uniform draws are a constant, noise is zero."""

    def uniform(self, lo, hi, size=None):
        return np.full(size, 0.25)

    def standard_normal(self, size=None):
        return np.zeros(size)


class TestLangevinMechanics:
    SCHED = make_schedule(1.0, 0.1, 5)

    def test_zero_score_zero_noise_returns_init(self, monkeypatch):
        monkeypatch.setattr(sampler_module, "derive_rng",
                            lambda *key: _FlatGen())
        cfg = SamplerConfig(epsilon=0.01, steps_per_level=3, n_samples=4,
                            batch_size=2, seed=0)
        zero = lambda x, y, s: np.zeros_like(x)
        out = annealed_langevin(zero, None, self.SCHED, cfg, shape=(2, 3))
        np.testing.assert_array_equal(out, np.full((4, 2, 3), 0.25))

    def test_unit_score_accumulates_step_sizes(self, monkeypatch):
        # with s = 1 and no noise the chain drifts by T sum_i alpha_i plus
        # the final sigma_L^2 denoising step; checks alpha_i = eps s_i^2/s_L^2
        monkeypatch.setattr(sampler_module, "derive_rng",
                            lambda *key: _FlatGen())
        eps, T = 0.01, 3
        cfg = SamplerConfig(epsilon=eps, steps_per_level=T, n_samples=2,
                            batch_size=2, seed=0)
        ones = lambda x, y, s: np.ones_like(x)
        out = annealed_langevin(ones, None, self.SCHED, cfg, shape=(2,))
        sig = self.SCHED.as_array()
        want = 0.25 + T * np.sum(eps * sig ** 2 / sig[-1] ** 2) + sig[-1] ** 2
        np.testing.assert_allclose(out, want, rtol=1e-12)

    def test_score_sees_descending_levels_then_final_denoise(self, monkeypatch):
        monkeypatch.setattr(sampler_module, "derive_rng",
                            lambda *key: _FlatGen())
        seen = []
        def spy(x, y, s):
            seen.append(s)
            return np.zeros_like(x)
        cfg = SamplerConfig(epsilon=0.01, steps_per_level=2, n_samples=1,
                            batch_size=1, seed=0)
        annealed_langevin(spy, None, self.SCHED, cfg, shape=(1,))
        assert len(seen) == self.SCHED.L * 2 + 1
        per_level = seen[:-1:2]
        np.testing.assert_allclose(per_level, self.SCHED.as_array())
        assert seen[-1] == self.SCHED.sigmaL

    def test_y_hat_passed_through_untouched(self, monkeypatch):
        monkeypatch.setattr(sampler_module, "derive_rng",
                            lambda *key: _FlatGen())
        y_hat = np.arange(6.0).reshape(2, 3)
        seen = []
        def spy(x, y, s):
            seen.append(y)
            return np.zeros_like(x)
        cfg = SamplerConfig(epsilon=0.01, steps_per_level=1, n_samples=1,
                            batch_size=1, seed=0)
        annealed_langevin(spy, y_hat, self.SCHED, cfg, shape=(2, 3))
        assert all(y is y_hat for y in seen)

    def test_diverging_state_raises_with_location(self):
        cfg = SamplerConfig(epsilon=0.5, steps_per_level=2, n_samples=2,
                            batch_size=2, seed=0)
        blowup = lambda x, y, s: np.full_like(x, 1e9)
        with pytest.raises(NonFiniteStateError, match="level 1"):
            annealed_langevin(blowup, None, self.SCHED, cfg, shape=(2,))

    def test_nan_state_raises(self):
        cfg = SamplerConfig(epsilon=0.01, steps_per_level=1, n_samples=1,
                            batch_size=1, seed=0)
        nan = lambda x, y, s: np.full_like(x, np.nan)
        with pytest.raises(NonFiniteStateError):
            annealed_langevin(nan, None, self.SCHED, cfg, shape=(2,))


def isotropic_score(mean, c):
    m = np.asarray(mean)
    def score(x, y, sigma):
        return -(x - m) / (c ** 2 + sigma ** 2)
    return score


class TestLangevinSampling:
    SCHED = make_schedule(5.0, 0.01, 48)
    EPS = 9.48e-6

    def test_batch_partition_independence(self):
        score = isotropic_score([0.5, 0.5], 0.5)
        outs = []
        for batch in (2, 3, 6):
            cfg = SamplerConfig(epsilon=1e-4, steps_per_level=2, n_samples=6,
                                batch_size=batch, seed=21)
            outs.append(annealed_langevin(score, None,
                                          make_schedule(1.0, 0.1, 4), cfg,
                                          shape=(2,)))
        np.testing.assert_array_equal(outs[0], outs[1])
        np.testing.assert_array_equal(outs[0], outs[2])

    def test_deterministic_and_seed_sensitive(self):
        score = isotropic_score([0.5, 0.5], 0.5)
        sched = make_schedule(1.0, 0.1, 4)
        cfg = SamplerConfig(epsilon=1e-4, steps_per_level=2, n_samples=4,
                            batch_size=4, seed=3)
        a = annealed_langevin(score, None, sched, cfg, shape=(2,))
        b = annealed_langevin(score, None, sched, cfg, shape=(2,))
        np.testing.assert_array_equal(a, b)
        cfg2 = SamplerConfig(epsilon=1e-4, steps_per_level=2, n_samples=4,
                             batch_size=4, seed=4)
        c = annealed_langevin(score, None, sched, cfg2, shape=(2,))
        assert not np.array_equal(a, c)

    def test_recovers_isotropic_gaussian(self):
        # exact smoothed score for N(m, c^2 I); the sampler must reproduce
        # the target's mean and spread
        m, c, n = np.array([0.7, 0.3]), 0.4, 1500
        cfg = SamplerConfig(epsilon=self.EPS, steps_per_level=100,
                            n_samples=n, batch_size=n, seed=11)
        draws = annealed_langevin(isotropic_score(m, c), None, self.SCHED,
                                  cfg, shape=(2,))
        assert np.abs(draws.mean(axis=0) - m).max() < 3 * c / np.sqrt(n)
        assert np.abs(draws.std(axis=0) / c - 1.0).max() < 0.05


class TestPosteriorStats:
    def test_two_sample_hand_formulas(self):
        s = posterior_stats(np.array([[1.0, 2.0], [3.0, 6.0]]))
        np.testing.assert_allclose(s.mean, [2.0, 4.0])
        np.testing.assert_allclose(s.std, [1.0, 2.0])  # population std
        assert s.n == 2

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            posterior_stats(np.ones((1, 4)))

    def test_denormalization(self):
        stats = NormalizationStats(vmin=2.0, vmax=4.0, group="x")
        s = posterior_stats(np.array([[0.0], [1.0]]), stats=stats)
        np.testing.assert_allclose(s.mean, [3.0])
        np.testing.assert_allclose(s.std, [1.0])  # (4-2) * 0.5

    def test_summary_is_frozen(self):
        s = posterior_stats(np.ones((3, 2)) * np.arange(3)[:, None])
        assert isinstance(s, PosteriorSummary)
        with pytest.raises(AttributeError):
            s.n = 5
