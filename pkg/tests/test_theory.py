import numpy as np
import pytest

from diffshift.denoisers import GaussianMoments
from diffshift.theory import (OutOfRegimeError, TheoremProbe,
                              WindowBoundQuery, convergence_study,
                              flow_reference_state, gamma_linear_schedule,
                              invert_alpha_bar, kl_objective,
                              oracle_best_timestep, optimal_shift_variance,
                              theorem_agreement_rate, window_bounds)
from diffshift.schedule import q_sample
from diffshift.rng import substream


class TestOptimalShiftVariance:
    def test_zero_error_is_identity(self):
        probe = TheoremProbe(sigma_prev=0.7, err_sq=0.0, d=3072)
        assert optimal_shift_variance(probe) == 0.7

    def test_hand_value(self):
        # 0.9 - 3.072 / (3072 * 3071)
        probe = TheoremProbe(sigma_prev=0.9, err_sq=3.072, d=3072)
        assert optimal_shift_variance(probe) == pytest.approx(0.8999996744,
                                                              abs=1e-10)

    def test_out_of_regime(self):
        with pytest.raises(OutOfRegimeError):
            optimal_shift_variance(TheoremProbe(sigma_prev=0.1, err_sq=1.0, d=2))

    def test_probe_validation(self):
        with pytest.raises(ValueError):
            TheoremProbe(sigma_prev=0.0, err_sq=0.0, d=4)
        with pytest.raises(ValueError):
            TheoremProbe(sigma_prev=0.5, err_sq=-1.0, d=4)
        with pytest.raises(ValueError):
            TheoremProbe(sigma_prev=0.5, err_sq=0.0, d=1)


class TestKLObjective:
    def test_matched_moments_value(self, schedule):
        # prediction equal to the forward marginal: objective reduces to
        # (d/2)(log sigma + 1) in both forms
        t = 500
        ab = schedule.alpha_bars[t]
        sigma = 1.0 - ab
        d = 4
        x0 = np.full(d, 0.3)
        pred = GaussianMoments(mean=np.sqrt(ab) * x0,
                               variance=np.full(d, sigma))
        # standard form: (d/2)(log sigma + 1); published form multiplies the
        # trace coefficient by d, giving (d/2) log sigma + d^2 / 2
        assert kl_objective(pred, t, x0, schedule, form="standard") == \
            pytest.approx(0.5 * d * (np.log(sigma) + 1.0), abs=1e-12)
        assert kl_objective(pred, t, x0, schedule, form="published") == \
            pytest.approx(0.5 * d * np.log(sigma) + 0.5 * d * d, abs=1e-12)

    def test_sign_symmetric_in_error(self, schedule):
        t = 600
        ab = schedule.alpha_bars[t]
        d = 4
        x0 = np.zeros(d)
        e = np.array([0.2, -0.1, 0.05, 0.3])
        for sign in (1.0, -1.0):
            pred = GaussianMoments(mean=np.sqrt(ab) * x0 + sign * e,
                                   variance=np.full(d, 1.0 - ab))
            val = kl_objective(pred, t, x0, schedule)
            if sign == 1.0:
                ref = val
        assert val == pytest.approx(ref, abs=1e-12)

    def test_forms_share_argmin(self, schedule):
        # the two trace coefficients change values, not the minimizer
        t = 700
        d = 8
        rng = substream(0, "verify")
        x0 = rng.standard_normal(d)
        e = 0.3 * rng.standard_normal(d)
        ab = schedule.alpha_bars[t - 1]
        pred = GaussianMoments(mean=np.sqrt(ab) * x0 + e,
                               variance=np.full(d, 1.0 - ab))
        taus = np.arange(t - 21, t + 20)
        mins = []
        for form in ("published", "standard"):
            vals = [kl_objective(pred, ts, x0, schedule, form=form) for ts in taus]
            mins.append(int(taus[int(np.argmin(vals))]))
        assert mins[0] == mins[1]

    def test_invalid_inputs(self, schedule):
        pred = GaussianMoments(mean=np.zeros(2), variance=np.ones(2))
        with pytest.raises(ValueError):
            kl_objective(pred, 100, np.zeros(2), schedule, form="mystery")


class TestOracle:
    def test_zero_error_picks_nominal(self, schedule):
        d = 16
        x0 = np.full(d, 0.5)
        for t in (400, 800):
            pick = oracle_best_timestep(x0, np.zeros(d), t, 20, schedule)
            assert pick == t - 1

    def test_zero_half_width_degenerate(self, schedule):
        d = 8
        pick = oracle_best_timestep(np.zeros(d), 0.1 * np.ones(d), 600, 0,
                                    schedule)
        assert pick == 599

    def test_dense_scan_matches_formula(self, schedule):
        # with a measured state the KL minimizer lands at
        # measured_variance - err_sq / (d (d-1)), the optimal-shift value
        from diffshift.timeshift import intra_sample_variance

        d = 3072
        t = 800
        rng = substream(1, "verify")
        u = rng.standard_normal(d)
        e = 15.0 * u / np.linalg.norm(u)
        x0 = np.zeros(d)
        x_hat = q_sample(x0, t - 1, rng.standard_normal(d), schedule) + e
        pick = oracle_best_timestep(x0, e, t, 40, schedule, sample=x_hat)
        measured = intra_sample_variance(x_hat)
        target = optimal_shift_variance(
            TheoremProbe(sigma_prev=measured, err_sq=float(e @ e), d=d))
        taus = np.arange(t - 41, t + 40)
        by_formula = int(taus[int(np.argmin(np.abs(schedule.variances[taus] - target)))])
        assert abs(pick - by_formula) <= 1

    def test_distance_mode_runs(self, schedule):
        d = 64
        rng = substream(2, "verify")
        x0 = np.zeros(d)
        e = 0.5 * rng.standard_normal(d)
        pick = oracle_best_timestep(x0, e, 700, 10, schedule, mode="distance",
                                    rng=rng, n_mc=64)
        assert 689 <= pick <= 709
        with pytest.raises(ValueError):
            oracle_best_timestep(x0, e, 700, 10, schedule, mode="distance")


def test_theorem_agreement_small_run(schedule):
    rate = theorem_agreement_rate(800, 1.5, 30, schedule,
                                  substream(3, "verify"))
    assert rate >= 0.9


class TestFlowReference:
    def test_stationary_at_mean_scale(self, schedule):
        # a start state exactly on the deterministic trajectory of the data
        # mean stays on it
        mean, var = 1.0, 4.0
        t0, t1 = 900, 100
        ab0 = schedule.alpha_bars[t0]
        x = np.array([np.sqrt(ab0) * mean])
        out = flow_reference_state(x, t0, t1, mean, var, schedule)
        assert out[0] == pytest.approx(np.sqrt(schedule.alpha_bars[t1]) * mean,
                                       abs=1e-12)

    def test_identity_transfer(self, schedule):
        x = np.array([0.3, -1.0])
        assert np.allclose(flow_reference_state(x, 500, 500, 0.0, 1.0, schedule),
                           x, atol=1e-15)


class TestGammaLinearSchedule:
    def test_gamma_is_linear(self):
        sch = gamma_linear_schedule(T=11, gamma_start=0.1, gamma_end=1.0)
        gamma = np.sqrt((1.0 - sch.alpha_bars) / sch.alpha_bars)
        assert np.allclose(gamma, np.linspace(0.1, 1.0, 11), atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            gamma_linear_schedule(T=1)
        with pytest.raises(ValueError):
            gamma_linear_schedule(gamma_start=2.0, gamma_end=1.0)


class TestConvergence:
    def test_slopes_quick(self):
        counts = (10, 20, 40)
        _, ddim = convergence_study("ddim", counts)
        _, s2 = convergence_study("s-pndm", counts)
        _, s4 = convergence_study("f-pndm", counts)
        assert ddim < -0.8
        assert s2 < -1.7
        assert s4 < -3.0
        assert s4 < s2 < ddim

    def test_errors_decrease(self):
        errors, _ = convergence_study("ddim", (10, 20, 40))
        assert errors[0] > errors[1] > errors[2]

    def test_indivisible_count_rejected(self):
        with pytest.raises(ValueError):
            convergence_study("ddim", (7,))


class TestWindowBounds:
    def test_validation(self):
        with pytest.raises(ValueError):
            WindowBoundQuery(t=500, gamma=0.0, err_norm=1.0, x0_norm=1.0)
        with pytest.raises(ValueError):
            WindowBoundQuery(t=500, gamma=0.5, err_norm=0.0, x0_norm=1.0)

    def test_tiny_radius_collapses_to_center(self, schedule):
        q = WindowBoundQuery(t=500, gamma=1e-12, err_norm=1.0, x0_norm=1.0)
        t_min, t_max, w, clamped = window_bounds(q, schedule)
        assert (t_min, t_max, w) == (499, 499, 0)
        assert clamped is False

    def test_monotone_in_error_norm(self, schedule):
        widths = []
        for err in (0.01, 0.05, 0.2):
            q = WindowBoundQuery(t=500, gamma=0.5, err_norm=err, x0_norm=1.0)
            widths.append(window_bounds(q, schedule)[2])
        assert widths[0] <= widths[1] <= widths[2]

    def test_anti_monotone_in_data_norm(self, schedule):
        widths = []
        for x0n in (0.5, 2.0, 8.0):
            q = WindowBoundQuery(t=500, gamma=0.5, err_norm=0.1, x0_norm=x0n)
            widths.append(window_bounds(q, schedule)[2])
        assert widths[0] >= widths[1] >= widths[2]

    def test_clamped_flag(self, schedule):
        q = WindowBoundQuery(t=999, gamma=0.9, err_norm=100.0, x0_norm=1.0)
        t_min, t_max, w, clamped = window_bounds(q, schedule)
        assert clamped is True
        assert t_max == schedule.T - 1

    def test_inversion_roundtrip(self, schedule):
        for t in (0, 1, 123, 500, 998, 999):
            assert invert_alpha_bar(
                schedule, float(np.sqrt(schedule.alpha_bars[t]))) == t
