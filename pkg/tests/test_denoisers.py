import numpy as np
import pytest

from diffshift.denoisers import (AnalyticGaussianDenoiser, GaussianMoments,
                                 MLPDenoiser, ModelError, PerturbationSpec,
                                 PerturbedDenoiser, load_checkpoint,
                                 mixture_moments, posterior_mean_x0,
                                 save_checkpoint, validate_mixture)
from diffshift.schedule import build_schedule, select_time_grid


def single(mean, variance, d=2):
    return [GaussianMoments(mean=np.full(d, float(mean)),
                            variance=np.full(d, float(variance)))]


class TestGaussianMoments:
    def test_scalar_variance_broadcast(self):
        c = GaussianMoments(mean=np.zeros(3), variance=np.array([2.0]))
        assert c.variance.tolist() == [2.0, 2.0, 2.0]

    def test_invalid_parameters(self):
        with pytest.raises(ModelError):
            GaussianMoments(mean=np.zeros(2), variance=np.array([1.0, -1.0]))
        with pytest.raises(ModelError):
            GaussianMoments(mean=np.array([np.nan, 0.0]), variance=np.ones(2))
        with pytest.raises(ModelError):
            GaussianMoments(mean=np.zeros(2), variance=np.ones(2), weight=1.5)

    def test_mixture_validation(self):
        a = GaussianMoments(mean=np.zeros(2), variance=np.ones(2), weight=0.6)
        b = GaussianMoments(mean=np.ones(2), variance=np.ones(2), weight=0.6)
        with pytest.raises(ModelError):
            validate_mixture([a, b])
        with pytest.raises(ModelError):
            validate_mixture([])

    def test_mixture_moments_two_modes(self):
        comps = [GaussianMoments(mean=np.array([1.0, 0.0]), variance=np.ones(2), weight=0.5),
                 GaussianMoments(mean=np.array([-1.0, 0.0]), variance=np.ones(2), weight=0.5)]
        mean, cov = mixture_moments(comps)
        assert np.allclose(mean, 0.0)
        # mode spread adds 1 to the first coordinate's variance
        assert np.allclose(cov, np.diag([2.0, 1.0]))


class TestAnalyticDenoiser:
    def test_zero_input_zero_mean(self, schedule):
        model = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        assert np.allclose(model.predict(np.zeros((4, 2)), 500), 0.0)

    def test_unit_gaussian_closed_form(self, schedule):
        # m=0, v=1: eps_hat = sqrt(1 - ab) * x
        model = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        x = np.array([[0.3, -1.2], [2.0, 0.1]])
        for t in (10, 400, 900):
            ab = schedule.alpha_bars[t]
            assert np.allclose(model.predict(x, t), np.sqrt(1.0 - ab) * x,
                               atol=1e-12)

    def test_point_mass_at_forward_mean(self, schedule):
        m = 0.7
        model = AnalyticGaussianDenoiser(single(m, 1e-12), schedule)
        t = 300
        x = np.full((1, 2), np.sqrt(schedule.alpha_bars[t]) * m)
        assert np.allclose(model.predict(x, t), 0.0, atol=1e-6)

    def test_far_modes_collapse_to_single(self, schedule):
        far = [GaussianMoments(mean=np.array([30.0, 30.0]), variance=np.ones(2), weight=0.5),
               GaussianMoments(mean=np.array([-30.0, -30.0]), variance=np.ones(2), weight=0.5)]
        lone = [GaussianMoments(mean=np.array([30.0, 30.0]), variance=np.ones(2))]
        t = 100
        x = np.sqrt(schedule.alpha_bars[t]) * np.array([[30.0, 30.0]])
        mix = AnalyticGaussianDenoiser(far, schedule)
        ref = AnalyticGaussianDenoiser(lone, schedule)
        assert np.allclose(mix.predict(x, t), ref.predict(x, t), atol=1e-6)

    def test_posterior_mean_consistency(self, schedule):
        comps = [GaussianMoments(mean=np.array([1.0, -1.0]), variance=np.array([0.5, 2.0]), weight=0.3),
                 GaussianMoments(mean=np.array([-2.0, 0.5]), variance=np.array([1.0, 1.0]), weight=0.7)]
        model = AnalyticGaussianDenoiser(comps, schedule)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 2))
        for t in (5, 500, 995):
            ab = schedule.alpha_bars[t]
            eps = model.predict(x, t)
            x0_from_eps = (x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
            assert np.allclose(x0_from_eps, posterior_mean_x0(comps, x, t, schedule),
                               atol=1e-10)

    def test_degenerate_alpha_bar_rejected(self):
        sch = build_schedule()
        model = AnalyticGaussianDenoiser(single(0.0, 1.0), sch)
        with pytest.raises((ModelError, Exception)):
            model.predict(np.zeros((1, 2)), -1)

    def test_per_row_timesteps(self, schedule):
        model = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        x = np.ones((3, 2))
        t = np.array([10, 500, 900])
        out = model.predict(x, t)
        for i in range(3):
            assert np.allclose(out[i], model.predict(x[i:i + 1], int(t[i]))[0])


class TestMLPDenoiser:
    def test_deterministic_predict(self, schedule):
        model = MLPDenoiser(2, schedule, hidden=(16,), temb_dim=8,
                            rng=np.random.default_rng(0))
        x = np.array([[0.1, -0.2]])
        a = model.predict(x, 500)
        b = model.predict(x, 500)
        assert np.array_equal(a, b)
        assert a.shape == x.shape

    def test_output_shape_matches_input(self, schedule):
        model = MLPDenoiser(3, schedule, hidden=(8,), temb_dim=4)
        flat = model.predict(np.zeros(3), 10)
        assert flat.shape == (3,)

    def test_invalid_dimension(self, schedule):
        with pytest.raises(ModelError):
            MLPDenoiser(0, schedule)


class TestPerturbedDenoiser:
    def test_zero_phi_is_identity(self, schedule):
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        spec = PerturbationSpec.constant(0.0, schedule.T, seed=1)
        wrapped = PerturbedDenoiser(inner, spec, schedule)
        x = np.random.default_rng(0).standard_normal((5, 2))
        assert np.array_equal(wrapped.predict(x, 700), inner.predict(x, 700))

    def test_negative_phi_rejected(self, schedule):
        with pytest.raises(ModelError):
            PerturbationSpec(phi=np.full(schedule.T, -0.1), seed=0)

    def test_state_error_scale(self, schedule):
        # induced error on the next state must have std phi = 0.1
        d, n, phi, t = 1000, 200, 0.1, 600
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0, d=d), schedule)
        spec = PerturbationSpec.constant(phi, schedule.T, seed=2)
        wrapped = PerturbedDenoiser(inner, spec, schedule)
        x = np.random.default_rng(1).standard_normal((n, d))
        delta_eps = wrapped.predict(x, t) - inner.predict(x, t)
        gain = wrapped.state_gain(t)[0]
        state_delta = gain * delta_eps
        assert float(state_delta.std()) == pytest.approx(phi, rel=0.05)
        assert abs(state_delta.mean()) < 3.0 * phi / np.sqrt(n * d)

    def test_counter_stream_reproducible(self, schedule):
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        spec = PerturbationSpec.constant(0.05, schedule.T, seed=9)
        x = np.random.default_rng(2).standard_normal((4, 2))
        runs = []
        for _ in range(2):
            wrapped = PerturbedDenoiser(inner, spec, schedule)
            runs.append([wrapped.predict(x, t) for t in (900, 700, 500)])
        for a, b in zip(*runs):
            assert np.array_equal(a, b)

    def test_reset_stream_replays(self, schedule):
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        wrapped = PerturbedDenoiser(inner, PerturbationSpec.constant(0.05, schedule.T, seed=9),
                                    schedule)
        x = np.ones((2, 2))
        first = wrapped.predict(x, 800)
        wrapped.reset_stream()
        assert np.array_equal(wrapped.predict(x, 800), first)

    def test_grid_aware_gain(self, schedule):
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        grid = select_time_grid(schedule, 10)
        spec = PerturbationSpec.constant(0.05, schedule.T, seed=0)
        on_grid = PerturbedDenoiser(inner, spec, schedule, grid=grid)
        fine = PerturbedDenoiser(inner, spec, schedule)
        # a 100-step transfer amplifies eps errors more than a 1-step transfer
        assert on_grid.state_gain(900)[0] > fine.state_gain(900)[0]


class TestCheckpoint:
    def test_mlp_round_trip(self, schedule, tmp_path):
        model = MLPDenoiser(2, schedule, hidden=(8, 8), temb_dim=4,
                            rng=np.random.default_rng(5))
        path = str(tmp_path / "model.txt")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.variant == "mlp"
        for a, b in zip(model.weights + model.biases,
                        loaded.weights + loaded.biases):
            assert np.array_equal(a, b)
        x = np.array([[0.5, -0.5]])
        assert np.array_equal(model.predict(x, 123), loaded.predict(x, 123))

    def test_analytic_round_trip(self, schedule, tmp_path):
        model = AnalyticGaussianDenoiser(single(1.5, 0.25), schedule)
        path = str(tmp_path / "model.txt")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.variant == "analytic-gaussian"
        x = np.array([[0.1, 0.2]])
        assert np.array_equal(model.predict(x, 50), loaded.predict(x, 50))

    def test_perturbed_round_trip(self, schedule, tmp_path):
        inner = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        model = PerturbedDenoiser(inner, PerturbationSpec.constant(0.1, schedule.T, seed=4),
                                  schedule)
        path = str(tmp_path / "model.txt")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        x = np.ones((2, 2))
        assert np.array_equal(model.predict(x, 700), loaded.predict(x, 700))

    def test_schema_version_enforced(self, schedule, tmp_path):
        import json
        model = AnalyticGaussianDenoiser(single(0.0, 1.0), schedule)
        path = str(tmp_path / "model.txt")
        save_checkpoint(model, path)
        doc = json.load(open(path))
        doc["schema_version"] = 99
        with open(path, "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(ModelError):
            load_checkpoint(path)
