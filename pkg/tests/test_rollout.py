import numpy as np
import pytest

from patchlearn.errors import (
    ConfigError,
    InputError,
    InstabilityError,
    NumericalError,
)
from patchlearn.features import FeatureSpec
from patchlearn.homogenize import (
    HomogenizedModel,
    solve_homogenized_1d,
    solve_homogenized_2d,
)
from patchlearn.nets import init_mlp, init_stencil
from patchlearn.rollout import (
    Trajectory,
    error_report,
    fourier_projection,
    integrate_learned,
    rhs_from_model,
    rk4_step,
    rmse,
)


def bias_mlp(beta):
    rng = np.random.default_rng(0)
    params = init_mlp(3, 4, rng, normalize=False)
    for name in ("w1", "w2", "w3"):
        getattr(params, name)[:] = 0.0
    params.b3[:] = beta
    return params


def second_derivative_mlp(a_star, bound=100.0):
    """Exact ReLU realization of x -> a_star * u_xx for |u_xx| < bound."""
    params = init_mlp(3, 2, np.random.default_rng(0), normalize=False)
    params.w1[:] = 0.0
    params.w1[2, 0] = 1.0
    params.b1[:] = bound
    params.w2[:] = [[a_star, 0.0], [-a_star, 0.0]]
    params.b2[:] = [bound, bound]
    params.w3[:] = [[1.0], [-1.0]]
    params.b3[:] = 0.0
    return params


class TestRk4Step:
    def test_scalar_decay_polynomial(self):
        # growth factor 1 + z + z^2/2 + z^3/6 + z^4/24 at z = -0.1
        u1 = rk4_step(lambda u: -u, np.array([1.0]), 0.1)
        assert u1[0] == pytest.approx(0.9048375, abs=1e-12)
        assert u1[0] == pytest.approx(np.exp(-0.1), abs=1e-7)


class TestRhsFromModel:
    def test_bias_only_mlp(self):
        u = np.linspace(0, 1, 9)
        out = rhs_from_model(bias_mlp(2.5), u,
                             feature_spec=FeatureSpec(), dx=0.125)
        np.testing.assert_allclose(out, 2.5)

    def test_mlp_diffusion_operator(self):
        # net computes a* u_xx exactly; FD features carry the O(dx^2) error
        a_star = 0.7
        n = 101
        x = np.linspace(0.0, 1.0, n)
        u = np.sin(2 * np.pi * x)
        out = rhs_from_model(second_derivative_mlp(a_star), u,
                             feature_spec=FeatureSpec(), dx=x[1] - x[0])
        exact = -a_star * (2 * np.pi) ** 2 * u
        interior = slice(2, -2)
        err = np.max(np.abs(out[interior] - exact[interior]))
        assert err < 1e-2 * np.max(np.abs(exact))

    def test_mlp_needs_feature_spec(self):
        with pytest.raises(ConfigError):
            rhs_from_model(bias_mlp(0.0), np.zeros(5), dx=0.1)

    def test_mlp_2d_spectral(self):
        spec = FeatureSpec(descriptors=("u", "u_x", "u_xx"),
                           method="spectral")
        n = 16
        x = np.linspace(0, 2 * np.pi, n, endpoint=False)
        u = np.sin(3 * x)[:, None] * np.ones(n)
        out = rhs_from_model(second_derivative_mlp(0.5, bound=100.0), u,
                             feature_spec=spec)
        np.testing.assert_allclose(out, -0.5 * 9 * u, atol=1e-10)

    def test_bias_only_stencil(self):
        params = init_stencil(1, 3, 4, np.random.default_rng(0),
                              dx=0.1, normalize=False)
        for a in params.arrays().values():
            a[:] = 0.0
        params.b3[:] = -1.25
        out = rhs_from_model(params, np.zeros(8), dx=0.1)
        np.testing.assert_allclose(out, -1.25)

    def test_stencil_grid_mismatch(self):
        params = init_stencil(1, 3, 4, np.random.default_rng(0), dx=0.1)
        with pytest.raises(ConfigError, match="retrain"):
            rhs_from_model(params, np.zeros(8), dx=0.2)

    def test_callable_passthrough(self):
        out = rhs_from_model(lambda u: 3.0 * u, np.array([1.0, 2.0]))
        np.testing.assert_allclose(out, [3.0, 6.0])

    def test_unknown_model(self):
        with pytest.raises(ConfigError):
            rhs_from_model(object(), np.zeros(4))


class TestIntegrateLearned:
    def test_zero_model_constant(self):
        u0 = np.sin(np.linspace(0, np.pi, 11))
        traj = integrate_learned(lambda u: np.zeros_like(u), u0,
                                 np.array([0.0, 0.5, 1.0]),
                                 dx=0.1, a_est=1.0)
        for snap in traj.fields:
            np.testing.assert_array_equal(snap, u0)

    def test_dirichlet_ends_held(self):
        u0 = np.zeros(9)
        traj = integrate_learned(lambda u: np.ones_like(u), u0,
                                 np.array([0.0, 1.0]), dx=0.1, a_est=1.0)
        assert traj.fields[-1][0] == 0.0
        assert traj.fields[-1][-1] == 0.0
        assert np.all(traj.fields[-1][1:-1] > 0.9)

    def test_dt_above_bound_rejected(self):
        with pytest.raises(ConfigError):
            integrate_learned(lambda u: u, np.zeros(5),
                              np.array([0.0, 1.0]), dx=0.1, a_est=1.0,
                              dt=1.0)

    def test_blowup_guard(self):
        with pytest.raises(InstabilityError):
            integrate_learned(lambda u: 1e3 * u, np.ones(5),
                              np.array([0.0, 5.0]), dx=1.0, a_est=0.5,
                              dirichlet_ends=False)

    def test_matches_homogenized_reference(self):
        # the analytic operator as "model" must reproduce the reference
        # solver (same grid, same stability-bounded step selection)
        a_star = 0.46
        dx = 0.02
        n = 51
        x = np.linspace(0.0, 1.0, n)
        u0 = np.sin(np.pi * x) + 0.3 * np.sin(3 * np.pi * x)
        t_grid = np.linspace(0.0, 0.5, 6)
        c = a_star / dx**2

        def operator(u):
            out = np.zeros_like(u)
            out[1:-1] = c * (u[2:] - 2 * u[1:-1] + u[:-2])
            return out

        traj = integrate_learned(operator, u0, t_grid, dx=dx, a_est=a_star)
        ref = solve_homogenized_1d(HomogenizedModel(1, a_star=a_star),
                                   u0, t_grid, dx=dx)
        np.testing.assert_allclose(traj.fields, ref, atol=1e-6)


class TestRmse:
    def ref(self):
        rng = np.random.default_rng(3)
        return Trajectory(np.arange(4.0), rng.normal(size=(4, 6)))

    def test_exact_match_zero(self):
        ref = self.ref()
        pred = Trajectory(ref.times, ref.fields.copy())
        assert rmse(pred, ref) == 0.0

    def test_mean_predictor_one(self):
        ref = self.ref()
        pred = Trajectory(ref.times,
                          np.full_like(ref.fields, ref.fields.mean()))
        assert rmse(pred, ref) == pytest.approx(1.0, abs=1e-12)

    def test_hand_case(self):
        ref = Trajectory(np.array([0.0]), np.array([[0.0, 2.0]]))
        pred = Trajectory(np.array([0.0]), np.array([[1.0, 1.0]]))
        assert rmse(pred, ref) == pytest.approx(1.0, abs=1e-15)

    def test_scale_invariance(self):
        ref = self.ref()
        pred = Trajectory(ref.times, ref.fields + 0.1)
        r1 = rmse(pred, ref)
        scaled_pred = Trajectory(ref.times, 7.0 * pred.fields)
        scaled_ref = Trajectory(ref.times, 7.0 * ref.fields)
        assert rmse(scaled_pred, scaled_ref) == pytest.approx(r1, rel=1e-12)

    def test_constant_reference_rejected(self):
        ref = Trajectory(np.arange(2.0), np.ones((2, 3)))
        with pytest.raises(NumericalError):
            rmse(ref, ref)

    def test_misaligned_rejected(self):
        ref = self.ref()
        with pytest.raises(InputError):
            rmse(Trajectory(ref.times + 0.5, ref.fields), ref)

    def test_per_snapshot_option(self):
        times = np.arange(2.0)
        ref = Trajectory(times, np.array([[0.0, 2.0], [10.0, 14.0]]))
        pred = Trajectory(times, ref.fields + 1.0)
        grand = rmse(pred, ref)
        per = rmse(pred, ref, per_snapshot_mean=True)
        # per-snapshot centering shrinks the denominator here
        assert per > grand


class TestFourierProjection:
    def grid(self, n=32):
        x = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return np.meshgrid(x, x, indexing="ij")

    def test_single_sine_amplitude(self):
        xx, _ = self.grid()
        u = 2.0 * np.sin(3 * xx)
        traj = Trajectory(np.array([0.0, 1.0]), np.stack([u, u]))
        proj = fourier_projection(traj, m=1)
        assert proj.amplitudes[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert proj.amplitudes[1, 0] == pytest.approx(2.0, abs=1e-12)

    def test_constant_field_zero_mode(self):
        u = np.full((16, 16), 0.7)
        traj = Trajectory(np.array([0.0]), u[None])
        proj = fourier_projection(traj, m=1)
        assert proj.modes[0] == (0, 0)
        assert proj.amplitudes[0, 0] == pytest.approx(0.7, abs=1e-14)

    def test_analytic_mode_decay(self):
        model = HomogenizedModel(2, a_xx=1.3, a_yy=0.8)
        xx, yy = self.grid()
        t_grid = np.linspace(0.0, 0.4, 5)
        fields = solve_homogenized_2d(model, np.sin(xx) * np.sin(yy), t_grid)
        proj = fourier_projection(Trajectory(t_grid, fields), m=2)
        expected = proj.amplitudes[0] * \
            np.exp(-(1.3 + 0.8) * t_grid)[:, None]
        np.testing.assert_allclose(proj.amplitudes, expected, atol=1e-12)

    def test_constant_shift_changes_only_zero_mode(self):
        rng = np.random.default_rng(5)
        u = rng.normal(size=(16, 16))
        base = fourier_projection(
            Trajectory(np.array([0.0]), u[None]), m=10)
        shifted = fourier_projection(
            Trajectory(np.array([0.0]), (u + 5.0)[None]), m=10)
        for k, mode in enumerate(shifted.modes):
            if mode == (0, 0):
                continue
            j = base.modes.index(mode) if mode in base.modes else None
            if j is not None:
                assert shifted.amplitudes[0, k] == pytest.approx(
                    base.amplitudes[0, j], abs=1e-12)

    def test_too_many_modes(self):
        traj = Trajectory(np.array([0.0]), np.zeros((1, 4, 4)))
        with pytest.raises(InputError):
            fourier_projection(traj, m=1000)

    def test_requires_2d(self):
        traj = Trajectory(np.array([0.0]), np.zeros((1, 8)))
        with pytest.raises(InputError):
            fourier_projection(traj)


class TestErrorReport:
    def test_exact_match_all_zero(self):
        rng = np.random.default_rng(1)
        ref = Trajectory(np.arange(3.0), rng.normal(size=(3, 5)))
        report = error_report([Trajectory(ref.times, ref.fields.copy())], ref)
        np.testing.assert_array_equal(report.mse, 0.0)
        np.testing.assert_array_equal(report.rmse, 0.0)
        np.testing.assert_array_equal(report.relative_errors, 0.0)

    def test_hand_two_snapshot_case(self):
        times = np.array([0.0, 1.0])
        ref = Trajectory(times, np.array([[1.0, 3.0], [2.0, 2.0]]))
        pred = Trajectory(times, np.array([[1.0, 1.0], [2.0, 4.0]]))
        report = error_report([pred], ref)
        np.testing.assert_allclose(report.mse[0], [2.0, 2.0])
        # rMSE: (4 + 4) / ((1-2)^2 + (3-2)^2 + 0 + 0) = 4
        assert report.rmse[0] == pytest.approx(4.0, abs=1e-14)
        np.testing.assert_allclose(report.magnitudes,
                                   [np.sqrt(5.0), 2.0])
        np.testing.assert_allclose(report.relative_errors, [0.4, 0.5])

    def test_negative_correlation_detected(self):
        times = np.arange(6.0)
        # reference amplitude decays; error held fixed -> relative error
        # grows as magnitude falls, a perfect negative rank correlation
        amps = 2.0 ** -times
        ref = Trajectory(times, np.outer(amps, np.ones(4)))
        pred = Trajectory(times, ref.fields + 0.01)
        report = error_report([pred], ref)
        assert report.spearman == pytest.approx(-1.0, abs=1e-12)

    def test_length_mismatch(self):
        ref = Trajectory(np.arange(2.0), np.zeros((2, 3)))
        with pytest.raises(InputError):
            error_report([ref, ref], [ref])
