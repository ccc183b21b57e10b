import numpy as np
import pytest

from patchlearn.errors import ConfigError, GeometryError, InputError
from patchlearn.eqfree import (
    LocalPolynomial,
    MacroField,
    PatchConfig,
    PatchGrid2D,
    ToothGrid1D,
    coupling_polynomial,
    estimate_dUdt,
    gap_tooth_step_1d,
    lift,
    patch_edge_values_2d,
    projective_step,
    restrict,
    simulate_gap_tooth_2d,
    simulate_patch_dynamics_1d,
    tooth_averages,
    tooth_edge_slopes,
)
from patchlearn.micro import (
    DetailedProblem1D,
    LatticeProblem2D,
    MicroState1D,
    constant_diffusivity,
    reference_lattice_problem,
    sinusoidal_diffusivity,
)


def make_grid(n=10, spacing=0.1, h=1e-2, H=4e-2, bc=(0.0, 0.0), **kw):
    return ToothGrid1D(n, spacing, h, H, bc_lo=bc[0], bc_hi=bc[1], **kw)


def smoke_config(grid, **kw):
    kw.setdefault("micro_dx", 5e-5)
    kw.setdefault("micro_dt", 2e-6)
    kw.setdefault("macro_dt", 1e-3)
    kw.setdefault("n_heal", 5)
    kw.setdefault("n_burst", 5)
    return PatchConfig(grid, **kw)


def tooth_states(grid, fn, n_cells=100):
    states = []
    h = grid.tooth_width
    for c in grid.centers:
        x = np.linspace(c - h / 2, c + h / 2, n_cells + 1)
        states.append(MicroState1D(x, fn(x)))
    return states


class TestToothGrid:
    def test_invalid_geometry(self):
        with pytest.raises(GeometryError):
            ToothGrid1D(10, 0.1, 0.2, 0.3)  # tooth wider than spacing
        with pytest.raises(GeometryError):
            ToothGrid1D(10, 0.1, 1e-2, 5e-3)  # buffer narrower than tooth

    def test_odd_coupling_degree_rejected(self):
        with pytest.raises(ConfigError):
            make_grid(coupling_degree=3)

    def test_lifting_below_coupling_rejected(self):
        with pytest.raises(ConfigError):
            make_grid(coupling_degree=4, lifting_degree=2)

    def test_centers_uniform(self):
        grid = make_grid()
        np.testing.assert_allclose(np.diff(grid.centers), 0.1, atol=1e-15)
        assert grid.centers[0] == pytest.approx(0.05)


class TestRestrict:
    def test_constant(self):
        grid = make_grid()
        U = restrict(tooth_states(grid, lambda x: np.full_like(x, 2.5)), grid)
        np.testing.assert_allclose(U.values, 2.5, atol=1e-14)

    def test_linear(self):
        grid = make_grid()
        U = restrict(tooth_states(grid, lambda x: x), grid)
        np.testing.assert_allclose(U.values, grid.centers, atol=1e-14)

    def test_quadratic_box_average(self):
        grid = make_grid()
        U = restrict(tooth_states(grid, lambda x: x ** 2), grid)
        expected = grid.centers ** 2 + grid.tooth_width ** 2 / 12
        np.testing.assert_allclose(U.values, expected, rtol=1e-13)

    def test_uncovered_tooth_rejected(self):
        grid = make_grid()
        states = tooth_states(grid, lambda x: x)
        # shift one state off its tooth
        bad = MicroState1D(states[3].x + 0.05, states[3].u)
        states[3] = bad
        with pytest.raises(GeometryError):
            restrict(states, grid)


class TestCouplingPolynomial:
    def test_constant_reproduction(self):
        grid = make_grid(bc=(2.0, 2.0))
        U = MacroField(grid, np.full(10, 2.0))
        for i in (0, 4, 9):
            p = coupling_polynomial(U, i)
            np.testing.assert_allclose(p.coeffs[0], 2.0, atol=1e-12)
            np.testing.assert_allclose(p.coeffs[1:], 0.0, atol=1e-10)

    def test_linear_reproduction(self):
        grid = make_grid(bc=(0.0, 1.0))
        U = MacroField(grid, grid.centers.copy())
        xs = np.linspace(0, 1, 17)
        for i in (0, 5, 9):
            p = coupling_polynomial(U, i)
            np.testing.assert_allclose(p(xs), xs, atol=1e-12)

    def test_quadratic_from_box_averages(self):
        # data are the box averages of x^2: the recovered second
        # derivative must be exactly 2
        grid = make_grid()
        h = grid.tooth_width
        U = MacroField(grid, grid.centers ** 2 + h * h / 12)
        p = coupling_polynomial(U, 4)
        assert 2 * p.coeffs[2] == pytest.approx(2.0, abs=1e-9)

    def test_polynomial_reproduction_all_degrees(self):
        # box averages of any polynomial of degree <= k reproduce it
        rng = np.random.default_rng(0)
        grid = make_grid(coupling_degree=4, lifting_degree=4)
        h = grid.tooth_width
        for deg in range(5):
            coeffs = rng.normal(size=deg + 1)
            poly = np.polynomial.Polynomial(coeffs)
            ipoly = poly.integ()
            box = (ipoly(grid.centers + h / 2)
                   - ipoly(grid.centers - h / 2)) / h
            U = MacroField(grid, box)
            p = coupling_polynomial(U, 5, degree=4)
            xs = np.linspace(0.3, 0.7, 9)
            np.testing.assert_allclose(p(xs), poly(xs), atol=1e-8)

    def test_too_few_teeth(self):
        with pytest.raises(ConfigError):
            ToothGrid1D(1, 0.1, 1e-2, 4e-2, coupling_degree=4,
                        lifting_degree=4)

    def test_unset_boundary_values(self):
        grid = ToothGrid1D(10, 0.1, 1e-2, 4e-2)
        U = MacroField(grid, np.zeros(10))
        with pytest.raises(ConfigError):
            coupling_polynomial(U, 0)


class TestToothEdgeSlopes:
    def test_constant(self):
        grid = make_grid()
        p = LocalPolynomial(grid.centers[2], np.array([3.0]))
        assert tooth_edge_slopes(p, grid, 2) == (0.0, 0.0)

    def test_linear(self):
        grid = make_grid()
        p = LocalPolynomial(grid.centers[2], np.array([0.5, 1.0]))
        lo, hi = tooth_edge_slopes(p, grid, 2)
        assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)

    def test_centered_quadratic(self):
        # p(x) = (x - x_i)^2 has slope -h and +h at the tooth edges
        grid = make_grid()
        p = LocalPolynomial(grid.centers[4], np.array([0.0, 0.0, 1.0]))
        lo, hi = tooth_edge_slopes(p, grid, 4)
        h = grid.tooth_width
        assert lo == pytest.approx(-h, abs=1e-15)
        assert hi == pytest.approx(h, abs=1e-15)


class TestLift:
    def test_constant(self):
        grid = make_grid(bc=(1.5, 1.5))
        cfg = smoke_config(grid)
        U = MacroField(grid, np.full(10, 1.5))
        state = lift(U, 4, cfg)
        np.testing.assert_allclose(state.u, 1.5, atol=1e-12)

    def test_linear_profile_and_slope(self):
        grid = make_grid(bc=(0.0, 0.7))
        cfg = smoke_config(grid)
        U = MacroField(grid, 0.7 * grid.centers)
        state = lift(U, 5, cfg)
        np.testing.assert_allclose(state.u, 0.7 * state.x, atol=1e-12)
        slope = np.diff(state.u) / np.diff(state.x)
        np.testing.assert_allclose(slope, 0.7, atol=1e-9)

    def test_taylor_mode_linear_exact(self):
        grid = make_grid(bc=(0.0, 0.7))
        cfg = smoke_config(grid, lift_mode="taylor")
        U = MacroField(grid, 0.7 * grid.centers)
        state = lift(U, 5, cfg)
        np.testing.assert_allclose(state.u, 0.7 * state.x, atol=1e-12)

    def test_restrict_lift_identity(self):
        # Simpson restriction integrates the quadratic profile exactly
        grid = make_grid()
        cfg = smoke_config(grid)
        U = MacroField(grid, np.sin(np.pi * grid.centers))
        states = [lift(U, i, cfg) for i in range(10)]
        R = restrict(states, grid)
        np.testing.assert_allclose(R.values, U.values, atol=1e-13)

    def test_covers_buffer(self):
        grid = make_grid()
        cfg = smoke_config(grid)
        U = MacroField(grid, np.sin(np.pi * grid.centers))
        state = lift(U, 4, cfg)
        half = (state.x[-1] - state.x[0]) / 2
        assert half == pytest.approx(grid.buffer_width / 2, rel=1e-6)
        unbuffered = lift(U, 4, cfg, buffered=False)
        assert (unbuffered.x[-1] - unbuffered.x[0]) == pytest.approx(
            grid.tooth_width, rel=1e-9)


class TestGapToothStep:
    def test_constant_unchanged(self):
        grid = make_grid(bc=(2.0, 2.0))
        prob = DetailedProblem1D(sinusoidal_diffusivity(), epsilon=1e-3)
        states = tooth_states(grid, lambda x: np.full_like(x, 2.0))
        out = gap_tooth_step_1d(states, grid, prob, 1e-5)
        for s in out:
            np.testing.assert_allclose(s.u, 2.0, atol=1e-12)

    def test_linear_steady_under_constant_medium(self):
        grid = make_grid(bc=(0.0, 1.0))
        prob = DetailedProblem1D(constant_diffusivity(1.0), epsilon=1e-3)
        states = tooth_states(grid, lambda x: x)
        for _ in range(100):
            states = gap_tooth_step_1d(states, grid, prob, 1e-5)
        U = restrict(states, grid)
        np.testing.assert_allclose(U.values, grid.centers, atol=1e-10)


class TestEstimateDUdt:
    def test_constant_field_zero(self):
        grid = make_grid(bc=(2.0, 2.0))
        # coarser fine grid keeps the difference-quotient roundoff floor
        # (which scales with dt/dx^2) below the gate
        cfg = smoke_config(grid, micro_dx=1e-4)
        prob = DetailedProblem1D(sinusoidal_diffusivity(), epsilon=2e-3)
        d = estimate_dUdt(MacroField(grid, np.full(10, 2.0)), cfg, prob)
        assert np.max(np.abs(d)) < 1e-8

    def test_single_mode_constant_medium(self):
        # u0 = sin(2 pi x), a = 1: dU/dt ~= -(2 pi)^2 U per tooth
        grid = ToothGrid1D(20, 0.05, 2e-3, 3e-2, bc_lo=0.0, bc_hi=0.0)
        cfg = PatchConfig(grid, micro_dx=5e-5, micro_dt=2e-6, macro_dt=1e-3,
                          n_burst=5)
        prob = DetailedProblem1D(constant_diffusivity(1.0), epsilon=1e-3)
        vals = tooth_averages(grid, lambda x: np.sin(2 * np.pi * x))
        d = estimate_dUdt(MacroField(grid, vals), cfg, prob)
        ref = -(2 * np.pi) ** 2 * vals
        mask = np.abs(ref) > 0.3 * np.max(np.abs(ref))
        assert np.max(np.abs(d[mask] - ref[mask]) / np.abs(ref[mask])) < 0.02

    def test_matches_homogenized_operator(self):
        # heterogeneous medium: interior teeth track the effective
        # diffusivity sqrt(0.21) times the second difference of U
        grid = make_grid()
        cfg = smoke_config(grid)
        prob = DetailedProblem1D(sinusoidal_diffusivity(), epsilon=1e-3)
        vals = tooth_averages(grid, lambda x: np.sin(np.pi * x))
        d = estimate_dUdt(MacroField(grid, vals), cfg, prob)
        second = (vals[:-2] - 2 * vals[1:-1] + vals[2:]) / grid.spacing ** 2
        ref = np.sqrt(0.21) * second
        assert np.max(np.abs(d[1:-1] - ref)) < 0.05 * np.max(np.abs(ref))

    def test_underresolved_micro_grid_rejected(self):
        grid = make_grid()
        cfg = smoke_config(grid)
        prob = DetailedProblem1D(sinusoidal_diffusivity(), epsilon=1e-5)
        with pytest.raises(ConfigError):
            estimate_dUdt(MacroField(grid, np.zeros(10)), cfg, prob)


class TestProjectiveStep:
    def grid_field(self, values):
        grid = make_grid(bc=(0.0, 0.0))
        return MacroField(grid, values)

    def test_zero_derivative(self):
        U = self.grid_field(np.linspace(0, 1, 10))
        out = projective_step(U, np.zeros(10), 1e-3)
        np.testing.assert_array_equal(out.values, U.values)
        assert out.time == pytest.approx(1e-3)

    def test_euler_definition(self):
        U = self.grid_field(np.zeros(10))
        out = projective_step(U, np.ones(10), 1e-3)
        np.testing.assert_allclose(out.values, 1e-3, atol=1e-18)

    def test_euler_linear_decay(self):
        U = self.grid_field(np.ones(10))
        out = projective_step(U, -U.values, 0.1)
        np.testing.assert_allclose(out.values, 0.9, atol=1e-15)

    def test_rk2_matches_heun(self):
        U = self.grid_field(np.ones(10))
        out = projective_step(U, -U.values, 0.1, method="rk2",
                              estimator=lambda f: -f.values)
        np.testing.assert_allclose(out.values, 1 - 0.1 + 0.005, atol=1e-15)

    def test_rk2_needs_estimator(self):
        U = self.grid_field(np.ones(10))
        with pytest.raises(ConfigError):
            projective_step(U, -U.values, 0.1, method="rk2")


class TestSimulatePatchDynamics1D:
    PROB = DetailedProblem1D(sinusoidal_diffusivity(), epsilon=1e-3)

    def test_zero_horizon_single_record(self):
        grid = make_grid()
        cfg = smoke_config(grid)
        ds = simulate_patch_dynamics_1d(cfg, self.PROB,
                                        lambda x: np.sin(np.pi * x),
                                        0.0, 1e-3)
        assert len(ds) == 1
        assert ds.times[0] == 0.0

    def test_steady_linear_profile(self):
        grid = make_grid(bc=(0.0, 1.0))
        cfg = smoke_config(grid)
        prob = DetailedProblem1D(constant_diffusivity(1.0), epsilon=1e-3)
        ds = simulate_patch_dynamics_1d(cfg, prob, lambda x: x, 0.05, 1e-2)
        np.testing.assert_allclose(ds.fields[-1], grid.centers, atol=1e-6)

    def test_degenerates_to_gap_tooth(self):
        # with no time gap (macro step = one micro step) and Neumann
        # coupling, the projective update equals the gap-tooth update of
        # freshly lifted teeth
        grid = make_grid(bc=(0.0, 0.0))
        cfg = PatchConfig(grid, micro_dx=5e-5, micro_dt=1e-5, macro_dt=1e-5,
                          n_burst=1, coupling="neumann")
        u0 = lambda x: np.sin(np.pi * x)
        ds = simulate_patch_dynamics_1d(cfg, self.PROB, u0, 5e-5, 1e-5)
        vals = tooth_averages(grid, u0)
        for k in range(6):
            np.testing.assert_allclose(ds.fields[k], vals, atol=1e-12)
            states = [lift(MacroField(grid, vals, k * 1e-5), i, cfg,
                           buffered=False) for i in range(10)]
            stepped = gap_tooth_step_1d(states, grid, self.PROB, 1e-5)
            vals = vals + (restrict(stepped, grid).values
                           - restrict(states, grid).values)

    def test_sampling_stride(self):
        grid = make_grid()
        cfg = smoke_config(grid)
        ds = simulate_patch_dynamics_1d(cfg, self.PROB,
                                        lambda x: np.sin(np.pi * x),
                                        0.02, 5e-3)
        np.testing.assert_allclose(ds.times, [0, 5e-3, 1e-2, 1.5e-2, 2e-2],
                                   atol=1e-12)

    def test_incommensurate_sampling_rejected(self):
        grid = make_grid()
        cfg = smoke_config(grid)
        with pytest.raises(ConfigError):
            simulate_patch_dynamics_1d(cfg, self.PROB,
                                       lambda x: np.sin(np.pi * x),
                                       0.01, 2.5e-4)


class TestPatchGrid2D:
    def test_footprint_guard(self):
        prob = LatticeProblem2D(np.ones((3, 3)), np.ones((3, 3)), 48)
        with pytest.raises(GeometryError):
            PatchGrid2D(prob, 16, 2)  # cores touch (stride 3)

    def test_divisibility(self):
        prob = LatticeProblem2D(np.ones((3, 3)), np.ones((3, 3)), 48)
        with pytest.raises(ConfigError):
            PatchGrid2D(prob, 7, 2)

    def test_reference_layout(self):
        grid = PatchGrid2D(reference_lattice_problem(480), 16, 4)
        assert grid.stride == 30
        # published footprint: 16x16 patches of 4x4 sites cover < 2%
        assert (grid.core / grid.stride) ** 2 < 0.02


class TestPatchEdgeValues2D:
    GRID = PatchGrid2D(reference_lattice_problem(480), 16, 4)

    def test_constant(self):
        g = patch_edge_values_2d(np.full((16, 16), 2.0), 5, 7, self.GRID)
        for v in g.values():
            np.testing.assert_allclose(v, 2.0, atol=1e-12)

    def test_planar_data(self):
        # interior patch: ghost values continue the plane in x
        centers = np.array([self.GRID.center_coord(i) for i in range(16)])
        U = np.tile(0.3 * centers[:, None], (1, 16))
        g = patch_edge_values_2d(U, 8, 8, self.GRID)
        h = self.GRID.problem.h
        x_lo = (self.GRID.core_start(8) - 1) * h
        x_hi = (self.GRID.core_start(8) + self.GRID.core) * h
        np.testing.assert_allclose(g["xlo"], 0.3 * x_lo, atol=1e-12)
        np.testing.assert_allclose(g["xhi"], 0.3 * x_hi, atol=1e-12)

    def test_sine_interpolation_error_scales(self):
        # quadratic interpolation: ghost error drops ~4x when the patch
        # lattice is refined 2x
        errs = []
        for n_patches in (8, 16):
            grid = PatchGrid2D(reference_lattice_problem(480), n_patches, 4)
            centers = np.array([grid.center_coord(i)
                                for i in range(n_patches)])
            U = np.tile(np.sin(centers)[:, None], (1, n_patches))
            i = n_patches // 2
            g = patch_edge_values_2d(U, i, i, grid)
            h = grid.problem.h
            x_lo = (grid.core_start(i) - 1) * h
            errs.append(abs(g["xlo"][0] - np.sin(x_lo)))
        assert errs[1] < errs[0] / 3.0


class TestSimulateGapTooth2D:
    def test_constant_forever(self):
        prob = LatticeProblem2D(np.full((3, 3), 1.3), np.full((3, 3), 1.3),
                                120)
        grid = PatchGrid2D(prob, 8, 4)
        ds = simulate_gap_tooth_2d(grid, lambda x, y: np.full_like(x * y, 1.7),
                                   0.1, 0.02)
        np.testing.assert_allclose(ds.fields, 1.7, atol=1e-10)
        np.testing.assert_allclose(ds.dudt, 0.0, atol=1e-9)

    def test_uniform_medium_decay_rate(self):
        prob = LatticeProblem2D(np.full((3, 3), 1.3), np.full((3, 3), 1.3),
                                480)
        grid = PatchGrid2D(prob, 16, 4)
        ds = simulate_gap_tooth_2d(grid, lambda x, y: np.sin(x), 0.5, 0.01)
        amps = [np.max(np.abs(f)) for f in ds.fields]
        rate = -np.polyfit(ds.times, np.log(amps), 1)[0]
        assert rate == pytest.approx(1.3, rel=0.05)

    def test_uniform_medium_trajectory_2pct(self):
        # macro trajectory vs the spectrally-exact homogenized solution
        prob = LatticeProblem2D(np.full((3, 3), 1.3), np.full((3, 3), 1.3),
                                480)
        grid = PatchGrid2D(prob, 16, 4)
        ds = simulate_gap_tooth_2d(grid, lambda x, y: np.sin(x), 0.5, 0.01)
        xs = np.array([grid.center_coord(i) for i in range(16)])
        exact = (np.exp(-1.3 * ds.times)[:, None, None]
                 * np.sin(xs)[None, :, None] * np.ones((1, 1, 16)))
        err = np.max(np.abs(ds.fields - exact)) / np.max(np.abs(exact[0]))
        assert err < 0.02

    @pytest.mark.xfail(
        strict=True,
        reason="4-site patch cores span barely one diffusivity period; the "
        "quadratic ghost coupling over-transports, so the macro decay rate "
        "lands ~50% above the effective coefficient (cross-checked against "
        "a brute-force per-step-refresh run, which agrees with this "
        "simulator, not with the effective medium)")
    def test_heterogeneous_decay_rate(self):
        grid = PatchGrid2D(reference_lattice_problem(480), 16, 4)
        ds = simulate_gap_tooth_2d(grid, lambda x, y: np.sin(x), 0.5, 0.01)
        amps = [np.max(np.abs(f)) for f in ds.fields]
        rate = -np.polyfit(ds.times, np.log(amps), 1)[0]
        assert rate == pytest.approx(1.2644, rel=0.10)

    def test_interval_refresh_converges_to_continuous(self):
        prob = LatticeProblem2D(np.full((3, 3), 1.3), np.full((3, 3), 1.3),
                                240)
        grid = PatchGrid2D(prob, 8, 4)
        cont = simulate_gap_tooth_2d(grid, lambda x, y: np.sin(x), 0.05, 0.01)
        froz = simulate_gap_tooth_2d(grid, lambda x, y: np.sin(x), 0.05, 0.01,
                                     refresh_dt=2e-5)
        scale = np.max(np.abs(cont.fields[0]))
        assert np.max(np.abs(cont.fields[-1] - froz.fields[-1])) / scale < 0.01

    def test_macro_ic_round_trip(self):
        prob = LatticeProblem2D(np.full((3, 3), 1.0), np.full((3, 3), 1.0),
                                240)
        grid = PatchGrid2D(prob, 8, 4)
        U0 = np.sin(np.array([grid.center_coord(i) for i in range(8)]))
        U0 = np.tile(U0[:, None], (1, 8))
        ds = simulate_gap_tooth_2d(grid, U0, 0.0, 0.01)
        np.testing.assert_allclose(ds.fields[0], U0, atol=1e-10)

    def test_bad_macro_shape(self):
        prob = LatticeProblem2D(np.full((3, 3), 1.0), np.full((3, 3), 1.0),
                                240)
        grid = PatchGrid2D(prob, 8, 4)
        with pytest.raises(InputError):
            simulate_gap_tooth_2d(grid, np.zeros((4, 4)), 0.1, 0.01)
