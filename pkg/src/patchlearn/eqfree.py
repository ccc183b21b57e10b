"""Gap-tooth and patch-dynamics multiscale engine.

1D: the macro state lives on tooth averages.  Each macro step lifts tooth
values to fine-grid profiles, runs a short micro burst (with tooth-edge
Neumann slopes from an inter-tooth coupling polynomial, or with Dirichlet
buffer edges frozen from the lifted profile), restricts back, and estimates
dU/dt as a difference quotient for projective integration.

2D: square patches on the heterogeneous lattice advance continuously with
ghost rings interpolated from neighboring patch averages; no projective
jumps.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm, solve, solve_banded

from .datasets import SnapshotDataset
from .errors import (ConfigError, GeometryError, InputError,
                     InstabilityError, NumericalError)
from .features import fornberg_weights
from .micro import (DetailedProblem1D, LatticeProblem2D, MicroState1D,
                    lattice_rhs_ghost, sample_diffusivity)

MACRO_BLOWUP = 1e6


# ---------------------------------------------------------------------------
# 1D geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToothGrid1D:
    """Uniformly spaced teeth of width h inside cells of width spacing.

    Domain [x_lo, x_lo + n_teeth*spacing] with Dirichlet values bc_lo/bc_hi
    at the endpoints; the endpoints act as zero-width ghost teeth when
    building coupling polynomials and lifting stencils near the boundary.
    """

    n_teeth: int
    spacing: float
    tooth_width: float
    buffer_width: float | None = None
    x_lo: float = 0.0
    coupling_degree: int = 2
    lifting_degree: int = 2
    bc_lo: float | None = None
    bc_hi: float | None = None

    def __post_init__(self):
        if self.buffer_width is None:
            object.__setattr__(self, "buffer_width", self.tooth_width)
        if self.n_teeth < 1:
            raise ConfigError("need at least one tooth")
        if not (0 < self.tooth_width <= self.buffer_width < self.spacing):
            raise GeometryError(
                "need 0 < tooth width <= buffer width < tooth spacing")
        k = self.coupling_degree
        if k < 2 or k % 2:
            raise ConfigError("coupling degree must be even and >= 2")
        if self.lifting_degree < k:
            raise ConfigError("lifting degree must be >= coupling degree")
        if k + 1 > self.n_teeth + 2:
            raise ConfigError("fewer teeth than coupling constraints")

    @property
    def centers(self):
        return self.x_lo + (np.arange(self.n_teeth) + 0.5) * self.spacing

    @property
    def x_hi(self):
        return self.x_lo + self.n_teeth * self.spacing


@dataclass
class MacroField:
    """One value per tooth at a given time."""

    grid: ToothGrid1D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_teeth,):
            raise InputError("need exactly one value per tooth")
        if not np.all(np.isfinite(self.values)):
            raise InputError("macro values must be finite")


@dataclass(frozen=True)
class PatchConfig:
    """Micro/macro resolution bundle for 1D patch dynamics."""

    grid: ToothGrid1D
    micro_dx: float
    micro_dt: float
    macro_dt: float
    n_burst: int = 1
    n_heal: int = 0
    coupling: str = "buffer-dirichlet"   # | "neumann"
    lift_mode: str = "match"             # | "taylor"
    theta: float = 0.5

    def __post_init__(self):
        if self.micro_dx <= 0 or self.micro_dt <= 0 or self.macro_dt <= 0:
            raise ConfigError("resolutions must be positive")
        if self.n_burst < 1 or self.n_heal < 0:
            raise ConfigError("burst must have >= 1 step, healing >= 0")
        if self.n_burst * self.micro_dt > self.macro_dt * (1 + 1e-12):
            raise ConfigError("micro burst longer than the macro step")
        if self.coupling not in ("buffer-dirichlet", "neumann"):
            raise ConfigError(f"unknown coupling mode {self.coupling!r}")
        if self.lift_mode not in ("match", "taylor"):
            raise ConfigError(f"unknown lift mode {self.lift_mode!r}")


# ---------------------------------------------------------------------------
# coupling polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalPolynomial:
    """p(x) = sum_m coeffs[m] * (x - center)^m."""

    center: float
    coeffs: np.ndarray

    def __call__(self, x):
        xi = np.asarray(x, dtype=float) - self.center
        return np.polynomial.polynomial.polyval(xi, self.coeffs)

    def derivative(self):
        c = self.coeffs
        if c.size <= 1:
            return LocalPolynomial(self.center, np.zeros(1))
        return LocalPolynomial(self.center, c[1:] * np.arange(1, c.size))


def _extended_teeth(grid: ToothGrid1D, values):
    """Tooth centers/widths/values plus the zero-width boundary ghosts."""
    if grid.bc_lo is None or grid.bc_hi is None:
        raise ConfigError("domain boundary values are unset")
    pos = np.concatenate([[grid.x_lo], grid.centers, [grid.x_hi]])
    widths = np.concatenate([[0.0], np.full(grid.n_teeth, grid.tooth_width),
                             [0.0]])
    vals = np.concatenate([[grid.bc_lo], values, [grid.bc_hi]])
    return pos, widths, vals


def _monomial_box_average(s, w, m):
    """Average of xi^m over [s - w/2, s + w/2] (point value when w = 0)."""
    if w == 0.0:
        return s ** m
    return ((s + w / 2) ** (m + 1) - (s - w / 2) ** (m + 1)) / (w * (m + 1))


def coupling_polynomial(U: MacroField, i, degree=None) -> LocalPolynomial:
    """Polynomial about tooth i whose box averages reproduce the macro data.

    Uses the degree+1 nearest teeth (window shifted one-sided near the
    domain ends, where the Dirichlet endpoints enter as zero-width teeth).
    """
    grid = U.grid
    k = grid.coupling_degree if degree is None else degree
    pos, widths, vals = _extended_teeth(grid, U.values)
    n_ext = pos.size
    if k + 1 > n_ext:
        raise ConfigError("fewer teeth than polynomial constraints")
    center_idx = i + 1
    lo = min(max(center_idx - k // 2, 0), n_ext - (k + 1))
    sel = slice(lo, lo + k + 1)
    x_i = grid.centers[i]
    # build in units of the tooth spacing for conditioning
    scale = grid.spacing
    mat = np.empty((k + 1, k + 1))
    for row, (p, w) in enumerate(zip(pos[sel], widths[sel])):
        s = (p - x_i) / scale
        for m in range(k + 1):
            mat[row, m] = _monomial_box_average(s, w / scale, m)
    coeffs = solve(mat, vals[sel])
    coeffs /= scale ** np.arange(k + 1)
    return LocalPolynomial(x_i, coeffs)


def tooth_edge_slopes(p: LocalPolynomial, grid: ToothGrid1D, i):
    """Exact derivative of p at the two edges of tooth i."""
    dp = p.derivative()
    h = grid.tooth_width
    x_i = grid.centers[i]
    return float(dp(x_i - h / 2)), float(dp(x_i + h / 2))


# ---------------------------------------------------------------------------
# restriction and lifting
# ---------------------------------------------------------------------------

def restrict(states, grid: ToothGrid1D, time=None) -> MacroField:
    """Tooth-core average of each micro state (buffers excluded).

    Composite Simpson quadrature, so averages of the quadratic lifting
    profiles are exact and restriction inverts lifting to rounding error.
    """
    if len(states) != grid.n_teeth:
        raise InputError("need one micro state per tooth")
    h = grid.tooth_width
    values = np.empty(grid.n_teeth)
    for i, state in enumerate(states):
        lo = grid.centers[i] - h / 2
        hi = grid.centers[i] + h / 2
        tol = 1e-9 * h
        mask = (state.x >= lo - tol) & (state.x <= hi + tol)
        xs = state.x[mask]
        if xs.size < 2 or xs[0] > lo + 1e-6 * h or xs[-1] < hi - 1e-6 * h:
            raise GeometryError(f"micro state does not cover tooth {i}")
        values[i] = simpson(state.u[mask], x=xs) / (xs[-1] - xs[0])
    t = time if time is not None else states[0].time
    return MacroField(grid, values, t)


def _tooth_micro_grid(grid: ToothGrid1D, i, micro_dx, buffered=True):
    """Uniform fine grid over the tooth (plus buffer), with the tooth-core
    edges landing exactly on grid nodes."""
    h = grid.tooth_width
    n_half_core = max(1, int(round(0.5 * h / micro_dx)))
    delta = 0.5 * h / n_half_core
    if buffered:
        n_buf = int(round(0.5 * (grid.buffer_width - h) / delta))
    else:
        n_buf = 0
    n_half = n_half_core + n_buf
    return grid.centers[i] + np.arange(-n_half, n_half + 1) * delta


def _lift_taylor(U: MacroField, i, grid):
    """Truncated Taylor profile with finite-difference derivative estimates."""
    pos, _, vals = _extended_teeth(grid, U.values)
    d = grid.lifting_degree
    n_ext = pos.size
    center_idx = i + 1
    lo = min(max(center_idx - d // 2, 0), n_ext - (d + 1))
    nodes = pos[lo:lo + d + 1]
    node_vals = vals[lo:lo + d + 1]
    x_i = grid.centers[i]
    coeffs = np.empty(d + 1)
    coeffs[0] = U.values[i]
    for k in range(1, d + 1):
        w = fornberg_weights(nodes, x_i, k)
        coeffs[k] = (w @ node_vals) / factorial(k)
    return LocalPolynomial(x_i, coeffs)


def lift(U: MacroField, i, config: PatchConfig, buffered=True) -> MicroState1D:
    """Fine-grid profile over tooth i (and its buffer) from the macro data.

    lift_mode "match" evaluates the box-average coupling polynomial, so
    restriction recovers the macro value exactly; "taylor" uses the
    truncated Taylor profile with finite-difference derivatives.
    """
    grid = config.grid
    x = _tooth_micro_grid(grid, i, config.micro_dx, buffered)
    if config.lift_mode == "match":
        p = coupling_polynomial(U, i, degree=grid.lifting_degree)
    else:
        p = _lift_taylor(U, i, grid)
    return MicroState1D(x, p(x), U.time)


# ---------------------------------------------------------------------------
# batched micro bursts (all teeth share one concatenated banded system)
# ---------------------------------------------------------------------------

def _batch_theta_system(a_half, dx, dt, theta, bc):
    """Vectorized theta-scheme bands for a (teeth, nodes) batch.

    bc = (kind_lo, val_lo[], kind_hi, val_hi[]); same kind on every tooth.
    Returns (ab, bands, c, dirichlet masks) with ab in the concatenated
    banded layout where off-diagonal entries never cross tooth boundaries.
    """
    n_teeth, n = a_half.shape[0], a_half.shape[1] + 1
    r = dt / dx ** 2
    lower = np.zeros((n_teeth, n))
    diag = np.zeros((n_teeth, n))
    upper = np.zeros((n_teeth, n))
    lower[:, 1:-1] = r * a_half[:, :-1]
    upper[:, 1:-1] = r * a_half[:, 1:]
    diag[:, 1:-1] = -(lower[:, 1:-1] + upper[:, 1:-1])
    c = np.zeros((n_teeth, n))
    kind_lo, val_lo, kind_hi, val_hi = bc
    if kind_lo == "neumann":
        upper[:, 0] = 2.0 * r * a_half[:, 0]
        diag[:, 0] = -upper[:, 0]
        c[:, 0] = -2.0 * dt * val_lo / dx
    if kind_hi == "neumann":
        lower[:, -1] = 2.0 * r * a_half[:, -1]
        diag[:, -1] = -lower[:, -1]
        c[:, -1] = 2.0 * dt * val_hi / dx
    ab = np.zeros((3, n_teeth * n))
    sup = np.zeros((n_teeth, n))
    sup[:, 1:] = -theta * upper[:, :-1]
    sub = np.zeros((n_teeth, n))
    sub[:, :-1] = -theta * lower[:, 1:]
    ab[0] = sup.ravel()
    ab[1] = (1.0 - theta * diag).ravel()
    ab[2] = sub.ravel()
    if kind_lo == "dirichlet":
        ab[1].reshape(n_teeth, n)[:, 0] = 1.0
        ab[0].reshape(n_teeth, n)[:, 1] = 0.0
    if kind_hi == "dirichlet":
        ab[1].reshape(n_teeth, n)[:, -1] = 1.0
        ab[2].reshape(n_teeth, n)[:, -2] = 0.0
    return ab, (lower, diag, upper), c


def advance_teeth(u, a_half, dx, dt, n_steps, bc, theta=0.5):
    """Advance every tooth's fine profile n_steps implicit theta-steps.

    u: (teeth, nodes); all teeth share node count and spacing, so the whole
    batch is one concatenated tridiagonal solve per step.
    """
    u = np.array(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InputError("non-finite values entering a micro burst")
    kind_lo, val_lo, kind_hi, val_hi = bc
    ab, (lower, diag, upper), c = _batch_theta_system(
        a_half, dx, dt, theta, bc)
    for _ in range(n_steps):
        rhs = u * (1.0 + (1.0 - theta) * diag)
        rhs[:, :-1] += (1.0 - theta) * upper[:, :-1] * u[:, 1:]
        rhs[:, 1:] += (1.0 - theta) * lower[:, 1:] * u[:, :-1]
        rhs += c
        if kind_lo == "dirichlet":
            rhs[:, 0] = val_lo
        if kind_hi == "dirichlet":
            rhs[:, -1] = val_hi
        u = solve_banded((1, 1), ab, rhs.ravel()).reshape(u.shape)
    if not np.all(np.isfinite(u)):
        raise NumericalError("micro burst produced non-finite values")
    return u


# ---------------------------------------------------------------------------
# gap-tooth stepping (persistent per-tooth micro states)
# ---------------------------------------------------------------------------

def gap_tooth_step_1d(states, grid: ToothGrid1D, problem: DetailedProblem1D,
                      dt, theta=0.5):
    """One micro step of every tooth with Neumann tooth-edge coupling.

    Edge slopes come from the coupling polynomials of the current
    restriction; the imposed flux is a(edge) times the polynomial slope.
    """
    U = restrict(states, grid)
    h = grid.tooth_width
    new_states = []
    for i, state in enumerate(states):
        p = coupling_polynomial(U, i)
        s_lo, s_hi = tooth_edge_slopes(p, grid, i)
        a_lo = float(problem.diffusivity(
            (grid.centers[i] - h / 2) / problem.epsilon))
        a_hi = float(problem.diffusivity(
            (grid.centers[i] + h / 2) / problem.epsilon))
        a_half = sample_diffusivity(problem, state.x)
        u = advance_teeth(state.u[None, :], a_half[None, :], state.dx, dt, 1,
                          ("neumann", np.array([a_lo * s_lo]),
                           "neumann", np.array([a_hi * s_hi])), theta)
        new_states.append(MicroState1D(state.x, u[0], state.time + dt))
    return new_states


# ---------------------------------------------------------------------------
# dU/dt estimation and projective integration
# ---------------------------------------------------------------------------

def estimate_dUdt(U: MacroField, config: PatchConfig,
                  problem: DetailedProblem1D):
    """Lift / heal / burst / restrict difference quotient, per tooth."""
    if config.micro_dx > problem.epsilon / 20 + 1e-15:
        raise ConfigError("micro_dx does not resolve the fine scale "
                          "(need micro_dx <= eps/20)")
    grid = config.grid
    buffered = config.coupling == "buffer-dirichlet"
    states = [lift(U, i, config, buffered=buffered)
              for i in range(grid.n_teeth)]
    x_batch = np.stack([s.x for s in states])
    u = np.stack([s.u for s in states])
    a_half = np.stack([sample_diffusivity(problem, s.x) for s in states])
    dx = states[0].dx
    if config.coupling == "buffer-dirichlet":
        bc = ("dirichlet", u[:, 0].copy(), "dirichlet", u[:, -1].copy())
    else:
        h = grid.tooth_width
        slopes = [tooth_edge_slopes(coupling_polynomial(U, i), grid, i)
                  for i in range(grid.n_teeth)]
        e_lo = (grid.centers - h / 2) / problem.epsilon
        e_hi = (grid.centers + h / 2) / problem.epsilon
        bc = ("neumann",
              np.asarray(problem.diffusivity(e_lo))
              * np.array([s[0] for s in slopes]),
              "neumann",
              np.asarray(problem.diffusivity(e_hi))
              * np.array([s[1] for s in slopes]))
    try:
        if config.n_heal:
            u = advance_teeth(u, a_half, dx, config.micro_dt, config.n_heal,
                              bc, config.theta)
        base = [MicroState1D(x_batch[i], u[i], U.time)
                for i in range(grid.n_teeth)]
        U_t = restrict(base, grid).values
        u = advance_teeth(u, a_half, dx, config.micro_dt, config.n_burst,
                          bc, config.theta)
    except NumericalError as exc:
        raise NumericalError(f"micro burst failed: {exc}") from exc
    burst = [MicroState1D(x_batch[i], u[i], U.time)
             for i in range(grid.n_teeth)]
    U_next = restrict(burst, grid).values
    return (U_next - U_t) / (config.n_burst * config.micro_dt)


def projective_step(U: MacroField, dudt, dt, method="euler",
                    estimator=None) -> MacroField:
    """Projective Euler (default) or RK2 (midpoint re-estimation)."""
    if dt <= 0:
        raise InputError("dt must be positive")
    dudt = np.asarray(dudt, dtype=float)
    if method == "euler":
        return MacroField(U.grid, U.values + dt * dudt, U.time + dt)
    if method == "rk2":
        if estimator is None:
            raise ConfigError("rk2 projective stepping needs an estimator")
        full = MacroField(U.grid, U.values + dt * dudt, U.time + dt)
        k2 = estimator(full)
        return MacroField(U.grid, U.values + 0.5 * dt * (dudt + k2),
                          U.time + dt)
    raise ConfigError(f"unknown projective method {method!r}")


def tooth_averages(grid: ToothGrid1D, u0, n_quad=64):
    """Box averages of a callable initial profile over each tooth core."""
    h = grid.tooth_width
    offsets = (np.arange(n_quad) + 0.5) / n_quad - 0.5
    pts = grid.centers[:, None] + h * offsets[None, :]
    return np.asarray(u0(pts.ravel())).reshape(pts.shape).mean(axis=1)


def simulate_patch_dynamics_1d(config: PatchConfig,
                               problem: DetailedProblem1D, u0, T,
                               sample_interval,
                               method="euler") -> SnapshotDataset:
    """Projective patch-dynamics trajectory recording (t, U, dU/dt)."""
    grid = config.grid
    if callable(u0):
        if grid.bc_lo is None:
            grid = _with_boundary(grid, float(u0(np.array([grid.x_lo]))[0]),
                                  float(u0(np.array([grid.x_hi]))[0]))
            config = _with_grid(config, grid)
        values = tooth_averages(grid, u0)
    else:
        values = np.asarray(u0, dtype=float)
    U = MacroField(grid, values, 0.0)

    stride = int(round(sample_interval / config.macro_dt))
    if abs(stride * config.macro_dt - sample_interval) > 1e-9 * sample_interval:
        raise ConfigError("sample interval must be a multiple of macro_dt")
    n_macro = int(round(T / config.macro_dt))

    def est(field):
        return estimate_dUdt(field, config, problem)

    times, fields, dudts = [], [], []
    for step in range(n_macro + 1):
        if np.max(np.abs(U.values)) > MACRO_BLOWUP:
            raise InstabilityError(
                f"macro state blew up at step {step} (t={U.time:g})")
        dudt = est(U)
        if step % stride == 0:
            times.append(U.time)
            fields.append(U.values.copy())
            dudts.append(dudt.copy())
        if step < n_macro:
            U = projective_step(U, dudt, config.macro_dt, method, est)
    geometry = {"kind": "teeth-1d", "n_teeth": grid.n_teeth,
                "spacing": grid.spacing, "x_lo": grid.x_lo,
                "centers": grid.centers.tolist(),
                "bc_lo": grid.bc_lo, "bc_hi": grid.bc_hi}
    provenance = {"scheme": f"patch-dynamics/{config.coupling}",
                  "macro_dt": config.macro_dt, "micro_dt": config.micro_dt}
    return SnapshotDataset(np.asarray(times), np.asarray(fields),
                           np.asarray(dudts), geometry, provenance)


def _with_boundary(grid: ToothGrid1D, lo, hi):
    from dataclasses import replace
    return replace(grid, bc_lo=lo, bc_hi=hi)


def _with_grid(config: PatchConfig, grid):
    from dataclasses import replace
    return replace(config, grid=grid)


# ---------------------------------------------------------------------------
# 2D patch grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchGrid2D:
    """n_patches x n_patches square patch cores on the periodic lattice."""

    problem: LatticeProblem2D
    n_patches: int = 16
    core: int = 4

    def __post_init__(self):
        if self.problem.n % self.n_patches:
            raise ConfigError("lattice size must be divisible by patch count")
        stride = self.problem.n // self.n_patches
        if self.core >= stride:
            raise GeometryError("patch cores must be disjoint")
        if (self.core / stride) ** 2 >= 0.1:
            raise GeometryError("patch footprint must stay below 10%")

    @property
    def stride(self):
        return self.problem.n // self.n_patches

    @property
    def offset(self):
        return (self.stride - self.core) // 2

    def core_start(self, i):
        return i * self.stride + self.offset

    @property
    def patch_spacing(self):
        """Distance between neighboring patch centers."""
        return self.stride * self.problem.h

    def center_coord(self, i):
        return (self.core_start(i) + 0.5 * (self.core - 1)) * self.problem.h


def _patch_interp_matrix(grid: PatchGrid2D):
    """Per-axis 3x3 system mapping quadratic coefficients to the discrete
    core averages of neighboring patches (in patch-spacing units)."""
    c = grid.core
    d = 1.0  # neighbor offset in patch-spacing units
    w2 = (grid.problem.h / grid.patch_spacing) ** 2 * (c * c - 1) / 12.0
    mat = np.empty((3, 3))
    for row, s in enumerate((-d, 0.0, d)):
        mat[row] = (1.0, s, s * s + w2)
    return np.linalg.inv(mat)


def _patch_poly_coeffs(U, grid: PatchGrid2D):
    """Tensor-product quadratic coefficients about each patch center.

    Returns (n_patches, n_patches, 3, 3) with C[I,J,m,n] multiplying
    xi_x^m xi_y^n, xi measured in units of the patch spacing.
    """
    minv = _patch_interp_matrix(grid)
    u_m = np.roll(U, 1, axis=0)
    u_p = np.roll(U, -1, axis=0)
    sx = np.stack([u_m, U, u_p], axis=2)            # (np, np, 3)
    neigh = np.stack([np.roll(sx, 1, axis=1), sx, np.roll(sx, -1, axis=1)],
                     axis=3)                        # (np, np, 3x, 3y)
    return np.einsum("ma,ijab,nb->ijmn", minv, neigh, minv)


def patch_edge_values_2d(U, i, j, grid: PatchGrid2D):
    """Ghost-ring values for patch (i, j) by tensor-product quadratic
    interpolation through the 3x3 neighborhood of patch averages."""
    coeffs = _patch_poly_coeffs(np.asarray(U, dtype=float), grid)[i, j]
    xi_core, xi_ghost = _patch_coords(grid)
    powers_core = np.vander(xi_core, 3, increasing=True)      # (c, 3)
    powers_ghost = np.vander(xi_ghost, 3, increasing=True)    # (2, 3)
    lo = powers_ghost[0]
    hi = powers_ghost[1]
    return {
        "xlo": lo @ coeffs @ powers_core.T,
        "xhi": hi @ coeffs @ powers_core.T,
        "ylo": powers_core @ coeffs @ lo,
        "yhi": powers_core @ coeffs @ hi,
    }


def _patch_coords(grid: PatchGrid2D):
    """Core-point and ghost-point offsets from the patch center, in units
    of the patch spacing."""
    c = grid.core
    step = grid.problem.h / grid.patch_spacing
    xi_core = (np.arange(c) - 0.5 * (c - 1)) * step
    xi_ghost = np.array([xi_core[0] - step, xi_core[-1] + step])
    return xi_core, xi_ghost


# ---------------------------------------------------------------------------
# 2D gap-tooth simulation
# ---------------------------------------------------------------------------

def _patch_kappa(grid: PatchGrid2D, i, j):
    """Local half-link diffusivities for patch (i, j), including the links
    into the ghost ring: kx (core+1, core), ky (core, core+1)."""
    kx, ky = grid.problem.expand()
    c = grid.core
    s, t = grid.core_start(i), grid.core_start(j)
    n = grid.problem.n
    rows = (np.arange(s - 1, s + c)) % n
    cols = (np.arange(t, t + c)) % n
    kx_loc = kx[np.ix_(rows, cols)]
    rows2 = (np.arange(s, s + c)) % n
    cols2 = (np.arange(t - 1, t + c)) % n
    ky_loc = ky[np.ix_(rows2, cols2)]
    return kx_loc, ky_loc


def _patch_operators(grid: PatchGrid2D, i, j):
    """Linear maps (A, B): du_core/dt = A u_core + B ghosts, ghosts ordered
    [xlo, xhi, ylo, yhi]."""
    c = grid.core
    kx_loc, ky_loc = _patch_kappa(grid, i, j)
    h = grid.problem.h
    zero_g = {k: np.zeros(c) for k in ("xlo", "xhi", "ylo", "yhi")}

    def rhs(u_core, ghosts):
        return lattice_rhs_ghost(u_core, ghosts, kx_loc, ky_loc, h)

    A = np.empty((c * c, c * c))
    for m in range(c * c):
        e = np.zeros(c * c)
        e[m] = 1.0
        A[:, m] = rhs(e.reshape(c, c), zero_g).ravel()
    B = np.empty((c * c, 4 * c))
    for g_idx, key in enumerate(("xlo", "xhi", "ylo", "yhi")):
        for m in range(c):
            ghosts = {k: np.zeros(c) for k in ("xlo", "xhi", "ylo", "yhi")}
            ghosts[key][m] = 1.0
            B[:, g_idx * c + m] = rhs(np.zeros((c, c)), ghosts).ravel()
    return A, B


def _patch_propagators(grid: PatchGrid2D, tau):
    """Exact interval propagators u(tau) = E u + M g per kappa pattern.

    Patches whose core start indices coincide modulo the diffusivity period
    share operators; E = expm(A tau), M = A^{-1}(E - I)B.
    """
    period = grid.problem.period
    n_p = grid.n_patches
    cache = {}
    pattern = np.empty((n_p, n_p), dtype=object)
    for i in range(n_p):
        for j in range(n_p):
            key = (grid.core_start(i) % period, grid.core_start(j) % period)
            if key not in cache:
                A, B = _patch_operators(grid, i, j)
                E = expm(A * tau)
                M = solve(A, (E - np.eye(A.shape[0])) @ B)
                cache[key] = (A, B, E, M)
            pattern[i, j] = key
    return cache, pattern


def _all_ghosts(U, grid: PatchGrid2D):
    """Ghost vectors for every patch, shape (n_p, n_p, 4*core)."""
    coeffs = _patch_poly_coeffs(U, grid)   # (np, np, 3, 3)
    xi_core, xi_ghost = _patch_coords(grid)
    pc = np.vander(xi_core, 3, increasing=True)
    pg = np.vander(xi_ghost, 3, increasing=True)
    lo, hi = pg[0], pg[1]
    xlo = np.einsum("m,ijmn,cn->ijc", lo, coeffs, pc)
    xhi = np.einsum("m,ijmn,cn->ijc", hi, coeffs, pc)
    ylo = np.einsum("cm,ijmn,n->ijc", pc, coeffs, lo)
    yhi = np.einsum("cm,ijmn,n->ijc", pc, coeffs, hi)
    return np.concatenate([xlo, xhi, ylo, yhi], axis=2)


def _ghost_weights(grid: PatchGrid2D):
    """Ghost-interpolation stencil: g = sum_d w[d] U_{neighbor at offset d}.

    Returns (3, 3, 4*core): weight vectors per (x offset, y offset) in
    {-1, 0, +1}^2.  Identical for every patch (translation invariance of
    the interpolation on the periodic patch lattice).
    """
    n_p = grid.n_patches
    c4 = 4 * grid.core
    w = np.empty((3, 3, c4))
    center = n_p // 2
    for a, di in enumerate((-1, 0, 1)):
        for b, dj in enumerate((-1, 0, 1)):
            U = np.zeros((n_p, n_p))
            U[(center + di) % n_p, (center + dj) % n_p] = 1.0
            w[a, b] = _all_ghosts(U, grid)[center, center]
    return w


def _shared_patch_operators(grid: PatchGrid2D):
    """(A, B) when every patch sees the same diffusivity pattern."""
    period = grid.problem.period
    if grid.stride % period:
        raise ConfigError(
            "patch stride must be a multiple of the diffusivity period for "
            "the continuous-coupling propagator; pass refresh_dt instead")
    return _patch_operators(grid, 0, 0)


def _spectral_propagators(grid: PatchGrid2D, dt):
    """Exact sample-interval propagators of the fully coupled patch system.

    With ghost rings slaved continuously to the interpolated macro field,
    the global linear system is block-circulant over the patch lattice:
    one expm of a (core^2 x core^2) block per patch wavevector.
    """
    n_p, c = grid.n_patches, grid.core
    A, B = _shared_patch_operators(grid)
    w = _ghost_weights(grid)
    r = np.full(c * c, 1.0 / (c * c))
    offsets = (-1, 0, 1)
    E = np.empty((n_p, n_p, c * c, c * c), dtype=complex)
    for p in range(n_p):
        for q in range(n_p):
            phase = np.zeros(4 * c, dtype=complex)
            for a, di in enumerate(offsets):
                for b, dj in enumerate(offsets):
                    phase += w[a, b] * np.exp(2j * np.pi * (p * di + q * dj)
                                              / n_p)
            block = A + np.outer(B @ phase, r)
            E[p, q] = expm(block * dt)
    return E


def _initial_cores(grid: PatchGrid2D, u0):
    n_p, c = grid.n_patches, grid.core
    h = grid.problem.h
    cores = np.empty((n_p, n_p, c, c))
    if callable(u0):
        for i in range(n_p):
            xs = (np.arange(grid.core_start(i), grid.core_start(i) + c)) * h
            for j in range(n_p):
                ys = (np.arange(grid.core_start(j),
                                grid.core_start(j) + c)) * h
                cores[i, j] = u0(xs[:, None], ys[None, :])
    else:
        U0 = np.asarray(u0, dtype=float)
        if U0.shape != (n_p, n_p):
            raise InputError("macro initial data must be one value per patch")
        coeffs = _patch_poly_coeffs(U0, grid)
        xi_core, _ = _patch_coords(grid)
        pc = np.vander(xi_core, 3, increasing=True)
        cores = np.einsum("am,ijmn,bn->ijab", pc, coeffs, pc)
    return cores.reshape(n_p, n_p, c * c)


def simulate_gap_tooth_2d(grid: PatchGrid2D, u0, T, sample_interval,
                          refresh_dt=None) -> SnapshotDataset:
    """Continuous-in-time patch simulation on the heterogeneous lattice.

    All patch cores advance simultaneously; ghost rings follow the
    interpolated macro field.  By default the coupling is continuous (the
    exact zero-refresh-interval limit, evaluated spectrally over the patch
    lattice); passing refresh_dt instead freezes the ghost rings over each
    refresh interval and uses the exact in-interval propagator.  Records
    (t, U, dU/dt) where dU/dt is the restriction of the instantaneous
    lattice right-hand side.
    """
    n_p, c = grid.n_patches, grid.core
    n_samples = int(round(T / sample_interval))
    flat_cores = _initial_cores(grid, u0)

    if refresh_dt is None:
        E_spec = _spectral_propagators(grid, sample_interval)

        def advance_one_sample(cores):
            u_hat = np.fft.fft2(cores, axes=(0, 1))
            u_hat = np.einsum("ijab,ijb->ija", E_spec, u_hat)
            return np.real(np.fft.ifft2(u_hat, axes=(0, 1)))

        A, B = _shared_patch_operators(grid)
        A_stack = B_stack = None
    else:
        steps = max(1, int(round(sample_interval / refresh_dt)))
        tau = sample_interval / steps
        cache, pattern = _patch_propagators(grid, tau)
        keys = sorted(cache)
        key_index = np.empty((n_p, n_p), dtype=int)
        for i in range(n_p):
            for j in range(n_p):
                key_index[i, j] = keys.index(pattern[i, j])
        A_stack = np.stack([cache[k][0] for k in keys])[key_index]
        B_stack = np.stack([cache[k][1] for k in keys])[key_index]
        E_stack = np.stack([cache[k][2] for k in keys])[key_index]
        M_stack = np.stack([cache[k][3] for k in keys])[key_index]

        def advance_one_sample(cores):
            for _ in range(steps):
                ghosts = _all_ghosts(cores.mean(axis=2), grid)
                cores = (np.einsum("ijab,ijb->ija", E_stack, cores)
                         + np.einsum("ijab,ijb->ija", M_stack, ghosts))
            return cores

    def macro_rhs(cores, ghosts):
        if A_stack is None:
            du = cores @ A.T + ghosts @ B.T
        else:
            du = (np.einsum("ijab,ijb->ija", A_stack, cores)
                  + np.einsum("ijab,ijb->ija", B_stack, ghosts))
        return du.mean(axis=2)

    times, fields, dudts = [], [], []
    for sample in range(n_samples + 1):
        t = sample * sample_interval
        U = flat_cores.mean(axis=2)
        if not np.all(np.isfinite(U)) or np.max(np.abs(U)) > MACRO_BLOWUP:
            worst = np.unravel_index(np.nanargmax(np.abs(U)), U.shape)
            raise InstabilityError(f"patch {worst} blew up at t={t:g}")
        ghosts = _all_ghosts(U, grid)
        times.append(t)
        fields.append(U)
        dudts.append(macro_rhs(flat_cores, ghosts))
        if sample < n_samples:
            flat_cores = advance_one_sample(flat_cores)
    geometry = {"kind": "patches-2d", "n_patches": n_p, "core": c,
                "lattice_n": grid.problem.n}
    provenance = {"scheme": "gap-tooth-2d",
                  "refresh_dt": refresh_dt if refresh_dt else 0.0}
    return SnapshotDataset(np.asarray(times), np.asarray(fields),
                           np.asarray(dudts), geometry, provenance)
