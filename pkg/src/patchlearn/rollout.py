"""Time integration of learned right-hand sides and evaluation metrics.

A learned model (pointwise derivative-feature net or stencil convolution
net) defines a macro-scale right-hand side dU/dt = F(U).  This module
integrates that RHS with fixed-step RK4, compares trajectories with a
relative mean-squared-error metric, and projects bi-periodic 2D
trajectories onto their dominant Fourier amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .errors import ConfigError, InputError, InstabilityError, NumericalError
from .features import FeatureSpec, fd_derivatives_1d, spectral_derivatives_2d
from .nets import MlpParams, StencilNetParams, mlp_forward, stencil_forward

#: max-norm threshold treated as a blown-up rollout
ROLLOUT_BLOWUP = 1.0e6


@dataclass
class Trajectory:
    """Time-stamped macro snapshots from one source (reference or learned)."""

    times: np.ndarray
    fields: np.ndarray          # (n_times, *grid_shape)
    source: str = "unknown"
    geometry: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        if self.times.ndim != 1 or self.fields.shape[0] != self.times.size:
            raise InputError("need one snapshot per time stamp")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InputError("snapshot times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def grid_shape(self):
        return self.fields.shape[1:]


def _check_aligned(pred: Trajectory, ref: Trajectory):
    if pred.fields.shape != ref.fields.shape:
        raise InputError("trajectories have different shapes")
    if not np.allclose(pred.times, ref.times, rtol=0.0, atol=1e-12):
        raise InputError("trajectories have misaligned time stamps")


# ---------------------------------------------------------------------------
# learned right-hand sides
# ---------------------------------------------------------------------------

def rhs_from_model(model, u, feature_spec: FeatureSpec | None = None,
                   positions=None, dx=None, boundary=None):
    """Evaluate the learned dU/dt for one macro field snapshot.

    Pointwise nets (MlpParams) consume derivative features and need a
    feature_spec: 1D fields use finite differences on ``positions`` (or a
    uniform grid with spacing ``dx``), 2D fields use spectral derivatives.
    Stencil nets consume the raw field; their kernels encode the training
    grid spacing, so a mismatched ``dx`` is rejected rather than rescaled.

    ``boundary=(value_lo, value_hi)`` supplies Dirichlet values at the
    domain ends of a 1D tooth-center grid (a half spacing beyond the first
    and last entries).  The pointwise path appends them as extra feature
    nodes; the stencil path appends reflected ghost cells 2 g - u_end so
    the kernel keeps a uniform spacing.
    """
    u = np.asarray(u, dtype=float)
    if isinstance(model, MlpParams):
        if feature_spec is None:
            raise ConfigError("pointwise nets need a feature spec")
        if u.ndim == 1:
            if positions is None:
                if dx is None:
                    raise ConfigError("1D features need positions or dx")
                if boundary is None:
                    positions = dx * np.arange(u.size)
                else:
                    positions = dx * (np.arange(u.size) + 0.5)
            if boundary is None:
                feats = fd_derivatives_1d(u, positions, feature_spec)
            else:
                lo, hi = boundary
                ext_pos = np.concatenate([
                    [positions[0] - dx / 2], positions,
                    [positions[-1] + dx / 2]])
                ext = np.concatenate([[lo], u, [hi]])
                feats = fd_derivatives_1d(
                    ext, ext_pos, feature_spec,
                    eval_index=np.arange(1, u.size + 1))
            return mlp_forward(model, feats)
        if u.ndim == 2:
            feats = spectral_derivatives_2d(u, feature_spec)
            flat = feats.reshape(-1, feats.shape[-1])
            return mlp_forward(model, flat).reshape(u.shape)
        raise InputError("expected a 1D or 2D field")
    if isinstance(model, StencilNetParams):
        if u.ndim != model.ndim:
            raise InputError(
                f"field dimension {u.ndim} does not match the "
                f"{model.ndim}D stencil model")
        if model.dx is not None and dx is not None \
                and not np.isclose(model.dx, dx, rtol=1e-10):
            raise ConfigError(
                f"stencil model was trained at grid spacing {model.dx}, "
                f"queried at {dx}; retrain for the new grid")
        if boundary is not None and u.ndim == 1:
            lo, hi = boundary
            ext = np.concatenate([[2 * lo - u[0]], u, [2 * hi - u[-1]]])
            return stencil_forward(model, ext[None])[0][1:-1]
        return stencil_forward(model, u[None])[0]
    if callable(model):
        return np.asarray(model(u), dtype=float)
    raise ConfigError(f"unsupported model type {type(model).__name__}")


def rk4_step(rhs, u, h):
    """One classical Runge-Kutta step of size h."""
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * h * k1)
    k3 = rhs(u + 0.5 * h * k2)
    k4 = rhs(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_learned(model, u0, t_grid, dx, a_est, dt=None,
                      feature_spec: FeatureSpec | None = None,
                      dirichlet_ends=None, boundary=None,
                      source="learned") -> Trajectory:
    """Roll the learned RHS forward with fixed-step RK4.

    dt defaults to the diffusive stability bound 0.4 dx^2 / (2 a_est) and
    may only be chosen smaller; substeps land exactly on each entry of
    t_grid.  For non-periodic 1D fields either pass ``boundary`` (Dirichlet
    domain-end values, forwarded to the model) or rely on dirichlet_ends
    (default on in 1D without boundary data) which freezes the endpoint
    entries instead.
    """
    u0 = np.asarray(u0, dtype=float)
    if not np.all(np.isfinite(u0)):
        raise InputError("non-finite initial data")
    t_grid = np.asarray(t_grid, dtype=float)
    if a_est <= 0:
        raise ConfigError("a_est must be positive")
    dt_max = 0.4 * dx**2 / (2.0 * a_est)
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1.0 + 1e-12):
        raise ConfigError(
            f"dt={dt} exceeds the stability bound {dt_max:.3e}")
    if dirichlet_ends is None:
        dirichlet_ends = u0.ndim == 1 and boundary is None

    def rhs(u):
        dudt = rhs_from_model(model, u, feature_spec=feature_spec, dx=dx,
                              boundary=boundary)
        if dirichlet_ends:
            dudt = dudt.copy()
            dudt[0] = 0.0
            dudt[-1] = 0.0
        return dudt

    u = u0.copy()
    out = np.empty((t_grid.size,) + u0.shape)
    out[0] = u
    t = float(t_grid[0])
    for k, t_target in enumerate(t_grid[1:], start=1):
        span = float(t_target) - t
        n_sub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / n_sub
        for _ in range(n_sub):
            u = rk4_step(rhs, u, h)
            if not np.all(np.isfinite(u)) \
                    or np.max(np.abs(u)) > ROLLOUT_BLOWUP:
                raise InstabilityError(
                    f"learned rollout blew up near t={t_target}")
        t = float(t_target)
        out[k] = u
    return Trajectory(t_grid, out, source=source,
                      geometry={"dx": dx})


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rmse(pred: Trajectory, ref: Trajectory, per_snapshot_mean=False):
    """Relative MSE: sum_j |v_j - vh_j|^2 / sum_j |vh_j - vbar|^2.

    vbar is the grand scalar mean of the reference over all snapshots and
    grid points; per_snapshot_mean=True centers each reference snapshot on
    its own mean instead.
    """
    _check_aligned(pred, ref)
    if per_snapshot_mean:
        axes = tuple(range(1, ref.fields.ndim))
        vbar = ref.fields.mean(axis=axes, keepdims=True)
    else:
        vbar = ref.fields.mean()
    num = np.sum((pred.fields - ref.fields) ** 2)
    den = np.sum((ref.fields - vbar) ** 2)
    if den == 0.0:
        raise NumericalError("rMSE undefined for a constant reference")
    return float(num / den)


@dataclass
class FourierProjection:
    """Amplitude series of the m dominant modes, ranked at t=0."""

    times: np.ndarray
    modes: list                  # m wavevector tuples (kx, ky)
    amplitudes: np.ndarray       # (n_times, m) real amplitudes


def fourier_projection(traj: Trajectory, m=6) -> FourierProjection:
    """Track the m largest Fourier amplitudes of a bi-periodic trajectory.

    Conjugate pairs are merged: each reported series is the real amplitude
    (2|c_k|/N^2 for a proper pair, |c_k|/N^2 for the self-conjugate zero or
    Nyquist modes), so u = A sin(3x) reports amplitude A.  The tracked mode
    set is fixed by the ranking at the first snapshot.
    """
    if traj.fields.ndim != 3 or traj.grid_shape[0] != traj.grid_shape[1]:
        raise InputError("expected a trajectory of square 2D snapshots")
    n = traj.grid_shape[0]
    freqs = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    reps = {}
    for p in freqs:
        for q in freqs:
            a, b = (p % n, q % n), ((-p) % n, (-q) % n)
            rep = min(a, b)
            reps.setdefault(rep, 1.0 if a == b else 2.0)
    if m > len(reps):
        raise InputError(f"requested {m} modes, grid supports {len(reps)}")
    c0 = np.fft.fft2(traj.fields[0])
    ranked = sorted(reps.items(),
                    key=lambda kv: -abs(c0[kv[0]]) * kv[1])
    chosen = ranked[:m]
    coeffs = np.fft.fft2(traj.fields, axes=(1, 2))
    amps = np.column_stack([
        np.abs(coeffs[:, idx[0], idx[1]]) * factor / n**2
        for idx, factor in chosen])
    modes = [idx for idx, _ in chosen]
    return FourierProjection(traj.times, modes, amps)


@dataclass
class ErrorReport:
    """Per-snapshot metrics for a set of predicted trajectories."""

    times: np.ndarray
    mse: np.ndarray              # (n_trajs, n_times) grid-mean squared error
    rmse: np.ndarray             # (n_trajs,) trajectory rMSE
    magnitudes: np.ndarray       # reference snapshot RMS values, flattened
    relative_errors: np.ndarray  # per-snapshot |err|^2 / |ref|^2, flattened
    spearman: float              # rank correlation magnitude vs rel. error


def error_report(trajs, refs) -> ErrorReport:
    """Aggregate MSE curves, rMSE values, and the magnitude-vs-error pairs.

    refs may be a single reference trajectory shared by every prediction or
    a list with one reference per prediction.
    """
    if isinstance(refs, Trajectory):
        refs = [refs] * len(trajs)
    if len(refs) != len(trajs):
        raise InputError("need one reference per trajectory")
    times = trajs[0].times
    mse_rows, rmse_vals, mags, rels = [], [], [], []
    for pred, ref in zip(trajs, refs):
        _check_aligned(pred, ref)
        if not np.allclose(pred.times, times, rtol=0.0, atol=1e-12):
            raise InputError("trajectories have misaligned time stamps")
        axes = tuple(range(1, ref.fields.ndim))
        err2 = np.mean((pred.fields - ref.fields) ** 2, axis=axes)
        ref2 = np.mean(ref.fields ** 2, axis=axes)
        mse_rows.append(err2)
        rmse_vals.append(rmse(pred, ref))
        keep = ref2 > 0
        mags.extend(np.sqrt(ref2[keep]))
        rels.extend(err2[keep] / ref2[keep])
    mags = np.asarray(mags)
    rels = np.asarray(rels)
    if mags.size >= 2 and np.unique(mags).size > 1 \
            and np.unique(rels).size > 1:
        corr = float(spearmanr(mags, rels).statistic)
    else:
        corr = float("nan")
    return ErrorReport(times, np.asarray(mse_rows), np.asarray(rmse_vals),
                       mags, rels, corr)
