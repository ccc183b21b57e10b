"""End-to-end experiment orchestration.

Two experiments are provided: a 1D heterogeneous-diffusion problem solved
with projective patch dynamics, and a 2D heterogeneous lattice solved with
the continuously coupled patch scheme.  Both generate snapshot datasets,
train the two network architectures on (U, dU/dt) pairs, evaluate held-out
right-hand-side predictions, roll the learned models forward from unseen
initial conditions, and write every artifact (CSV datasets, JSON models,
metric and figure tables) under a hashed manifest.  A fixed (config, seed)
pair reproduces identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .datasets import (
    FLOAT_FMT,
    InitialConditionSpec1D,
    InitialConditionSpec2D,
    Manifest,
    SnapshotDataset,
    random_ic_1d,
    random_ic_2d,
    read_snapshot_csv,
    superposition_1d,
    superposition_2d,
    trajectory_rng,
    write_snapshot_csv,
)
from .eqfree import (
    PatchConfig,
    PatchGrid2D,
    ToothGrid1D,
    simulate_gap_tooth_2d,
    simulate_patch_dynamics_1d,
)
from .errors import ConfigError, NumericalError
from .features import FeatureSpec, fd_derivatives_1d, spectral_derivatives_2d
from .homogenize import (
    HomogenizedModel,
    lattice_cell_coefficients,
    solve_cell_problem,
    solve_homogenized_1d,
)
from .micro import (
    DetailedProblem1D,
    reference_lattice_problem,
    sinusoidal_diffusivity,
)
from .nets import (
    DerivativeMlpRegressor,
    StencilNetRegressor,
    save_model,
)
from .rollout import (
    Trajectory,
    error_report,
    fourier_projection,
    integrate_learned,
    rhs_from_model,
    rmse,
)

ARCHS = ("mlp", "stencil")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    problem: str = "1d-hetero"      # "1d-hetero" | "2d-lattice"
    seed: int = 0
    n_train: int = 8
    n_test: int = 2
    horizon: float = 1.0
    sample_interval: float = 1e-3
    arch: str = "both"              # "mlp" | "stencil" | "both"

    # 1D problem and scheme
    epsilon: float = 1e-3
    n_teeth: int = 10
    tooth_spacing: float = 0.1
    tooth_width: float = 1e-2
    buffer_width: float = 4e-2
    micro_dx: float = 5e-5
    micro_dt: float = 2e-6
    macro_dt: float = 1e-3
    n_heal: int = 5
    n_burst: int = 5
    coupling: str = "buffer-dirichlet"
    include_boundary_teeth: bool = True
    # "patch-dynamics": projective steps over macro_dt (default);
    # "gap-tooth": continuous-in-time micro stepping (1D: every macro step
    # is one unprojected burst, so horizons should stay short)
    mode: str = "patch-dynamics"

    # 2D problem and scheme
    lattice_n: int = 480
    n_patches: int = 16
    core: int = 4
    # initial records skipped by the learner: the first 2D sample carries
    # the lifting transient (pre-relaxation right-hand side), which is not
    # a function of the macro state
    burn_in_records: int = 0

    # training
    hidden: int = 32
    filters: int = 32
    max_epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.problem not in ("1d-hetero", "2d-lattice"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.arch not in ARCHS + ("both",):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.n_train <= 0 or self.n_test <= 0:
            raise ConfigError("trajectory counts must be positive")
        if self.mode not in ("patch-dynamics", "gap-tooth"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.horizon <= 0 or self.sample_interval <= 0:
            raise ConfigError("horizon and sampling interval must be positive")
        ratio = self.horizon / self.sample_interval
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("sampling interval must divide the horizon")

    @property
    def archs(self):
        return ARCHS if self.arch == "both" else (self.arch,)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(doc)


def smoke_config_1d(seed=0) -> ExperimentConfig:
    """Desk-scale 1D configuration (eps=1e-3, minutes not hours)."""
    return ExperimentConfig(problem="1d-hetero", seed=seed)


def paper_scale_1d(config: ExperimentConfig) -> ExperimentConfig:
    """Published operating point: eps=1e-5, teeth cover 8% of the domain."""
    return dataclasses.replace(
        config, epsilon=1e-5, tooth_width=8e-3, buffer_width=2.4e-2,
        micro_dx=5e-7, micro_dt=1e-6, macro_dt=1e-3, n_heal=5, n_burst=5)


def config_2d(seed=0) -> ExperimentConfig:
    return ExperimentConfig(
        problem="2d-lattice", seed=seed, n_train=85, n_test=15,
        sample_interval=0.01, batch_size=2048, max_epochs=60, patience=10,
        burn_in_records=1)


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------

def build_problem_1d(config: ExperimentConfig) -> DetailedProblem1D:
    return DetailedProblem1D(sinusoidal_diffusivity(), config.epsilon)


def build_patch_config(config: ExperimentConfig) -> PatchConfig:
    grid = ToothGrid1D(config.n_teeth, config.tooth_spacing,
                       tooth_width=config.tooth_width,
                       buffer_width=config.buffer_width)
    if config.mode == "gap-tooth":
        # no projective extrapolation: every macro step is one burst
        return PatchConfig(grid, micro_dx=config.micro_dx,
                           micro_dt=config.micro_dt,
                           macro_dt=config.n_burst * config.micro_dt,
                           n_burst=config.n_burst, n_heal=0,
                           coupling="neumann")
    return PatchConfig(grid, micro_dx=config.micro_dx,
                       micro_dt=config.micro_dt, macro_dt=config.macro_dt,
                       n_burst=config.n_burst, n_heal=config.n_heal,
                       coupling=config.coupling)


def build_patch_grid_2d(config: ExperimentConfig) -> PatchGrid2D:
    problem = reference_lattice_problem(config.lattice_n)
    return PatchGrid2D(problem, n_patches=config.n_patches, core=config.core)


def effective_model_1d(n_cell=4096) -> HomogenizedModel:
    cell = solve_cell_problem(sinusoidal_diffusivity(), n_cell)
    return HomogenizedModel(1, a_star=cell.a_star)


def effective_model_2d(config: ExperimentConfig) -> HomogenizedModel:
    a_xx, a_yy = lattice_cell_coefficients(
        reference_lattice_problem(config.lattice_n))
    return HomogenizedModel(2, a_xx=a_xx, a_yy=a_yy)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def generate_trajectory(config: ExperimentConfig, index: int):
    """One simulated trajectory; train and test index ranges are disjoint
    (test indices start at n_train) and each index owns an independent
    PRNG stream, so generation order cannot change the data."""
    rng = trajectory_rng(config.seed, index)
    if config.problem == "1d-hetero":
        u0 = random_ic_1d(InitialConditionSpec1D(), rng)
        ds = simulate_patch_dynamics_1d(
            build_patch_config(config), build_problem_1d(config), u0,
            config.horizon, config.sample_interval)
    else:
        u0 = random_ic_2d(InitialConditionSpec2D(), rng)
        ds = simulate_gap_tooth_2d(build_patch_grid_2d(config), u0,
                                   config.horizon, config.sample_interval)
    ds.provenance["trajectory_index"] = index
    ds.provenance["ic_coefficients"] = {
        k: np.asarray(v).tolist() for k, v in u0.coefficients.items()}
    return ds, u0


def generate_datasets(config: ExperimentConfig):
    """(train datasets, test datasets, test initial conditions)."""
    train, test, test_ics = [], [], []
    for index in range(config.n_train):
        ds, _ = generate_trajectory(config, index)
        train.append(ds)
    for index in range(config.n_train, config.n_train + config.n_test):
        ds, u0 = generate_trajectory(config, index)
        test.append(ds)
        test_ics.append(u0)
    return train, test, test_ics


def ic_from_dataset(ds: SnapshotDataset, config: ExperimentConfig):
    """Rebuild the initial-condition callable stored with a dataset."""
    coeffs = ds.provenance.get("ic_coefficients")
    if coeffs is None:
        raise ConfigError("dataset lacks initial-condition coefficients")
    if config.problem == "1d-hetero":
        return superposition_1d(coeffs["amplitudes"], coeffs["wavenumbers"],
                                coeffs["phases"])
    return superposition_2d(coeffs["amplitudes"], coeffs["lx"], coeffs["ly"],
                            coeffs["phix"], coeffs["phiy"])


def write_dataset_csvs(out_dir, train_sets, test_sets, manifest=None):
    """Write data/<role>_<k>.csv plus a geometry/provenance sidecar."""
    data_dir = Path(out_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    meta = {}
    for role, sets in (("train", train_sets), ("test", test_sets)):
        for k, ds in enumerate(sets):
            name = f"{role}_{k:03d}.csv"
            write_snapshot_csv(data_dir / name, ds)
            meta[name] = {"geometry": ds.geometry,
                          "provenance": ds.provenance}
            if manifest is not None:
                manifest.add(data_dir / name, "dataset")
    side = data_dir / "geometry.json"
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    if manifest is not None:
        manifest.add(side, "dataset-metadata")


def load_dataset_csvs(out_dir):
    """Inverse of write_dataset_csvs: (train datasets, test datasets)."""
    data_dir = Path(out_dir) / "data"
    side = data_dir / "geometry.json"
    if not side.exists():
        raise ConfigError(f"no dataset metadata at {side}")
    meta = json.loads(side.read_text())
    out = {"train": [], "test": []}
    for name in sorted(meta):
        ds = read_snapshot_csv(data_dir / name)
        ds.geometry = meta[name]["geometry"]
        ds.provenance = meta[name]["provenance"]
        out[name.split("_")[0]].append(ds)
    return out["train"], out["test"]


# ---------------------------------------------------------------------------
# training data assembly
# ---------------------------------------------------------------------------

def feature_spec_for(config: ExperimentConfig) -> FeatureSpec:
    if config.problem == "1d-hetero":
        return FeatureSpec(descriptors=("u", "u_x", "u_xx"), method="fd",
                           dx=config.tooth_spacing)
    return FeatureSpec(descriptors=("u", "u_x", "u_y", "u_xx", "u_yy",
                                    "u_xy"), method="spectral")


def macro_spacing(config: ExperimentConfig) -> float:
    if config.problem == "1d-hetero":
        return config.tooth_spacing
    grid = build_patch_grid_2d(config)
    return grid.stride * grid.problem.h


def dataset_boundary(ds: SnapshotDataset):
    """Dirichlet domain-end values stored with a 1D tooth dataset."""
    geom = ds.geometry
    if "bc_lo" not in geom or geom["bc_lo"] is None:
        raise ConfigError("dataset lacks the Dirichlet boundary values")
    return float(geom["bc_lo"]), float(geom["bc_hi"])


def tooth_feature_matrix(u, boundary, config: ExperimentConfig,
                         spec: FeatureSpec | None = None):
    """Per-tooth derivative features with the Dirichlet ends as extra
    nodes (a half spacing beyond the outer tooth centers); without them
    the boundary teeth's dU/dt is not a function of the visible field."""
    if spec is None:
        spec = feature_spec_for(config)
    h = config.tooth_spacing
    positions = np.concatenate([
        [0.0], h * (np.arange(u.size) + 0.5), [h * u.size]])
    ext = np.concatenate([[boundary[0]], u, [boundary[1]]])
    return fd_derivatives_1d(ext, positions, spec,
                             eval_index=np.arange(1, u.size + 1))


def learning_records(ds: SnapshotDataset, config: ExperimentConfig):
    """(fields, dudt) visible to the learner (burn-in records skipped)."""
    b = config.burn_in_records
    return ds.fields[b:], ds.dudt[b:]


def pointwise_rows(datasets, config: ExperimentConfig):
    """Stack per-point (features, dU/dt) rows for the pointwise net."""
    spec = feature_spec_for(config)
    xs, ys = [], []
    for ds in datasets:
        boundary = dataset_boundary(ds) if config.problem == "1d-hetero" \
            else None
        fields, dudt_all = learning_records(ds, config)
        for r in range(fields.shape[0]):
            u = fields[r]
            if config.problem == "1d-hetero":
                feats = tooth_feature_matrix(u, boundary, config, spec)
                keep = slice(None) if config.include_boundary_teeth \
                    else slice(1, -1)
                xs.append(feats[keep])
                ys.append(dudt_all[r][keep])
            else:
                feats = spectral_derivatives_2d(u, spec)
                xs.append(feats.reshape(-1, feats.shape[-1]))
                ys.append(dudt_all[r].ravel())
    return np.concatenate(xs), np.concatenate(ys)


def field_samples(datasets, config: ExperimentConfig):
    """Stack whole-field (U, dU/dt) samples for the stencil net.

    1D fields grow reflected Dirichlet ghost cells 2 g - u_end on both
    ends so one uniform kernel covers the boundary teeth; the ghost
    positions carry non-finite targets, which excludes them from the
    training loss (their windows are degenerate under replicate padding).
    """
    us, dudts = [], []
    for ds in datasets:
        fields, dudt = learning_records(ds, config)
        if config.problem == "1d-hetero":
            lo, hi = dataset_boundary(ds)
            u = np.concatenate([
                2 * lo - fields[:, :1], fields,
                2 * hi - fields[:, -1:]], axis=1)
            pad = np.full((fields.shape[0], 1), np.nan)
            dudt = np.concatenate([pad, dudt, pad], axis=1)
        else:
            u = fields
        us.append(u)
        dudts.append(dudt)
    return np.concatenate(us), np.concatenate(dudts)


def train_models(config: ExperimentConfig, train_sets):
    """Fit the requested architectures; returns {arch: fitted estimator}."""
    models = {}
    if "mlp" in config.archs:
        x, y = pointwise_rows(train_sets, config)
        est = DerivativeMlpRegressor(
            hidden=config.hidden, lr=config.lr, batch_size=config.batch_size,
            max_epochs=config.max_epochs, patience=config.patience,
            val_fraction=config.val_fraction, random_state=config.seed)
        models["mlp"] = est.fit(x, y)
    if "stencil" in config.archs:
        u, dudt = field_samples(train_sets, config)
        padding = "replicate" if config.problem == "1d-hetero" else "periodic"
        est = StencilNetRegressor(
            filters=config.filters, padding=padding,
            dx=macro_spacing(config), lr=config.lr,
            batch_size=config.batch_size, max_epochs=config.max_epochs,
            patience=config.patience, val_fraction=config.val_fraction,
            random_state=config.seed)
        models["stencil"] = est.fit(u, dudt)
    return models


def predict_dudt(model_params, config: ExperimentConfig, fields,
                 boundary=None):
    """Predicted dU/dt for a stack of macro fields."""
    spec = feature_spec_for(config)
    dx = macro_spacing(config)
    return np.stack([
        rhs_from_model(model_params, u, feature_spec=spec, dx=dx,
                       boundary=boundary)
        for u in fields])


def evaluate_models(config: ExperimentConfig, models, test_sets):
    """Held-out RHS metrics per architecture.

    recorded_rmse compares against the dU/dt recorded by the multiscale
    scheme (relative squared error, centered denominator); oracle_rmse
    compares against the homogenized operator applied to the same fields.
    """
    truth = np.concatenate(
        [learning_records(ds, config)[1] for ds in test_sets])
    if config.problem == "1d-hetero":
        model = effective_model_1d()
        spec = FeatureSpec(descriptors=("u_xx",), dx=config.tooth_spacing)
        oracle = np.concatenate([
            model.a_star * np.stack([
                tooth_feature_matrix(u, dataset_boundary(ds), config,
                                     spec)[:, 0]
                for u in learning_records(ds, config)[0]])
            for ds in test_sets])
    else:
        model = effective_model_2d(config)
        spec = FeatureSpec(descriptors=("u_xx", "u_yy"), method="spectral")
        derivs = np.concatenate([
            np.stack([spectral_derivatives_2d(u, spec)
                      for u in learning_records(ds, config)[0]])
            for ds in test_sets])
        oracle = model.a_xx * derivs[..., 0] + model.a_yy * derivs[..., 1]
    metrics = {}
    for arch, est in models.items():
        pred = np.concatenate([
            predict_dudt(est.params_, config,
                         learning_records(ds, config)[0],
                         boundary=dataset_boundary(ds)
                         if config.problem == "1d-hetero" else None)
            for ds in test_sets])
        metrics[arch] = {
            "recorded_rmse": _relative_sq_error(pred, truth, centered=True),
            "recorded_rel_mse": _relative_sq_error(pred, truth,
                                                   centered=False),
            "oracle_rmse": _relative_sq_error(pred, oracle, centered=True),
        }
    return metrics


def _relative_sq_error(pred, ref, centered=True):
    ref = np.asarray(ref, dtype=float)
    base = ref - ref.mean() if centered else ref
    den = float(np.sum(base ** 2))
    if den == 0.0:
        raise NumericalError("degenerate reference for a relative error")
    return float(np.sum((pred - ref) ** 2) / den)


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

def reference_trajectory_1d(config: ExperimentConfig, u0, t_grid,
                            model: HomogenizedModel | None = None):
    """Homogenized reference restricted to the tooth centers."""
    if model is None:
        model = effective_model_1d()
    dx = 5e-3
    x = np.arange(0.0, 1.0 + dx / 2, dx)
    fields = solve_homogenized_1d(model, u0(x), t_grid, dx=dx)
    centers = config.tooth_spacing * np.arange(config.n_teeth) \
        + config.tooth_spacing / 2
    at_centers = np.stack([np.interp(centers, x, f) for f in fields])
    return Trajectory(t_grid, at_centers, source="homogenized")


def rollout_1d(config: ExperimentConfig, models, u0, t_grid,
               a_est=None):
    """Learned rollouts plus the homogenized reference for one IC."""
    if a_est is None:
        a_est = effective_model_1d().a_star
    ref = reference_trajectory_1d(config, u0, t_grid)
    boundary = (float(u0(np.array([0.0]))[0]), float(u0(np.array([1.0]))[0]))
    spec = feature_spec_for(config)
    out = {"reference": ref}
    for arch, est in models.items():
        out[arch] = integrate_learned(
            est.params_, ref.fields[0], t_grid, dx=config.tooth_spacing,
            a_est=a_est, feature_spec=spec, boundary=boundary,
            source=f"learned-{arch}")
    return out


# ---------------------------------------------------------------------------
# full experiment with artifacts
# ---------------------------------------------------------------------------

def _write_table(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            FLOAT_FMT % v if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _stage(manifest, out_dir, name):
    """Context: on failure, flush the partial manifest and tag the stage."""
    class _Stage:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None:
                manifest.config["failed_stage"] = name
                manifest.write()
            return False
    return _Stage()


def run_experiment(config: ExperimentConfig, out_dir) -> Manifest:
    out_dir = Path(out_dir)
    for sub in ("data", "models", "metrics", "figures"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir, config=config.to_dict(), seed=config.seed)

    with _stage(manifest, out_dir, "generate"):
        train_sets, test_sets, test_ics = generate_datasets(config)
        write_dataset_csvs(out_dir, train_sets, test_sets, manifest)

    with _stage(manifest, out_dir, "train"):
        models = train_models(config, train_sets)
        spec = feature_spec_for(config)
        for arch, est in models.items():
            p = out_dir / "models" / f"{arch}.json"
            save_model(p, est.params_,
                       feature_spec=spec if arch == "mlp" else None,
                       provenance={"seed": config.seed,
                                   "problem": config.problem})
            manifest.add(p, "model")

    with _stage(manifest, out_dir, "evaluate"):
        metrics = evaluate_models(config, models, test_sets)
        p = out_dir / "metrics" / "rhs_metrics.csv"
        _write_table(p, ["arch", "recorded_rmse", "recorded_rel_mse",
                         "oracle_rmse"],
                     [[arch, m["recorded_rmse"], m["recorded_rel_mse"],
                       m["oracle_rmse"]] for arch, m in metrics.items()])
        manifest.add(p, "metrics")

    with _stage(manifest, out_dir, "rollout"):
        if config.problem == "1d-hetero":
            _rollout_figures_1d(config, models, test_sets, test_ics,
                                out_dir, manifest)
        else:
            _figures_2d(config, models, test_sets, out_dir, manifest)

    manifest.write()
    return manifest


def _rollout_figures_1d(config, models, test_sets, test_ics, out_dir,
                        manifest):
    centers = config.tooth_spacing * np.arange(config.n_teeth) \
        + config.tooth_spacing / 2
    model_1d = effective_model_1d()

    # multiscale trajectory vs homogenized reference (snapshot overlay)
    ds = test_sets[0]
    ref = reference_trajectory_1d(config, test_ics[0], ds.times, model_1d)
    rows = []
    for r in range(0, len(ds), max(1, len(ds) // 20)):
        for i, x in enumerate(centers):
            rows.append([float(ds.times[r]), float(x),
                         float(ds.fields[r, i]), float(ref.fields[r, i])])
    p = out_dir / "figures" / "fig2_snapshots.csv"
    _write_table(p, ["t", "x", "patch_dynamics", "homogenized"], rows)
    manifest.add(p, "figure-data")

    # held-out RHS prediction overlay
    preds = {arch: predict_dudt(est.params_, config, ds.fields,
                                boundary=dataset_boundary(ds))
             for arch, est in models.items()}
    rows = []
    for r in range(0, len(ds), max(1, len(ds) // 8)):
        for i, x in enumerate(centers):
            row = [float(ds.times[r]), float(x), float(ds.dudt[r, i])]
            for arch in config.archs:
                row.append(float(preds[arch][r, i]) if arch in preds
                           else float("nan"))
            rows.append(row)
    p = out_dir / "figures" / "fig4_rhs.csv"
    _write_table(p, ["t", "x", "truth"] + list(config.archs), rows)
    manifest.add(p, "figure-data")

    # learned rollout from an unseen IC
    t_grid = np.round(np.linspace(0.0, config.horizon, 101), 12)
    trajs = rollout_1d(config, models, test_ics[-1], t_grid,
                       a_est=model_1d.a_star)
    rows = []
    for r, t in enumerate(t_grid):
        for i, x in enumerate(centers):
            row = [float(t), float(x), float(trajs["reference"].fields[r, i])]
            for arch in config.archs:
                row.append(float(trajs[arch].fields[r, i]) if arch in trajs
                           else float("nan"))
            rows.append(row)
    p = out_dir / "figures" / "fig5_rollout.csv"
    _write_table(p, ["t", "x", "reference"] + list(config.archs), rows)
    manifest.add(p, "figure-data")

    rows = [[arch, rmse(trajs[arch], trajs["reference"])]
            for arch in config.archs if arch in trajs]
    p = out_dir / "metrics" / "rollout_metrics.csv"
    _write_table(p, ["arch", "rmse"], rows)
    manifest.add(p, "metrics")


def _figures_2d(config, models, test_sets, out_dir, manifest):
    # held-out snapshot heatmap: truth vs prediction for the first arch
    arch0 = config.archs[0]
    ds = test_sets[0]
    r = len(ds) // 2
    pred = predict_dudt(models[arch0].params_, config, ds.fields[r:r + 1])[0]
    rows = []
    for i in range(ds.fields.shape[1]):
        for j in range(ds.fields.shape[2]):
            rows.append([i, j, float(ds.fields[r, i, j]),
                         float(ds.dudt[r, i, j]), float(pred[i, j])])
    p = out_dir / "figures" / "fig6_heatmap.csv"
    _write_table(p, ["i", "j", "U", "dUdt_truth", "dUdt_pred"], rows)
    manifest.add(p, "figure-data")

    # per-snapshot magnitude vs relative error scatter
    rows = []
    for arch, est in models.items():
        for k, ds in enumerate(test_sets):
            pred = predict_dudt(est.params_, config, ds.fields)
            for r in range(len(ds)):
                den = float(np.mean(ds.dudt[r] ** 2))
                if den == 0.0:
                    continue
                err = float(np.mean((pred[r] - ds.dudt[r]) ** 2)) / den
                rows.append([arch, k, float(ds.times[r]),
                             float(np.sqrt(den)), err])
    p = out_dir / "figures" / "fig6_error_scatter.csv"
    _write_table(p, ["arch", "trajectory", "t", "dudt_rms",
                     "relative_error"], rows)
    manifest.add(p, "figure-data")

    # per-time MSE curves of the field predictions
    rows = []
    for arch, est in models.items():
        for k, ds in enumerate(test_sets):
            pred = predict_dudt(est.params_, config, ds.fields)
            report = error_report(
                [Trajectory(ds.times, pred)], Trajectory(ds.times, ds.dudt))
            for r, t in enumerate(ds.times):
                rows.append([arch, k, float(t), float(report.mse[0, r])])
    p = out_dir / "figures" / "fig7a_mse.csv"
    _write_table(p, ["arch", "trajectory", "t", "mse"], rows)
    manifest.add(p, "figure-data")

    # six-mode state-space coordinates of a held-out trajectory
    traj = Trajectory(test_sets[0].times, test_sets[0].fields)
    proj = fourier_projection(traj, m=6)
    rows = []
    for r, t in enumerate(proj.times):
        for m, mode in enumerate(proj.modes):
            rows.append([float(t), f"{mode[0]}-{mode[1]}",
                         float(proj.amplitudes[r, m])])
    p = out_dir / "figures" / "fig7b_modes.csv"
    _write_table(p, ["t", "mode", "amplitude"], rows)
    manifest.add(p, "figure-data")
