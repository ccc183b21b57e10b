"""Command-line interface for the multiscale-learning experiments.

Subcommands cover the pipeline stages (oracle, generate, train, evaluate,
rollout, report) and a one-shot `run` that executes everything and writes
a hashed artifact manifest.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import experiment as ex
from .datasets import Manifest
from .errors import ConfigError, InputError, NumericalError
from .homogenize import solve_cell_problem
from .micro import sinusoidal_diffusivity
from .nets import load_model
from .rollout import rmse


def build_parser():
    parser = argparse.ArgumentParser(
        prog="patchlearn",
        description="Learn effective macro-scale equations from "
                    "equation-free multiscale simulations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path, default=None,
                       help="TOML file mirroring the experiment "
                            "configuration fields")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, required=out_required,
                       help="artifact directory")
        p.add_argument("--paper-scale", action="store_true",
                       help="published 1D operating point (eps=1e-5); "
                            "hours, not minutes")
        p.add_argument("--arch", choices=("mlp", "stencil", "both"),
                       default=None, help="architecture selection")
        p.add_argument("--mode", choices=("gap-tooth", "patch-dynamics"),
                       default=None, help="multiscale scheme variant")
        p.add_argument("--problem", choices=("1d-hetero", "2d-lattice"),
                       default=None, help="experiment selection")

    common(sub.add_parser("oracle", help="reference effective coefficients"),
           out_required=False)
    common(sub.add_parser("generate", help="simulate snapshot datasets"))
    common(sub.add_parser("train", help="fit networks to stored datasets"))
    common(sub.add_parser("evaluate", help="held-out RHS metrics"))
    common(sub.add_parser("rollout", help="integrate learned models from "
                                          "the stored test conditions"))
    common(sub.add_parser("report", help="print stored metric tables"))
    common(sub.add_parser("run", help="full experiment end to end"))
    return parser


def load_config(args) -> ex.ExperimentConfig:
    if args.config is not None:
        config = ex.ExperimentConfig.from_toml(args.config)
    else:
        config = ex.ExperimentConfig()
    updates = {}
    if args.problem is not None:
        updates["problem"] = args.problem
    if config.problem == "2d-lattice" and args.config is None:
        config = ex.config_2d(config.seed)
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.arch is not None:
        updates["arch"] = args.arch
    if args.mode is not None:
        updates["mode"] = args.mode
    if updates:
        import dataclasses
        config = dataclasses.replace(config, **updates)
    if args.paper_scale:
        if config.problem != "1d-hetero":
            raise ConfigError("--paper-scale applies to the 1D experiment")
        config = ex.paper_scale_1d(config)
    return config


def _loaded_models(out_dir):
    """{arch: namespace with .params_} from the saved model files."""
    models = {}
    model_dir = Path(out_dir) / "models"
    for arch in ex.ARCHS:
        path = model_dir / f"{arch}.json"
        if path.exists():
            params, _, _ = load_model(path)
            models[arch] = SimpleNamespace(params_=params)
    if not models:
        raise ConfigError(f"no model files under {model_dir}")
    return models


def cmd_oracle(args):
    config = load_config(args)
    cell = solve_cell_problem(sinusoidal_diffusivity(), 4096)
    model2d = ex.effective_model_2d(config)
    print(f"1D effective diffusivity a* = {cell.a_star:.10f}")
    print(f"2D lattice coefficients A_xx = {model2d.a_xx:.6f}, "
          f"A_yy = {model2d.a_yy:.6f}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        p = args.out / "oracle.csv"
        ex._write_table(p, ["name", "value"],
                        [["a_star", cell.a_star],
                         ["a_xx", model2d.a_xx],
                         ["a_yy", model2d.a_yy]])
        print(f"wrote {p}")
    return 0


def cmd_generate(args):
    config = load_config(args)
    train, test, _ = ex.generate_datasets(config)
    manifest = Manifest(args.out, config=config.to_dict(), seed=config.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    ex.write_dataset_csvs(args.out, train, test, manifest)
    manifest.write()
    print(f"wrote {len(train)} train and {len(test)} test trajectories "
          f"to {args.out / 'data'}")
    return 0


def cmd_train(args):
    config = load_config(args)
    train, _ = ex.load_dataset_csvs(args.out)
    models = ex.train_models(config, train)
    model_dir = args.out / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    from .nets import save_model
    spec = ex.feature_spec_for(config)
    for arch, est in models.items():
        p = model_dir / f"{arch}.json"
        save_model(p, est.params_,
                   feature_spec=spec if arch == "mlp" else None,
                   provenance={"seed": config.seed,
                               "problem": config.problem})
        print(f"wrote {p} ({len(est.history_)} epochs)")
    return 0


def cmd_evaluate(args):
    config = load_config(args)
    _, test = ex.load_dataset_csvs(args.out)
    models = _loaded_models(args.out)
    if config.arch != "both":
        models = {a: m for a, m in models.items() if a == config.arch}
    metrics = ex.evaluate_models(config, models, test)
    metric_dir = args.out / "metrics"
    metric_dir.mkdir(parents=True, exist_ok=True)
    p = metric_dir / "rhs_metrics.csv"
    ex._write_table(p, ["arch", "recorded_rmse", "recorded_rel_mse",
                        "oracle_rmse"],
                    [[arch, m["recorded_rmse"], m["recorded_rel_mse"],
                      m["oracle_rmse"]] for arch, m in metrics.items()])
    for arch, m in metrics.items():
        print(f"{arch}: held-out rMSE {m['recorded_rmse']:.4g} "
              f"(vs homogenized operator {m['oracle_rmse']:.4g})")
    print(f"wrote {p}")
    return 0


def cmd_rollout(args):
    config = load_config(args)
    if config.problem != "1d-hetero":
        raise ConfigError("rollout comparisons are defined for the 1D "
                          "experiment; 2D evaluation is RHS-based")
    _, test = ex.load_dataset_csvs(args.out)
    models = _loaded_models(args.out)
    u0 = ex.ic_from_dataset(test[-1], config)
    t_grid = np.round(np.linspace(0.0, config.horizon, 101), 12)
    trajs = ex.rollout_1d(config, models, u0, t_grid)
    metric_dir = args.out / "metrics"
    metric_dir.mkdir(parents=True, exist_ok=True)
    rows = [[arch, rmse(trajs[arch], trajs["reference"])]
            for arch in models]
    p = metric_dir / "rollout_metrics.csv"
    ex._write_table(p, ["arch", "rmse"], rows)
    for arch, value in rows:
        print(f"{arch}: rollout rMSE {value:.4g} over [0, {config.horizon}]")
    print(f"wrote {p}")
    return 0


def cmd_report(args):
    metric_dir = args.out / "metrics"
    found = False
    for name in ("rhs_metrics.csv", "rollout_metrics.csv"):
        path = metric_dir / name
        if path.exists():
            found = True
            print(f"== {name} ==")
            print(path.read_text().rstrip())
    if not found:
        raise ConfigError(f"no metric tables under {metric_dir}; "
                          "run `evaluate` or `run` first")
    return 0


def cmd_run(args):
    config = load_config(args)
    manifest = ex.run_experiment(config, args.out)
    print(f"wrote {len(manifest.entries)} artifacts to {args.out} "
          "(manifest.json lists content hashes)")
    return 0


COMMANDS = {
    "oracle": cmd_oracle,
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rollout": cmd_rollout,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
