"""End-to-end experiment runs and artifact emission.

A run trains the selected methods on one dataset, tunes the extrapolation
penalty where applicable, scores every split, and writes deterministic
artifacts: a flat metrics JSON (keyed ``method.metric`` plus a provenance
block), per-point prediction CSVs aligned with the dataset rows, dense
prediction curves for plotting, and alpha-sweep tables.  Timing is printed
to stdout only so that files are byte-identical across reruns.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .affine import affine_cost_closed
from .baselines import blr_fit, train_mse
from .benchmarks import default_benchmark, sample_benchmark, toy_three_point
from .bll import BllModel, negative_lml, predict_batch, with_alpha
from .calibration import AlphaSearchConfig, alpha_sweep, lpd, tune_alpha
from .data import Dataset, read_splits_csv, write_splits_csv, write_table_csv
from .mlp import MlpSpec, forward_batch
from .rng import make_rng
from .training import TrainConfig, train
from .vi import vi_predict_batch, vi_train

__all__ = ["ExperimentConfig", "config_hash", "run_experiment", "toy_feature_demo"]

VI_PREDICT_SAMPLES = 100


def benchmark_train_config() -> TrainConfig:
    """Benchmark-tuned loop settings (declared defaults, not method constants)."""
    return TrainConfig(lr=2e-3, patience=1000, init_log_sigma_e=math.log(0.3))


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = ("bll", "blr", "vi")
    seed: int = 0
    out_dir: str = "out"
    dataset_path: str | None = None  # generated on the fly when None
    hidden: tuple[int, ...] = (20, 20, 20)
    activation: str = "tanh"
    train: TrainConfig = field(default_factory=benchmark_train_config)
    alpha_search: AlphaSearchConfig = field(default_factory=AlphaSearchConfig)
    sweep_points: int = 31

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        unknown = set(self.methods) - {"bll", "blr", "vi"}
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not self.methods:
            raise ValueError("at least one method must be selected")

    def train_config(self) -> TrainConfig:
        """Loop settings with the experiment seed threaded through."""
        return replace(self.train, seed=self.seed)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "train" in raw:
        raw["train"] = TrainConfig(**raw["train"])
    if "alpha_search" in raw:
        raw["alpha_search"] = AlphaSearchConfig(**raw["alpha_search"])
    return ExperimentConfig(**raw)


def config_hash(config: ExperimentConfig) -> str:
    """Hash of everything that influences results (output location excluded)."""
    payload = asdict(config)
    payload.pop("out_dir")
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_splits(config: ExperimentConfig) -> dict[str, Dataset]:
    if config.dataset_path is not None:
        path = Path(config.dataset_path)
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path}")
        splits = read_splits_csv(path)
    else:
        splits = sample_benchmark(default_benchmark(), config.seed)
    for required in ("train", "val", "test"):
        if required not in splits:
            raise ValueError(f"dataset is missing the {required!r} split")
    return splits


def _write_predictions(path, model: BllModel, data: Dataset) -> None:
    mean, var_y, var_t = predict_batch(model, data.x)
    header = (
        [f"x_{i}" for i in range(data.n_x)]
        + [f"mean_{j}" for j in range(data.n_y)]
        + [f"sd_y_{j}" for j in range(data.n_y)]
        + [f"sd_t_{j}" for j in range(data.n_y)]
    )
    rows = [
        [*data.x[i], *mean[i], *np.sqrt(var_y[i]), *np.sqrt(var_t[i])]
        for i in range(data.m)
    ]
    write_table_csv(path, header, rows)


def _write_curve(path, model: BllModel, x_grid: np.ndarray, n_y: int) -> None:
    mean, var_y, var_t = predict_batch(model, x_grid)
    header = (
        ["x_0"]
        + [f"mean_{j}" for j in range(n_y)]
        + [f"sd_y_{j}" for j in range(n_y)]
        + [f"sd_t_{j}" for j in range(n_y)]
    )
    rows = [
        [x_grid[i, 0], *mean[i], *np.sqrt(var_y[i]), *np.sqrt(var_t[i])]
        for i in range(x_grid.shape[0])
    ]
    write_table_csv(path, header, rows)


def _mse(model: BllModel, data: Dataset) -> float:
    mean, _, _ = predict_batch(model, data.x)
    return float(np.mean((data.t - mean) ** 2))


def _nlml_on(model: BllModel, data: Dataset) -> float:
    std = Dataset(
        model.x_scaler.transform(data.x), model.t_scaler.transform(data.t)
    )
    return negative_lml(model.params, model.hyper, std)


def _stack_all(splits: dict[str, Dataset]) -> Dataset:
    xs = np.concatenate([splits[k].x for k in ("train", "val", "test")])
    ts = np.concatenate([splits[k].t for k in ("train", "val", "test")])
    return Dataset(xs, ts)


def _score_bll_variant(tag, model, splits, metrics):
    metrics[f"{tag}.train_mse"] = _mse(model, splits["train"])
    metrics[f"{tag}.test_mse"] = _mse(model, splits["test"])
    metrics[f"{tag}.train_nlml"] = _nlml_on(model, splits["train"])
    metrics[f"{tag}.train_lpd"] = lpd(model, splits["train"])
    metrics[f"{tag}.val_lpd"] = lpd(model, splits["val"])
    metrics[f"{tag}.test_lpd"] = lpd(model, splits["test"])


def _run_lml_method(name, config, splits, out_dir, metrics, trainer):
    """Shared flow for the two marginal-likelihood methods (joint and frozen)."""
    model_star, _ = trainer()
    alpha_max, model_max = tune_alpha(model_star, splits["val"], config.alpha_search)
    metrics[f"{name}.alpha_star"] = model_star.alpha
    metrics[f"{name}.alpha_max"] = alpha_max
    for j, sig in enumerate(model_star.sigma_e):
        metrics[f"{name}.sigma_e_{j}"] = float(sig)
    metrics[f"{name}.wbar_gap"] = model_star.wbar_gap
    _score_bll_variant(f"{name}_alpha_star", model_star, splits, metrics)
    _score_bll_variant(f"{name}_alpha_max", model_max, splits, metrics)

    everything = _stack_all(splits)
    _write_predictions(out_dir / f"predictions_{name}_alpha_star.csv", model_star, everything)
    _write_predictions(out_dir / f"predictions_{name}_alpha_max.csv", model_max, everything)
    lo = splits["test"].x.min()
    hi = splits["test"].x.max()
    grid = np.linspace(lo, hi, 400).reshape(-1, 1)
    _write_curve(out_dir / f"curve_{name}_alpha_star.csv", model_star, grid, everything.n_y)
    _write_curve(out_dir / f"curve_{name}_alpha_max.csv", model_max, grid, everything.n_y)

    log_grid = np.linspace(
        model_star.hyper.log_alpha,
        model_star.hyper.log_alpha + config.alpha_search.span,
        config.sweep_points,
    )
    rows = alpha_sweep(model_star, splits["train"], splits, log_grid)
    write_table_csv(
        out_dir / f"alpha_sweep_{name}.csv",
        list(rows[0].keys()),
        [list(r.values()) for r in rows],
    )
    return model_star, model_max


def run_experiment(config: ExperimentConfig) -> tuple[dict, int]:
    """Run every selected method; returns (metrics, exit_code).

    Per-method failures are recorded under ``errors.<method>`` and the run
    continues; exit code 2 flags a partial failure.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = load_splits(config)
    write_splits_csv(out_dir / "dataset.csv", splits)

    spec = MlpSpec(
        input_dim=splits["train"].n_x,
        hidden=config.hidden,
        output_dim=splits["train"].n_y,
        activation=config.activation,
    )
    train_cfg = config.train_config()
    metrics: dict = {}
    errors: dict[str, str] = {}

    if "bll" in config.methods:
        started = time.perf_counter()
        try:
            _run_lml_method(
                "bll",
                config,
                splits,
                out_dir,
                metrics,
                trainer=lambda: train(spec, splits["train"], train_cfg),
            )
            print(f"bll finished in {time.perf_counter() - started:.1f}s")
        except Exception as err:  # noqa: BLE001 - failures become report entries
            errors["bll"] = f"{type(err).__name__}: {err}"

    if "blr" in config.methods:
        started = time.perf_counter()
        try:
            mse_params, _ = train_mse(spec, splits["train"], train_cfg)
            _run_lml_method(
                "blr",
                config,
                splits,
                out_dir,
                metrics,
                trainer=lambda: blr_fit(mse_params, splits["train"], train_cfg),
            )
            print(f"blr finished in {time.perf_counter() - started:.1f}s")
        except Exception as err:  # noqa: BLE001
            errors["blr"] = f"{type(err).__name__}: {err}"

    if "vi" in config.methods:
        started = time.perf_counter()
        try:
            _run_vi(config, train_cfg, spec, splits, out_dir, metrics)
            print(f"vi finished in {time.perf_counter() - started:.1f}s")
        except Exception as err:  # noqa: BLE001
            errors["vi"] = f"{type(err).__name__}: {err}"

    for name, message in errors.items():
        metrics[f"errors.{name}"] = message
    metrics["provenance"] = {
        "seed": config.seed,
        "config_hash": config_hash(config),
        "artifact_version": __version__,
    }
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return metrics, (2 if errors else 0)


def _run_vi(config, train_cfg, spec, splits, out_dir, metrics):
    model, history = vi_train(spec, splits["train"], train_cfg)
    metrics["vi.train_nlml"] = history.train_objective[history.best_epoch]
    for j, sig in enumerate(model.sigma_e):
        metrics[f"vi.sigma_e_{j}"] = float(sig)

    everything = _stack_all(splits)
    rng = make_rng(config.seed + 7)
    means, noise_var = vi_predict_batch(model, everything.x, VI_PREDICT_SAMPLES, rng)
    mixture_mean = means.mean(axis=0)
    mixture_var = means.var(axis=0) + noise_var

    sizes = [splits[k].m for k in ("train", "val", "test")]
    edges = np.cumsum([0, *sizes])
    names = ("train", "val", "test")
    from scipy.special import logsumexp  # local: keeps module import light

    comp = -0.5 * (
        math.log(2.0 * math.pi)
        + np.log(noise_var)
        + (everything.t - means) ** 2 / noise_var
    )
    per_point = logsumexp(comp.sum(axis=2), axis=0) - math.log(VI_PREDICT_SAMPLES)
    for k, name in enumerate(names):
        seg = slice(edges[k], edges[k + 1])
        metrics[f"vi.{name}_lpd"] = float(per_point[seg].mean())
        metrics[f"vi.{name}_mse"] = float(
            np.mean((everything.t[seg] - mixture_mean[seg]) ** 2)
        )

    header = (
        [f"x_{i}" for i in range(everything.n_x)]
        + [f"mean_{j}" for j in range(everything.n_y)]
        + [f"sd_y_{j}" for j in range(everything.n_y)]
        + [f"sd_t_{j}" for j in range(everything.n_y)]
    )
    rows = [
        [
            *everything.x[i],
            *mixture_mean[i],
            *np.sqrt(means.var(axis=0)[i]),
            *np.sqrt(mixture_var[i]),
        ]
        for i in range(everything.m)
    ]
    write_table_csv(out_dir / "predictions_vi.csv", header, rows)

    comp_header = ["x_0"] + [
        f"mean_{j}_c{c}" for c in range(VI_PREDICT_SAMPLES) for j in range(everything.n_y)
    ]
    comp_rows = [
        [everything.x[i, 0]]
        + [means[c, i, j] for c in range(VI_PREDICT_SAMPLES) for j in range(everything.n_y)]
        for i in range(everything.m)
    ]
    write_table_csv(out_dir / "components_vi.csv", comp_header, comp_rows)
    for j in range(everything.n_y):
        metrics[f"vi.noise_var_{j}"] = float(noise_var[j])


def toy_feature_demo(seed: int, out_dir) -> dict:
    """Three-sample walkthrough: bands, feature plane, cost grid, sweep.

    Trains a two-feature network on three points, tunes alpha on wider-range
    validation data, and emits plot-ready CSVs: prediction bands at the
    trained, tuned and inflated alpha; the 2-D feature coordinates of train
    and query points; an affine-cost grid over the feature plane (with the
    training feature rows appended); and the alpha-sweep table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits, _ = toy_three_point(seed)
    cfg = TrainConfig(
        max_epochs=6000,
        patience=5999,
        seed=seed,
        val_fraction=None,
        init_log_sigma_e=math.log(0.25),
    )
    spec = MlpSpec(input_dim=1, hidden=(8, 2), output_dim=1)
    model, _ = train(spec, splits["train"], cfg)
    alpha_max, model_max = tune_alpha(model, splits["val"])

    x_grid = np.linspace(-3.5, 3.5, 281).reshape(-1, 1)
    variants = {
        "alpha_star": model,
        "alpha_max": model_max,
        "alpha_large": with_alpha(model, alpha_max * 50.0),
    }
    for tag, mdl in variants.items():
        _write_curve(out_dir / f"toy_predictions_{tag}.csv", mdl, x_grid, 1)

    _, feats_train = forward_batch(model.params, model.x_scaler.transform(splits["train"].x))
    _, feats_grid = forward_batch(model.params, model.x_scaler.transform(x_grid))
    rows = [[splits["train"].x[i, 0], *feats_train[i], 1.0] for i in range(3)]
    rows += [[x_grid[i, 0], *feats_grid[i], 0.0] for i in range(x_grid.shape[0])]
    write_table_csv(out_dir / "toy_features.csv", ["x", "phi_0", "phi_1", "is_train"], rows)

    span0 = feats_grid[:, 0].min() - 0.5, feats_grid[:, 0].max() + 0.5
    span1 = feats_grid[:, 1].min() - 0.5, feats_grid[:, 1].max() + 0.5
    grid0 = np.linspace(*span0, 40)
    grid1 = np.linspace(*span1, 40)
    cost_rows = []
    for g1 in grid1:
        for g0 in grid0:
            cost = affine_cost_closed(feats_train, np.array([g0, g1]), model.alpha)
            cost_rows.append([g0, g1, cost])
    for i in range(3):
        cost_rows.append(
            [
                feats_train[i, 0],
                feats_train[i, 1],
                affine_cost_closed(feats_train, feats_train[i], model.alpha),
            ]
        )
    write_table_csv(out_dir / "toy_affine_grid.csv", ["phi_0", "phi_1", "cost"], cost_rows)

    log_grid = np.linspace(
        model.hyper.log_alpha, model.hyper.log_alpha + 15.0, 41
    )
    sweep_rows = alpha_sweep(model, splits["train"], splits, log_grid)
    write_table_csv(
        out_dir / "toy_alpha_sweep.csv",
        list(sweep_rows[0].keys()),
        [list(r.values()) for r in sweep_rows],
    )
    return {
        "alpha_star": model.alpha,
        "alpha_max": alpha_max,
        "files": sorted(p.name for p in out_dir.glob("toy_*.csv")),
    }


def render_metrics_table(metrics: dict) -> str:
    """Human-readable summary of a metrics dict, Table-style."""
    groups = sorted(
        {k.split(".")[0] for k in metrics if "." in k and not k.startswith(("provenance", "errors"))}
    )
    lines = [
        f"{'method':<18}{'train_lpd':>12}{'val_lpd':>12}{'test_lpd':>12}{'test_mse':>12}"
    ]
    for name in groups:
        if f"{name}.test_lpd" not in metrics:
            continue  # hyperparameter-only groups have their own line below

        def get(metric):
            value = metrics.get(f"{name}.{metric}")
            return f"{value:>12.3f}" if isinstance(value, float) else f"{'-':>12}"

        lines.append(f"{name:<18}{get('train_lpd')}{get('val_lpd')}{get('test_lpd')}{get('test_mse')}")
    for name in groups:
        if f"{name}.alpha_star" in metrics:
            sigmas = [
                f"{metrics[k]:.3f}" for k in sorted(metrics) if k.startswith(f"{name}.sigma_e_")
            ]
            lines.append(
                f"{name}: alpha*={metrics[f'{name}.alpha_star']:.3g} "
                f"alpha_max={metrics[f'{name}.alpha_max']:.3g} sigma_e=({', '.join(sigmas)})"
            )
    for key in sorted(metrics):
        if key.startswith("errors."):
            lines.append(f"{key}: {metrics[key]}")
    return "\n".join(lines)
