"""Command-line entry point: ``nifkit <command> [--config PATH] [--seed N] [--out DIR]``.

Every command reads one ``RunConfig`` (flat ``section.key=value`` text or
JSON), applies ``--set`` overrides and ``--seed``, writes the resolved
config to ``<out>/resolved.cfg`` and then its artifacts next to it.
"""

import argparse
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .baselines import DeepONetConfig, FourierFeatureConfig, matched_siren_width, siren_config
from .checkpoint import read_checkpoint, write_checkpoint
from .config import NifkitConfig
from .datagen import KSConfig, WaveConfig, make_ks_dataset, make_wave_dataset, uniform_mus
from .errors import InvalidInputError, NifkitError, ParseError, UsageError
from .flatconfig import (
    dump_flat_text,
    field_keys,
    flatten_dict,
    load_model,
    parse_flat_text,
    unflatten,
)
from .models import ModelConfig, model_config_json, preset
from .nets import MLPModel, MLPModelConfig, Model, ShapeNetConfig, count_params
from .nif import NIFConfig, NIFModel, ParameterNetConfig
from .numerics import Rng, svd_thin
from .pointcloud import PointCloudDataset, read_pointcloud, write_pointcloud
from .query import run_benchmark
from .reduce import (
    QDEIMSelection,
    deim_reconstruct,
    dmd,
    dmd_mode_field,
    dmd_reconstruct,
    energy_rank,
    modal_coefficients,
    nif_modes_normalize,
    nif_sparse_sensing_build,
    pod,
    qdeim_select,
    snapshot_matrix,
)
from .storage import atomic_write_text, write_json
from .train import TrainConfig, TrainHistory, fit, rmse_report, run_trials

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Global config
CFG: NifkitConfig | None = None

TrainModel = Literal["nif-full", "nif-lastlayer", "mlp", "deeponet", "fourier", "siren"]


def _init_config(config: NifkitConfig | None = None) -> NifkitConfig:
    """Initialize global configuration."""
    global CFG
    if config is None:
        try:
            config = NifkitConfig()
        except (ValidationError, ValueError) as e:
            raise UsageError(f"Invalid NIFKIT_* environment: {e}") from e
    CFG = config
    return CFG


def _cfg() -> NifkitConfig:
    return CFG if CFG is not None else _init_config()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GenKSSection(_Section):
    ks: KSConfig = KSConfig()
    n_train: int = Field(default=20, ge=1)
    n_test: int = Field(default=40, ge=0)
    mu_min: float = Field(default=0.2, gt=0)
    mu_max: float = Field(default=0.28, gt=0)


class GenWaveSection(_Section):
    wave: WaveConfig = WaveConfig()


class TrainSection(_Section):
    model: TrainModel = "nif-full"
    preset: str | None = None
    data: str | None = None
    test_data: str | None = None
    fit: TrainConfig = TrainConfig()
    group_by_param: bool = True
    nif: NIFConfig = NIFConfig()
    nif_lastlayer: NIFConfig = NIFConfig(
        shape=ShapeNetConfig(width=10, n_blocks=1),
        param=ParameterNetConfig(d_in=1, bottleneck_r=10, target="last_layer"),
    )
    mlp: MLPModelConfig = MLPModelConfig()
    deeponet: DeepONetConfig = DeepONetConfig()
    fourier: FourierFeatureConfig = FourierFeatureConfig()
    siren: MLPModelConfig = siren_config(width=77)


class EvalSection(_Section):
    checkpoint: str | None = None
    data: str | None = None
    group_by_param: bool = True


class PODSection(_Section):
    data: str | None = None
    test_data: str | None = None
    rank: int | None = Field(default=None, ge=0)
    energy: float = Field(default=0.995, gt=0, le=1)


class SparseSenseSection(PODSection):
    fit: TrainConfig = TrainConfig()
    nif: NIFConfig = NIFConfig()


class DMDSection(_Section):
    checkpoint: str | None = None
    data: str | None = None
    param_group: int = Field(default=0, ge=0)
    dt: float | None = Field(default=None, gt=0)
    rank: int | None = Field(default=None, ge=1)
    grid_points: int = Field(default=500, ge=2)


class BenchQuerySection(_Section):
    nif_checkpoint: str | None = None
    siren_checkpoint: str | None = None
    data: str | None = None
    condition: list[float] | None = None
    n_points: list[int] = [1_000, 10_000, 100_000]
    repeats: int = Field(default=5, ge=1)
    parallel: bool = False
    activation_flops: int = Field(default=4, ge=0)


class RunConfig(_Section):
    """All command sections; each command reads its own."""

    seed: int = 0
    gen_ks: GenKSSection = GenKSSection()
    gen_wave: GenWaveSection = GenWaveSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    pod: PODSection = PODSection()
    qdeim: PODSection = PODSection()
    sparse_sense: SparseSenseSection = SparseSenseSection()
    dmd: DMDSection = DMDSection()
    bench_query: BenchQuerySection = BenchQuerySection()


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _check_keys(flat: dict[str, Any]) -> None:
    known = field_keys(RunConfig)
    for key in flat:
        if key in known or any(k.startswith(f"{key}.") for k in known):
            continue
        raise UsageError(f"Unknown config key: {key}")


def load_run_config(
    path: Path | None, overrides: list[str] | None = None, seed: int | None = None
) -> RunConfig:
    """Config file, then ``--set`` overrides, then ``--seed``."""
    flat: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise UsageError(f"Cannot read config {path}: {e}") from e
        try:
            if Path(path).suffix == ".json":
                flat = flatten_dict(json.loads(text))
            else:
                flat = parse_flat_text(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: line {e.lineno}: {e.msg}") from e
        except ParseError as e:
            raise UsageError(f"{path}: {e}") from e
    if overrides:
        try:
            flat.update(parse_flat_text("\n".join(overrides)))
        except ParseError as e:
            raise UsageError(f"--set: {e}") from e
    if seed is not None:
        flat["seed"] = seed
    _check_keys(flat)
    return load_model(RunConfig, unflatten(flat))


def _require(value: str | None, key: str) -> Path:
    if not value:
        raise UsageError(f"{key} is required")
    return Path(value)


def _load_dataset(value: str | None, key: str) -> PointCloudDataset:
    path = _require(value, key)
    if not path.exists():
        raise InvalidInputError(f"{key}: no such file {path}")
    return read_pointcloud(path)


def _write_csv(path: Path, columns: list[str], matrix: np.ndarray) -> None:
    lines = ["# " + ",".join(columns)]
    for row in np.atleast_2d(matrix):
        lines.append(",".join(f"{v:.17g}" for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _pod_rank(snaps: np.ndarray, rank: int | None, energy: float) -> int:
    if rank is not None:
        return rank
    r = energy_rank(svd_thin(snaps)[1], energy)
    logger.info(f"rank {r} captures {energy:.4%} of the snapshot energy")
    return r


def _rel_error(approx: np.ndarray, truth: np.ndarray) -> float:
    denom = float(np.linalg.norm(truth))
    return float(np.linalg.norm(approx - truth)) / denom if denom > 0 else 0.0


def _cmd_gen_ks(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.gen_ks
    if sec.mu_max < sec.mu_min:
        raise UsageError("gen_ks.mu_max must be >= gen_ks.mu_min")
    threads = _cfg().threads
    train = make_ks_dataset(
        uniform_mus(sec.n_train, sec.mu_min, sec.mu_max), sec.ks, threads=threads
    )
    write_pointcloud(out / "ks_train.csv", train)
    result: dict[str, Any] = {"train_rows": train.n_rows}
    if sec.n_test:
        test = make_ks_dataset(
            uniform_mus(sec.n_test, sec.mu_min, sec.mu_max),
            sec.ks,
            normalization=train.normalization,
            threads=threads,
        )
        write_pointcloud(out / "ks_test.csv", test)
        result["test_rows"] = test.n_rows
    return result


def _cmd_gen_wave(cfg: RunConfig, out: Path) -> dict:
    ds = make_wave_dataset(cfg.gen_wave.wave)
    write_pointcloud(out / "wave.csv", ds)
    return {"rows": ds.n_rows}


def _train_model_config(sec: TrainSection, data: PointCloudDataset) -> ModelConfig:
    base: ModelConfig
    if sec.preset:
        base = preset(sec.preset)
    else:
        base = {
            "nif-full": sec.nif,
            "nif-lastlayer": sec.nif_lastlayer,
            "mlp": sec.mlp,
            "deeponet": sec.deeponet,
            "fourier": sec.fourier,
            "siren": sec.siren,
        }[sec.model]
    s = data.schema
    return base.for_dims(s.d_condition, s.d_space, s.d_out)


def _trial_record(
    model: Model, hist: TrainHistory, data: PointCloudDataset, test: PointCloudDataset | None, group: bool
) -> dict:
    record: dict[str, Any] = {
        "seed": hist.seed,
        "loss_scale": "normalized",
        "losses": hist.losses,
        "final_loss": hist.final_loss,
        "steps": hist.steps,
        "wall_time_s": hist.wall_time,
        "train": rmse_report(model, data, group).model_dump(),
    }
    if test is not None:
        record["test"] = rmse_report(model, test, group).model_dump()
    return record


def _average(records: list[dict], split: str) -> dict[str, float]:
    keys = ("rmse_normalized", "rmse_physical", "normalized_error")
    present = [r[split] for r in records if split in r]
    if not present:
        return {}
    return {k: float(np.mean([p[k] for p in present])) for k in keys}


def _cmd_train(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.train
    # 1. Load data and resolve the model
    data = _load_dataset(sec.data, "train.data")
    test = _load_dataset(sec.test_data, "train.test_data") if sec.test_data else None
    model_cfg = _train_model_config(sec, data)
    fit_cfg = sec.fit.model_copy(update={"seed": cfg.seed})

    # 2. Train every trial
    runs = run_trials(model_cfg.build, data, fit_cfg, threads=_cfg().threads)

    # 3. Persist checkpoints and metrics
    records = []
    for k, (model, hist) in enumerate(runs):
        write_checkpoint(out / ("model.nif" if k == 0 else f"model-{k}.nif"), model)
        records.append(_trial_record(model, hist, data, test, sec.group_by_param))
    metrics = {
        "command": "train",
        "model": sec.model,
        "preset": sec.preset,
        "seed": cfg.seed,
        "n_params": count_params(model_cfg),
        "config": model_config_json(model_cfg),
        "fit": fit_cfg.model_dump(mode="json"),
        "trials": records,
        "average": {
            "final_loss": float(np.mean([r["final_loss"] for r in records])),
            "train": _average(records, "train"),
            "test": _average(records, "test"),
        },
    }
    write_json(out / "metrics.json", metrics)
    return {"final_loss": metrics["average"]["final_loss"]}


def _cmd_eval(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.eval
    model = read_checkpoint(_require(sec.checkpoint, "eval.checkpoint"))
    data = _load_dataset(sec.data, "eval.data")
    report = rmse_report(model, data, sec.group_by_param)
    pred = model.predict(data.conditions, data.coords)
    table = data.table.copy()
    table[:, data.schema.out_slice] = pred
    write_pointcloud(
        out / "predictions.csv",
        PointCloudDataset(schema=data.schema, table=table, normalization=data.normalization),
    )
    write_json(out / "eval.json", {"command": "eval", **report.model_dump()})
    return {"rmse_normalized": report.rmse_normalized}


def _cmd_pod(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.pod
    data = _load_dataset(sec.data, "pod.data")
    snaps, coords, _ = snapshot_matrix(data)
    r = _pod_rank(snaps, sec.rank, sec.energy)
    res = pod(snaps, r)
    total = float(np.sum(res.all_sigma**2))
    summary = {
        "command": "pod",
        "rank": r,
        "sigma": [float(v) for v in res.all_sigma],
        "energy_captured": float(np.sum(res.sigma**2)) / total if total else 0.0,
        "residual": res.residual,
        "relative_residual": res.residual / total if total else 0.0,
    }
    write_json(out / "pod.json", summary)
    d = coords.shape[1]
    _write_csv(
        out / "modes.csv",
        [f"x{k}" for k in range(d)] + [f"psi{i + 1}" for i in range(r)],
        np.hstack([coords, res.psi]),
    )
    return {"rank": r}


def _qdeim(sec: PODSection, key: str) -> tuple[PointCloudDataset, QDEIMSelection, dict]:
    data = _load_dataset(sec.data, f"{key}.data")
    snaps, coords, _ = snapshot_matrix(data)
    r = _pod_rank(snaps, sec.rank, sec.energy)
    if r < 1:
        raise InvalidInputError("POD rank 0 leaves no sensors to place")
    basis = pod(snaps, r)
    sel = qdeim_select(basis.psi, r)
    recon = deim_reconstruct(sel, basis.psi, sel.measure(snaps))
    errors = {"train": _rel_error(recon, snaps)}
    if sec.test_data:
        test = _load_dataset(sec.test_data, f"{key}.test_data")
        t_snaps, _, _ = snapshot_matrix(test)
        if t_snaps.shape[0] != snaps.shape[0]:
            raise InvalidInputError("Test snapshots use a different point set")
        errors["test"] = _rel_error(
            deim_reconstruct(sel, basis.psi, sel.measure(t_snaps)), t_snaps
        )
    sensors = {
        "indices": [int(i) for i in sel.indices],
        "coords": coords[sel.indices].tolist(),
        "rank": r,
    }
    return data, sel, {"sensors": sensors, "pod_qdeim_error": errors}


def _cmd_qdeim(cfg: RunConfig, out: Path) -> dict:
    _, sel, info = _qdeim(cfg.qdeim, "qdeim")
    write_json(out / "sensors.json", info["sensors"])
    write_json(out / "metrics.json", {"command": "qdeim", **info})
    return {"sensors": sel.p}


def _cmd_sparse_sense(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.sparse_sense
    # 1. QDEIM sensors and the POD-QDEIM reference
    data, sel, info = _qdeim(sec, "sparse_sense")

    # 2. Sensor-conditioned datasets (test uses the training sensor statistics)
    built, sensor_norm = nif_sparse_sensing_build(sel.indices, data)
    test_built = None
    if sec.test_data:
        test = _load_dataset(sec.test_data, "sparse_sense.test_data")
        test_built, _ = nif_sparse_sensing_build(sel.indices, test, sensor_norm)

    # 3. Train the NIF on sensor inputs
    s = built.schema
    model_cfg = sec.nif.for_dims(s.d_condition, s.d_space, s.d_out)
    fit_cfg = sec.fit.model_copy(update={"seed": cfg.seed})
    model = model_cfg.build(Rng(cfg.seed))
    hist = fit(model, built, fit_cfg)
    write_checkpoint(out / "model.nif", model)

    # 4. Compare reconstructions
    nif_errors = {"train": rmse_report(model, built, False).normalized_error}
    if test_built is not None:
        nif_errors["test"] = rmse_report(model, test_built, False).normalized_error
    write_json(out / "sensors.json", info["sensors"])
    write_json(
        out / "metrics.json",
        {
            "command": "sparse-sense",
            "seed": cfg.seed,
            "sensor_normalization": sensor_norm.to_json(),
            "losses": hist.losses,
            "final_loss": hist.final_loss,
            "n_params": count_params(model_cfg),
            "pod_qdeim_error": info["pod_qdeim_error"],
            "nif_error": nif_errors,
            "sensors": info["sensors"],
        },
    )
    return {"nif_error": nif_errors["train"]}


def _uniform_grid(lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _cmd_dmd(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.dmd
    model = read_checkpoint(_require(sec.checkpoint, "dmd.checkpoint"))
    if not isinstance(model, NIFModel) or not model.config.last_layer:
        raise InvalidInputError("dmd needs a last_layer NIF checkpoint")
    data = _load_dataset(sec.data, "dmd.data")
    schema = data.schema
    if schema.d_time != 1:
        raise InvalidInputError("dmd needs a dataset with a time column")

    # 1. Snapshots of one parameter group, in time order
    groups = data.groups(schema.param_slice)
    if sec.param_group >= len(groups):
        raise InvalidInputError(f"No parameter group {sec.param_group}")
    sub = data.take(groups[sec.param_group])
    snaps = sub.groups(schema.condition_slice)
    conds = np.vstack([sub.conditions[rows[0]] for rows in snaps])
    phys = sub.physical()
    times = np.array([phys[rows[0], schema.time_slice][0] for rows in snaps])
    first = snaps[0]
    points = sub.coords[first]

    # 2. Normalized modes with quadrature on the first snapshot's points
    if sub.weights is not None:
        weights = sub.weights[first]
    else:
        extent = np.prod(np.ptp(points, axis=0)) if points.shape[0] > 1 else 1.0
        weights = np.full(points.shape[0], (extent or 1.0) / points.shape[0])
    modes = nif_modes_normalize(model, points, weights, modal_coefficients(model, conds))

    # 3. DMD on the normalized latent series
    if sec.dt is not None:
        dt = sec.dt
    else:
        steps = np.diff(times)
        if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-8):
            raise InvalidInputError("Snapshot times are not uniformly spaced; set dmd.dt")
        dt = float(steps[0])
    res = dmd(modes.zeta.T, dt, sec.rank)
    replay = dmd_reconstruct(res, modes.zeta.shape[0])

    # 4. Mode fields on a uniform grid
    grid = _uniform_grid(points.min(axis=0), points.max(axis=0), sec.grid_points)
    fields = dmd_mode_field(res, modes, grid)
    space_norm = data.normalization.select(schema.space_slice) if data.normalization else None
    grid_phys = space_norm.invert(grid) if space_norm is not None else grid
    columns = [f"x{k}" for k in range(grid.shape[1])]
    blocks = [grid_phys]
    for j in range(fields.shape[0]):
        for comp in range(fields.shape[2]):
            columns += [f"mode{j + 1}_u{comp}_re", f"mode{j + 1}_u{comp}_im"]
            blocks += [fields[j, :, comp : comp + 1].real, fields[j, :, comp : comp + 1].imag]
    _write_csv(out / "modes.csv", columns, np.hstack(blocks))
    _write_csv(
        out / "latent.csv",
        ["t"] + [f"zeta{k + 1}" for k in range(modes.n_modes)],
        np.column_stack([times, modes.zeta]),
    )
    write_json(
        out / "dmd.json",
        {
            "command": "dmd",
            "dt": dt,
            "rank": res.rank,
            "eigenvalues": [[float(v.real), float(v.imag)] for v in res.eigenvalues],
            "frequencies": [float(v) for v in res.frequencies],
            "growth_rates": [float(v) for v in res.growth_rates],
            "amplitudes": [[float(v.real), float(v.imag)] for v in res.amplitudes],
            "mode_norms": [float(v) for v in modes.c],
            "singular_values": [float(v) for v in res.singular_values],
            "replay_error": _rel_error(replay, modes.zeta.T),
        },
    )
    return {"rank": res.rank}


def _cmd_bench_query(cfg: RunConfig, out: Path) -> dict:
    sec = cfg.bench_query
    nif = read_checkpoint(_require(sec.nif_checkpoint, "bench_query.nif_checkpoint"))
    if not isinstance(nif, NIFModel):
        raise InvalidInputError("bench_query.nif_checkpoint is not a NIF")
    trained = sec.siren_checkpoint is not None
    siren: Model
    if trained:
        siren = read_checkpoint(Path(sec.siren_checkpoint))  # type: ignore[arg-type]
    else:
        shape = nif.config.shape
        siren = siren_config(
            matched_siren_width(shape.width),
            shape.n_blocks,
            nif.d_condition,
            nif.d_space,
            nif.d_out,
        ).build(Rng(cfg.seed))
    if not isinstance(siren, MLPModel):
        raise InvalidInputError("bench_query.siren_checkpoint is not an MLP/SIREN")
    condition = np.asarray(sec.condition or [0.0] * nif.d_condition, dtype=np.float64)
    proxies: dict[str, float] = {}
    if sec.data:
        data = _load_dataset(sec.data, "bench_query.data")
        proxies["nif"] = rmse_report(nif, data, False).normalized_error
        if trained:
            proxies["siren"] = rmse_report(siren, data, False).normalized_error
    reports = [
        run_benchmark(
            nif,
            siren,
            n,
            sec.repeats,
            condition,
            parallel=sec.parallel,
            threads=_cfg().threads,
            activation_flops=sec.activation_flops,
            error_proxy=proxies,
        ).model_dump()
        for n in sec.n_points
    ]
    write_json(
        out / "bench.json",
        {"command": "bench-query", "siren_trained": trained, "reports": reports},
    )
    return {"sizes": len(reports)}


COMMANDS: dict[str, tuple[Callable[[RunConfig, Path], dict], str]] = {
    "gen-ks": (_cmd_gen_ks, "generate the parametric KS train/test point clouds"),
    "gen-wave": (_cmd_gen_wave, "generate the modulated traveling wave point cloud"),
    "train": (_cmd_train, "train a NIF or a baseline model"),
    "eval": (_cmd_eval, "evaluate a checkpoint on a dataset"),
    "pod": (_cmd_pod, "POD of a snapshot dataset"),
    "qdeim": (_cmd_qdeim, "QDEIM sensor placement and POD-QDEIM reconstruction"),
    "sparse-sense": (_cmd_sparse_sense, "NIF vs POD-QDEIM sparse reconstruction"),
    "dmd": (_cmd_dmd, "DMD on the latent series of a last_layer NIF"),
    "bench-query": (_cmd_bench_query, "spatial query benchmark against a monolithic SIREN"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value or JSON run config")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, help="artifact directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser = _ArgumentParser(prog="nifkit", description="Neural implicit flow toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT)


def run(argv: list[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    try:
        settings = _init_config()
        _configure_logging(settings.log_level)
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        logger.debug(f"arguments: {vars(args)}")
        run_cfg = load_run_config(args.config, args.overrides, args.seed)
        out = args.out or settings.workspace / args.command
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "resolved.cfg", dump_flat_text(run_cfg))
        handler, _ = COMMANDS[args.command]
        summary = handler(run_cfg, out)
        logger.info(f"{args.command} done: {summary}")
        return 0
    except NifkitError as e:
        print(f"nifkit: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"nifkit: error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    """Main entry point for the nifkit command."""
    sys.exit(run())


if __name__ == "__main__":
    main()
