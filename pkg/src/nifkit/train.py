"""Mini-batch Adam training, metrics and gradient verification."""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DivergenceError, InvalidInputError
from .nets import Model
from .numerics import Rng
from .parallel import map_bounded
from .pointcloud import PointCloudDataset

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e12
REL_ERROR_GUARD = 1e-300
# Offset of the shuffle stream from the init stream of the same seed.
SHUFFLE_STREAM = 1_000_003


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=1024, ge=1)
    epochs: int = Field(default=100, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    shuffle: bool = True
    log_every: int = Field(default=5, ge=1)
    trials: int = Field(default=1, ge=1)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.shape:
        raise InvalidInputError(f"Gradient shape {g.shape} != params {params.shape}")
    t = state.t + 1
    if not np.all(np.isfinite(g)):
        raise DivergenceError(f"Non-finite gradient at step {t}", step=t)
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new, AdamState(m=m, v=v, t=t)


def _normalized_weights(weights: np.ndarray | None, n: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != n:
        raise InvalidInputError(f"{w.shape[0]} weights for {n} rows")
    return w / w.mean()


def mse_loss(pred: np.ndarray, target: np.ndarray, weights: np.ndarray | None = None) -> float:
    """``(1/M) sum_i w_i ||pred_i - target_i||^2`` with weights scaled to mean 1."""
    return mse_loss_and_grad(pred, target, weights)[0]


def mse_loss_and_grad(
    pred: np.ndarray,
    target: np.ndarray,
    weights: np.ndarray | None = None,
    rescale: bool = True,
) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``pred``.

    With ``rescale=False`` the weights are used as given; ``fit`` passes
    mini-batch slices of weights scaled to mean 1 over the whole dataset.
    """
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise InvalidInputError(f"Prediction shape {p.shape} != target {y.shape}")
    n = p.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(p)
    r = p - y
    per_row = np.sum(r * r, axis=1)
    if rescale:
        w = _normalized_weights(weights, n)
    elif weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != n:
            raise InvalidInputError(f"{w.shape[0]} weights for {n} rows")
    else:
        w = None
    if w is None:
        return float(per_row.mean()), (2.0 / n) * r
    return float(np.dot(w, per_row) / n), (2.0 / n) * w[:, None] * r


@dataclass
class TrainHistory:
    losses: list[float]
    wall_time: float
    params: np.ndarray
    seed: int
    final_loss: float
    steps: int = 0
    meta: dict = field(default_factory=dict)


def evaluate_loss(model: Model, dataset: PointCloudDataset) -> float:
    pred = model.predict(dataset.conditions, dataset.coords)
    return mse_loss(pred, dataset.outputs, dataset.weights)


def fit(model: Model, dataset: PointCloudDataset, cfg: TrainConfig) -> TrainHistory:
    """Train ``model`` in place; ``epochs * ceil(M / batch_size)`` Adam steps."""
    n = dataset.n_rows
    if cfg.epochs > 0 and n == 0:
        raise InvalidInputError("Cannot train on an empty dataset")
    cond, coords, target = dataset.conditions, dataset.coords, dataset.outputs
    weights = _normalized_weights(dataset.weights, n) if n else None
    model.check_inputs(cond[:0], coords[:0])
    if target.shape[1] != model.d_out:
        raise InvalidInputError(
            f"Dataset has {target.shape[1]} outputs, model produces {model.d_out}"
        )
    shuffle_rng = Rng(cfg.seed).spawn(SHUFFLE_STREAM)
    state = AdamState.zeros(model.n_params)
    losses: list[float] = []
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            out, tape = model.forward(cond[idx], coords[idx])
            loss, g = mse_loss_and_grad(
                out, target[idx], None if weights is None else weights[idx], rescale=False
            )
            if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
                raise DivergenceError(
                    f"Loss diverged ({loss:.3e}) in epoch {epoch}", step=state.t, epoch=epoch
                )
            grads = model.backward(tape, g)
            assert grads.params is not None
            try:
                model.params, state = adam_step(model.params, grads.params, state, cfg)
            except DivergenceError as e:
                raise DivergenceError(str(e), step=e.step, epoch=epoch) from e
            total += loss * idx.size
        losses.append(total / n)
        if (epoch + 1) % cfg.log_every == 0 or epoch + 1 == cfg.epochs:
            logger.info(f"epoch {epoch + 1}/{cfg.epochs} loss {losses[-1]:.6e}")
    wall = time.perf_counter() - start
    final = evaluate_loss(model, dataset) if n else 0.0
    return TrainHistory(
        losses=losses,
        wall_time=wall,
        params=model.params.copy(),
        seed=cfg.seed,
        final_loss=final,
        steps=state.t,
    )


def run_trials(
    build: Callable[[Rng], Model],
    dataset: PointCloudDataset,
    cfg: TrainConfig,
    threads: int = 1,
) -> list[tuple[Model, TrainHistory]]:
    """Independent runs with seeds ``seed, seed+1, ...``, at most ``threads`` at once."""

    def one(k: int) -> tuple[Model, TrainHistory]:
        trial_cfg = cfg.model_copy(update={"seed": cfg.seed + k})
        model = build(Rng(trial_cfg.seed))
        logger.info(f"trial {k + 1}/{cfg.trials} seed {trial_cfg.seed}")
        return model, fit(model, dataset, trial_cfg)

    return map_bounded(one, list(range(cfg.trials)), threads)


class GroupRMSE(BaseModel):
    params: list[float]
    count: int
    rmse_normalized: float
    rmse_physical: float


class RMSEReport(BaseModel):
    """RMSE on the normalized scale and in physical output units.

    ``rmse`` figures average squared errors over all rows and output
    components; the overall value is the root of the row-count-weighted
    mean of the per-group mean squared errors.
    """

    n_rows: int
    rmse_normalized: float
    rmse_physical: float
    normalized_error: float
    groups: list[GroupRMSE] = []


def _rmse(err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(err * err))) if err.size else 0.0


def rmse_report(
    model: Model, dataset: PointCloudDataset, group_by_param: bool = True
) -> RMSEReport:
    pred = model.predict(dataset.conditions, dataset.coords)
    target = dataset.outputs
    out_norm = dataset.output_normalization()
    pred_phys = out_norm.invert(pred)
    target_phys = out_norm.invert(target)
    err_n = pred - target
    err_p = pred_phys - target_phys
    denom = float(np.linalg.norm(target_phys))
    normalized_error = float(np.linalg.norm(err_p)) / denom if denom > 0 else 0.0
    groups: list[GroupRMSE] = []
    if group_by_param and dataset.schema.d_param > 0:
        phys_params = dataset.physical()[:, dataset.schema.param_slice]
        for rows in dataset.groups(dataset.schema.param_slice):
            groups.append(
                GroupRMSE(
                    params=[float(v) for v in phys_params[rows[0]]],
                    count=int(rows.size),
                    rmse_normalized=_rmse(err_n[rows]),
                    rmse_physical=_rmse(err_p[rows]),
                )
            )
    return RMSEReport(
        n_rows=dataset.n_rows,
        rmse_normalized=_rmse(err_n),
        rmse_physical=_rmse(err_p),
        normalized_error=normalized_error,
        groups=groups,
    )


@dataclass
class GradCheckResult:
    max_rel_error: float
    analytic: np.ndarray
    numeric: np.ndarray


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest ``||a - n|| / max(||a||, ||n||)`` over the rows of the inputs."""
    if analytic.size == 0:
        return 0.0
    a = analytic.reshape(analytic.shape[0], -1)
    n = numeric.reshape(a.shape)
    diff = np.linalg.norm(a - n, axis=1)
    scale = np.maximum(np.linalg.norm(a, axis=1), np.linalg.norm(n, axis=1))
    return float(np.max(diff / np.maximum(scale, REL_ERROR_GUARD)))


def _check_step(h: float) -> None:
    if not 1e-7 <= h <= 1e-4:
        raise InvalidInputError(f"Finite-difference step {h} outside [1e-7, 1e-4]")


def grad_check(
    model: Model,
    dataset: PointCloudDataset,
    h: float = 1e-6,
) -> GradCheckResult:
    """Compare backward() with central differences of the MSE loss.

    The error is ``||analytic - numeric|| / max(||analytic||, ||numeric||)``
    over the whole parameter vector.
    """
    _check_step(h)
    cond, coords, target, weights = (
        dataset.conditions,
        dataset.coords,
        dataset.outputs,
        dataset.weights,
    )
    base = model.params.copy()
    out, tape = model.forward(cond, coords)
    _, g = mse_loss_and_grad(out, target, weights)
    grads = model.backward(tape, g)
    assert grads.params is not None
    analytic = grads.params
    numeric = np.empty_like(base)
    try:
        for k in range(base.size):
            model.params = base.copy()
            model.params[k] += h
            up = mse_loss(model.forward(cond, coords)[0], target, weights)
            model.params = base.copy()
            model.params[k] -= h
            down = mse_loss(model.forward(cond, coords)[0], target, weights)
            numeric[k] = (up - down) / (2.0 * h)
    finally:
        model.params = base
    return GradCheckResult(_relative_error(analytic[None, :], numeric[None, :]), analytic, numeric)


def spatial_grad_check(
    model: Model, cond: np.ndarray, coords: np.ndarray, h: float = 1e-6
) -> GradCheckResult:
    """Compare ``spatial_gradient`` with central differences in ``x``, row by row."""
    _check_step(h)
    c, x = model.check_inputs(cond, coords)
    analytic = model.spatial_gradient(c, x)
    numeric = np.empty_like(analytic)
    for k in range(model.d_space):
        step = np.zeros_like(x)
        step[:, k] = h
        up = model.predict(c, x + step)
        down = model.predict(c, x - step)
        numeric[:, :, k] = (up - down) / (2.0 * h)
    return GradCheckResult(_relative_error(analytic, numeric), analytic, numeric)
