"""Decoupled spatial query.

A NIF is compiled once per condition into a frozen ShapeNet parameter
vector; points and spatial gradients are then evaluated on the ShapeNet
alone. ``run_benchmark`` compares that against a monolithic space-time
SIREN of matched accuracy.
"""

import hashlib
import json
import logging
import platform
import time
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property
from threading import Lock
from typing import Literal

import numpy as np
from pydantic import BaseModel

from .errors import InvalidInputError
from .nets import MLPModel, MLPModelConfig, NetPlan, ShapeNetConfig, chain_backward, chain_forward
from .nif import NIFModel
from .numerics import Rng
from .parallel import map_bounded

logger = logging.getLogger(__name__)

ACTIVATION_FLOPS = 4
COMPILE_CACHE_SIZE = 256

_cache: "OrderedDict[tuple[str, bytes], CompiledField]" = OrderedDict()
_cache_lock = Lock()


def config_hash(cfg: BaseModel) -> str:
    text = json.dumps(cfg.model_dump(mode="json"), sort_keys=True)
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def model_id(model: NIFModel) -> str:
    h = hashlib.blake2b(digest_size=8)
    h.update(config_hash(model.config).encode("ascii"))
    h.update(np.ascontiguousarray(model.params).tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class CompiledField:
    """Frozen ShapeNet parameters for one condition."""

    shape: ShapeNetConfig
    theta: np.ndarray
    condition: np.ndarray
    latent: np.ndarray
    model_id: str

    def __post_init__(self) -> None:
        for arr in (self.theta, self.condition, self.latent):
            arr.flags.writeable = False

    @cached_property
    def plan(self) -> NetPlan:
        return self.shape.plan()

    def layers(self) -> list:
        return self.plan.layout().unpack(self.theta)


def compile_field(model: NIFModel, condition: np.ndarray) -> CompiledField:
    """Run ParameterNet once for ``condition``; repeated calls hit a cache."""
    cond = np.asarray(condition, dtype=np.float64).reshape(-1)
    if cond.size != model.d_condition:
        raise InvalidInputError(
            f"Condition has {cond.size} entries, model expects {model.d_condition}"
        )
    key = (model_id(model), cond.tobytes())
    with _cache_lock:
        hit = _cache.get(key)
        if hit is not None:
            _cache.move_to_end(key)
            return hit
    theta = model.shape_params(cond[None, :])[0].copy()
    latent = model.latent(cond[None, :])[0].copy()
    compiled = CompiledField(
        shape=model.config.shape,
        theta=theta,
        condition=cond.copy(),
        latent=latent,
        model_id=key[0],
    )
    with _cache_lock:
        _cache[key] = compiled
        while len(_cache) > COMPILE_CACHE_SIZE:
            _cache.popitem(last=False)
    return compiled


def clear_compile_cache() -> None:
    with _cache_lock:
        _cache.clear()


def _points(field: CompiledField, points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, field.shape.d_in)
    if x.shape[1] != field.shape.d_in:
        raise InvalidInputError(f"Points must have {field.shape.d_in} columns")
    return x


def eval_points(field: CompiledField, points: np.ndarray) -> np.ndarray:
    x = _points(field, points)
    if x.shape[0] == 0:
        return np.zeros((0, field.shape.d_out))
    return chain_forward(field.plan, field.layers(), x)[0]


def eval_gradient(field: CompiledField, points: np.ndarray) -> np.ndarray:
    """``du_l/dx_k`` as ``(q, d_out, d_in)``."""
    x = _points(field, points)
    n_out, n_in = field.shape.d_out, field.shape.d_in
    if x.shape[0] == 0:
        return np.zeros((0, n_out, n_in))
    layers = field.layers()
    out, tape = chain_forward(field.plan, layers, x)
    jac = np.empty((x.shape[0], n_out, n_in))
    for comp in range(n_out):
        g = np.zeros_like(out)
        g[:, comp] = 1.0
        jac[:, comp, :] = chain_backward(field.plan, layers, tape, g, need_params=False)[1]
    return jac


def flops_per_point(
    cfg: ShapeNetConfig | MLPModelConfig,
    mode: Literal["forward", "gradient"] = "forward",
    activation_flops: int = ACTIVATION_FLOPS,
) -> int:
    """Closed-form per-point flop count of a coordinate MLP.

    Affine layers cost ``2 * n_in * n_out + n_out``, each activated unit
    ``activation_flops``, and each half-sum residual block ``2 * width``.
    ``gradient`` adds one reverse sweep for one output component.
    """
    net = cfg.net if isinstance(cfg, MLPModelConfig) else cfg
    plan = net.plan()
    fwd = 0
    rev = 0
    for layer in plan.layers:
        fwd += 2 * layer.n_in * layer.n_out + layer.n_out
        rev += 2 * layer.n_in * layer.n_out
        if layer.act.kind != "identity":
            fwd += activation_flops * layer.n_out
            rev += (activation_flops + 1) * layer.n_out
    for stage in plan.stages:
        if len(stage) == 2:
            w = plan.layers[stage[1]].n_out
            fwd += 2 * w
            rev += 2 * w
    if mode == "forward":
        return fwd
    if mode == "gradient":
        return fwd + rev
    raise InvalidInputError(f"Unknown flop mode {mode!r}")


class ModelBench(BaseModel):
    name: str
    width: int
    n_params: int
    config_hash: str
    flops_forward: int
    flops_gradient: int
    median_ns_forward: int
    median_ns_gradient: int
    ns_per_point_forward: float
    ns_per_point_gradient: float
    error_proxy: float | None = None


class QueryBenchReport(BaseModel):
    n_points: int
    repeats: int
    parallel: bool
    threads: int
    compile_ns: int
    machine: str
    models: list[ModelBench]


def machine_descriptor() -> str:
    return f"{platform.platform()}; {platform.machine()}; python {platform.python_version()}; numpy {np.__version__}"


def _median_ns(fn, repeats: int) -> int:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(np.median(times))


def _chunked(fn, x: np.ndarray, threads: int) -> np.ndarray:
    chunks = np.array_split(x, threads)
    return np.concatenate(map_bounded(fn, chunks, threads), axis=0)


def benchmark_points(n_points: int, d_space: int, seed: int = 0) -> np.ndarray:
    """Query points uniform in ``[-1, 1]^d_space``."""
    rng = Rng(seed)
    return rng.generator.uniform(-1.0, 1.0, (n_points, d_space))


def run_benchmark(
    nif_model: NIFModel,
    siren_model: MLPModel,
    n_points: int,
    repeats: int,
    condition: np.ndarray,
    parallel: bool = False,
    threads: int = 1,
    activation_flops: int = ACTIVATION_FLOPS,
    error_proxy: dict[str, float] | None = None,
) -> QueryBenchReport:
    """Time point and gradient queries of a compiled NIF and a monolithic SIREN.

    The SIREN consumes ``[condition, x]``; the condition is repeated for
    every point. ``error_proxy`` maps ``"nif"``/``"siren"`` to the accuracy
    the caller measured for each model.
    """
    if n_points < 0 or repeats < 1:
        raise InvalidInputError("n_points must be >= 0 and repeats >= 1")
    if siren_model.d_space != nif_model.d_space:
        raise InvalidInputError("NIF and SIREN must share the spatial dimension")
    cond = np.asarray(condition, dtype=np.float64).reshape(-1)
    workers = max(1, threads) if parallel else 1

    clear_compile_cache()
    t0 = time.perf_counter_ns()
    field_ = compile_field(nif_model, cond)
    compile_ns = time.perf_counter_ns() - t0

    x = benchmark_points(n_points, nif_model.d_space)

    def nif_fwd(chunk: np.ndarray) -> np.ndarray:
        return eval_points(field_, chunk)

    def nif_grad(chunk: np.ndarray) -> np.ndarray:
        return eval_gradient(field_, chunk)

    def siren_fwd(chunk: np.ndarray) -> np.ndarray:
        c = np.broadcast_to(cond[: siren_model.d_condition], (chunk.shape[0], siren_model.d_condition))
        return siren_model.predict(c, chunk)

    def siren_grad(chunk: np.ndarray) -> np.ndarray:
        c = np.broadcast_to(cond[: siren_model.d_condition], (chunk.shape[0], siren_model.d_condition))
        return siren_model.spatial_gradient(c, chunk)

    def timed(fn) -> int:
        if n_points == 0:
            return 0
        if workers > 1:
            return _median_ns(lambda: _chunked(fn, x, workers), repeats)
        return _median_ns(lambda: fn(x), repeats)

    proxies = error_proxy or {}
    entries = []
    for name, cfg, n_params, fwd, grad in (
        ("nif", nif_model.config.shape, nif_model.n_params, nif_fwd, nif_grad),
        ("siren", siren_model.config, siren_model.n_params, siren_fwd, siren_grad),
    ):
        ns_f = timed(fwd)
        ns_g = timed(grad)
        net = cfg.net if isinstance(cfg, MLPModelConfig) else cfg
        entries.append(
            ModelBench(
                name=name,
                width=net.width,
                n_params=n_params,
                config_hash=config_hash(cfg),
                flops_forward=flops_per_point(cfg, "forward", activation_flops),
                flops_gradient=flops_per_point(cfg, "gradient", activation_flops),
                median_ns_forward=ns_f,
                median_ns_gradient=ns_g,
                ns_per_point_forward=ns_f / n_points if n_points else 0.0,
                ns_per_point_gradient=ns_g / n_points if n_points else 0.0,
                error_proxy=proxies.get(name),
            )
        )
        logger.info(f"{name}: {n_points} points, forward {ns_f} ns, gradient {ns_g} ns")
    return QueryBenchReport(
        n_points=n_points,
        repeats=repeats,
        parallel=workers > 1,
        threads=workers,
        compile_ns=compile_ns,
        machine=machine_descriptor(),
        models=entries,
    )
