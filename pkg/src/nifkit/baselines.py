"""Comparison models: DeepONet, Fourier-feature MLP, MLP and monolithic SIREN.

All of them take ``(condition, coordinates)`` like a NIF, so they train
and evaluate through the same code paths.
"""

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidInputError
from .nets import (
    LINEAR,
    Activation,
    ChainTape,
    Dense,
    Grads,
    MLPModelConfig,
    Model,
    NetPlan,
    ShapeNetConfig,
    chain_backward,
    chain_forward,
    init_plan,
)
from .numerics import Rng

# Width factor of the monolithic SIREN paired against a NIF ShapeNet.
SIREN_WIDTH_FACTOR = 1.37


def _chain_plan(widths: tuple[int, ...], act: Activation, last_act: Activation) -> NetPlan:
    layers = [
        Dense(n_in, n_out, act if i < len(widths) - 2 else last_act)
        for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:]))
    ]
    return NetPlan(tuple(layers), tuple((i,) for i in range(len(layers))))


class DeepONetConfig(BaseModel):
    """Branch net on the condition, trunk net on the coordinates.

    The branch emits one entry more than the trunk; that last entry is the
    additive bias of the output.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["deeponet"] = "deeponet"
    branch_widths: tuple[int, ...] = (1, 30, 30, 17)
    trunk_widths: tuple[int, ...] = (1, 30, 30, 16)
    activation: Activation = Activation(kind="tanh")

    @model_validator(mode="after")
    def _widths(self) -> "DeepONetConfig":
        if len(self.branch_widths) < 2 or len(self.trunk_widths) < 2:
            raise ValueError("branch and trunk need at least an input and an output width")
        if min(self.branch_widths + self.trunk_widths) < 1:
            raise ValueError("widths must be positive")
        if self.branch_widths[-1] != self.trunk_widths[-1] + 1:
            raise ValueError("branch output must be one wider than trunk output")
        return self

    def branch_plan(self) -> NetPlan:
        return _chain_plan(self.branch_widths, self.activation, LINEAR)

    def trunk_plan(self) -> NetPlan:
        return _chain_plan(self.trunk_widths, self.activation, self.activation)

    def param_count(self) -> int:
        return self.branch_plan().param_count() + self.trunk_plan().param_count()

    def init_params(self, rng: Rng) -> np.ndarray:
        branch = init_plan(rng, self.branch_plan(), self.activation)
        trunk = init_plan(rng, self.trunk_plan(), self.activation)
        return np.concatenate([branch, trunk])

    def for_dims(self, d_condition: int, d_space: int, d_out: int) -> "DeepONetConfig":
        if d_out != 1:
            raise InvalidInputError("DeepONet supports a single output component")
        return self.model_copy(
            update={
                "branch_widths": (d_condition, *self.branch_widths[1:]),
                "trunk_widths": (d_space, *self.trunk_widths[1:]),
            }
        )

    def build(self, rng: Rng) -> "DeepONetModel":
        return DeepONetModel(self, self.init_params(rng))


@dataclass
class DeepONetTape:
    branch_layers: list
    trunk_layers: list
    branch_out: np.ndarray
    trunk_out: np.ndarray
    branch_tape: ChainTape
    trunk_tape: ChainTape


class DeepONetModel(Model):
    def __init__(self, config: DeepONetConfig, params: np.ndarray):
        self.config = config
        self.branch = config.branch_plan()
        self.trunk = config.trunk_plan()
        self.branch_layout = self.branch.layout()
        self.trunk_layout = self.trunk.layout()
        if np.asarray(params).shape != (config.param_count(),):
            raise InvalidInputError("Parameter vector does not match DeepONet config")
        self.params = np.asarray(params, dtype=np.float64)

    @property
    def d_condition(self) -> int:
        return self.config.branch_widths[0]

    @property
    def d_space(self) -> int:
        return self.config.trunk_widths[0]

    @property
    def d_out(self) -> int:
        return 1

    def forward(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, DeepONetTape]:
        c, x = self.check_inputs(cond, coords)
        nb = self.branch_layout.size
        bl = self.branch_layout.unpack(self.params[:nb])
        tl = self.trunk_layout.unpack(self.params[nb:])
        b, b_tape = chain_forward(self.branch, bl, c)
        t, t_tape = chain_forward(self.trunk, tl, x)
        u = np.sum(b[:, :-1] * t, axis=1, keepdims=True) + b[:, -1:]
        return u, DeepONetTape(bl, tl, b, t, b_tape, t_tape)

    def backward(self, tape: DeepONetTape, grad_out: np.ndarray, need_params: bool = True) -> Grads:
        g = np.asarray(grad_out, dtype=np.float64).reshape(-1, 1)
        g_t = g * tape.branch_out[:, :-1]
        t_grads, g_x = chain_backward(
            self.trunk, tape.trunk_layers, tape.trunk_tape, g_t, need_params
        )
        if not need_params:
            return Grads(params=None, cond=None, coords=g_x)
        g_b = np.hstack([g * tape.trunk_out, g])
        b_grads, g_c = chain_backward(
            self.branch, tape.branch_layers, tape.branch_tape, g_b, need_params
        )
        flat = np.concatenate(
            [self.branch_layout.pack(b_grads), self.trunk_layout.pack(t_grads)]
        )
        return Grads(params=flat, cond=g_c, coords=g_x)


def deeponet_forward(
    cfg: DeepONetConfig, params: np.ndarray, t_batch: np.ndarray, x_batch: np.ndarray
) -> np.ndarray:
    """``u = sum_k branch_k(t) trunk_k(x) + branch_last(t)``."""
    return DeepONetModel(cfg, params).forward(t_batch, x_batch)[0]


class FourierFeatureConfig(BaseModel):
    """MLP on random Fourier features ``[cos(2 pi B v), sin(2 pi B v)]``.

    ``v`` is the row ``[condition, x]``; ``B`` has ``n_features`` rows drawn
    from ``N(0, sigma^2)`` and is never trained.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["fourier"] = "fourier"
    d_condition: int = Field(default=2, ge=0)
    d_space: int = Field(default=1, ge=1)
    n_features: int = Field(default=32, ge=1)
    sigma: float = Field(default=1.0, ge=0)
    net: ShapeNetConfig = ShapeNetConfig(d_in=64, width=100, n_blocks=1)

    @model_validator(mode="after")
    def _feature_width(self) -> "FourierFeatureConfig":
        if self.net.d_in != 2 * self.n_features:
            raise ValueError(
                f"net.d_in ({self.net.d_in}) must be 2 * n_features ({2 * self.n_features})"
            )
        return self

    @property
    def d_raw(self) -> int:
        return self.d_condition + self.d_space

    def param_count(self) -> int:
        return self.net.param_count()

    def init_params(self, rng: Rng) -> np.ndarray:
        return self.net.init_params(rng)

    def sample_frequencies(self, rng: Rng) -> np.ndarray:
        return self.sigma * rng.normal((self.n_features, self.d_raw))

    def for_dims(self, d_condition: int, d_space: int, d_out: int) -> "FourierFeatureConfig":
        net = self.net.model_copy(update={"d_out": d_out})
        return self.model_copy(
            update={"d_condition": d_condition, "d_space": d_space, "net": net}
        )

    def build(self, rng: Rng) -> "FourierFeatureModel":
        params = self.init_params(rng)
        return FourierFeatureModel(self, params, self.sample_frequencies(rng))


def fourier_features(b: np.ndarray, v: np.ndarray) -> np.ndarray:
    arg = 2.0 * np.pi * (v @ b.T)
    return np.hstack([np.cos(arg), np.sin(arg)])


class FourierFeatureModel(Model):
    def __init__(self, config: FourierFeatureConfig, params: np.ndarray, frequencies: np.ndarray):
        self.config = config
        self.plan = config.net.plan()
        self.layout = self.plan.layout()
        if np.asarray(params).shape != (self.layout.size,):
            raise InvalidInputError("Parameter vector does not match Fourier config")
        if np.asarray(frequencies).shape != (config.n_features, config.d_raw):
            raise InvalidInputError("Frequency matrix does not match Fourier config")
        self.params = np.asarray(params, dtype=np.float64)
        self.frequencies = np.asarray(frequencies, dtype=np.float64)

    @property
    def d_condition(self) -> int:
        return self.config.d_condition

    @property
    def d_space(self) -> int:
        return self.config.d_space

    @property
    def d_out(self) -> int:
        return self.config.net.d_out

    def forward(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, Any]:
        c, x = self.check_inputs(cond, coords)
        v = np.hstack([c, x])
        arg = 2.0 * np.pi * (v @ self.frequencies.T)
        gamma = np.hstack([np.cos(arg), np.sin(arg)])
        layers = self.layout.unpack(self.params)
        out, tape = chain_forward(self.plan, layers, gamma)
        return out, (layers, tape, arg)

    def backward(self, tape: Any, grad_out: np.ndarray, need_params: bool = True) -> Grads:
        layers, chain, arg = tape
        grads, g_gamma = chain_backward(self.plan, layers, chain, grad_out, need_params)
        nf = self.config.n_features
        g_arg = -g_gamma[:, :nf] * np.sin(arg) + g_gamma[:, nf:] * np.cos(arg)
        g_v = (g_arg @ self.frequencies) * (2.0 * np.pi)
        k = self.d_condition
        flat = self.layout.pack(grads) if grads is not None else None
        return Grads(
            params=flat,
            cond=g_v[:, :k] if need_params else None,
            coords=g_v[:, k:],
        )

    def state_segments(self) -> dict[str, np.ndarray]:
        return {"frequencies": self.frequencies.reshape(-1).copy(), "params": self.params.copy()}

    def load_segments(self, segments: dict[str, np.ndarray]) -> None:
        super().load_segments(segments)
        self.frequencies = np.asarray(segments["frequencies"], dtype=np.float64).reshape(
            self.config.n_features, self.config.d_raw
        )


def fourier_forward(
    cfg: FourierFeatureConfig, params: np.ndarray, inputs: np.ndarray, frequencies: np.ndarray
) -> np.ndarray:
    """MLP output on ``gamma(inputs)``; ``inputs`` rows are ``[condition, x]``."""
    v = np.asarray(inputs, dtype=np.float64)
    model = FourierFeatureModel(cfg, params, frequencies)
    k = cfg.d_condition
    return model.forward(v[:, :k], v[:, k:])[0]


def siren_config(
    width: int, n_blocks: int = 1, d_condition: int = 1, d_space: int = 1, d_out: int = 1
) -> MLPModelConfig:
    """Monolithic space-time SIREN over ``[condition, x]``."""
    net = ShapeNetConfig(
        d_in=d_condition + d_space,
        width=width,
        n_blocks=n_blocks,
        d_out=d_out,
        activation=Activation(kind="sine"),
    )
    return MLPModelConfig(d_condition=d_condition, net=net)


def matched_siren_width(nif_width: int) -> int:
    """Width of the monolithic SIREN compared against a ShapeNet of ``nif_width``."""
    return int(np.ceil(SIREN_WIDTH_FACTOR * nif_width))


def mlp_config(
    widths: tuple[int, ...], d_condition: int, activation: Activation, block_style: Any = "resnet_half_sum"
) -> MLPModelConfig:
    """Plain MLP from a dash layout like ``3-100-100-100-1``."""
    if len(widths) < 3 or (len(widths) - 3) % 2 or len(set(widths[1:-1])) != 1:
        raise InvalidInputError(f"Cannot read an MLP from {widths}")
    net = ShapeNetConfig(
        d_in=widths[0],
        width=widths[1],
        n_blocks=(len(widths) - 3) // 2,
        d_out=widths[-1],
        activation=activation,
        block_style=block_style,
    )
    return MLPModelConfig(d_condition=d_condition, net=net)


MLP_PRESETS: dict[str, MLPModelConfig] = {
    f"ks-mlp-{i}": mlp_config((3, w, w, w, 1), 2, Activation(kind="swish"))
    for i, w in enumerate([58, 70, 100, 110, 130], start=1)
}

WAVE_DEEPONET = DeepONetConfig()
