"""Multilayer perceptron building blocks with hand-written reverse mode.

Everything the models in :mod:`nifkit.nif` and :mod:`nifkit.baselines`
need: activations, the layer plan of a coordinate MLP (optionally with
half-sum residual blocks), the flat parameter layout, initialization
rules, and batched forward/backward passes in which every row may carry
its own weights.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from .errors import InvalidInputError
from .numerics import Rng, TruncNormal, Uniform, sample

logger = logging.getLogger(__name__)

ActivationKind = Literal["swish", "tanh", "relu", "sine", "identity"]
BlockStyle = Literal["resnet_half_sum", "plain"]

TRUNC_NORMAL_STD = 0.1
TRUNC_NORMAL_CUTOFF = 2.0
# Rows per chunk in predict(); bounds the memory of per-row weight tensors.
PREDICT_CHUNK = 4096


class Activation(BaseModel):
    """Element-wise activation; ``sine`` is ``sin(omega0 * z)``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ActivationKind = "swish"
    omega0: float = Field(default=30.0, gt=0)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "swish":
            return z * expit(z)
        if self.kind == "tanh":
            return np.tanh(z)
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "sine":
            return np.sin(self.omega0 * z)
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """d sigma / dz; ReLU uses the subgradient 0 at the kink."""
        if self.kind == "swish":
            s = expit(z)
            return s + z * s * (1.0 - s)
        if self.kind == "tanh":
            return 1.0 - np.tanh(z) ** 2
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "sine":
            return self.omega0 * np.cos(self.omega0 * z)
        return np.ones_like(z)


LINEAR = Activation(kind="identity")


@dataclass(frozen=True)
class Dense:
    """One affine layer ``z = W h + b`` followed by ``act``."""

    n_in: int
    n_out: int
    act: Activation

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_out, self.n_in)


@dataclass(frozen=True)
class NetPlan:
    """Layers plus how they are wired.

    A stage of one index is a plain layer; a stage of two indices is a
    residual block ``eta' = (eta + sigma(W2 sigma(W1 eta + b1) + b2)) / 2``.
    """

    layers: tuple[Dense, ...]
    stages: tuple[tuple[int, ...], ...]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [layer.shape for layer in self.layers]

    @property
    def d_in(self) -> int:
        return self.layers[0].n_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].n_out

    def layout(self) -> "FlatParamLayout":
        return FlatParamLayout(self.shapes)

    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.shapes)


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class FlatParamLayout:
    """Bijection between a flat vector and per-layer ``(W, b)``.

    Order is ``vec(W_1), ..., vec(W_L), b_1, ..., b_L`` with column-major
    vectorization. Batched vectors of shape ``(B, m)`` unpack to weights of
    shape ``(B, out, in)``.
    """

    def __init__(self, shapes: list[tuple[int, int]]):
        self.shapes = [tuple(s) for s in shapes]
        segments = []
        offset = 0
        for i, (o, n) in enumerate(self.shapes):
            segments.append(Segment(f"W{i + 1}", offset, (o, n)))
            offset += o * n
        for i, (o, _) in enumerate(self.shapes):
            segments.append(Segment(f"b{i + 1}", offset, (o,)))
            offset += o
        self.segments = segments
        self.size = offset

    def weight_segment(self, i: int) -> Segment:
        return self.segments[i]

    def bias_segment(self, i: int) -> Segment:
        return self.segments[len(self.shapes) + i]

    def unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        f = np.asarray(flat)
        if f.shape[-1] != self.size:
            raise InvalidInputError(
                f"Flat vector has {f.shape[-1]} entries, layout needs {self.size}"
            )
        lead = f.shape[:-1]
        out = []
        for i, (o, n) in enumerate(self.shapes):
            ws, bs = self.weight_segment(i), self.bias_segment(i)
            w = f[..., ws.offset : ws.offset + o * n].reshape(*lead, n, o)
            w = np.swapaxes(w, -1, -2)
            b = f[..., bs.offset : bs.offset + o]
            out.append((w, b))
        return out

    def pack(self, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        if len(layers) != len(self.shapes):
            raise InvalidInputError("Layer count does not match layout")
        lead = np.asarray(layers[0][0]).shape[:-2]
        parts_w = []
        parts_b = []
        for (w, b), (o, n) in zip(layers, self.shapes, strict=True):
            w = np.asarray(w)
            if w.shape[-2:] != (o, n) or np.asarray(b).shape[-1] != o:
                raise InvalidInputError(f"Layer shape mismatch, expected {(o, n)}")
            parts_w.append(np.swapaxes(w, -1, -2).reshape(*lead, o * n))
            parts_b.append(np.asarray(b).reshape(*lead, o))
        return np.concatenate(parts_w + parts_b, axis=-1)


def init_layer(
    rng: Rng, dense: Dense, net_act: Activation, first: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Initial ``(W, b)`` for one layer of a net whose hidden activation is
    ``net_act``.

    Sine nets use the SIREN rules (first layer ``U(+-1/n_in)``, others
    ``U(+-sqrt(6/n_in)/omega0)``, biases ``U(+-1/sqrt(n_in))``); all other
    nets draw weights and biases from a truncated normal.
    """
    shape = dense.shape
    if net_act.kind == "sine":
        bound_w = 1.0 / dense.n_in if first else np.sqrt(6.0 / dense.n_in) / net_act.omega0
        bound_b = 1.0 / np.sqrt(dense.n_in)
        w = sample(rng, Uniform(-bound_w, bound_w), shape)
        b = sample(rng, Uniform(-bound_b, bound_b), dense.n_out)
    else:
        dist = TruncNormal(TRUNC_NORMAL_STD, TRUNC_NORMAL_CUTOFF)
        w = sample(rng, dist, shape)
        b = sample(rng, dist, dense.n_out)
    return np.asarray(w), np.asarray(b)


def init_plan(rng: Rng, plan: NetPlan, net_act: Activation) -> np.ndarray:
    layers = [
        init_layer(rng, dense, net_act, first=(i == 0))
        for i, dense in enumerate(plan.layers)
    ]
    return plan.layout().pack(layers)


def _affine(w: np.ndarray, b: np.ndarray, h: np.ndarray) -> np.ndarray:
    if w.ndim == 2:
        return h @ w.T + b
    return np.matmul(w, h[:, :, None])[:, :, 0] + b


def _affine_input_grad(w: np.ndarray, gz: np.ndarray) -> np.ndarray:
    if w.ndim == 2:
        return gz @ w
    return np.matmul(gz[:, None, :], w)[:, 0, :]


def _affine_param_grad(
    w: np.ndarray, h: np.ndarray, gz: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    if w.ndim == 2:
        return gz.T @ h, gz.sum(axis=0)
    return gz[:, :, None] * h[:, None, :], gz


@dataclass
class ChainTape:
    """Per-layer inputs and pre-activations cached by :func:`chain_forward`."""

    inputs: dict[int, np.ndarray] = field(default_factory=dict)
    pre: dict[int, np.ndarray] = field(default_factory=dict)


def chain_forward(
    plan: NetPlan, params: list[tuple[np.ndarray, np.ndarray]], x: np.ndarray
) -> tuple[np.ndarray, ChainTape]:
    """Evaluate ``plan`` on rows ``x``; weights may be shared or per-row."""
    if x.ndim != 2 or x.shape[1] != plan.d_in:
        raise InvalidInputError(
            f"Expected input of width {plan.d_in}, got shape {x.shape}"
        )
    tape = ChainTape()
    h = x
    for stage in plan.stages:
        if len(stage) == 1:
            (i,) = stage
            tape.inputs[i] = h
            z = _affine(*params[i], h)
            tape.pre[i] = z
            h = plan.layers[i].act(z)
        else:
            i, j = stage
            tape.inputs[i] = h
            z1 = _affine(*params[i], h)
            tape.pre[i] = z1
            s = plan.layers[i].act(z1)
            tape.inputs[j] = s
            z2 = _affine(*params[j], s)
            tape.pre[j] = z2
            h = 0.5 * (h + plan.layers[j].act(z2))
    return h, tape


def chain_backward(
    plan: NetPlan,
    params: list[tuple[np.ndarray, np.ndarray]],
    tape: ChainTape,
    g: np.ndarray,
    need_params: bool = True,
) -> tuple[list[tuple[np.ndarray, np.ndarray]] | None, np.ndarray]:
    """Reverse sweep: returns per-layer ``(dW, db)`` (or None) and ``dL/dx``.

    Gradients of shared weights are summed over rows; per-row weights get
    per-row gradients.
    """
    grads: list[Any] = [None] * len(plan.layers)

    def through(i: int, gh: np.ndarray) -> np.ndarray:
        gz = gh * plan.layers[i].act.derivative(tape.pre[i])
        if need_params:
            grads[i] = _affine_param_grad(params[i][0], tape.inputs[i], gz)
        return _affine_input_grad(params[i][0], gz)

    for stage in reversed(plan.stages):
        if len(stage) == 1:
            g = through(stage[0], g)
        else:
            i, j = stage
            gs = through(j, 0.5 * g)
            g = 0.5 * g + through(i, gs)
    return (grads if need_params else None), g


def mlp_plan(
    d_in: int,
    width: int,
    n_blocks: int,
    d_out: int,
    act: Activation,
    block_style: BlockStyle,
) -> NetPlan:
    """``d_in -> width``, ``n_blocks`` blocks of two ``width -> width``
    layers, then a linear ``width -> d_out`` layer."""
    layers = [Dense(d_in, width, act)]
    stages: list[tuple[int, ...]] = [(0,)]
    for _ in range(n_blocks):
        a = len(layers)
        layers += [Dense(width, width, act), Dense(width, width, act)]
        if block_style == "resnet_half_sum":
            stages.append((a, a + 1))
        else:
            stages += [(a,), (a + 1,)]
    layers.append(Dense(width, d_out, LINEAR))
    stages.append((len(layers) - 1,))
    return NetPlan(tuple(layers), tuple(stages))


class ShapeNetConfig(BaseModel):
    """Coordinate MLP ``d_in-width-...-width-d_out``.

    Also the structure of the plain MLP and monolithic SIREN baselines.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_in: int = Field(default=1, ge=1)
    width: int = Field(default=56, ge=1)
    n_blocks: int = Field(default=1, ge=0)
    d_out: int = Field(default=1, ge=1)
    activation: Activation = Activation()
    block_style: BlockStyle = "resnet_half_sum"

    def plan(self) -> NetPlan:
        return mlp_plan(
            self.d_in,
            self.width,
            self.n_blocks,
            self.d_out,
            self.activation,
            self.block_style,
        )

    def param_count(self) -> int:
        """Closed form of the flat size ``m``."""
        w = self.width
        return (
            (self.d_in + 1) * w
            + 2 * self.n_blocks * (w + 1) * w
            + (w + 1) * self.d_out
        )

    def init_params(self, rng: Rng) -> np.ndarray:
        return init_plan(rng, self.plan(), self.activation)

    def hidden_plan(self) -> NetPlan:
        """The plan without its final linear layer (the feature map)."""
        full = self.plan()
        return NetPlan(full.layers[:-1], full.stages[:-1])


def count_params(cfg: Any) -> int:
    """Trainable scalars of any network or model config."""
    return int(cfg.param_count())


def init_params(cfg: Any, rng: Rng) -> np.ndarray:
    """Initial trainable vector of any network or model config."""
    return np.asarray(cfg.init_params(rng), dtype=np.float64)


def mlp_forward(
    params: np.ndarray, cfg: ShapeNetConfig, inputs: np.ndarray
) -> tuple[np.ndarray, ChainTape]:
    """Forward pass of a coordinate MLP from its flat parameter vector."""
    plan = cfg.plan()
    layers = plan.layout().unpack(params)
    return chain_forward(plan, layers, np.asarray(inputs, dtype=np.float64))


@dataclass
class Grads:
    """Gradients of a scalar loss w.r.t. trainables and inputs.

    ``params`` and ``cond`` may be None when the backward pass was asked
    for spatial derivatives only.
    """

    params: np.ndarray | None
    cond: np.ndarray | None
    coords: np.ndarray


class Model(ABC):
    """A trainable map ``(condition, coordinates) -> outputs``.

    Conditions are the parameter/time/sensor columns of a dataset,
    coordinates its spatial columns.
    """

    config: Any
    params: np.ndarray

    @property
    @abstractmethod
    def d_condition(self) -> int: ...

    @property
    @abstractmethod
    def d_space(self) -> int: ...

    @property
    @abstractmethod
    def d_out(self) -> int: ...

    @abstractmethod
    def forward(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, Any]:
        """Outputs for each row and the tape for :meth:`backward`."""

    @abstractmethod
    def backward(self, tape: Any, grad_out: np.ndarray, need_params: bool = True) -> Grads:
        """Reverse sweep from ``dL/d outputs``."""

    @property
    def n_params(self) -> int:
        return int(self.params.size)

    def check_inputs(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(cond, dtype=np.float64)
        x = np.asarray(coords, dtype=np.float64)
        if c.ndim == 1:
            c = c.reshape(-1, self.d_condition)
        if x.ndim == 1:
            x = x.reshape(-1, self.d_space)
        if c.shape[1] != self.d_condition or x.shape[1] != self.d_space:
            raise InvalidInputError(
                f"Model expects {self.d_condition} condition and {self.d_space} "
                f"space columns, got {c.shape[1]} and {x.shape[1]}"
            )
        if c.shape[0] != x.shape[0]:
            raise InvalidInputError("Condition and coordinate row counts differ")
        return c, x

    def predict(self, cond: np.ndarray, coords: np.ndarray) -> np.ndarray:
        c, x = self.check_inputs(cond, coords)
        if c.shape[0] == 0:
            return np.zeros((0, self.d_out))
        chunks = [
            self.forward(c[s : s + PREDICT_CHUNK], x[s : s + PREDICT_CHUNK])[0]
            for s in range(0, c.shape[0], PREDICT_CHUNK)
        ]
        return np.vstack(chunks)

    def spatial_gradient(self, cond: np.ndarray, coords: np.ndarray) -> np.ndarray:
        """``du_l/dx_k`` for every row, shape ``(rows, d_out, d_space)``."""
        c, x = self.check_inputs(cond, coords)
        out, tape = self.forward(c, x)
        jac = np.empty((c.shape[0], self.d_out, self.d_space))
        for comp in range(self.d_out):
            g = np.zeros_like(out)
            g[:, comp] = 1.0
            jac[:, comp, :] = self.backward(tape, g, need_params=False).coords
        return jac

    def state_segments(self) -> dict[str, np.ndarray]:
        """Arrays persisted by checkpoints, in a fixed order."""
        return {"params": self.params}

    def load_segments(self, segments: dict[str, np.ndarray]) -> None:
        self.params = np.asarray(segments["params"], dtype=np.float64).copy()


class MLPModelConfig(BaseModel):
    """Plain coordinate MLP over ``[condition, x]`` (also the monolithic SIREN)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["mlp"] = "mlp"
    d_condition: int = Field(default=2, ge=0)
    net: ShapeNetConfig = ShapeNetConfig(d_in=3, width=100, n_blocks=1)

    def param_count(self) -> int:
        return self.net.param_count()

    def init_params(self, rng: Rng) -> np.ndarray:
        return self.net.init_params(rng)

    def for_dims(self, d_condition: int, d_space: int, d_out: int) -> "MLPModelConfig":
        net = self.net.model_copy(update={"d_in": d_condition + d_space, "d_out": d_out})
        return self.model_copy(update={"d_condition": d_condition, "net": net})

    def build(self, rng: Rng) -> "MLPModel":
        if self.net.d_in <= self.d_condition:
            raise InvalidInputError("MLP input must include at least one space column")
        return MLPModel(self, self.init_params(rng))


class MLPModel(Model):
    def __init__(self, config: MLPModelConfig, params: np.ndarray):
        self.config = config
        self.plan = config.net.plan()
        self.layout = self.plan.layout()
        if params.shape != (self.layout.size,):
            raise InvalidInputError("Parameter vector does not match config")
        self.params = np.asarray(params, dtype=np.float64)

    @property
    def d_condition(self) -> int:
        return self.config.d_condition

    @property
    def d_space(self) -> int:
        return self.config.net.d_in - self.config.d_condition

    @property
    def d_out(self) -> int:
        return self.config.net.d_out

    def forward(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, Any]:
        c, x = self.check_inputs(cond, coords)
        layers = self.layout.unpack(self.params)
        out, tape = chain_forward(self.plan, layers, np.hstack([c, x]))
        return out, (layers, tape)

    def backward(self, tape: Any, grad_out: np.ndarray, need_params: bool = True) -> Grads:
        layers, chain = tape
        grads, gx = chain_backward(self.plan, layers, chain, grad_out, need_params)
        flat = self.layout.pack(grads) if grads is not None else None
        k = self.d_condition
        return Grads(params=flat, cond=gx[:, :k], coords=gx[:, k:])
