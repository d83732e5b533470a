"""Neural implicit flow: a ParameterNet that emits ShapeNet weights.

ParameterNet maps a condition (time, parameters, sensor readings) through
hidden layers to a linear bottleneck of width ``r`` (the latent code) and
then through a wide linear layer to ShapeNet parameters. In ``full`` mode
it emits every ShapeNet weight and bias; in ``last_layer`` mode it emits
only ``W_L`` (and optionally ``b_L``) and the hidden ShapeNet layers are
trained directly, so the output is a sum of ``r`` spatial features times
condition-dependent coefficients.
"""

import logging
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
    FlatParamLayout,
    Grads,
    Model,
    NetPlan,
    ShapeNetConfig,
    chain_backward,
    chain_forward,
    init_layer,
)
from .numerics import Rng
from .pointcloud import PointCloudDataset

logger = logging.getLogger(__name__)

# ParameterNet's final weights are shrunk so initial ShapeNet weights stay
# close to the ShapeNet's own initial distribution.
HYPER_WEIGHT_SCALE = 1e-2

Target = Literal["full", "last_layer"]


class ParameterNetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    d_in: int = Field(default=2, ge=1)
    hidden_widths: tuple[int, ...] = (30, 30)
    bottleneck_r: int = Field(default=2, ge=1)
    activation: Activation = Activation()
    target: Target = "full"
    # Emit b_L in last_layer mode; off gives the pure sum-of-modes form.
    last_layer_bias: bool = True

    def plan(self, n_outputs: int) -> NetPlan:
        """Hidden layers, linear bottleneck, linear output of ``n_outputs``."""
        layers = []
        n_in = self.d_in
        for w in self.hidden_widths:
            layers.append(Dense(n_in, w, self.activation))
            n_in = w
        layers.append(Dense(n_in, self.bottleneck_r, LINEAR))
        layers.append(Dense(self.bottleneck_r, n_outputs, LINEAR))
        return NetPlan(tuple(layers), tuple((i,) for i in range(len(layers))))

    @property
    def bottleneck_index(self) -> int:
        return len(self.hidden_widths)


class NIFConfig(BaseModel):
    """ShapeNet plus ParameterNet; the model config of a NIF."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["nif"] = "nif"
    shape: ShapeNetConfig = ShapeNetConfig()
    param: ParameterNetConfig = ParameterNetConfig()

    @model_validator(mode="after")
    def _last_layer_width(self) -> "NIFConfig":
        if self.param.target == "last_layer" and self.shape.width != self.param.bottleneck_r:
            raise ValueError(
                f"last_layer mode needs ShapeNet width ({self.shape.width}) equal "
                f"to the bottleneck r ({self.param.bottleneck_r})"
            )
        return self

    @property
    def last_layer(self) -> bool:
        return self.param.target == "last_layer"

    def shape_param_count(self) -> int:
        """Flat ShapeNet size ``m``."""
        return self.shape.param_count()

    def n_hyper_outputs(self) -> int:
        if not self.last_layer:
            return self.shape_param_count()
        n, r = self.shape.d_out, self.shape.width
        return n * r + (n if self.param.last_layer_bias else 0)

    def parameter_net_plan(self) -> NetPlan:
        return self.param.plan(self.n_hyper_outputs())

    def static_param_count(self) -> int:
        if not self.last_layer:
            return 0
        return self.shape.hidden_plan().param_count()

    def param_count(self) -> int:
        """Trainables: ParameterNet (plus the static ShapeNet layers)."""
        return self.parameter_net_plan().param_count() + self.static_param_count()

    def init_params(self, rng: Rng) -> np.ndarray:
        theta, static = init_nif(self, rng)
        return np.concatenate([theta, static])

    def for_dims(self, d_condition: int, d_space: int, d_out: int) -> "NIFConfig":
        shape = self.shape.model_copy(update={"d_in": d_space, "d_out": d_out})
        param = self.param.model_copy(update={"d_in": d_condition})
        return self.model_copy(update={"shape": shape, "param": param})

    def build(self, rng: Rng) -> "NIFModel":
        theta, static = init_nif(self, rng)
        return NIFModel(self, theta, static)


def init_nif(cfg: NIFConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Initial ``(theta, static_shape_params)``.

    ParameterNet layers follow the rule of its activation, the final
    weights are scaled by :data:`HYPER_WEIGHT_SCALE`, and the final biases
    are one ShapeNet initial sample so the untrained NIF starts from a
    properly initialized ShapeNet.
    """
    plan = cfg.parameter_net_plan()
    layers = [
        init_layer(rng, dense, cfg.param.activation, first=(i == 0))
        for i, dense in enumerate(plan.layers)
    ]
    shape_sample = cfg.shape.init_params(rng)
    w_out, _ = layers[-1]
    if cfg.last_layer:
        shape_plan = cfg.shape.plan()
        shape_layers = shape_plan.layout().unpack(shape_sample)
        w_last, b_last = shape_layers[-1]
        bias = [w_last.T.reshape(-1)]
        if cfg.param.last_layer_bias:
            bias.append(b_last)
        hidden = cfg.shape.hidden_plan()
        static = hidden.layout().pack(shape_layers[:-1])
        layers[-1] = (w_out * HYPER_WEIGHT_SCALE, np.concatenate(bias))
    else:
        static = np.zeros(0)
        layers[-1] = (w_out * HYPER_WEIGHT_SCALE, shape_sample)
    return plan.layout().pack(layers), static


@dataclass
class NIFTape:
    cond: np.ndarray
    pn_layers: list
    pn_tape: ChainTape
    hyper_out: np.ndarray
    shape_layers: list | None = None
    shape_tape: ChainTape | None = None
    static_layers: list | None = None
    features: np.ndarray | None = None
    w_last: np.ndarray | None = None


class NIFModel(Model):
    """A NIF with trainables ``theta`` (and ``static_shape_params``)."""

    def __init__(
        self,
        config: NIFConfig,
        theta: np.ndarray,
        static_shape_params: np.ndarray | None = None,
    ):
        self.config = config
        self.pn_plan = config.parameter_net_plan()
        self.pn_layout = self.pn_plan.layout()
        self.shape_plan = config.shape.plan()
        self.shape_layout = self.shape_plan.layout()
        self.hidden_plan = config.shape.hidden_plan()
        self.hidden_layout = self.hidden_plan.layout()
        theta = np.asarray(theta, dtype=np.float64)
        static = np.zeros(0) if static_shape_params is None else static_shape_params
        static = np.asarray(static, dtype=np.float64)
        if theta.shape != (self.pn_layout.size,):
            raise InvalidInputError(
                f"theta has {theta.size} entries, ParameterNet needs {self.pn_layout.size}"
            )
        if static.size != config.static_param_count():
            raise InvalidInputError(
                f"static ShapeNet params have {static.size} entries, "
                f"expected {config.static_param_count()}"
            )
        self.params = np.concatenate([theta, static])

    @property
    def theta(self) -> np.ndarray:
        return self.params[: self.pn_layout.size]

    @property
    def static_shape_params(self) -> np.ndarray:
        return self.params[self.pn_layout.size :]

    @property
    def d_condition(self) -> int:
        return self.config.param.d_in

    @property
    def d_space(self) -> int:
        return self.config.shape.d_in

    @property
    def d_out(self) -> int:
        return self.config.shape.d_out

    @property
    def latent_dim(self) -> int:
        return self.config.param.bottleneck_r

    def _split_last(self, hyper_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n, r = self.d_out, self.config.shape.width
        b = hyper_out.shape[0]
        w = hyper_out[:, : n * r].reshape(b, r, n).transpose(0, 2, 1)
        if self.config.param.last_layer_bias:
            bias = hyper_out[:, n * r :]
        else:
            bias = np.zeros((b, n))
        return w, bias

    def hyper(self, cond: np.ndarray) -> tuple[np.ndarray, np.ndarray, ChainTape, list]:
        """ParameterNet pass: ``(hyper outputs, latent codes, tape, layers)``."""
        pn_layers = self.pn_layout.unpack(self.theta)
        out, tape = chain_forward(self.pn_plan, pn_layers, cond)
        latent = tape.pre[self.config.param.bottleneck_index]
        return out, latent, tape, pn_layers

    def latent(self, cond: np.ndarray) -> np.ndarray:
        c = np.asarray(cond, dtype=np.float64).reshape(-1, self.d_condition)
        return self.hyper(c)[1]

    def features(self, coords: np.ndarray) -> np.ndarray:
        """Spatial features ``phi_i(x)`` of a last_layer model, shape ``(q, r)``."""
        if not self.config.last_layer:
            raise InvalidInputError("Spatial features exist only in last_layer mode")
        x = np.asarray(coords, dtype=np.float64).reshape(-1, self.d_space)
        layers = self.hidden_layout.unpack(self.static_shape_params)
        h, _ = chain_forward(self.hidden_plan, layers, x)
        return h

    def last_layer_coefficients(self, cond: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(W_L, b_L)`` per condition row: shapes ``(B, n, r)`` and ``(B, n)``."""
        if not self.config.last_layer:
            raise InvalidInputError("Coefficients exist only in last_layer mode")
        c = np.asarray(cond, dtype=np.float64).reshape(-1, self.d_condition)
        return self._split_last(self.hyper(c)[0])

    def shape_params(self, cond: np.ndarray) -> np.ndarray:
        """Full flat ShapeNet vectors ``(B, m)`` for each condition row."""
        c = np.asarray(cond, dtype=np.float64).reshape(-1, self.d_condition)
        out = self.hyper(c)[0]
        if not self.config.last_layer:
            return out
        w, bias = self._split_last(out)
        hidden = self.hidden_layout.unpack(self.static_shape_params)
        rows = []
        for k in range(c.shape[0]):
            rows.append(self.shape_layout.pack(hidden + [(w[k], bias[k])]))
        return np.vstack(rows) if rows else np.zeros((0, self.shape_layout.size))

    def forward(self, cond: np.ndarray, coords: np.ndarray) -> tuple[np.ndarray, NIFTape]:
        c, x = self.check_inputs(cond, coords)
        out, _, pn_tape, pn_layers = self.hyper(c)
        tape = NIFTape(cond=c, pn_layers=pn_layers, pn_tape=pn_tape, hyper_out=out)
        if not self.config.last_layer:
            shape_layers = self.shape_layout.unpack(out)
            u, shape_tape = chain_forward(self.shape_plan, shape_layers, x)
            tape.shape_layers = shape_layers
            tape.shape_tape = shape_tape
            return u, tape
        static_layers = self.hidden_layout.unpack(self.static_shape_params)
        h, shape_tape = chain_forward(self.hidden_plan, static_layers, x)
        w, bias = self._split_last(out)
        u = np.matmul(w, h[:, :, None])[:, :, 0] + bias
        tape.static_layers = static_layers
        tape.shape_tape = shape_tape
        tape.features = h
        tape.w_last = w
        return u, tape

    def backward(self, tape: NIFTape, grad_out: np.ndarray, need_params: bool = True) -> Grads:
        g_u = np.asarray(grad_out, dtype=np.float64)
        g_static: np.ndarray | None = None
        if not self.config.last_layer:
            grads, g_x = chain_backward(
                self.shape_plan, tape.shape_layers, tape.shape_tape, g_u, need_params
            )
            if not need_params:
                return Grads(params=None, cond=None, coords=g_x)
            g_hyper = self.shape_layout.pack(grads)
        else:
            g_h = np.matmul(g_u[:, None, :], tape.w_last)[:, 0, :]
            grads, g_x = chain_backward(
                self.hidden_plan, tape.static_layers, tape.shape_tape, g_h, need_params
            )
            if not need_params:
                return Grads(params=None, cond=None, coords=g_x)
            g_static = self.hidden_layout.pack(grads)
            b = g_u.shape[0]
            g_w = g_u[:, :, None] * tape.features[:, None, :]
            parts = [g_w.transpose(0, 2, 1).reshape(b, -1)]
            if self.config.param.last_layer_bias:
                parts.append(g_u)
            g_hyper = np.concatenate(parts, axis=1)
        pn_grads, g_cond = chain_backward(
            self.pn_plan, tape.pn_layers, tape.pn_tape, g_hyper, need_params=True
        )
        flat = [self.pn_layout.pack(pn_grads)]
        if g_static is not None:
            flat.append(g_static)
        return Grads(params=np.concatenate(flat), cond=g_cond, coords=g_x)

    def state_segments(self) -> dict[str, np.ndarray]:
        segments = {"theta": self.theta.copy()}
        if self.config.last_layer:
            segments["static"] = self.static_shape_params.copy()
        return segments

    def load_segments(self, segments: dict[str, np.ndarray]) -> None:
        theta = np.asarray(segments["theta"], dtype=np.float64)
        static = np.asarray(segments.get("static", np.zeros(0)), dtype=np.float64)
        if theta.size != self.pn_layout.size or static.size != self.config.static_param_count():
            raise InvalidInputError("Segment sizes do not match the NIF config")
        self.params = np.concatenate([theta, static])


def nif_forward(
    model: NIFModel, rows: PointCloudDataset
) -> tuple[np.ndarray, np.ndarray, np.ndarray, NIFTape]:
    """``(u_pred, latent, hyper outputs, tape)`` for the rows of a dataset.

    ``hyper outputs`` are the flat ShapeNet vectors in full mode and the
    ``vec(W_L), b_L`` block in last_layer mode.
    """
    schema = rows.schema
    if schema.d_condition != model.d_condition or schema.d_space != model.d_space:
        raise InvalidInputError(
            f"Dataset has {schema.d_condition} condition / {schema.d_space} space "
            f"columns, model expects {model.d_condition} / {model.d_space}"
        )
    if schema.d_out != model.d_out:
        raise InvalidInputError("Dataset output width does not match model")
    u, tape = model.forward(rows.conditions, rows.coords)
    latent = tape.pn_tape.pre[model.config.param.bottleneck_index]
    return u, latent, tape.hyper_out, tape


def nif_backward(model: NIFModel, tape: NIFTape, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of the loss w.r.t. all NIF trainables (theta then static)."""
    grads = model.backward(tape, grad_out, need_params=True)
    assert grads.params is not None
    return grads.params


def nif_from_dims(
    shape_widths: tuple[int, ...],
    param_widths: tuple[int, ...],
    activation: Activation | None = None,
    shape_activation: Activation | None = None,
    block_style: Any = "resnet_half_sum",
    target: Target = "full",
) -> NIFConfig:
    """Build a config from dash strings like ``1-56-56-56-1`` / ``2-30-30-2``.

    ``shape_widths`` is ``d_in, width, ..., width, d_out`` with an odd number
    of hidden entries (input layer plus two per block); ``param_widths`` is
    ``d_in, hidden..., r`` (the output layer is implied).
    """
    if len(shape_widths) < 3 or (len(shape_widths) - 3) % 2:
        raise InvalidInputError(f"Cannot read a ShapeNet from {shape_widths}")
    hidden = set(shape_widths[1:-1])
    if len(hidden) != 1:
        raise InvalidInputError("ShapeNet hidden widths must be equal")
    act = activation or Activation()
    shape = ShapeNetConfig(
        d_in=shape_widths[0],
        width=shape_widths[1],
        n_blocks=(len(shape_widths) - 3) // 2,
        d_out=shape_widths[-1],
        activation=shape_activation or act,
        block_style=block_style,
    )
    param = ParameterNetConfig(
        d_in=param_widths[0],
        hidden_widths=tuple(param_widths[1:-1]),
        bottleneck_r=param_widths[-1],
        activation=act,
        target=target,
    )
    return NIFConfig(shape=shape, param=param)


def parse_widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split("-"))
    except ValueError as e:
        raise InvalidInputError(f"Bad layer string {text!r}") from e


_SWISH = Activation(kind="swish")

NIF_PRESETS: dict[str, NIFConfig] = {
    f"ks-nif-{i}": nif_from_dims(parse_widths(s), parse_widths(p), _SWISH)
    for i, (s, p) in enumerate(
        [
            ("1-30-30-30-1", "2-30-30-2"),
            ("1-38-38-38-1", "2-29-29-2"),
            ("1-56-56-56-1", "2-30-30-2"),
            ("1-60-60-60-1", "2-47-47-2"),
            ("1-70-70-70-1", "2-60-60-2"),
        ],
        start=1,
    )
}
NIF_PRESETS["wave-nif"] = nif_from_dims(
    (1, 2, 2, 2, 1), (1, 2, 2, 1), Activation(kind="tanh"), block_style="plain"
)


def nif_preset(name: str) -> NIFConfig:
    try:
        return NIF_PRESETS[name]
    except KeyError as e:
        raise InvalidInputError(
            f"Unknown NIF preset {name!r}; known: {', '.join(sorted(NIF_PRESETS))}"
        ) from e
