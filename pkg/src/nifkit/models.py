"""Model config union, presets, and construction by kind."""

from typing import Annotated, Union

import numpy as np
from pydantic import Field, TypeAdapter, ValidationError

from .baselines import (
    MLP_PRESETS,
    WAVE_DEEPONET,
    DeepONetConfig,
    DeepONetModel,
    FourierFeatureConfig,
    FourierFeatureModel,
)
from .errors import InvalidInputError
from .nets import MLPModel, MLPModelConfig, Model
from .nif import NIF_PRESETS, NIFConfig, NIFModel
from .numerics import Rng

ModelConfig = Annotated[
    Union[NIFConfig, MLPModelConfig, DeepONetConfig, FourierFeatureConfig],
    Field(discriminator="kind"),
]

_ADAPTER: TypeAdapter = TypeAdapter(ModelConfig)

PRESETS: dict[str, ModelConfig] = {
    **NIF_PRESETS,
    **MLP_PRESETS,
    "wave-deeponet": WAVE_DEEPONET,
}


def parse_model_config(payload: dict) -> ModelConfig:
    try:
        return _ADAPTER.validate_python(payload)
    except ValidationError as e:
        raise InvalidInputError(f"Invalid model config: {e}") from e


def model_config_json(cfg: ModelConfig) -> dict:
    return cfg.model_dump(mode="json")


def preset(name: str) -> ModelConfig:
    try:
        return PRESETS[name]
    except KeyError as e:
        raise InvalidInputError(
            f"Unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}"
        ) from e


def build_model(cfg: ModelConfig, rng: Rng) -> Model:
    """Freshly initialized model for ``cfg``."""
    return cfg.build(rng)


def model_skeleton(cfg: ModelConfig) -> Model:
    """Zero-filled model with the right segment shapes, for loading state."""
    if isinstance(cfg, NIFConfig):
        theta = np.zeros(cfg.parameter_net_plan().param_count())
        return NIFModel(cfg, theta, np.zeros(cfg.static_param_count()))
    if isinstance(cfg, MLPModelConfig):
        return MLPModel(cfg, np.zeros(cfg.param_count()))
    if isinstance(cfg, DeepONetConfig):
        return DeepONetModel(cfg, np.zeros(cfg.param_count()))
    if isinstance(cfg, FourierFeatureConfig):
        return FourierFeatureModel(
            cfg, np.zeros(cfg.param_count()), np.zeros((cfg.n_features, cfg.d_raw))
        )
    raise InvalidInputError(f"Unknown model config {type(cfg).__name__}")
