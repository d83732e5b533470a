"""Flat ``section.key=value`` views of nested Pydantic models."""

import json
import types
from typing import Any, TypeVar, Union, get_args, get_origin

from pydantic import BaseModel, ValidationError

from .errors import ParseError, UsageError

M = TypeVar("M", bound=BaseModel)


def _nested_model(annotation: Any) -> type[BaseModel] | None:
    """The model class behind ``Model`` or ``Model | None``, if any."""
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    if get_origin(annotation) is Union or isinstance(annotation, types.UnionType):
        models = [
            a for a in get_args(annotation) if isinstance(a, type) and issubclass(a, BaseModel)
        ]
        if len(models) == 1:
            return models[0]
    return None


def field_keys(cls: type[BaseModel], prefix: str = "") -> list[str]:
    """Dotted keys of every leaf field, in declaration order.

    A union of several models is one leaf (set it as a JSON object).
    """
    keys: list[str] = []
    for name, info in cls.model_fields.items():
        key = f"{prefix}{name}"
        nested = _nested_model(info.annotation)
        if nested is not None:
            keys.extend(field_keys(nested, f"{key}."))
        else:
            keys.append(key)
    return keys


def flatten_model(model: BaseModel) -> dict[str, Any]:
    """``{"train.learning_rate": 0.001, ...}`` from a model instance."""
    return flatten_dict(model.model_dump(mode="json"))


def flatten_dict(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and v:
            flat.update(flatten_dict(v, f"{key}."))
        else:
            flat[key] = v
    return flat


def unflatten(flat: dict[str, Any]) -> dict[str, Any]:
    """Nested dict from dotted keys; a key may not be both leaf and section."""
    root: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if any(not p for p in parts):
            raise UsageError(f"Malformed config key: {key!r}")
        node = root
        for p in parts[:-1]:
            child = node.setdefault(p, {})
            if not isinstance(child, dict):
                raise UsageError(f"Config key {key!r} conflicts with a value at {p!r}")
            node = child
        if parts[-1] in node and isinstance(node[parts[-1]], dict):
            if not isinstance(value, dict):
                raise UsageError(f"Config key {key!r} conflicts with its sub-keys")
            node[parts[-1]].update(value)
        else:
            node[parts[-1]] = value
    return root


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_flat_text(text: str) -> dict[str, Any]:
    """Parse ``key=value`` lines; values are JSON literals or bare strings."""
    flat: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"Expected key=value, got {line!r}", line=lineno)
        key = key.strip()
        if not key:
            raise ParseError("Empty key", line=lineno)
        if key in flat:
            raise ParseError(f"Duplicate key {key!r}", line=lineno)
        flat[key] = _parse_value(value.strip())
    return flat


def dump_flat_text(model: BaseModel) -> str:
    lines = [f"{k}={json.dumps(v)}" for k, v in flatten_model(model).items()]
    return "\n".join(lines) + "\n"


def load_model(cls: type[M], data: dict[str, Any]) -> M:
    """Validate nested data, turning validation failures into usage errors."""
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise UsageError(f"Invalid configuration: {problems}") from e

