"""Tests for flat key=value configuration views."""

import pytest
from pydantic import BaseModel, ConfigDict

from nifkit.errors import ParseError, UsageError
from nifkit.flatconfig import (
    dump_flat_text,
    field_keys,
    flatten_dict,
    flatten_model,
    load_model,
    parse_flat_text,
    unflatten,
)
from nifkit.train import TrainConfig


class Inner(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate: float = 0.1
    name: str = "a"


class Outer(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    inner: Inner = Inner()
    maybe: Inner | None = None


class TestKeys:
    """Test dotted key listings."""

    def test_field_keys(self):
        """Test: nested and optional models expand into their leaves."""
        assert field_keys(Outer) == [
            "seed",
            "inner.rate",
            "inner.name",
            "maybe.rate",
            "maybe.name",
        ]

    def test_flatten_model(self):
        """Test: instances flatten to dotted keys with JSON values."""
        flat = flatten_model(Outer())
        assert flat == {"seed": 0, "inner.rate": 0.1, "inner.name": "a", "maybe": None}

    def test_flatten_dict_keeps_empty_sections(self):
        """Test: empty sub-dicts stay as leaves."""
        assert flatten_dict({"a": {}, "b": {"c": 1}}) == {"a": {}, "b.c": 1}


class TestUnflatten:
    """Test rebuilding nested dicts."""

    def test_nested(self):
        """Test: dotted keys nest back into sections."""
        assert unflatten({"inner.rate": 0.5, "seed": 3}) == {"inner": {"rate": 0.5}, "seed": 3}

    def test_leaf_and_section_conflict(self):
        """Test: a key cannot be a value and a section at once."""
        with pytest.raises(UsageError):
            unflatten({"inner": 1, "inner.rate": 0.5})
        with pytest.raises(UsageError):
            unflatten({"inner.rate": 0.5, "inner": 1})

    def test_malformed_key(self):
        """Test: empty key segments are rejected."""
        with pytest.raises(UsageError):
            unflatten({"inner..rate": 1})


class TestFlatText:
    """Test the key=value text format."""

    def test_parse(self):
        """Test: JSON literals parse, other values stay strings."""
        text = "# comment\n\nseed = 4\ninner.name = hello\ninner.rate=1e-3\nlist=[1, 2]\n"
        assert parse_flat_text(text) == {
            "seed": 4,
            "inner.name": "hello",
            "inner.rate": 1e-3,
            "list": [1, 2],
        }

    @pytest.mark.parametrize(
        "text,line",
        [("seed=1\nnoequals\n", 2), ("=3\n", 1), ("a=1\n\na=2\n", 3)],
    )
    def test_errors_report_line(self, text, line):
        """Test: malformed lines are parse errors with their line number."""
        with pytest.raises(ParseError) as exc_info:
            parse_flat_text(text)
        assert exc_info.value.line == line

    def test_dump_then_load(self):
        """Test: dumped text validates back into an equal model."""
        cfg = TrainConfig(learning_rate=5e-4, epochs=7)
        back = load_model(TrainConfig, unflatten(parse_flat_text(dump_flat_text(cfg))))
        assert back == cfg


class TestLoadModel:
    """Test validation into models."""

    def test_unknown_key_is_usage_error(self):
        """Test: unknown keys name their location."""
        with pytest.raises(UsageError, match="inner.speed"):
            load_model(Outer, {"inner": {"speed": 1}})

    def test_bad_value_is_usage_error(self):
        """Test: ill-typed values are usage errors."""
        with pytest.raises(UsageError):
            load_model(Outer, {"seed": "many"})
