"""Tests for point-cloud schema, normalization and CSV persistence."""

import json

import numpy as np
import pytest

from nifkit.errors import DegenerateColumnError, InvalidInputError, ParseError
from nifkit.numerics import Rng
from nifkit.pointcloud import (
    NormalizationSpec,
    PointCloudDataset,
    PointCloudSchema,
    fit_normalization,
    normalize_table,
    read_pointcloud,
    sidecar_path,
    write_pointcloud,
)


@pytest.fixture
def schema():
    """(mu, t, x, u) rows."""
    return PointCloudSchema(d_param=1, d_time=1, d_space=1, d_out=1)


@pytest.fixture
def raw_table():
    """Two parameter values, two times, three points."""
    rows = []
    for mu in (0.2, 0.25):
        for t in (0.0, 1.0):
            for x in (0.0, 0.5, 1.0):
                rows.append([mu, t, x, mu * np.sin(x + t)])
    return np.array(rows)


class TestSchema:
    """Test column roles."""

    def test_slices(self, schema):
        """Test: column order is param, time, space, out."""
        assert schema.n_columns == 4
        assert schema.d_condition == 2
        assert schema.space_slice == slice(2, 3)
        assert schema.out_slice == slice(3, 4)
        assert schema.weight_index is None

    def test_roles_token(self):
        """Test: roles token lists every role and parses back."""
        s = PointCloudSchema(d_param=2, d_time=1, d_space=3, d_out=2, has_weight=True)
        token = s.roles_token()
        assert token == "param:2,time:1,space:3,out:2,weight:1"
        assert PointCloudSchema.from_roles_token(token) == s
        assert s.weight_index == 8

    def test_unknown_role_named(self):
        """Test: unknown role token is reported by name."""
        with pytest.raises(ParseError, match="pressure"):
            PointCloudSchema.from_roles_token("space:1,pressure:1", line=1)


class TestNormalization:
    """Test per-column normalization."""

    def test_minmax_sym(self):
        """Test: [0, 2pi] maps onto [-1, 1]."""
        col = np.array([[0.0], [np.pi], [2 * np.pi]])
        spec = fit_normalization("minmax_sym", col)
        np.testing.assert_allclose(spec.apply(col)[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)

    def test_standard(self):
        """Test: {1, 2, 3} standardizes to mean 0 and sample std 1."""
        col = np.array([1.0, 2.0, 3.0])
        spec = fit_normalization("standard", col)
        out = spec.apply(col[:, None])[:, 0]
        np.testing.assert_allclose(out, [-1.0, 0.0, 1.0])
        assert np.std(out, ddof=1) == pytest.approx(1.0)

    def test_invert_apply(self):
        """Test: invert after apply is the identity."""
        cols = Rng(2).normal((50, 3)) * [1.0, 10.0, 1e-3] + [0.0, 5.0, -2.0]
        spec = fit_normalization(["standard", "minmax_sym", "identity"], cols)
        np.testing.assert_allclose(spec.invert(spec.apply(cols)), cols, rtol=1e-12, atol=1e-12)

    def test_constant_column(self):
        """Test: a constant column is degenerate unless explicitly allowed."""
        cols = np.column_stack([np.ones(5), np.arange(5.0)])
        with pytest.raises(DegenerateColumnError) as exc_info:
            fit_normalization("standard", cols)
        assert exc_info.value.column == 0
        spec = fit_normalization("standard", cols, allow_constant=True)
        assert spec.kinds == ("identity", "standard")

    @pytest.mark.parametrize("kind", ["standard", "minmax_sym"])
    @pytest.mark.parametrize("rows", [1, 3, 80, 1000])
    def test_repeated_inexact_value_is_constant(self, kind, rows):
        """Test: a column of one repeated 0.2 falls back to identity, whatever its float std."""
        col = np.full((rows, 1), 0.2)
        spec = fit_normalization(kind, col, allow_constant=True)
        assert spec.kinds == ("identity",)
        np.testing.assert_array_equal(spec.apply(np.array([[0.3]])), [[0.3]])
        with pytest.raises(DegenerateColumnError):
            fit_normalization(kind, col)

    def test_select_concat_json(self):
        """Test: sub-specs, concatenation and the sidecar payload agree."""
        spec = fit_normalization("standard", Rng(0).normal((10, 3)))
        joined = spec.select(slice(0, 1)).concat(spec.select([1, 2]))
        np.testing.assert_array_equal(joined.center, spec.center)
        back = NormalizationSpec.from_json(json.loads(json.dumps(spec.to_json())))
        np.testing.assert_array_equal(back.scale, spec.scale)

    def test_bad_sidecar_kind(self):
        """Test: unknown normalization kinds are parse errors."""
        with pytest.raises(ParseError):
            NormalizationSpec.from_json({"kinds": ["log"], "center": [0.0], "scale": [1.0]})


class TestDataset:
    """Test dataset accessors."""

    def test_physical_views(self, schema, raw_table):
        """Test: normalized table inverts to the raw table."""
        ds = normalize_table(schema, raw_table)
        assert ds.n_rows == 12
        np.testing.assert_allclose(ds.physical(), raw_table, atol=1e-12)
        np.testing.assert_allclose(ds.conditions.mean(axis=0), 0.0, atol=1e-12)
        assert ds.weights is None

    def test_groups_first_seen_order(self, schema, raw_table):
        """Test: groups keep first-seen order, not sorted order."""
        ds = PointCloudDataset(schema=schema, table=raw_table[::-1].copy())
        groups = ds.groups(schema.param_slice)
        assert [g.size for g in groups] == [6, 6]
        assert ds.table[groups[0][0], 0] == 0.25
        snaps = ds.groups(schema.condition_slice)
        assert len(snaps) == 4

    def test_table_validation(self, schema):
        """Test: wrong widths, NaN and non-positive weights are rejected."""
        with pytest.raises(InvalidInputError):
            PointCloudDataset(schema=schema, table=np.zeros((2, 3)))
        with pytest.raises(InvalidInputError):
            PointCloudDataset(schema=schema, table=np.full((1, 4), np.nan))
        weighted = PointCloudSchema(d_time=0, has_weight=True)
        with pytest.raises(InvalidInputError):
            PointCloudDataset(schema=weighted, table=np.array([[0.0, 1.0, 0.0]]))

    def test_weights_not_rescaled(self):
        """Test: the weight column keeps its physical values."""
        schema = PointCloudSchema(d_time=0, has_weight=True)
        raw = np.array([[0.0, 1.0, 0.5], [1.0, 2.0, 0.25], [2.0, 0.0, 0.25]])
        ds = normalize_table(schema, raw)
        np.testing.assert_allclose(ds.weights, [0.5, 0.25, 0.25])


class TestCSV:
    """Test the CSV format and its sidecar."""

    def test_write_read(self, tmp_path, schema, raw_table):
        """Test: written datasets read back with their normalization."""
        ds = normalize_table(schema, raw_table)
        path = tmp_path / "data.csv"
        write_pointcloud(path, ds)
        assert sidecar_path(path).name == "data.norm.json"
        assert path.read_text().startswith("# nif-pointcloud v1; roles=param:1,time:1")
        back = read_pointcloud(path)
        assert back.schema == schema
        np.testing.assert_array_equal(back.table, ds.table)
        np.testing.assert_array_equal(back.normalization.center, ds.normalization.center)

    def test_missing_header(self, tmp_path):
        """Test: files without the header fail on line 1."""
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n")
        with pytest.raises(ParseError) as exc_info:
            read_pointcloud(path)
        assert exc_info.value.line == 1

    def test_ragged_row_line_number(self, tmp_path):
        """Test: a short row reports its line."""
        path = tmp_path / "bad.csv"
        path.write_text("# nif-pointcloud v1; roles=time:1,space:1,out:1\n0,0,1\n0,1\n")
        with pytest.raises(ParseError) as exc_info:
            read_pointcloud(path)
        assert exc_info.value.line == 3

    def test_non_numeric_cell(self, tmp_path):
        """Test: non-numeric cells are parse errors with line numbers."""
        path = tmp_path / "bad.csv"
        path.write_text("# nif-pointcloud v1; roles=time:1,space:1,out:1\n0,abc,1\n")
        with pytest.raises(ParseError, match="line 2"):
            read_pointcloud(path)

    def test_unknown_role(self, tmp_path):
        """Test: unknown role tokens in the header are named."""
        path = tmp_path / "bad.csv"
        path.write_text("# nif-pointcloud v1; roles=space:1,velocity:1\n")
        with pytest.raises(ParseError, match="velocity"):
            read_pointcloud(path)

    def test_without_sidecar(self, tmp_path):
        """Test: a dataset without normalization reads back as physical."""
        schema = PointCloudSchema(d_time=1, d_space=1, d_out=1)
        ds = PointCloudDataset(schema=schema, table=np.array([[0.0, 1.0, 2.0]]))
        path = tmp_path / "plain.csv"
        write_pointcloud(path, ds)
        assert not sidecar_path(path).exists()
        assert read_pointcloud(path).normalization is None
