"""Point-cloud datasets: schema, normalization and CSV persistence.

A dataset is one table with one row per sample ``(mu, t, x, u[, dx])``.
Column order is fixed: parameters, time, space, outputs, weight.
"""

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DegenerateColumnError, InvalidInputError, ParseError
from .storage import atomic_write_text, locked

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# nif-pointcloud v1;"
ROLE_ORDER = ("param", "time", "space", "out", "weight")

NormKind = Literal["standard", "minmax_sym", "identity"]


class PointCloudSchema(BaseModel):
    """Column roles of a point-cloud table."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_param: int = Field(default=0, ge=0)
    d_time: int = Field(default=1, ge=0, le=1)
    d_space: int = Field(default=1, ge=1)
    d_out: int = Field(default=1, ge=1)
    has_weight: bool = False

    @property
    def n_columns(self) -> int:
        return (
            self.d_param
            + self.d_time
            + self.d_space
            + self.d_out
            + (1 if self.has_weight else 0)
        )

    @property
    def d_condition(self) -> int:
        """Width of the ParameterNet input (parameters then time)."""
        return self.d_param + self.d_time

    @property
    def param_slice(self) -> slice:
        return slice(0, self.d_param)

    @property
    def time_slice(self) -> slice:
        return slice(self.d_param, self.d_condition)

    @property
    def condition_slice(self) -> slice:
        return slice(0, self.d_condition)

    @property
    def space_slice(self) -> slice:
        start = self.d_condition
        return slice(start, start + self.d_space)

    @property
    def out_slice(self) -> slice:
        start = self.d_condition + self.d_space
        return slice(start, start + self.d_out)

    @property
    def weight_index(self) -> int | None:
        return self.n_columns - 1 if self.has_weight else None

    def roles_token(self) -> str:
        """``param:1,time:1,space:1,out:1,weight:0`` as used in CSV headers."""
        counts = (
            self.d_param,
            self.d_time,
            self.d_space,
            self.d_out,
            1 if self.has_weight else 0,
        )
        return ",".join(f"{r}:{c}" for r, c in zip(ROLE_ORDER, counts, strict=True))

    @classmethod
    def from_roles_token(cls, token: str, line: int | None = None) -> "PointCloudSchema":
        counts: dict[str, int] = {}
        for part in token.split(","):
            part = part.strip()
            if not part:
                continue
            name, sep, value = part.partition(":")
            name = name.strip()
            if name not in ROLE_ORDER:
                raise ParseError(f"Unknown role token: {name!r}", line=line)
            if not sep:
                raise ParseError(f"Role {name!r} has no count", line=line)
            try:
                counts[name] = int(value)
            except ValueError as e:
                raise ParseError(
                    f"Role {name!r} has non-integer count {value!r}", line=line
                ) from e
        try:
            return cls(
                d_param=counts.get("param", 0),
                d_time=counts.get("time", 0),
                d_space=counts.get("space", 1),
                d_out=counts.get("out", 1),
                has_weight=bool(counts.get("weight", 0)),
            )
        except ValueError as e:
            raise ParseError(f"Invalid roles {token!r}: {e}", line=line) from e


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-column affine normalization ``x_norm = (x - center) / scale``.

    ``standard`` uses mean and sample (ddof=1) standard deviation;
    ``minmax_sym`` maps ``[min, max]`` onto ``[-1, 1]``; ``identity`` leaves
    the column unchanged.
    """

    kinds: tuple[NormKind, ...]
    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.kinds)
        if self.center.shape != (n,) or self.scale.shape != (n,):
            raise InvalidInputError("Normalization statistics do not match kinds")
        if np.any(self.scale <= 0) or not np.all(np.isfinite(self.scale)):
            raise InvalidInputError("Normalization scales must be positive")

    @property
    def n_columns(self) -> int:
        return len(self.kinds)

    def apply(self, columns: np.ndarray) -> np.ndarray:
        c = np.asarray(columns, dtype=np.float64)
        self._check_width(c)
        return (c - self.center) / self.scale

    def invert(self, columns: np.ndarray) -> np.ndarray:
        c = np.asarray(columns, dtype=np.float64)
        self._check_width(c)
        return c * self.scale + self.center

    def select(self, cols: slice | list[int]) -> "NormalizationSpec":
        """Sub-spec for a subset of columns."""
        idx = np.arange(self.n_columns)[cols]
        return NormalizationSpec(
            kinds=tuple(self.kinds[i] for i in idx),
            center=self.center[idx].copy(),
            scale=self.scale[idx].copy(),
        )

    def concat(self, other: "NormalizationSpec") -> "NormalizationSpec":
        return NormalizationSpec(
            kinds=self.kinds + other.kinds,
            center=np.concatenate([self.center, other.center]),
            scale=np.concatenate([self.scale, other.scale]),
        )

    def _check_width(self, c: np.ndarray) -> None:
        if c.shape[-1] != self.n_columns:
            raise InvalidInputError(
                f"Expected {self.n_columns} columns, got {c.shape[-1]}"
            )

    def to_json(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "center": [float(v) for v in self.center],
            "scale": [float(v) for v in self.scale],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "NormalizationSpec":
        try:
            kinds = tuple(payload["kinds"])
            for k in kinds:
                if k not in ("standard", "minmax_sym", "identity"):
                    raise ParseError(f"Unknown normalization kind: {k!r}")
            return cls(
                kinds=kinds,  # type: ignore[arg-type]
                center=np.asarray(payload["center"], dtype=np.float64),
                scale=np.asarray(payload["scale"], dtype=np.float64),
            )
        except (KeyError, TypeError) as e:
            raise ParseError(f"Malformed normalization sidecar: {e}") from e

    @classmethod
    def identity(cls, n_columns: int) -> "NormalizationSpec":
        return cls(
            kinds=("identity",) * n_columns,
            center=np.zeros(n_columns),
            scale=np.ones(n_columns),
        )


def fit_normalization(
    kind: NormKind | list[NormKind],
    columns: np.ndarray,
    allow_constant: bool = False,
) -> NormalizationSpec:
    """Fit per-column statistics.

    A constant column raises :class:`DegenerateColumnError` unless
    ``allow_constant`` is set, in which case it falls back to ``identity``.
    """
    c = np.asarray(columns, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    n = c.shape[1]
    kinds = [kind] * n if isinstance(kind, str) else list(kind)
    if len(kinds) != n:
        raise InvalidInputError(f"Got {len(kinds)} kinds for {n} columns")
    if c.shape[0] == 0 and any(k != "identity" for k in kinds):
        raise InvalidInputError("Cannot fit normalization on zero rows")

    center = np.zeros(n)
    scale = np.ones(n)
    resolved: list[NormKind] = []
    for j, k in enumerate(kinds):
        col = c[:, j]
        if k == "identity":
            resolved.append("identity")
            continue
        if k not in ("standard", "minmax_sym"):
            raise InvalidInputError(f"Unknown normalization kind: {k!r}")
        # exact range test; a std of identical values can be round-off, not 0
        if np.ptp(col) == 0.0:
            if not allow_constant:
                raise DegenerateColumnError(j)
            logger.debug(f"column {j} is constant, using identity normalization")
            resolved.append("identity")
            continue
        if k == "standard":
            mu = float(col.mean())
            sd = float(col.std(ddof=1))
            stats = (mu, sd)
        else:
            lo, hi = float(col.min()), float(col.max())
            stats = ((lo + hi) / 2.0, (hi - lo) / 2.0)
        center[j], scale[j] = stats
        resolved.append(k)
    return NormalizationSpec(kinds=tuple(resolved), center=center, scale=scale)


@dataclass
class PointCloudDataset:
    """Table of samples plus the normalization that produced it.

    ``table`` holds normalized values when ``normalization`` is set; the
    physical values are ``normalization.invert(table)``.
    """

    schema: PointCloudSchema
    table: np.ndarray
    normalization: NormalizationSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim == 1 and t.size == 0:
            t = t.reshape(0, self.schema.n_columns)
        if t.ndim != 2 or t.shape[1] != self.schema.n_columns:
            raise InvalidInputError(
                f"Table shape {t.shape} does not match schema with "
                f"{self.schema.n_columns} columns"
            )
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("Table contains non-finite entries")
        w = self.schema.weight_index
        if w is not None and np.any(self.physical_column(t, w) <= 0):
            raise InvalidInputError("Quadrature weights must be strictly positive")
        if (
            self.normalization is not None
            and self.normalization.n_columns != self.schema.n_columns
        ):
            raise InvalidInputError("Normalization width does not match schema")
        self.table = t

    def physical_column(self, table: np.ndarray, j: int) -> np.ndarray:
        if self.normalization is None:
            return table[:, j]
        return table[:, j] * self.normalization.scale[j] + self.normalization.center[j]

    @property
    def n_rows(self) -> int:
        return int(self.table.shape[0])

    @property
    def conditions(self) -> np.ndarray:
        return self.table[:, self.schema.condition_slice]

    @property
    def params(self) -> np.ndarray:
        return self.table[:, self.schema.param_slice]

    @property
    def times(self) -> np.ndarray:
        return self.table[:, self.schema.time_slice]

    @property
    def coords(self) -> np.ndarray:
        return self.table[:, self.schema.space_slice]

    @property
    def outputs(self) -> np.ndarray:
        return self.table[:, self.schema.out_slice]

    @property
    def weights(self) -> np.ndarray | None:
        """Physical quadrature weights, or None when the column is absent."""
        w = self.schema.weight_index
        if w is None:
            return None
        return self.physical_column(self.table, w)

    def physical(self) -> np.ndarray:
        """The table in physical (de-normalized) units."""
        if self.normalization is None:
            return self.table.copy()
        return self.normalization.invert(self.table)

    def output_normalization(self) -> NormalizationSpec:
        if self.normalization is None:
            return NormalizationSpec.identity(self.schema.d_out)
        return self.normalization.select(self.schema.out_slice)

    def take(self, rows: np.ndarray | slice) -> "PointCloudDataset":
        return PointCloudDataset(
            schema=self.schema,
            table=self.table[rows],
            normalization=self.normalization,
            meta=dict(self.meta),
        )

    def groups(self, cols: slice) -> list[np.ndarray]:
        """Row-index groups sharing identical values in ``cols``, first-seen order."""
        keys = self.table[:, cols]
        if keys.shape[1] == 0:
            return [np.arange(self.n_rows)]
        _, first, inverse = np.unique(
            keys, axis=0, return_index=True, return_inverse=True
        )
        inverse = np.asarray(inverse).reshape(-1)
        order = np.argsort(first, kind="stable")
        return [np.flatnonzero(inverse == g) for g in order]


def normalize_table(
    schema: PointCloudSchema,
    raw: np.ndarray,
    kind: NormKind = "standard",
    normalization: NormalizationSpec | None = None,
) -> PointCloudDataset:
    """Build a dataset from a physical table, fitting or reusing statistics.

    Weight columns are never rescaled.
    """
    if normalization is None:
        kinds: list[NormKind] = [kind] * schema.n_columns
        if schema.has_weight:
            kinds[-1] = "identity"
        normalization = fit_normalization(kinds, raw, allow_constant=True)
    return PointCloudDataset(
        schema=schema, table=normalization.apply(raw), normalization=normalization
    )


def sidecar_path(path: Path) -> Path:
    """``<dir>/<name>.norm.json`` next to ``<dir>/<name>.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}.norm.json")


def write_pointcloud(path: Path, dataset: PointCloudDataset) -> None:
    """Write the CSV table and, when present, the normalization sidecar."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"{HEADER_PREFIX} roles={dataset.schema.roles_token()}\n")
    if dataset.n_rows:
        np.savetxt(buf, dataset.table, delimiter=",", fmt="%.17g")
    with locked(path.with_suffix(".dataset")):
        atomic_write_text(path, buf.getvalue())
        side = sidecar_path(path)
        if dataset.normalization is not None:
            atomic_write_text(
                side, json.dumps(dataset.normalization.to_json(), indent=2) + "\n"
            )
        else:
            side.unlink(missing_ok=True)
    logger.info(f"wrote {dataset.n_rows} rows to {path}")


_ROLES_RE = re.compile(r"roles=([^;\s]*)")


def read_pointcloud(path: Path) -> PointCloudDataset:
    """Read a dataset written by :func:`write_pointcloud`."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as f:
        header = f.readline()
        if not header.startswith(HEADER_PREFIX):
            raise ParseError("Missing '# nif-pointcloud v1' header", line=1)
        m = _ROLES_RE.search(header)
        if m is None:
            raise ParseError("Header has no roles= field", line=1)
        schema = PointCloudSchema.from_roles_token(m.group(1), line=1)

        rows: list[list[float]] = []
        for lineno, record in enumerate(csv.reader(f), start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != schema.n_columns:
                raise ParseError(
                    f"Expected {schema.n_columns} cells, got {len(record)}",
                    line=lineno,
                )
            try:
                rows.append([float(cell) for cell in record])
            except ValueError as e:
                raise ParseError(f"Non-numeric cell: {e}", line=lineno) from e

    table = np.asarray(rows, dtype=np.float64).reshape(len(rows), schema.n_columns)
    normalization = None
    side = sidecar_path(path)
    if side.exists():
        with open(side, encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(f"{side.name}: {e.msg}", line=e.lineno) from e
        normalization = NormalizationSpec.from_json(payload)
    try:
        return PointCloudDataset(
            schema=schema, table=table, normalization=normalization
        )
    except InvalidInputError as e:
        raise ParseError(f"{path.name}: {e}") from e
