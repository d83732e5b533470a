"""Linear reduction: POD, QDEIM sensors, DEIM reconstruction, DMD.

Also the glue that turns a last_layer NIF into normalized spatial modes
and builds sensor-conditioned datasets for NIF sparse reconstruction.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateModeError,
    InvalidInputError,
    NumericError,
    UnsupportedConfigurationError,
)
from .nif import NIFModel
from .numerics import as_matrix, eig_small, least_squares, qr_column_pivot, svd_thin
from .pointcloud import (
    NormalizationSpec,
    PointCloudDataset,
    PointCloudSchema,
    fit_normalization,
)

logger = logging.getLogger(__name__)

DEIM_MAX_CONDITION = 1e12
DMD_RANK_TOL = 1e-10
MODE_NORM_MIN = 1e-12


@dataclass(frozen=True)
class SVDResult:
    psi: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    all_sigma: np.ndarray

    @property
    def r(self) -> int:
        return int(self.sigma.size)


@dataclass(frozen=True)
class PODResult(SVDResult):
    """Rank-r POD basis, temporal coefficients ``psi^T X`` and the residual."""

    coefficients: np.ndarray
    residual: float


def pod(snapshots: np.ndarray, r: int) -> PODResult:
    """Rank-``r`` POD of a ``M_x x M_t`` snapshot matrix."""
    x = as_matrix(snapshots, "snapshots")
    if not 0 <= r <= min(x.shape):
        raise InvalidInputError(f"rank {r} outside [0, {min(x.shape)}]")
    u, s, v = svd_thin(x)
    psi = u[:, :r]
    coeff = psi.T @ x
    residual = float(np.sum((x - psi @ coeff) ** 2))
    return PODResult(
        psi=psi,
        sigma=s[:r],
        v=v[:, :r],
        all_sigma=s,
        coefficients=coeff,
        residual=residual,
    )


def energy_rank(sigma: np.ndarray, fraction: float = 0.995) -> int:
    """Smallest r whose leading ``sigma^2`` capture ``fraction`` of the total."""
    if not 0 < fraction <= 1:
        raise InvalidInputError(f"energy fraction {fraction} outside (0, 1]")
    e = np.asarray(sigma, dtype=np.float64) ** 2
    total = e.sum()
    if total == 0:
        return 0
    cum = np.cumsum(e) / total
    return int(min(np.searchsorted(cum, fraction * (1 - 1e-15)) + 1, e.size))


@dataclass(frozen=True)
class QDEIMSelection:
    """Sensor rows, best first; ``C`` picks them out of a snapshot."""

    indices: np.ndarray
    n_points: int

    @property
    def p(self) -> int:
        return int(self.indices.size)

    def measurement_matrix(self) -> np.ndarray:
        c = np.zeros((self.p, self.n_points))
        c[np.arange(self.p), self.indices] = 1.0
        return c

    def measure(self, snapshots: np.ndarray) -> np.ndarray:
        return np.asarray(snapshots)[self.indices]


def qdeim_select(psi: np.ndarray, p: int) -> QDEIMSelection:
    """First ``p`` pivots of the column-pivoted QR of ``psi^T``."""
    basis = as_matrix(psi, "psi")
    r = basis.shape[1]
    if p != r:
        raise UnsupportedConfigurationError(
            f"QDEIM needs as many sensors as modes (p={p}, r={r}); refit POD at rank {p}"
        )
    gram = basis.T @ basis
    if not np.allclose(gram, np.eye(r), atol=1e-8):
        raise InvalidInputError("psi must have orthonormal columns")
    _, _, perm = qr_column_pivot(basis.T)
    return QDEIMSelection(indices=perm[:p].copy(), n_points=basis.shape[0])


def deim_reconstruct(sel: QDEIMSelection, psi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``psi (C psi)^+ y`` for one sensor vector or a ``p x k`` block."""
    basis = as_matrix(psi, "psi")
    y_arr = np.asarray(y, dtype=np.float64)
    if y_arr.shape[0] != sel.p:
        raise InvalidInputError(f"Expected {sel.p} sensor values, got {y_arr.shape[0]}")
    sub = basis[sel.indices]
    cond = float(np.linalg.cond(sub))
    if not np.isfinite(cond) or cond > DEIM_MAX_CONDITION:
        raise ConditioningError("Sensor submatrix is singular", cond)
    coeff = least_squares(sub, y_arr).x
    return basis @ coeff


def snapshot_matrix(dataset: PointCloudDataset, component: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical ``(M_x x M_t)`` snapshots, the shared coordinates and conditions.

    Snapshots are the row groups of equal condition columns, in first-seen
    order; each must list the same coordinates in the same order.
    """
    schema = dataset.schema
    if not 0 <= component < schema.d_out:
        raise InvalidInputError(f"No output component {component}")
    phys = dataset.physical()
    groups = dataset.groups(schema.condition_slice)
    if not groups or groups[0].size == 0:
        raise InvalidInputError("Dataset has no snapshots")
    coords = phys[groups[0]][:, schema.space_slice]
    cols = []
    for rows in groups:
        if rows.size != coords.shape[0] or not np.array_equal(
            phys[rows][:, schema.space_slice], coords
        ):
            raise InvalidInputError("Snapshots do not share one point set")
        cols.append(phys[rows, schema.out_slice.start + component])
    conditions = np.vstack([phys[rows[0], schema.condition_slice] for rows in groups])
    return np.column_stack(cols), coords, conditions


def modal_coefficients(model: NIFModel, cond: np.ndarray) -> np.ndarray:
    """``a_k`` per condition row, ``k = i * n + l`` over feature ``i``, output ``l``."""
    w, _ = model.last_layer_coefficients(cond)
    return w.transpose(0, 2, 1).reshape(w.shape[0], -1)


@dataclass
class NormalizedModes:
    """Spatial modes of a last_layer NIF scaled to unit weighted norm."""

    model: NIFModel
    c: np.ndarray
    zeta: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.c.size)

    def basis(self, points: np.ndarray) -> np.ndarray:
        """``phi~_k(x)`` as an array ``(q, n_modes, d_out)``."""
        h = self.model.features(points)
        n = self.model.d_out
        q, r = h.shape
        phi = np.zeros((q, r, n, n))
        idx = np.arange(n)
        phi[:, :, idx, idx] = h[:, :, None]
        return phi.reshape(q, r * n, n) / self.c[None, :, None]

    def reconstruct(self, points: np.ndarray) -> np.ndarray:
        """``sum_k zeta_k(t) phi~_k(x)`` as ``(M_t, q, d_out)`` (bias excluded)."""
        return np.einsum("tk,qkl->tql", self.zeta, self.basis(points))


def nif_modes_normalize(
    model: NIFModel,
    quad_points: np.ndarray,
    quad_weights: np.ndarray,
    a: np.ndarray,
) -> NormalizedModes:
    """Scale modes to ``c_k = sqrt(sum_q w_q |phi_k(x_q)|^2)``, ``zeta = c a``."""
    if not model.config.last_layer:
        raise InvalidInputError("Mode normalization needs a last_layer NIF")
    w = np.asarray(quad_weights, dtype=np.float64).reshape(-1)
    h = model.features(quad_points)
    if w.shape[0] != h.shape[0]:
        raise InvalidInputError("One quadrature weight per point is required")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("Quadrature weights must be positive")
    c_feat = np.sqrt(w @ (h * h))
    c = np.repeat(c_feat, model.d_out)
    bad = np.flatnonzero(c < MODE_NORM_MIN)
    if bad.size:
        raise DegenerateModeError(f"Modes {bad.tolist()} have near-zero norm")
    coeffs = np.asarray(a, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[1] != c.size:
        raise InvalidInputError(f"Latent series must have {c.size} columns")
    return NormalizedModes(model=model, c=c, zeta=coeffs * c[None, :])


@dataclass(frozen=True)
class DMDResult:
    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    dt: float
    rank: int
    singular_values: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return np.angle(self.eigenvalues) / (2.0 * np.pi * self.dt)

    @property
    def growth_rates(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.eigenvalues)) / self.dt


def dmd(latent: np.ndarray, dt: float, rank: int | None = None) -> DMDResult:
    """Exact DMD of an ``r x M_t`` series sampled every ``dt``."""
    z = as_matrix(latent, "latent")
    if z.shape[1] < 3:
        raise InvalidInputError("DMD needs at least 3 snapshots")
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if rank is not None and not 1 <= rank <= z.shape[0]:
        raise InvalidInputError(f"rank {rank} outside [1, {z.shape[0]}]")
    x, xp = z[:, :-1], z[:, 1:]
    u, s, v = svd_thin(x)
    if s[0] == 0:
        raise NumericError("DMD input series is identically zero")
    k = int(np.sum(s > DMD_RANK_TOL * s[0]))
    if k < s.size:
        logger.warning(f"DMD: truncating rank {s.size} -> {k} (sigma < {DMD_RANK_TOL:g} sigma_1)")
    if rank is not None:
        k = min(k, rank)
    u_r, s_r, v_r = u[:, :k], s[:k], v[:, :k]
    xv = (xp @ v_r) / s_r[None, :]
    a_tilde = u_r.T @ xv
    lam, w = eig_small(a_tilde)
    modes = xv @ w
    amps, *_ = np.linalg.lstsq(modes, z[:, 0].astype(np.complex128), rcond=1e-12)
    return DMDResult(
        eigenvalues=lam,
        modes=modes,
        amplitudes=amps,
        dt=float(dt),
        rank=k,
        singular_values=s,
    )


def dmd_reconstruct(result: DMDResult, n_steps: int) -> np.ndarray:
    """Real part of ``sum_j b_j lambda_j^k modes_j`` for ``k < n_steps``."""
    powers = result.eigenvalues[:, None] ** np.arange(n_steps)[None, :]
    return np.real(result.modes @ (result.amplitudes[:, None] * powers))


def dmd_mode_field(result: DMDResult, modes: NormalizedModes, grid: np.ndarray) -> np.ndarray:
    """Complex spatial DMD modes ``(n_dmd, q, d_out)`` on ``grid``.

    The DMD must have been run on the normalized latent series ``zeta``.
    """
    if result.modes.shape[0] != modes.n_modes:
        raise InvalidInputError(
            f"DMD latent dimension {result.modes.shape[0]} != {modes.n_modes} modes"
        )
    return np.einsum("kj,qkl->jql", result.modes, modes.basis(grid))


def sensor_values(snapshots: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """``(M_t, p)`` readings of the sensors from ``M_x x M_t`` snapshots."""
    snaps = as_matrix(snapshots, "snapshots")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= snaps.shape[0]:
        raise InvalidInputError(f"Sensor indices out of range [0, {snaps.shape[0]})")
    return snaps[idx].T


def nif_sparse_sensing_build(
    sensor_indices: np.ndarray,
    dataset: PointCloudDataset,
    sensor_normalization: NormalizationSpec | None = None,
) -> tuple[PointCloudDataset, NormalizationSpec]:
    """Dataset whose condition columns are the sensor readings of each snapshot.

    Rows are ``(s_1, ..., s_p, x, u)``, snapshot by snapshot. Sensor columns
    are Standard-normalized with statistics fit here unless given; space
    and output columns keep the normalization of ``dataset``.
    """
    snaps, coords, _ = snapshot_matrix(dataset)
    readings = sensor_values(snaps, sensor_indices)
    m_x, m_t = snaps.shape
    p = readings.shape[1]
    schema = dataset.schema
    if sensor_normalization is None:
        sensor_normalization = fit_normalization("standard", readings, allow_constant=True)
    elif sensor_normalization.n_columns != p:
        raise InvalidInputError("Sensor normalization width does not match sensors")
    phys = dataset.physical()
    outputs = np.vstack(
        [phys[rows][:, schema.out_slice] for rows in dataset.groups(schema.condition_slice)]
    )
    raw = np.hstack(
        [
            np.repeat(readings, m_x, axis=0),
            np.tile(coords, (m_t, 1)),
            outputs,
        ]
    )
    base = dataset.normalization or NormalizationSpec.identity(schema.n_columns)
    norm = sensor_normalization.concat(base.select(schema.space_slice)).concat(
        base.select(schema.out_slice)
    )
    out_schema = PointCloudSchema(
        d_param=p, d_time=0, d_space=schema.d_space, d_out=schema.d_out
    )
    built = PointCloudDataset(
        schema=out_schema,
        table=norm.apply(raw),
        normalization=norm,
        meta={"sensors": [int(i) for i in np.asarray(sensor_indices).reshape(-1)]},
    )
    return built, sensor_normalization
