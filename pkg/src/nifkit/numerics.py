"""Dense linear algebra and seeded sampling used by every other module.

Matrices are plain ``numpy`` float64 arrays of shape ``(rows, cols)``.
SVD, least squares and eigenpairs delegate to LAPACK through numpy/scipy.
Pivoted QR is done here so that pivot ties resolve by column index.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import InvalidInputError, NumericError

logger = logging.getLogger(__name__)

# Largest matrix handed to the dense eigensolver (reduced DMD operators only).
EIG_SIZE_CAP = 128
# Column norms within this relative distance of the largest count as tied.
PIVOT_TIE_RTOL = 1e-12


def as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2D float64 array or raise InvalidInputError."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def svd_thin(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``A = U diag(s) V^T`` with non-increasing ``s``.

    Returns ``(U, s, V)``; note that ``V`` (not ``V^T``) is returned.
    """
    m = as_matrix(a, "A")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"A must be non-empty, got shape {m.shape}")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the QR-iteration driver converges
        logger.warning("gesdd did not converge, retrying with gesvd")
        try:
            u, s, vt = la.svd(m, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as e:
            raise NumericError(f"SVD did not converge: {e}") from e
    return u, s, vt.T


def qr_column_pivot(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder QR with column pivoting, ``A[:, perm] = Q R``.

    At each step the pivot is the remaining column of largest norm; among
    columns tied within ``PIVOT_TIE_RTOL`` the one with the lowest original
    index wins. ``Q`` is ``m x k`` and ``R`` is ``k x n`` with
    ``k = min(m, n)``, and ``|R[i, i]|`` is non-increasing.
    """
    m = as_matrix(a, "A")
    rows, cols = m.shape
    k_max = min(rows, cols)
    r = m.copy()
    q = np.eye(rows)
    perm = np.arange(cols, dtype=np.int64)
    for k in range(k_max):
        norms = np.linalg.norm(r[k:, k:], axis=0)
        top = norms.max()
        tied = np.flatnonzero(norms >= top * (1.0 - PIVOT_TIE_RTOL))
        j = k + int(tied[np.argmin(perm[k + tied])])
        if j != k:
            r[:, [k, j]] = r[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
        x = r[k:, k]
        alpha = -np.copysign(np.linalg.norm(x), x[0])
        v = x.copy()
        v[0] -= alpha
        v_norm = np.linalg.norm(v)
        if v_norm == 0.0:
            continue
        v /= v_norm
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v)
        r[k + 1 :, k] = 0.0
    return q[:, :k_max], np.triu(r[:k_max, :]), perm


@dataclass(frozen=True)
class LeastSquaresResult:
    """Minimum-norm least-squares solution and its diagnostics."""

    x: np.ndarray
    rank: int
    singular_values: np.ndarray
    rank_deficient: bool


def least_squares(
    a: np.ndarray, b: np.ndarray, rcond: float = 1e-12
) -> LeastSquaresResult:
    """Solve ``min ||A x - b||`` via the SVD pseudoinverse.

    Singular values below ``rcond * s_max`` are truncated; the truncation is
    reported through ``rank`` / ``rank_deficient`` rather than raised.
    """
    am = as_matrix(a, "A")
    b_arr = np.asarray(b, dtype=np.float64)
    vector_rhs = b_arr.ndim == 1
    bm = as_matrix(b_arr, "b")
    if bm.shape[0] != am.shape[0]:
        raise InvalidInputError(
            f"Row mismatch: A has {am.shape[0]} rows, b has {bm.shape[0]}"
        )
    try:
        x, _, rank, s = np.linalg.lstsq(am, bm, rcond=rcond)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"least squares failed: {e}") from e
    deficient = int(rank) < min(am.shape)
    if deficient:
        logger.warning(
            f"least squares: rank {int(rank)} < {min(am.shape)}, truncated at "
            f"sigma < {rcond:g} * sigma_max"
        )
    return LeastSquaresResult(
        x=x[:, 0] if vector_rhs else x,
        rank=int(rank),
        singular_values=s,
        rank_deficient=deficient,
    )


def eig_small(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a small square matrix, sorted by non-increasing modulus.

    Ties in modulus keep LAPACK's order (stable sort).
    """
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"Matrix must be square, got shape {m.shape}")
    if m.shape[0] > EIG_SIZE_CAP:
        raise InvalidInputError(
            f"Matrix size {m.shape[0]} exceeds eigensolver cap {EIG_SIZE_CAP}"
        )
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("Matrix contains non-finite entries")
    try:
        w, v = np.linalg.eig(m)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigendecomposition did not converge: {e}") from e
    order = np.argsort(-np.abs(w), kind="stable")
    return w[order].astype(np.complex128), v[:, order].astype(np.complex128)


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution on ``[a, b]``."""

    a: float
    b: float


@dataclass(frozen=True)
class TruncNormal:
    """Zero-mean normal truncated to ``[-cutoff*std, +cutoff*std]``."""

    std: float
    cutoff: float = 2.0


class Rng:
    """Seeded sample stream backed by numpy's PCG64 bit generator.

    A given seed yields the same stream within one build. Instances are
    single-owner: do not share one across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.standard_normal(size)

    def spawn(self, offset: int) -> "Rng":
        """Independent stream for sub-task ``offset`` of this run."""
        return Rng(self.seed + offset)


def sample(
    rng: Rng,
    dist: Uniform | TruncNormal,
    size: int | tuple[int, ...] | None = None,
) -> float | np.ndarray:
    """Draw from ``dist``; scalar when ``size`` is None."""
    if isinstance(dist, Uniform):
        if not (np.isfinite(dist.a) and np.isfinite(dist.b)) or dist.a > dist.b:
            raise InvalidInputError(f"Invalid uniform range [{dist.a}, {dist.b}]")
        out = rng.generator.uniform(dist.a, dist.b, size)
        # numpy draws from [a, b); clip guards the b - a rounding edge
        out = np.clip(out, dist.a, dist.b)
    elif isinstance(dist, TruncNormal):
        if dist.std <= 0 or dist.cutoff <= 0:
            raise InvalidInputError(
                f"Invalid truncated normal std={dist.std}, cutoff={dist.cutoff}"
            )
        out = _trunc_normal(rng, dist, size)
    else:
        raise InvalidInputError(f"Unknown distribution: {dist!r}")
    if size is None:
        return float(out)
    return np.asarray(out, dtype=np.float64)


def _trunc_normal(
    rng: Rng, dist: TruncNormal, size: int | tuple[int, ...] | None
) -> np.ndarray:
    """Rejection resampling of out-of-bound draws."""
    bound = dist.cutoff * dist.std
    shape = () if size is None else size
    out = rng.generator.normal(0.0, dist.std, shape)
    out = np.atleast_1d(out)
    bad = np.abs(out) > bound
    while np.any(bad):
        out[bad] = rng.generator.normal(0.0, dist.std, int(bad.sum()))
        bad = np.abs(out) > bound
    return out.reshape(shape)
