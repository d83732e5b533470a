"""Dataset generators: parametric Kuramoto-Sivashinsky, modulated traveling
wave and synthetic linear latent series.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import DivergenceError, InvalidInputError, NumericError
from .numerics import Rng, Uniform, sample
from .parallel import map_bounded
from .pointcloud import (
    NormalizationSpec,
    PointCloudDataset,
    PointCloudSchema,
    normalize_table,
)

logger = logging.getLogger(__name__)

KS_BLOWUP = 1e6
KS_IMAG_TOL = 1e-10
# Points on the complex contour used to evaluate the ETD coefficients.
CONTOUR_POINTS = 16


class KSConfig(BaseModel):
    """Solver and sampling settings for ``u_t + u u_x + u_xx + mu u_xxxx = 0``
    on the periodic domain ``[0, 2*pi)``.

    Defaults save every 10th of 100000 steps (10000 snapshots after t=0) and
    keep every 100th saved snapshot, which yields the 256 x 100 grid per mu.
    """

    model_config = ConfigDict(extra="forbid")

    n_grid: int = 1024
    dt: float = Field(default=1e-3, gt=0)
    t_final: float = Field(default=100.0, gt=0)
    save_every: int = Field(default=10, ge=1)
    subsample_space: int = Field(default=4, ge=1)
    subsample_time: int = Field(default=100, ge=1)
    dealias: bool = True

    @field_validator("n_grid")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v < 4 or v & (v - 1):
            raise ValueError(f"n_grid must be a power of two >= 4, got {v}")
        return v

    @model_validator(mode="after")
    def _integral_steps(self) -> "KSConfig":
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("t_final must be an integer multiple of dt")
        if self.n_grid % self.subsample_space:
            raise ValueError("subsample_space must divide n_grid")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def n_saved(self) -> int:
        """Number of saved snapshots including t = 0."""
        return self.n_steps // self.save_every + 1

    @property
    def n_kept_times(self) -> int:
        """Snapshots per mu after temporal subsampling."""
        return max(1, (self.n_saved - 1) // self.subsample_time)

    @property
    def n_kept_space(self) -> int:
        return self.n_grid // self.subsample_space


def ks_grid(n_grid: int) -> np.ndarray:
    """Uniform periodic grid on ``[0, 2*pi)``."""
    return 2.0 * np.pi * np.arange(n_grid) / n_grid


@dataclass(frozen=True)
class _ETDCoefficients:
    e_full: np.ndarray
    e_half: np.ndarray
    q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    g: np.ndarray


def _etd_coefficients(mu: float, cfg: KSConfig) -> _ETDCoefficients:
    n = cfg.n_grid
    k = np.fft.fftfreq(n, d=1.0 / n)
    lin = k**2 - mu * k**4
    h = cfg.dt
    g = -0.5j * k
    g[n // 2] = 0.0  # odd derivative: drop the Nyquist mode
    if cfg.dealias:
        g = g * (np.abs(k) < n / 3.0)

    # phi-functions by contour averaging around each h*L
    roots = np.exp(1j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
    lr = h * lin[:, None] + roots[None, :]
    exp_lr = np.exp(lr)
    lr3 = lr**3
    return _ETDCoefficients(
        e_full=np.exp(h * lin),
        e_half=np.exp(h * lin / 2.0),
        q=h * np.real(np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1)),
        f1=h * np.real(np.mean((-4.0 - lr + exp_lr * (4.0 - 3.0 * lr + lr**2)) / lr3, axis=1)),
        f2=h * np.real(np.mean((2.0 + lr + exp_lr * (lr - 2.0)) / lr3, axis=1)),
        f3=h * np.real(np.mean((-4.0 - 3.0 * lr - lr**2 + exp_lr * (4.0 - lr)) / lr3, axis=1)),
        g=g,
    )


def _physical(v: np.ndarray, step: int) -> np.ndarray:
    """Inverse FFT with a realness check."""
    u = np.fft.ifft(v)
    residue = float(np.max(np.abs(u.imag)))
    if residue > KS_IMAG_TOL * max(1.0, float(np.max(np.abs(u.real)))):
        raise NumericError(f"imaginary residue {residue:.3e} at step {step}")
    return u.real


def solve_ks(mu: float, cfg: KSConfig, u0: np.ndarray | None = None) -> np.ndarray:
    """Integrate KS with Fourier pseudo-spectral ETD-RK4.

    Returns real snapshots of shape ``(n_grid, n_saved)``; column ``j`` is
    the solution at ``t = j * save_every * dt`` (column 0 is ``u0``).
    ``u0`` defaults to ``sin(x)``.
    """
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    x = ks_grid(cfg.n_grid)
    u = np.sin(x) if u0 is None else np.asarray(u0, dtype=np.float64)
    if u.shape != (cfg.n_grid,):
        raise InvalidInputError(f"u0 must have length {cfg.n_grid}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("u0 contains non-finite entries")

    c = _etd_coefficients(mu, cfg)

    def nonlinear(w: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
        phys = _physical(w, step)
        return c.g * np.fft.fft(phys**2), phys

    snaps = np.empty((cfg.n_grid, cfg.n_saved))
    snaps[:, 0] = u
    v = np.fft.fft(u)
    saved = 1
    for step in range(1, cfg.n_steps + 1):
        nv, phys = nonlinear(v, step - 1)
        if np.max(np.abs(phys)) > KS_BLOWUP:
            raise DivergenceError(
                f"KS solution exceeded {KS_BLOWUP:g} at step {step - 1} (mu={mu})",
                step=step - 1,
            )
        a = c.e_half * v + c.q * nv
        na, _ = nonlinear(a, step)
        b = c.e_half * v + c.q * na
        nb, _ = nonlinear(b, step)
        cc = c.e_half * a + c.q * (2.0 * nb - nv)
        nc, _ = nonlinear(cc, step)
        v = c.e_full * v + nv * c.f1 + 2.0 * (na + nb) * c.f2 + nc * c.f3
        if step % cfg.save_every == 0:
            snaps[:, saved] = _physical(v, step)
            if np.max(np.abs(snaps[:, saved])) > KS_BLOWUP:
                raise DivergenceError(
                    f"KS solution exceeded {KS_BLOWUP:g} at step {step} (mu={mu})",
                    step=step,
                )
            saved += 1
    return snaps


def subsample_ks(snaps: np.ndarray, cfg: KSConfig) -> np.ndarray:
    """Keep every ``subsample_space``-th point and every ``subsample_time``-th
    saved snapshot, trimmed to ``n_kept_times`` snapshots."""
    return snaps[:: cfg.subsample_space, :: cfg.subsample_time][:, : cfg.n_kept_times]


def solve_ks_many(
    mus: list[float], cfg: KSConfig, threads: int = 1
) -> list[np.ndarray]:
    """Independent ``solve_ks`` runs, returned in ``mus`` order."""

    def run(mu: float) -> np.ndarray:
        logger.info(f"solving KS for mu={mu:.6g} ({cfg.n_steps} steps)")
        return solve_ks(mu, cfg)

    return map_bounded(run, list(mus), threads)


def make_ks_dataset(
    mus: list[float],
    cfg: KSConfig,
    normalization: NormalizationSpec | None = None,
    threads: int = 1,
) -> PointCloudDataset:
    """Rows ``(mu, t, x, u)`` on the subsampled grid for every mu.

    Rows are ordered by mu, then time, then space. Every column is
    standard-normalized with statistics fitted here unless ``normalization``
    (e.g. the training statistics for a test split) is passed.
    """
    if len(mus) == 0:
        raise InvalidInputError("mus must be non-empty")
    for mu in mus:
        if not (math.isfinite(mu) and mu > 0):
            raise InvalidInputError(f"Invalid mu: {mu}")

    x = ks_grid(cfg.n_grid)[:: cfg.subsample_space]
    t = (
        np.arange(cfg.n_kept_times)
        * cfg.subsample_time
        * cfg.save_every
        * cfg.dt
    )
    tt, xx = np.meshgrid(t, x, indexing="ij")
    blocks = []
    for mu, snaps in zip(mus, solve_ks_many(mus, cfg, threads), strict=True):
        u = subsample_ks(snaps, cfg)  # (space, time)
        blocks.append(
            np.column_stack(
                [np.full(tt.size, mu), tt.ravel(), xx.ravel(), u.T.ravel()]
            )
        )
    raw = np.vstack(blocks)
    schema = PointCloudSchema(d_param=1, d_time=1, d_space=1, d_out=1)
    ds = normalize_table(schema, raw, "standard", normalization)
    ds.meta.update({"source": "ks", "mus": [float(m) for m in mus]})
    return ds


def uniform_mus(n: int, lo: float = 0.2, hi: float = 0.28) -> list[float]:
    """``n`` uniformly spaced parameter values on ``[lo, hi]``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if n == 1:
        return [lo]
    return [float(v) for v in np.linspace(lo, hi, n)]


class WaveConfig(BaseModel):
    """``u(x,t) = exp(-c0 (x-x0-ct)^2) sin(omega (x-x0-ct))``."""

    model_config = ConfigDict(extra="forbid")

    c0: float = Field(default=1000.0, gt=0)
    c: float = 0.012
    omega: float = 70.0
    x0: float = 0.1
    n_x: int = Field(default=300, ge=1)
    n_t: int = Field(default=20, ge=1)
    x_max: float = 1.0
    t_max: float = 70.0


def wave_field(x: np.ndarray, t: np.ndarray, cfg: WaveConfig) -> np.ndarray:
    s = x - cfg.x0 - cfg.c * t
    return np.exp(-cfg.c0 * s**2) * np.sin(cfg.omega * s)


def make_wave_dataset(cfg: WaveConfig | None = None) -> PointCloudDataset:
    """Rows ``(t, x, u)``, time-major, standard-normalized."""
    cfg = cfg or WaveConfig()
    x = np.linspace(0.0, cfg.x_max, cfg.n_x)
    t = np.linspace(0.0, cfg.t_max, cfg.n_t)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    raw = np.column_stack([tt.ravel(), xx.ravel(), wave_field(xx, tt, cfg).ravel()])
    schema = PointCloudSchema(d_param=0, d_time=1, d_space=1, d_out=1)
    ds = normalize_table(schema, raw, "standard")
    ds.meta.update({"source": "wave"})
    return ds


@dataclass(frozen=True)
class LinearSeries:
    """Real latent series ``series[:, k] = z_k`` with its planted spectrum."""

    series: np.ndarray
    times: np.ndarray
    eigenvalues: np.ndarray


def make_linear_series(
    eigs: list[complex],
    modes: np.ndarray,
    n_steps: int,
    dt: float,
    rng: Rng,
) -> LinearSeries:
    """``z_k = sum_j modes_j * lambda_j**k * alpha_j`` with random ``alpha``.

    Each non-real eigenvalue contributes itself and its conjugate, so the
    series is real; ``modes`` has one (complex) column per entry of ``eigs``.
    """
    lam = np.asarray(eigs, dtype=np.complex128)
    m = np.asarray(modes, dtype=np.complex128)
    if m.ndim != 2 or m.shape[1] != lam.size:
        raise InvalidInputError("modes must have one column per eigenvalue")
    if np.any(np.abs(lam) > 1.05):
        raise InvalidInputError("eigenvalue moduli must be <= 1.05")
    if n_steps < 1 or dt <= 0:
        raise InvalidInputError("n_steps must be >= 1 and dt > 0")

    is_real = np.abs(lam.imag) < 1e-14
    basis = []
    for j in range(lam.size):
        if is_real[j]:
            basis.append(m[:, j].real)
        else:
            basis.extend([m[:, j].real, m[:, j].imag])
    real_basis = np.column_stack(basis)
    if real_basis.shape[1] > real_basis.shape[0] or np.linalg.matrix_rank(
        real_basis
    ) < real_basis.shape[1]:
        raise InvalidInputError("modes are not of full column rank")

    mag = sample(rng, Uniform(0.5, 1.5), lam.size)
    phase = sample(rng, Uniform(0.0, 2.0 * np.pi), lam.size)
    alpha = np.asarray(mag) * np.exp(1j * np.asarray(phase))
    alpha[is_real] = np.asarray(mag)[is_real]

    k = np.arange(n_steps)
    powers = lam[None, :] ** k[:, None]  # (steps, modes)
    contrib = m[:, None, :] * (powers * alpha[None, :])[None, :, :]
    weight = np.where(is_real, 1.0, 2.0)  # conjugate partner doubles the real part
    series = np.real(np.sum(contrib * weight[None, None, :], axis=2))
    planted = np.concatenate([lam, np.conj(lam[~is_real])])
    return LinearSeries(series=series, times=k * dt, eigenvalues=planted)
