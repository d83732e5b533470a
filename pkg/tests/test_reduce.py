"""Tests for POD, QDEIM, DMD and NIF mode extraction."""

import numpy as np
import pytest
from scipy import integrate

from nifkit.datagen import make_linear_series
from nifkit.errors import (
    ConditioningError,
    DegenerateModeError,
    InvalidInputError,
    UnsupportedConfigurationError,
)
from nifkit.nets import ShapeNetConfig
from nifkit.nif import NIFConfig, ParameterNetConfig
from nifkit.numerics import Rng
from nifkit.pointcloud import PointCloudSchema, normalize_table
from nifkit.reduce import (
    DMDResult,
    QDEIMSelection,
    deim_reconstruct,
    dmd,
    dmd_mode_field,
    dmd_reconstruct,
    energy_rank,
    modal_coefficients,
    nif_modes_normalize,
    nif_sparse_sensing_build,
    pod,
    qdeim_select,
    sensor_values,
    snapshot_matrix,
)

N_TIMES = 4
XS = np.linspace(0.0, 1.0, 5)


@pytest.fixture
def snapshots_dataset():
    """u = sin(2x + t) on 5 points at 4 times, rows time-major."""
    rows = [[t, x, np.sin(2 * x + t)] for t in range(N_TIMES) for x in XS]
    return normalize_table(PointCloudSchema(), np.array(rows))


def last_layer_model(d_out: int = 1, seed: int = 0):
    cfg = NIFConfig(
        shape=ShapeNetConfig(width=3, d_out=d_out),
        param=ParameterNetConfig(hidden_widths=(4,), bottleneck_r=3, target="last_layer"),
    )
    return cfg.build(Rng(seed))


def orthonormal(rows: int, cols: int, seed: int) -> np.ndarray:
    q, _ = np.linalg.qr(Rng(seed).normal((rows, cols)))
    return q


class TestPOD:
    """Test the proper orthogonal decomposition."""

    def test_residual_is_tail_energy(self):
        """Test: the rank-r residual equals the discarded sigma^2."""
        x = Rng(0).normal((8, 6))
        result = pod(x, 2)
        assert result.psi.shape == (8, 2) and result.coefficients.shape == (2, 6)
        tail = float(np.sum(result.all_sigma[2:] ** 2))
        assert result.residual == pytest.approx(tail, rel=1e-10)

    def test_full_rank_is_exact(self):
        """Test: full rank reproduces the snapshots."""
        x = Rng(1).normal((5, 3))
        result = pod(x, 3)
        np.testing.assert_allclose(result.psi @ result.coefficients, x, atol=1e-12)

    def test_rank_range(self):
        """Test: ranks above min(M_x, M_t) are rejected."""
        with pytest.raises(InvalidInputError):
            pod(np.ones((3, 2)), 3)

    def test_energy_rank(self):
        """Test: smallest rank reaching the energy fraction."""
        assert energy_rank(np.array([1.0, 0.0, 0.0])) == 1
        assert energy_rank(np.array([1.0, 1.0]), 0.5) == 1
        assert energy_rank(np.array([1.0, 1.0]), 1.0) == 2
        assert energy_rank(np.zeros(3)) == 0
        with pytest.raises(InvalidInputError):
            energy_rank(np.ones(2), 0.0)


class TestQDEIM:
    """Test sensor placement and reconstruction."""

    def test_canonical_basis(self):
        """Test: unit-vector modes select their own rows."""
        psi = np.eye(4)[:, [2, 0]]
        sel = qdeim_select(psi, 2)
        assert sorted(sel.indices.tolist()) == [0, 2]
        assert sel.n_points == 4

    def test_deterministic(self):
        """Test: the same basis always yields the same sensors."""
        psi = orthonormal(20, 3, 2)
        np.testing.assert_array_equal(qdeim_select(psi, 3).indices, qdeim_select(psi, 3).indices)

    def test_exact_on_span(self):
        """Test: fields inside the POD span are reconstructed exactly."""
        psi = orthonormal(20, 3, 3)
        fields = psi @ Rng(4).normal((3, 7))
        sel = qdeim_select(psi, 3)
        np.testing.assert_allclose(
            deim_reconstruct(sel, psi, sel.measure(fields)), fields, atol=1e-8
        )
        c = sel.measurement_matrix()
        np.testing.assert_array_equal(c @ fields, sel.measure(fields))

    def test_sensor_count_must_match_rank(self):
        """Test: p != r is an unsupported configuration."""
        with pytest.raises(UnsupportedConfigurationError):
            qdeim_select(orthonormal(10, 3, 5), 2)

    def test_non_orthonormal(self):
        """Test: bases without orthonormal columns are rejected."""
        with pytest.raises(InvalidInputError):
            qdeim_select(2.0 * np.eye(3)[:, :2], 2)

    def test_singular_sensors(self):
        """Test: a singular sensor submatrix is a conditioning error."""
        psi = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        sel = QDEIMSelection(indices=np.array([0, 1]), n_points=3)
        with pytest.raises(ConditioningError):
            deim_reconstruct(sel, psi, np.array([1.0, 0.0]))

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_sensor_submatrix_conditioning(self, seed):
        """Test: ||(C psi)^-1|| stays under the pivoted-QR growth bound."""
        n, r = 40, 4
        psi = orthonormal(n, r, seed)
        sel = qdeim_select(psi, r)
        sub = sel.measurement_matrix() @ psi
        inv_norm = 1.0 / np.linalg.svd(sub, compute_uv=False)[-1]
        bound = np.sqrt(n - r + 1) * np.sqrt(4.0**r + 6 * r - 1) / 3.0
        assert inv_norm <= bound
        assert np.linalg.cond(sub) <= bound
        # first pivot is the row of psi with the largest norm
        assert sel.indices[0] == int(np.argmax(np.linalg.norm(psi, axis=1)))

    def test_wrong_sensor_count(self):
        """Test: the sensor vector length must equal p."""
        psi = orthonormal(6, 2, 6)
        sel = qdeim_select(psi, 2)
        with pytest.raises(InvalidInputError):
            deim_reconstruct(sel, psi, np.zeros(3))


class TestDMD:
    """Test exact dynamic mode decomposition."""

    def test_recovers_planted_spectrum(self):
        """Test: eigenvalues of a linear series are recovered."""
        eigs = [0.95 * np.exp(0.3j), 0.9 * np.exp(0.7j), 0.99]
        rng = Rng(7)
        modes = rng.normal((6, 3)) + 1j * rng.normal((6, 3))
        modes[:, 2] = modes[:, 2].real
        series = make_linear_series(eigs, modes, 100, 0.1, Rng(8))
        result = dmd(series.series, 0.1)
        assert result.rank == 5
        for lam in series.eigenvalues:
            assert np.min(np.abs(result.eigenvalues - lam)) < 1e-6
        np.testing.assert_allclose(
            dmd_reconstruct(result, 100), series.series, atol=1e-8 * np.max(np.abs(series.series))
        )

    def test_constant_series(self):
        """Test: a constant series has the single eigenvalue 1."""
        z = np.tile([[1.0], [2.0]], (1, 10))
        result = dmd(z, 0.5)
        assert result.rank == 1
        assert result.eigenvalues[0] == pytest.approx(1.0)
        assert result.growth_rates[0] == pytest.approx(0.0, abs=1e-12)
        assert result.frequencies[0] == pytest.approx(0.0, abs=1e-12)

    def test_oscillation_frequency(self):
        """Test: period T steps of dt gives frequency 1 / (T dt)."""
        modes = np.array([[1.0 + 0.0j], [0.0 + 1.0j]])
        series = make_linear_series([np.exp(2j * np.pi / 8)], modes, 40, 0.5, Rng(9))
        result = dmd(series.series, 0.5)
        np.testing.assert_allclose(np.sort(result.frequencies), [-0.25, 0.25], atol=1e-10)

    def test_rank_cap(self):
        """Test: an explicit rank truncates the fit."""
        series = make_linear_series([0.9, 0.5], np.eye(3)[:, :2], 20, 1.0, Rng(10))
        assert dmd(series.series, 1.0, rank=1).rank == 1

    def test_invalid(self):
        """Test: short, zero and badly-stepped series are rejected."""
        with pytest.raises(InvalidInputError):
            dmd(np.ones((2, 2)), 1.0)
        with pytest.raises(InvalidInputError):
            dmd(np.ones((2, 5)), 0.0)
        with pytest.raises(InvalidInputError):
            dmd(np.ones((2, 5)), 1.0, rank=3)


class TestNIFModes:
    """Test normalized spatial modes of a last_layer NIF."""

    @pytest.fixture
    def quadrature(self):
        pts = np.linspace(-1.0, 1.0, 50)[:, None]
        return pts, np.full(50, 2.0 / 50)

    def test_unit_weighted_norm(self, quadrature):
        """Test: every normalized mode has weighted norm 1."""
        pts, w = quadrature
        model = last_layer_model(d_out=2)
        a = modal_coefficients(model, Rng(1).normal((4, 2)))
        modes = nif_modes_normalize(model, pts, w, a)
        assert modes.n_modes == 6
        basis = modes.basis(pts)
        norms = np.einsum("q,qkl->k", w, basis**2)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
        # mode k lives on output k % n only
        for k in range(6):
            np.testing.assert_array_equal(basis[:, k, 1 - k % 2], 0.0)

    def test_reconstruction_is_output_minus_bias(self, quadrature):
        """Test: sum of zeta phi~ reproduces the output without b_L."""
        pts, w = quadrature
        model = last_layer_model(d_out=2, seed=2)
        cond = Rng(3).normal((5, 2))
        modes = nif_modes_normalize(model, pts, w, modal_coefficients(model, cond))
        rec = modes.reconstruct(pts)
        _, bias = model.last_layer_coefficients(cond)
        for t in range(5):
            expected = model.predict(np.tile(cond[t], (50, 1)), pts) - bias[t]
            np.testing.assert_allclose(rec[t], expected, atol=1e-10)

    def test_norms_converge_under_refinement(self):
        """Test: midpoint-rule norms approach the exact L2 norm on [-1, 1]."""
        model = last_layer_model(seed=4)
        model.params[model.pn_layout.size :] = Rng(5).normal(model.config.static_param_count())

        def midpoint_norms(q):
            pts = (-1.0 + (np.arange(q) + 0.5) * 2.0 / q)[:, None]
            return nif_modes_normalize(model, pts, np.full(q, 2.0 / q), np.zeros((1, 3))).c

        exact = np.sqrt(
            [
                integrate.quad(lambda s, i=i: model.features(np.array([[s]]))[0, i] ** 2, -1.0, 1.0)[0]
                for i in range(3)
            ]
        )
        coarse, fine = midpoint_norms(50), midpoint_norms(500)
        np.testing.assert_allclose(fine, exact, rtol=1e-4)
        assert np.all(np.abs(fine - exact) <= np.abs(coarse - exact) + 1e-12)

    def test_degenerate_mode(self, quadrature):
        """Test: all-zero features cannot be normalized."""
        pts, w = quadrature
        model = last_layer_model()
        model.params[model.pn_layout.size :] = 0.0
        with pytest.raises(DegenerateModeError):
            nif_modes_normalize(model, pts, w, np.zeros((2, 3)))

    def test_bad_weights(self, quadrature):
        """Test: non-positive quadrature weights are rejected."""
        pts, w = quadrature
        model = last_layer_model()
        with pytest.raises(InvalidInputError):
            nif_modes_normalize(model, pts, -w, np.zeros((2, 3)))

    def test_identity_dmd_modes_give_basis(self, quadrature):
        """Test: identity DMD modes map back onto the normalized basis."""
        pts, w = quadrature
        model = last_layer_model()
        modes = nif_modes_normalize(model, pts, w, np.zeros((2, 3)) + 1.0)
        result = DMDResult(
            eigenvalues=np.ones(3, dtype=complex),
            modes=np.eye(3, dtype=complex),
            amplitudes=np.ones(3, dtype=complex),
            dt=1.0,
            rank=3,
            singular_values=np.ones(3),
        )
        field = dmd_mode_field(result, modes, pts)
        assert field.shape == (3, 50, 1)
        np.testing.assert_allclose(field, modes.basis(pts).transpose(1, 0, 2))


class TestSnapshots:
    """Test snapshot matrices and sensor datasets."""

    def test_snapshot_matrix(self, snapshots_dataset):
        """Test: columns are snapshots in physical units."""
        snaps, coords, conditions = snapshot_matrix(snapshots_dataset)
        assert snaps.shape == (5, N_TIMES)
        np.testing.assert_allclose(snaps[:, 2], np.sin(2 * XS + 2), atol=1e-12)
        np.testing.assert_allclose(coords[:, 0], XS, atol=1e-12)
        np.testing.assert_allclose(conditions[:, 0], np.arange(N_TIMES), atol=1e-12)

    def test_mismatched_point_sets(self, snapshots_dataset):
        """Test: snapshots on different points are rejected."""
        ds = snapshots_dataset.take(np.arange(snapshots_dataset.n_rows - 1))
        with pytest.raises(InvalidInputError):
            snapshot_matrix(ds)

    def test_sensor_values(self):
        """Test: readings are (M_t, p) and indices are range-checked."""
        snaps = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(sensor_values(snaps, [3, 0]), [[9, 0], [10, 1], [11, 2]])
        with pytest.raises(InvalidInputError):
            sensor_values(snaps, [4])

    def test_sparse_sensing_dataset(self, snapshots_dataset):
        """Test: rows pair each snapshot's sensor readings with its field."""
        built, sensor_norm = nif_sparse_sensing_build(np.array([1, 3]), snapshots_dataset)
        assert built.schema.d_param == 2 and built.schema.d_time == 0
        assert built.n_rows == 5 * N_TIMES
        assert built.meta["sensors"] == [1, 3]
        phys = built.physical()
        np.testing.assert_allclose(phys[:5, :2], np.tile(np.sin(2 * XS[[1, 3]]), (5, 1)), atol=1e-12)
        np.testing.assert_allclose(phys[5:10, 3], np.sin(2 * XS + 1), atol=1e-12)
        again, _ = nif_sparse_sensing_build(np.array([1, 3]), snapshots_dataset, sensor_norm)
        np.testing.assert_array_equal(again.table, built.table)
