import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapcones import matcore
from mapcones.errors import DimensionMismatchError, EigenConvergenceError, HermiticityError
from mapcones.matcore import (
    ChoiMat,
    HermMat,
    SuperOp,
    apply_map,
    apply_via_choi,
    choi_to_map,
    depolarizing_map,
    dumps_matrix,
    eigh,
    hermitian_basis,
    hs_inner,
    identity_map,
    isotropic_choi,
    map_to_choi,
    matrix_from_dict,
    partial_trace,
    partial_transpose,
    psd_sqrt,
    proj_psd,
    ptranspose,
    rho_max,
    swap_operator,
    transposition_map,
)
from mapcones.randgen import ginibre, random_channel_tp


def _random_hermitian(d, rng):
    g = ginibre(d, d, rng)
    return (g + g.conj().T) / 2


def test_hermmat_rejects_non_hermitian():
    with pytest.raises(HermiticityError):
        HermMat(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_hermmat_rejects_bad_shape():
    with pytest.raises(DimensionMismatchError):
        HermMat(np.zeros((2, 3)))


def test_hermmat_tolerance_scales_with_entries():
    big = np.array([[1e6, 1e6], [1e6 + 1e-7, 1e6]])
    assert HermMat(big).dim == 2
    with pytest.raises(HermiticityError):
        HermMat(np.array([[1.0, 1.0], [1.0 + 1e-9, 1.0]]))


def test_hermmat_from_array_symmetrize_repairs_drift():
    arr = np.array([[1.0, 1.0 + 1e-6], [1.0, 2.0]])
    h = HermMat.from_array(arr, symmetrize=True)
    assert h.entries[0, 1] == pytest.approx(1.0 + 5e-7)
    assert not h.entries.flags.writeable


def test_hermmat_arithmetic():
    a = HermMat.identity(2)
    b = HermMat(np.diag([1.0, -1.0]))
    assert (a + b).trace() == pytest.approx(2.0)
    assert (a - b).trace() == pytest.approx(2.0)
    assert (2 * b).hs_norm() == pytest.approx(2 * np.sqrt(2))
    assert hs_inner(a, b) == pytest.approx(0.0)
    with pytest.raises(DimensionMismatchError):
        _ = a + HermMat.identity(3)


def test_identity_map_choi_is_rho_max():
    for n in (2, 3):
        assert np.allclose(map_to_choi(identity_map(n)).entries, rho_max(n).entries)


def test_depolarizing_map_choi_is_unit():
    for n in (2, 3):
        assert np.allclose(map_to_choi(depolarizing_map(n)).entries, np.eye(n * n) / n)


def test_transposition_map_choi_is_swap():
    for n in (2, 3):
        assert np.allclose(map_to_choi(transposition_map(n)).entries, swap_operator(n))


def test_partial_transpose_of_rho_max_is_swap():
    assert np.allclose(partial_transpose(rho_max(3)).entries, swap_operator(3))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 3))
def test_choi_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    d = ChoiMat.from_array(_random_hermitian(n * n, rng), n)
    phi = choi_to_map(d)
    assert phi.hermiticity_preserving
    assert np.allclose(map_to_choi(phi).entries, d.entries)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_apply_map_agrees_with_choi_route(seed):
    rng = np.random.default_rng(seed)
    n = 3
    d = ChoiMat.from_array(_random_hermitian(n * n, rng), n)
    rho = ginibre(n, n, rng)
    assert np.allclose(apply_map(choi_to_map(d), rho), apply_via_choi(d, rho))


def test_apply_map_transposes():
    rho = np.array([[0.3, 0.1 + 0.2j], [0.1 - 0.2j, 0.7]])
    out = apply_map(transposition_map(2), HermMat(rho))
    assert isinstance(out, HermMat)
    assert np.allclose(out.entries, rho.T)


def test_apply_map_on_matrix_units():
    e12 = np.zeros((2, 2))
    e12[0, 1] = 1.0
    assert np.allclose(apply_map(identity_map(2), e12), e12)
    assert np.allclose(apply_map(depolarizing_map(2), e12), 0.0)


def test_apply_map_rejects_non_hermiticity_preserving(rng):
    phi = SuperOp(2, ginibre(4, 4, rng))
    assert not phi.hermiticity_preserving
    with pytest.raises(HermiticityError):
        apply_map(phi, HermMat.identity(2))


def test_apply_map_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        apply_map(identity_map(2), np.eye(3))


def test_partial_traces(rng):
    d = rho_max(3)
    assert np.allclose(partial_trace(d, "B").entries, np.eye(3))
    assert np.allclose(partial_trace(d, "A").entries, np.eye(3))
    channel = random_channel_tp(3, rng)
    assert np.allclose(partial_trace(channel).entries, np.eye(3), atol=1e-10)
    with pytest.raises(ValueError, match="subsystem"):
        partial_trace(d, "C")


def test_ptranspose_is_involution(rng):
    arr = _random_hermitian(9, rng)
    assert np.allclose(ptranspose(ptranspose(arr, 3), 3), arr)


def test_hermitian_basis_is_orthonormal():
    for d in (2, 3, 4):
        basis = hermitian_basis(d)
        gram = np.einsum("aij,bji->ab", basis, basis)
        assert basis.shape == (d * d, d, d)
        assert np.allclose(gram, np.eye(d * d))
        assert np.allclose(basis[0], np.eye(d) / np.sqrt(d))
        assert np.allclose(np.trace(basis[1:], axis1=1, axis2=2), 0.0)


def test_eigh_is_descending_and_reconstructs(rng):
    h = HermMat.from_array(_random_hermitian(4, rng), symmetrize=True)
    spec = eigh(h)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    assert spec.max >= spec.min
    assert np.allclose(spec.reconstruct(), h.entries)


def test_eigh_wraps_lapack_failure(monkeypatch):
    def broken(_arr):
        msg = "did not converge"
        raise np.linalg.LinAlgError(msg)

    monkeypatch.setattr(np.linalg, "eigh", broken)
    with pytest.raises(EigenConvergenceError) as info:
        eigh(HermMat.identity(3))
    assert info.value.condition["dim"] == 3.0


def test_psd_helpers(rng):
    a = _random_hermitian(4, rng)
    p = proj_psd(a)
    assert np.linalg.eigvalsh(p)[0] >= -1e-12
    s = psd_sqrt(p)
    assert np.allclose(s @ s, p, atol=1e-10)
    w = a @ a + np.eye(4)
    inv = psd_sqrt(w, inverse=True)
    assert np.allclose(inv @ w @ inv, np.eye(4))


def test_isotropic_choi_trace():
    for p in (0.0, 0.4, 1.0):
        assert isotropic_choi(2, p).trace() == pytest.approx(2.0)


def test_matrix_json_round_trip(tmp_path, rng):
    arr = ginibre(3, 3, rng)
    path = tmp_path / "m.json"
    matcore.save_matrix(path, arr)
    assert np.array_equal(matcore.load_matrix(path), arr)
    data = json.loads(dumps_matrix(arr))
    assert data["dim"] == 3


def test_matrix_json_errors():
    with pytest.raises(ValueError, match="malformed"):
        matrix_from_dict({"re": [[1.0]]})
    with pytest.raises(DimensionMismatchError):
        matrix_from_dict({"dim": 2, "re": [[1.0]], "im": [[0.0]]})


def test_choi_from_array_infers_n():
    d = ChoiMat.from_array(np.eye(9))
    assert d.n == 3
    assert np.allclose(d.block(0, 0), np.eye(3))
    with pytest.raises(DimensionMismatchError):
        ChoiMat.from_array(np.eye(5))
