import math

import numpy as np
import pytest

from mapcones.bodies import (
    ClippedBody,
    CrossPolytope,
    Cube,
    EuclideanBall,
    MatrixBody,
    OperatorInterval,
    ScaledBody,
    StateBody,
    ball_chord,
    body_for,
    lmi_chord,
    log_ball_volume,
    log_volume_states,
    tangent_basis,
)
from mapcones.cones import BodySpec, ConeId, Slice
from mapcones.errors import UnsupportedSliceError
from mapcones.matcore import ptrace_b
from mapcones.randgen import boundary_distance, random_unit_vector, sample_walk


def test_log_volumes():
    assert log_ball_volume(3) == pytest.approx(math.log(4 * math.pi / 3))
    assert log_ball_volume(2) == pytest.approx(math.log(math.pi))
    assert log_volume_states(2) == pytest.approx(math.log(math.pi * math.sqrt(2) / 3), rel=1e-12)


def test_lmi_chord():
    lo, hi = lmi_chord([(np.eye(2), np.diag([1.0, -1.0]))])
    assert (lo, hi) == pytest.approx((-1.0, 1.0))
    lo, hi = lmi_chord([(np.eye(2), np.diag([2.0, 0.5])), (np.eye(2), -np.eye(2))])
    assert (lo, hi) == pytest.approx((-0.5, 1.0))
    assert lmi_chord([(np.eye(2), np.diag([1.0, 2.0]))]) is None


def test_ball_chord():
    lo, hi = ball_chord(np.array([0.5, 0.0]), np.array([1.0, 0.0]), 1.0)
    assert (lo, hi) == pytest.approx((-1.5, 0.5))


def test_simple_bodies_and_polars():
    cube = Cube(3, 2.0)
    assert cube.log_volume_exact() == pytest.approx(3 * math.log(4.0))
    assert cube.inradius == 2.0
    assert cube.outradius == pytest.approx(2 * math.sqrt(3))
    cross = cube.polar()
    assert isinstance(cross, CrossPolytope)
    assert cross.radius == pytest.approx(0.5)
    assert CrossPolytope(3).log_volume_exact() == pytest.approx(math.log(8 / 6))
    assert isinstance(CrossPolytope(3).polar(), Cube)
    ball = EuclideanBall(4, 2.0)
    assert ball.polar().outradius == pytest.approx(0.5)
    u = np.array([0.6, 0.8, 0.0])
    assert cube.support(u).estimate == pytest.approx(2.0 * 1.4)
    assert CrossPolytope(3).support(u).estimate == pytest.approx(0.8)


def test_cube_chord_matches_membership(rng):
    cube = Cube(4)
    x = rng.uniform(-0.5, 0.5, 4)
    v = random_unit_vector(4, rng)
    lo, hi = cube.chord(x, v)
    assert cube.contains(x + 0.999 * hi * v)
    assert not cube.contains(x + 1.001 * hi * v)
    assert not cube.contains(x + 1.001 * lo * v)


def test_scaled_body():
    scaled = ScaledBody(Cube(2), 3.0)
    assert scaled.log_volume_exact() == pytest.approx(2 * math.log(6.0))
    assert scaled.contains(np.array([2.9, -2.9]))
    assert not scaled.contains(np.array([3.1, 0.0]))
    assert scaled.chord(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx((-3.0, 3.0))
    assert scaled.support(np.array([1.0, 0.0])).estimate == pytest.approx(3.0)
    polar = scaled.polar()
    assert polar.outradius == pytest.approx(1 / 3)


def test_clipped_body_uses_the_smaller_chord():
    clipped = ClippedBody(Cube(2), 0.5)
    assert clipped.inradius == 0.5
    assert clipped.chord(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx((-0.5, 0.5))
    oracle_only = ClippedBody(CrossPolytope(2), 2.0)
    lo, hi = oracle_only.chord(np.zeros(2), np.array([1.0, 0.0]))
    assert (lo, hi) == pytest.approx((-1.0, 1.0), abs=1e-8)


def test_state_body_is_the_bloch_ball_for_qubits(rng):
    body = StateBody(2)
    assert body.dim == 3
    assert body.inradius == pytest.approx(1 / math.sqrt(2))
    assert body.outradius == pytest.approx(1 / math.sqrt(2))
    x = rng.uniform(-0.3, 0.3, 3)
    v = random_unit_vector(3, rng)
    assert body.chord(x, v) == pytest.approx(ball_chord(x, v, 1 / math.sqrt(2)))
    assert body.point(x).trace() == pytest.approx(1.0)
    assert body.polar().inradius == pytest.approx(2 / math.sqrt(2))


def test_state_body_radii_for_qutrits():
    body = StateBody(3)
    assert body.inradius == pytest.approx(1 / math.sqrt(6))
    assert body.outradius == pytest.approx(math.sqrt(2 / 3))
    pure = np.zeros((3, 3))
    pure[0, 0] = 1.0
    coords = np.einsum("kij,ji->k", body.basis, pure - body.center).real
    assert np.linalg.norm(coords) == pytest.approx(body.outradius)
    assert body.contains(coords)
    assert not body.contains(1.01 * coords)


def test_operator_interval():
    body = OperatorInterval(2)
    assert body.dim == 4
    assert body.contains(np.zeros(4))
    e0 = np.array([1.0, 0.0, 0.0, 0.0])
    assert body.chord(np.zeros(4), e0) == pytest.approx((-math.sqrt(2) / 2, math.sqrt(2) / 2))
    assert body.support(e0).estimate == pytest.approx(math.sqrt(2) / 2)


def test_tangent_basis_for_tp_slice():
    basis = tangent_basis(BodySpec(ConeId.CP, 2, Slice.TP))
    assert basis.shape == (12, 4, 4)
    gram = np.einsum("aij,bji->ab", basis, basis).real
    assert np.allclose(gram, np.eye(12))
    for b in basis:
        assert np.allclose(ptrace_b(b, 2), 0.0, atol=1e-12)


def test_matrix_body_geometry():
    body = body_for(BodySpec(ConeId.CP, 2))
    assert body.dim == 15
    assert body.inradius == pytest.approx(1 / math.sqrt(3))
    assert body.outradius == pytest.approx(math.sqrt(3))
    x = np.linspace(-0.1, 0.1, 15)
    assert np.allclose(body.coords(body.matrix(x)), x)
    assert body.contains(np.zeros(15))
    assert body.point(x).trace() == pytest.approx(2.0)
    expected = 15 * math.log(2) + log_volume_states(4)
    assert body.log_volume_exact() == pytest.approx(expected)
    assert body_for(BodySpec(ConeId.T, 2)).log_volume_exact() is None


def test_matrix_body_exact_chord_matches_bisection(rng):
    for cone in (ConeId.CP, ConeId.T):
        body = MatrixBody(BodySpec(cone, 2))
        x = np.zeros(body.dim)
        v = random_unit_vector(body.dim, rng)
        _, hi = body.chord(x, v)
        search = boundary_distance(body.contains, x, v, initial=body.inradius)
        assert hi == pytest.approx(search, abs=1e-7)
        assert body.inradius - 1e-9 <= hi <= body.outradius + 1e-9


def test_walk_in_cp_base_stays_in_base():
    body = MatrixBody(BodySpec(ConeId.CP, 2))
    pts = sample_walk(body, np.random.default_rng(9), 50, burn_in=30, thinning=5)
    for x in pts:
        m = body.matrix(x)
        assert np.trace(m).real == pytest.approx(2.0)
        assert np.linalg.eigvalsh(m)[0] >= -1e-9


def test_walk_in_tp_section_keeps_constraint():
    body = MatrixBody(BodySpec(ConeId.CP, 2, Slice.TP))
    assert body.dim == 12
    pts = sample_walk(body, np.random.default_rng(10), 50, burn_in=30, thinning=5)
    assert max(body.constraint_residual(x) for x in pts) <= 1e-8


def test_matrix_body_rejects_unbounded_and_missing_slices():
    with pytest.raises(UnsupportedSliceError, match="unbounded"):
        MatrixBody(BodySpec(ConeId.CP, 2, Slice.CONE))


def test_matrix_body_polars():
    t = MatrixBody(BodySpec(ConeId.T, 2))
    assert t.polar().spec.cone is ConeId.D
    sym = MatrixBody(BodySpec(ConeId.CP, 2, Slice.SYM))
    assert sym.polar().spec.slice is Slice.SYM_POLAR
    p_sym = MatrixBody(BodySpec(ConeId.P, 2, Slice.SYM))
    assert p_sym.polar().spec.slice is Slice.SYM_POLAR
    sp_polar = MatrixBody(BodySpec(ConeId.SP, 2, Slice.SYM_POLAR))
    assert sp_polar.polar().spec == BodySpec(ConeId.SP, 2, Slice.SYM)
    assert MatrixBody(BodySpec(ConeId.CP, 2, Slice.TP)).polar() is None
    assert MatrixBody(BodySpec(ConeId.CP, 2, Slice.TP)).support(np.ones(12)) is None


def test_matrix_body_support_is_exact_for_cp(rng):
    body = MatrixBody(BodySpec(ConeId.CP, 2))
    u = random_unit_vector(15, rng)
    expected = 2 * float(np.linalg.eigvalsh(body.direction(u))[-1])
    assert body.support(u).estimate == pytest.approx(expected)
