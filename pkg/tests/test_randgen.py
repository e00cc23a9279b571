import csv

import numpy as np
import pytest

from mapcones.bodies import Cube, CustomBody, EuclideanBall
from mapcones.matcore import ptrace_b, ptranspose
from mapcones.randgen import (
    RngStream,
    WalkBody,
    WalkState,
    as_generator,
    boundary_distance,
    find_chord,
    ginibre,
    haar_unitary,
    hit_and_run_step,
    random_channel_tp,
    random_product_state,
    random_state_hs,
    random_unit_vector,
    read_sample_dump,
    sample_walk,
    write_observables_csv,
    write_sample_dump,
)


class FlatBody:
    dim = 2
    inradius = 1.0

    def contains(self, x):
        return bool(np.linalg.norm(x) <= 1.0)

    def chord(self, x, v):
        return (0.0, 0.0)

    def point(self, x):
        return x


def test_streams_are_reproducible():
    a = RngStream(7).generator().standard_normal(5)
    b = RngStream(7).generator().standard_normal(5)
    c = RngStream(7).child(1).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    chains = RngStream(7).chains(3)
    assert [s.subkey for s in chains] == [(0,), (1,), (2,)]


def test_stream_validation():
    with pytest.raises(ValueError, match="64-bit"):
        RngStream(-1)
    with pytest.raises(ValueError, match="non-negative"):
        RngStream(1, stream_id=-2)


def test_as_generator():
    gen = np.random.default_rng(1)
    assert as_generator(gen) is gen
    assert np.array_equal(as_generator(3).random(3), RngStream(3).generator().random(3))
    assert np.array_equal(as_generator(None).random(3), RngStream(0).generator().random(3))


def test_ginibre_shape_and_errors(rng):
    assert ginibre(3, 2, rng).shape == (3, 2)
    with pytest.raises(ValueError, match="positive"):
        ginibre(0, 2, rng)


def test_random_state_is_density_matrix(rng):
    rho = random_state_hs(4, rng)
    assert rho.trace() == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho.entries)[0] >= -1e-12


def test_haar_unitary_is_unitary(rng):
    u = haar_unitary(4, rng)
    assert np.allclose(u @ u.conj().T, np.eye(4))


def test_random_unit_vector(rng):
    assert np.linalg.norm(random_unit_vector(7, rng)) == pytest.approx(1.0)


def test_random_product_state(rng):
    rho = random_product_state(3, rng).entries
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.matrix_rank(rho, tol=1e-10) == 1
    assert np.linalg.eigvalsh(ptranspose(rho, 3))[0] >= -1e-12


def test_random_channel_is_cptp(rng):
    for n in (2, 3):
        d = random_channel_tp(n, rng).entries
        assert np.linalg.eigvalsh(d)[0] >= -1e-10
        assert np.allclose(ptrace_b(d, n), np.eye(n), atol=1e-10)
    with pytest.raises(ValueError, match="n >= 2"):
        random_channel_tp(1, rng)


def test_boundary_distance_finds_the_sphere():
    def inside(x):
        return np.linalg.norm(x) <= 1.0

    e1 = np.array([1.0, 0.0, 0.0])
    assert boundary_distance(inside, np.zeros(3), e1, initial=0.1) == pytest.approx(1.0, abs=1e-9)
    assert boundary_distance(inside, np.zeros(3), e1, initial=0.1, limit=0.5) == 0.5


def test_boundary_distance_rejects_unbounded():
    with pytest.raises(RuntimeError, match="bounded"):
        boundary_distance(lambda _x: True, np.zeros(2), np.array([1.0, 0.0]), initial=1.0)


def test_find_chord_falls_back_to_bisection():
    body = CustomBody(2, lambda x: np.linalg.norm(x) <= 1.0, inradius=1.0, outradius=1.0)
    lo, hi = find_chord(body, np.array([0.5, 0.0]), np.array([1.0, 0.0]))
    assert lo == pytest.approx(-1.5, abs=1e-8)
    assert hi == pytest.approx(0.5, abs=1e-8)


def test_hit_and_run_step_stays_inside(rng):
    body = EuclideanBall(3, 1.0)
    assert isinstance(body, WalkBody)
    state = WalkState.start(body)
    for _ in range(200):
        state = hit_and_run_step(state, rng)
        assert body.contains(state.coords)
    assert state.steps_taken == 200
    assert state.stuck_steps == 0


def test_collapsed_chord_keeps_point(rng, capsys):
    state = WalkState.start(FlatBody(), np.array([0.2, 0.1]))
    state = hit_and_run_step(state, rng)
    assert np.array_equal(state.coords, [0.2, 0.1])
    assert state.stuck_steps == 1
    assert "[WARN] chord collapsed" in capsys.readouterr().err


def test_walk_on_bloch_ball_has_uniform_second_moment():
    body = EuclideanBall(3, 1 / np.sqrt(2))
    pts = sample_walk(body, np.random.default_rng(3), 4000, thinning=10)
    assert np.mean(np.sum(pts**2, axis=1)) == pytest.approx(0.3, rel=0.05)


def test_walk_on_cube_has_uniform_marginals():
    pts = sample_walk(Cube(3), np.random.default_rng(5), 4000, thinning=10)
    assert np.all(np.abs(pts) <= 1.0 + 1e-12)
    assert np.allclose(pts.mean(axis=0), 0.0, atol=0.05)
    assert np.allclose(pts.var(axis=0), 1 / 3, rtol=0.1)


def test_sample_walk_is_deterministic():
    body = Cube(2)
    a = sample_walk(body, RngStream(11).generator(), 50, burn_in=5, thinning=2)
    b = sample_walk(body, RngStream(11).generator(), 50, burn_in=5, thinning=2)
    assert a.shape == (50, 2)
    assert np.array_equal(a, b)


def test_sample_dump_round_trip(tmp_path, rng):
    mats = [ginibre(2, 2, rng) for _ in range(3)]
    path = tmp_path / "dump.bin"
    write_sample_dump(path, {"body": "CP^b(N=2)", "seed": 4}, mats)
    header, data = read_sample_dump(path)
    assert header["count"] == 3
    assert header["seed"] == 4
    assert np.array_equal(data, np.stack(mats))


def test_observables_csv(tmp_path):
    path = tmp_path / "obs.csv"
    write_observables_csv(path, [{"purity": 0.5, "min_eig": 0.1}, {"purity": 0.7, "min_eig": 0.0}])
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[1]["purity"] == "0.7"
    empty = tmp_path / "empty.csv"
    write_observables_csv(empty, [])
    assert not empty.read_text(encoding="utf-8")
