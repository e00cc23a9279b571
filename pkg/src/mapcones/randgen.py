"""Random ensembles, reproducible RNG streams and the hit-and-run sampler."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

import click
import numpy as np
from scipy import linalg

from .matcore import ChoiMat, HermMat, psd_sqrt, ptrace_b

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

MAX_SEED = 2**64
CHORD_COLLAPSE = 1e-12
CHORD_TOL = 1e-10
BISECTION_STEPS = 40
MAX_DOUBLINGS = 64


@dataclass(frozen=True)
class RngStream:
    """A reproducible PCG64 stream identified by ``(seed, stream_id, subkey)``."""

    seed: int
    stream_id: int = 0
    subkey: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.seed < MAX_SEED:
            msg = f"seed must be a 64-bit unsigned integer, got {self.seed}"
            raise ValueError(msg)
        if self.stream_id < 0 or any(k < 0 for k in self.subkey):
            msg = "stream identifiers must be non-negative"
            raise ValueError(msg)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.subkey))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> RngStream:
        return RngStream(self.seed, self.stream_id, (*self.subkey, index))

    def chains(self, count: int) -> list[RngStream]:
        return [self.child(k) for k in range(count)]


def as_generator(rng: np.random.Generator | RngStream | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(0 if rng is None else int(rng)).generator()


# ----------------------------------------------------------------------------- ensembles


def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """IID standard complex Gaussian entries, ``E|z|^2 = 1``."""
    if rows < 1 or cols < 1:
        msg = f"ginibre dimensions must be positive, got {rows}x{cols}"
        raise ValueError(msg)
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)


def random_state_hs(d: int, rng: np.random.Generator) -> HermMat:
    """Density matrix distributed by the Hilbert-Schmidt measure."""
    g = ginibre(d, d, rng)
    w = g @ g.conj().T
    return HermMat.from_array(w / np.trace(w).real, symmetrize=True)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = linalg.qr(ginibre(d, d, rng))
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform point on the real unit sphere ``S^{d-1}``."""
    v = rng.standard_normal(d)
    norm = np.linalg.norm(v)
    while norm == 0:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
    return v / norm


def random_complex_unit(d: int, rng: np.random.Generator) -> np.ndarray:
    v = ginibre(d, 1, rng)[:, 0]
    return v / np.linalg.norm(v)


def random_product_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.kron(random_complex_unit(n, rng), random_complex_unit(n, rng))


def random_product_state(n: int, rng: np.random.Generator) -> HermMat:
    """``|xi><xi| (x) |eta><eta|`` with both factors uniform on the unit sphere."""
    psi = random_product_vector(n, rng)
    return HermMat.from_array(np.outer(psi, psi.conj()), symmetrize=True)


def random_channel_tp(n: int, rng: np.random.Generator) -> ChoiMat:
    """Choi matrix of a random CPTP map (induced measure, not uniform on the section)."""
    if n < 2:
        msg = f"random channels need n >= 2, got {n}"
        raise ValueError(msg)
    while True:
        g = ginibre(n * n, n * n, rng)
        w = g @ g.conj().T
        try:
            s = psd_sqrt(ptrace_b(w, n), inverse=True)
        except np.linalg.LinAlgError:
            continue
        k = np.kron(s, np.eye(n))
        return ChoiMat.from_array(k @ w @ k, n, symmetrize=True)


# ----------------------------------------------------------------------------- hit-and-run


@runtime_checkable
class WalkBody(Protocol):
    """What the sampler needs from a convex body in its tangent coordinates.

    Coordinates are measured from the body's centre, which must be interior.
    """

    @property
    def dim(self) -> int: ...

    @property
    def inradius(self) -> float: ...

    def contains(self, x: np.ndarray) -> bool: ...

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None: ...

    def point(self, x: np.ndarray) -> Any: ...  # noqa: ANN401


@dataclass(frozen=True, eq=False)
class WalkState:
    body: WalkBody
    coords: np.ndarray
    steps_taken: int = 0
    stuck_steps: int = 0
    last_chord: float = field(default=math.inf)

    @classmethod
    def start(cls, body: WalkBody, coords: np.ndarray | None = None) -> WalkState:
        x = np.zeros(body.dim) if coords is None else np.asarray(coords, dtype=float).copy()
        return cls(body, x)

    @property
    def current(self) -> Any:  # noqa: ANN401
        return self.body.point(self.coords)

    @property
    def affine_basis(self) -> np.ndarray | None:
        return getattr(self.body, "basis", None)


def boundary_distance(
    contains: Callable[[np.ndarray], bool],
    x: np.ndarray,
    v: np.ndarray,
    *,
    initial: float,
    limit: float | None = None,
    steps: int = BISECTION_STEPS,
    tol: float = CHORD_TOL,
) -> float:
    """Largest ``t >= 0`` (to ``tol``) with ``x + t v`` inside, by doubling then bisection."""
    lo = 0.0
    hi = initial if limit is None else min(initial, limit)
    for _ in range(MAX_DOUBLINGS):
        if not contains(x + hi * v):
            break
        lo = hi
        if limit is not None and hi >= limit:
            return limit
        hi = 2 * hi if limit is None else min(2 * hi, limit)
    else:
        msg = "chord search did not leave the body; is it bounded?"
        raise RuntimeError(msg)
    for _ in range(steps):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if contains(x + mid * v):
            lo = mid
        else:
            hi = mid
    return lo


def find_chord(body: WalkBody, x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    exact = body.chord(x, v)
    if exact is not None:
        return exact
    initial = max(body.inradius, 1e-6)
    hi = boundary_distance(body.contains, x, v, initial=initial)
    lo = boundary_distance(body.contains, x, -v, initial=initial)
    return -lo, hi


def hit_and_run_step(state: WalkState, rng: np.random.Generator) -> WalkState:
    """One hit-and-run move: uniform direction, uniform point on the chord."""
    body = state.body
    v = random_unit_vector(body.dim, rng)
    lo, hi = find_chord(body, state.coords, v)
    if hi - lo < CHORD_COLLAPSE:
        msg = f"[WARN] chord collapsed at step {state.steps_taken}; keeping point"
        click.secho(msg, fg="yellow", err=True)
        return replace(
            state, steps_taken=state.steps_taken + 1, stuck_steps=state.stuck_steps + 1, last_chord=hi - lo
        )
    t = rng.uniform(lo, hi)
    return replace(state, coords=state.coords + t * v, steps_taken=state.steps_taken + 1, last_chord=hi - lo)


def walk(body: WalkBody, x: np.ndarray, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Advance ``steps`` hit-and-run moves from ``x`` and return the final coordinates."""
    for _ in range(steps):
        v = random_unit_vector(body.dim, rng)
        lo, hi = find_chord(body, x, v)
        if hi - lo >= CHORD_COLLAPSE:
            x = x + rng.uniform(lo, hi) * v
    return x


def sample_walk(
    body: WalkBody,
    rng: np.random.Generator,
    n_samples: int,
    *,
    burn_in: int | None = None,
    thinning: int | None = None,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Collect ``n_samples`` thinned hit-and-run points, shape ``(n_samples, dim)``.

    Burn-in defaults to ``10 m`` and thinning to ``m`` moves, ``m`` the body dimension.
    """
    m = body.dim
    burn_in = 10 * m if burn_in is None else burn_in
    thinning = m if thinning is None else thinning
    x = np.zeros(m) if start is None else np.asarray(start, dtype=float)
    x = walk(body, x, burn_in, rng)
    out = np.empty((n_samples, m))
    for k in range(n_samples):
        x = walk(body, x, thinning, rng)
        out[k] = x
    return out


# ----------------------------------------------------------------------------- sample dumps


def write_sample_dump(path: Path, header: dict[str, Any], matrices: Sequence[np.ndarray]) -> None:
    """Write a JSON header line followed by raw little-endian complex128 matrices."""
    mats = [np.asarray(m, dtype="<c16") for m in matrices]
    shape = list(mats[0].shape) if mats else []
    head = {**header, "count": len(mats), "shape": shape, "dtype": "<c16"}
    with Path(path).open("wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        for m in mats:
            fh.write(np.ascontiguousarray(m).tobytes())


def read_sample_dump(path: Path) -> tuple[dict[str, Any], np.ndarray]:
    raw = Path(path).read_bytes()
    line, _, payload = raw.partition(b"\n")
    header = json.loads(line.decode("utf-8"))
    shape = (header["count"], *header["shape"])
    data = np.frombuffer(payload, dtype=header["dtype"]).reshape(shape)
    return header, data


def write_observables_csv(path: Path, rows: Iterable[dict[str, float]]) -> None:
    rows = list(rows)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
