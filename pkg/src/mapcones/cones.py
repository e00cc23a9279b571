"""Membership oracles, certificates and support functions for the cones of maps.

The chain of cones is ``SP ⊂ T ⊂ CP ⊂ D ⊂ P`` with ``T = CP ∩ CcP`` and
``D = conv(CP ∪ CcP)``. Every oracle works on Choi matrices (see ``matcore`` for the
index conventions). ``e = I / N`` is the Choi matrix of the completely depolarizing
map; the base of a cone is its slice ``Tr D = N``.

Verdicts are ``In``, ``Out`` or ``Unknown``. ``Out`` always carries a certificate that
``verify_certificate`` can re-evaluate. ``In`` from the see-saw search for ``P`` is a
heuristic and is flagged as such.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from .errors import (
    DecompositionFailure,
    DimensionMismatchError,
    DirectionError,
    InvalidParamsError,
    UnsupportedSliceError,
)
from .matcore import (
    ChoiMat,
    HermMat,
    apply_map,
    block_view,
    choi_to_map,
    eigh_raw,
    eigvalsh,
    matrix_from_dict,
    matrix_to_dict,
    proj_psd,
    ptrace_b,
    ptranspose,
    symmetrize,
)
from .randgen import RngStream, ginibre

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence


class ConeId(StrEnum):
    P = "P"
    D = "D"
    CP = "CP"
    CCP = "CcP"
    T = "T"
    SP = "SP"

    @property
    def dual(self) -> ConeId:
        return _DUALS[self]

    def subset_of(self, other: ConeId) -> bool:
        return other in _SUPERSETS[self]

    @classmethod
    def parse(cls, value: str) -> ConeId:
        for cone in cls:
            if cone.value.lower() == value.strip().lower():
                return cone
        msg = f"unknown cone {value!r}; choose from {', '.join(c.value for c in cls)}"
        raise InvalidParamsError(msg)


_DUALS = {
    ConeId.CP: ConeId.CP,
    ConeId.CCP: ConeId.CCP,
    ConeId.T: ConeId.D,
    ConeId.D: ConeId.T,
    ConeId.P: ConeId.SP,
    ConeId.SP: ConeId.P,
}

_SUPERSETS = {
    ConeId.SP: frozenset(ConeId),
    ConeId.T: frozenset({ConeId.T, ConeId.CP, ConeId.CCP, ConeId.D, ConeId.P}),
    ConeId.CP: frozenset({ConeId.CP, ConeId.D, ConeId.P}),
    ConeId.CCP: frozenset({ConeId.CCP, ConeId.D, ConeId.P}),
    ConeId.D: frozenset({ConeId.D, ConeId.P}),
    ConeId.P: frozenset({ConeId.P}),
}

CHAIN = (ConeId.SP, ConeId.T, ConeId.CP, ConeId.D, ConeId.P)


class Slice(StrEnum):
    CONE = "cone"
    BASE = "base"
    TP = "tp"
    TNI = "tni"
    SYM = "sym"
    SYM_POLAR = "sym-polar"

    @classmethod
    def parse(cls, value: str) -> Slice:
        try:
            return cls(value.strip().lower())
        except ValueError as err:
            msg = f"unknown slice {value!r}; choose from {', '.join(s.value for s in cls)}"
            raise InvalidParamsError(msg) from err


class Status(StrEnum):
    IN = "in"
    OUT = "out"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class OracleParams:
    tol: float = 1e-9
    seesaw_restarts: int = 50
    seesaw_iters: int = 200
    seesaw_threshold: float = 1e-8
    dykstra_tol: float = 1e-6
    dykstra_max_iter: int = 50_000
    plateau_window: int = 500
    plateau_rtol: float = 1e-10
    separable_pool: int = 50_000
    nnls_tol: float = 1e-6
    dual_samples: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        positive = {
            "tol": self.tol,
            "seesaw_threshold": self.seesaw_threshold,
            "dykstra_tol": self.dykstra_tol,
            "plateau_rtol": self.plateau_rtol,
            "nnls_tol": self.nnls_tol,
        }
        for name, value in positive.items():
            if not value > 0:
                msg = f"{name} must be positive, got {value}"
                raise InvalidParamsError(msg)
        counts = {
            "seesaw_restarts": self.seesaw_restarts,
            "seesaw_iters": self.seesaw_iters,
            "dykstra_max_iter": self.dykstra_max_iter,
            "plateau_window": self.plateau_window,
            "separable_pool": self.separable_pool,
        }
        for name, value in counts.items():
            if value < 1:
                msg = f"{name} must be at least 1, got {value}"
                raise InvalidParamsError(msg)
        if self.dual_samples < 0 or self.seed < 0:
            msg = "dual_samples and seed must be non-negative"
            raise InvalidParamsError(msg)

    def rng(self, stream: int) -> np.random.Generator:
        return RngStream(self.seed, stream).generator()


# see-saw, separable pool, dual witnesses and support searches draw from distinct streams
_SEESAW_STREAM = 1
_POOL_STREAM = 2
_DUAL_STREAM = 3


@dataclass(frozen=True)
class BodySpec:
    """A cone together with the slice that turns it into a convex body."""

    cone: ConeId
    n: int
    slice: Slice = Slice.BASE
    params: OracleParams = field(default_factory=OracleParams)

    def __post_init__(self) -> None:
        if self.n < 2:
            msg = f"n must be at least 2, got {self.n}"
            raise InvalidParamsError(msg)
        if self.slice is Slice.TNI and self.cone is not ConeId.CP:
            msg = f"the trace-non-increasing slice is only defined for CP, not {self.cone}"
            raise UnsupportedSliceError(msg)

    @property
    def dim(self) -> int:
        """Real dimension of the slice."""
        full = self.n**4
        if self.slice is Slice.BASE:
            return full - 1
        if self.slice is Slice.TP:
            return full - self.n**2
        return full

    @property
    def label(self) -> str:
        return f"{self.cone.value}^{self.slice.value} (N={self.n})"

    def membership(self, d: ChoiMat) -> Verdict:
        return slice_membership(d, self)

    def to_json(self) -> dict[str, Any]:
        return {"cone": self.cone.value, "n": self.n, "slice": self.slice.value}


@dataclass(frozen=True)
class Certificate:
    kind: str
    data: dict[str, Any]

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, **{k: _jsonable(v) for k, v in self.data.items()}}


def _jsonable(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, np.ndarray):
        if value.ndim == 2:  # noqa: PLR2004
            return matrix_to_dict(value)
        if not np.iscomplexobj(value):
            return value.tolist()
        return {"re": value.real.tolist(), "im": value.imag.tolist()}
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class Verdict:
    status: Status
    margin: float
    certificate: Certificate | None = None
    heuristic: bool = False
    note: str = ""

    @property
    def inside(self) -> bool:
        return self.status is Status.IN

    def to_json(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "margin": float(self.margin),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "heuristic": self.heuristic,
        }


@dataclass(frozen=True)
class Decomposition:
    """``D = A + B^Γ`` with ``A`` and ``B`` positive semidefinite."""

    a: HermMat
    b: HermMat
    residual: float
    iterations: int


@dataclass(frozen=True)
class Support:
    """Support value ``h_K(u)``; exact when ``lo == hi == estimate``."""

    estimate: float
    lo: float
    hi: float
    heuristic: bool = False

    @classmethod
    def exact(cls, value: float) -> Support:
        return cls(value, value, value)

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class SeesawResult:
    value: float
    x: np.ndarray
    y: np.ndarray


# ----------------------------------------------------------------------------- fixtures

FIXTURE_FILENAMES = {
    "choi-map": "choi_map_n3.json",
}


def load_fixture(name: str) -> ChoiMat:
    """Load a packaged Choi-matrix fixture by name."""
    if name not in FIXTURE_FILENAMES:
        msg = f"Unknown fixture: {name!r}"
        raise ValueError(msg)
    path = Path(__file__).parent / "data" / FIXTURE_FILENAMES[name]
    data = json.loads(path.read_text(encoding="utf-8"))
    return ChoiMat.from_array(matrix_from_dict(data["choi"]), int(data["n"]))


# ----------------------------------------------------------------------------- numeric helpers


def _slack(arr: np.ndarray, tol: float) -> float:
    return tol * max(float(np.linalg.norm(arr)), 1.0)


def trace_norm(arr: np.ndarray) -> float:
    return float(np.sum(np.abs(eigvalsh(symmetrize(arr)))))


def proj_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a real vector onto ``{x : |x|_1 <= radius}``."""
    if radius <= 0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(u) + 1)
    rho = int(np.nonzero(u * ks > css - radius)[0][-1])
    theta = (css[rho] - radius) / (rho + 1)
    return np.sign(v) * np.clip(a - theta, 0.0, None)


def proj_trace_norm_ball(arr: np.ndarray, radius: float) -> np.ndarray:
    w, v = eigh_raw(symmetrize(arr))
    w = proj_l1_ball(w, radius)
    return (v * w) @ v.conj().T


def _eig_verdict(arr: np.ndarray, tol: float, operator: str) -> Verdict:
    w, v = eigh_raw(symmetrize(arr))
    margin = float(w[0])
    if margin >= -_slack(arr, tol):
        return Verdict(Status.IN, margin)
    cert = Certificate("eigenvector", {"operator": operator, "vector": v[:, 0], "value": margin})
    return Verdict(Status.OUT, margin, cert)


@dataclass(frozen=True)
class DykstraResult:
    points: list[np.ndarray]
    iterations: int
    gap: float
    converged: bool


def dykstra(
    x0: np.ndarray,
    projections: Sequence[Callable[[np.ndarray], np.ndarray]],
    *,
    tol: float,
    max_iter: int,
    plateau_window: int = 500,
    plateau_rtol: float = 1e-10,
) -> DykstraResult:
    """Dykstra's alternating projections onto the intersection of convex sets.

    ``gap`` is the largest distance between the last projection onto each set and
    the last projection overall. It stops once the gap is below ``tol``, or when it
    has not improved by a relative ``plateau_rtol`` over ``plateau_window`` sweeps.
    """
    x = np.array(x0, dtype=np.complex128, copy=True)
    increments = [np.zeros_like(x) for _ in projections]
    points = [x.copy() for _ in projections]
    best = math.inf
    best_iter = 0
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for i, proj in enumerate(projections):
            y = proj(x + increments[i])
            increments[i] = x + increments[i] - y
            x = y
            points[i] = y
        gap = max((float(np.linalg.norm(p - x)) for p in points[:-1]), default=0.0)
        if gap <= tol:
            return DykstraResult(points, it, gap, converged=True)
        if gap < best * (1 - plateau_rtol):
            best, best_iter = gap, it
        elif it - best_iter >= plateau_window:
            break
    return DykstraResult(points, it, gap, converged=False)


# ----------------------------------------------------------------------------- see-saw


def seesaw_min(
    arr: np.ndarray,
    n: int,
    *,
    restarts: int,
    iters: int,
    rng: np.random.Generator,
    tol: float = 1e-14,
) -> SeesawResult:
    """Minimize ``<x (x) y| D |x (x) y>`` over unit product vectors by alternating eigen-steps.

    All restarts run as one batch; the result is the best restart.
    """
    d4 = block_view(arr, n)
    x = ginibre(restarts, n, rng)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    scale = max(float(np.linalg.norm(arr)), 1.0)
    prev = np.full(restarts, np.inf)
    vals = prev
    for _ in range(iters):
        bx = np.einsum("rm,mnuv,ru->rnv", x.conj(), d4, x)
        _, vecs = np.linalg.eigh(bx)
        y = vecs[:, :, 0]
        by = np.einsum("rn,mnuv,rv->rmu", y.conj(), d4, y)
        w, vecs = np.linalg.eigh(by)
        x = vecs[:, :, 0]
        vals = w[:, 0]
        if np.all(np.abs(prev - vals) <= tol * scale):
            break
        prev = vals
    best = int(np.argmin(vals))
    return SeesawResult(float(vals[best]), x[best].copy(), y[best].copy())


def seesaw_max(arr: np.ndarray, n: int, **kwargs: Any) -> SeesawResult:  # noqa: ANN401
    res = seesaw_min(-arr, n, **kwargs)
    return SeesawResult(-res.value, res.x, res.y)


def _product_pair_certificate(res: SeesawResult) -> Certificate:
    return Certificate("product_pair", {"xi": res.x.conj(), "eta": res.y, "value": res.value})


# ----------------------------------------------------------------------------- decompositions


def decomposable_split(
    d: ChoiMat,
    tol: float = 1e-6,
    max_iter: int = 50_000,
    *,
    plateau_window: int = 500,
    plateau_rtol: float = 1e-10,
) -> Decomposition | DecompositionFailure:
    """Search ``D = A + B^Γ`` with ``A, B ⪰ 0`` by Dykstra projections.

    The two sets are the PSD cone and ``{X : (D - X)^Γ ⪰ 0}``. On failure the
    negated gap of the closest pair is returned as a candidate PPT witness.
    """
    n = d.n
    arr = d.entries

    def onto_complement(x: np.ndarray) -> np.ndarray:
        return arr - ptranspose(proj_psd(ptranspose(arr - x, n)), n)

    res = dykstra(
        arr,
        [proj_psd, onto_complement],
        tol=tol / 2,
        max_iter=max_iter,
        plateau_window=plateau_window,
        plateau_rtol=plateau_rtol,
    )
    a = symmetrize(res.points[0])
    b = proj_psd(ptranspose(arr - a, n))
    residual = float(np.linalg.norm(arr - a - ptranspose(b, n)))
    if residual <= tol:
        return Decomposition(
            HermMat.from_array(a, symmetrize=True),
            HermMat.from_array(b, symmetrize=True),
            residual,
            res.iterations,
        )
    gap = symmetrize(res.points[0] - res.points[1])
    norm = float(np.linalg.norm(gap))
    witness = gap / norm if norm > 0 else None
    return DecompositionFailure(residual, res.iterations, witness)


def _clean_ppt(w: np.ndarray, n: int) -> np.ndarray:
    """Shift ``w`` by a multiple of the identity until it is PSD and PPT."""
    lo = min(float(eigvalsh(w)[0]), float(eigvalsh(ptranspose(w, n))[0]))
    if lo >= 0:
        return w
    return w + (-lo) * (1 + 1e-9) * np.eye(w.shape[0])


def _dual_witness_search(
    arr: np.ndarray, n: int, seed_witness: np.ndarray | None, params: OracleParams
) -> Certificate | None:
    """Look for ``x ∈ T`` with ``<D, x> < 0``; ``D = T*`` so any hit certifies ``D ∉ D``."""
    rng = params.rng(_DUAL_STREAM)
    candidates: list[np.ndarray] = []
    if seed_witness is not None:
        base = _clean_ppt(symmetrize(seed_witness), n)
        candidates.append(base)
        for _ in range(params.dual_samples):
            psi = np.kron(_unit(rng, n), _unit(rng, n))
            s = rng.uniform(0.0, 0.5)
            candidates.append((1 - s) * base + s * np.outer(psi, psi.conj()))
    slack = _slack(arr, params.tol)
    for w in candidates:
        w_scaled = w / max(float(np.linalg.norm(w)), 1e-300)
        if eigvalsh(w_scaled)[0] < -params.tol or eigvalsh(ptranspose(w_scaled, n))[0] < -params.tol:
            continue
        value = float(np.vdot(w_scaled, arr).real)
        if value < -slack:
            return Certificate("dual_witness", {"witness": w_scaled, "value": value})
    return None


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = ginibre(n, 1, rng)[:, 0]
    return v / np.linalg.norm(v)


def separable_decomposition(
    arr: np.ndarray, n: int, *, pool: int, rng: np.random.Generator, tol: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Non-negative least squares of ``D / Tr D`` over random product projectors.

    The pool is seeded with the Schmidt factors of the eigenvectors of ``D``, so
    matrices that are already sums of orthogonal product projectors decompose exactly.
    Returns ``(weights, product_vectors, residual)`` restricted to the non-zero weights.
    """
    d = n * n
    target = arr / np.trace(arr).real
    xs = ginibre(pool, n, rng)
    ys = ginibre(pool, n, rng)
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    psis = np.concatenate([_schmidt_products(target, n), np.einsum("ka,kb->kab", xs, ys).reshape(pool, d)])
    projectors = np.einsum("ki,kj->kij", psis, psis.conj()).reshape(len(psis), d * d)
    design = np.concatenate([projectors.real, projectors.imag], axis=1).T
    rhs = np.concatenate([target.real.reshape(-1), target.imag.reshape(-1)])
    weights, residual = nnls(design, rhs, maxiter=50 * design.shape[0])
    keep = weights > tol * 1e-3
    return weights[keep], psis[keep], float(residual)


def _schmidt_products(arr: np.ndarray, n: int) -> np.ndarray:
    w, v = eigh_raw(symmetrize(arr))
    out = []
    for k in np.nonzero(w > 1e-12)[0]:  # noqa: PLR2004
        u, _, vh = np.linalg.svd(v[:, k].reshape(n, n))
        out.extend(np.kron(u[:, j], vh[j]) for j in range(n))
    return np.array(out, dtype=np.complex128).reshape(-1, n * n)


# ----------------------------------------------------------------------------- cone oracles


def _check_choi(d: ChoiMat, n: int | None = None) -> None:
    if n is not None and d.n != n:
        msg = f"Choi matrix is for n={d.n}, body expects n={n}"
        raise DimensionMismatchError(msg)


def _positive(arr: np.ndarray, n: int, params: OracleParams) -> Verdict:
    cp = _eig_verdict(arr, params.tol, "choi")
    if cp.inside:
        return Verdict(Status.IN, cp.margin, note="completely positive")
    ccp = _eig_verdict(ptranspose(arr, n), params.tol, "partial_transpose")
    if ccp.inside:
        return Verdict(Status.IN, ccp.margin, note="completely copositive")
    res = seesaw_min(
        arr, n, restarts=params.seesaw_restarts, iters=params.seesaw_iters, rng=params.rng(_SEESAW_STREAM)
    )
    if res.value < -params.seesaw_threshold * max(1.0, float(np.linalg.norm(arr))):
        return Verdict(Status.OUT, res.value, _product_pair_certificate(res))
    return Verdict(Status.IN, res.value, heuristic=True, note="see-saw found no negative product value")


def _decomposable(d: ChoiMat, params: OracleParams) -> Verdict:
    n, arr = d.n, d.entries
    cp = _eig_verdict(arr, params.tol, "choi")
    if cp.inside:
        cert = Certificate("decomposition", {"a": arr, "b": np.zeros_like(arr)})
        return Verdict(Status.IN, cp.margin, cert, note="completely positive")
    ccp = _eig_verdict(ptranspose(arr, n), params.tol, "partial_transpose")
    if ccp.inside:
        cert = Certificate("decomposition", {"a": np.zeros_like(arr), "b": ptranspose(arr, n)})
        return Verdict(Status.IN, ccp.margin, cert, note="completely copositive")
    pos = _positive(arr, n, params)
    if pos.status is Status.OUT:
        return pos
    split = decomposable_split(
        d,
        params.dykstra_tol,
        params.dykstra_max_iter,
        plateau_window=params.plateau_window,
        plateau_rtol=params.plateau_rtol,
    )
    if isinstance(split, Decomposition):
        cert = Certificate("decomposition", {"a": split.a.entries, "b": split.b.entries})
        return Verdict(Status.IN, -split.residual, cert)
    dual = _dual_witness_search(arr, n, split.witness, params)
    if dual is not None:
        return Verdict(Status.OUT, float(dual.data["value"]), dual, note="T-dual witness")
    return Verdict(Status.UNKNOWN, -split.residual, heuristic=True, note=str(split))


def _separable(d: ChoiMat, params: OracleParams) -> Verdict:
    n, arr = d.n, d.entries
    ppt = _ppt(arr, n, params.tol)
    if ppt.status is not Status.IN:
        return ppt
    if n == 2:  # noqa: PLR2004
        return Verdict(Status.IN, ppt.margin, ppt.certificate, note="PPT equals separable for N=2")
    tr = float(np.trace(arr).real)
    if tr <= 0:
        return Verdict(Status.IN, 0.0, note="zero matrix")
    d2 = n * n
    dist = float(np.linalg.norm(arr / tr - np.eye(d2) / d2))
    radius = 1.0 / (n * math.sqrt(n * n - 1))
    if dist <= radius * (1 + params.tol):
        cert = Certificate("ball", {"distance": dist, "radius": radius})
        return Verdict(Status.IN, radius - dist, cert, note="inside the separable ball")
    weights, psis, residual = separable_decomposition(
        arr, n, pool=params.separable_pool, rng=params.rng(_POOL_STREAM), tol=params.nnls_tol
    )
    if residual <= params.nnls_tol:
        cert = Certificate("separable", {"weights": weights * tr, "vectors": psis, "residual": residual})
        return Verdict(Status.IN, -residual, cert)
    return Verdict(Status.UNKNOWN, -residual, heuristic=True, note="no separable decomposition in pool")


def _ppt(arr: np.ndarray, n: int, tol: float) -> Verdict:
    cp = _eig_verdict(arr, tol, "choi")
    if not cp.inside:
        return cp
    ccp = _eig_verdict(ptranspose(arr, n), tol, "partial_transpose")
    if not ccp.inside:
        return ccp
    return Verdict(Status.IN, min(cp.margin, ccp.margin))


def cone_membership(d: ChoiMat, cone: ConeId, params: OracleParams | None = None) -> Verdict:
    params = params or OracleParams()
    arr, n = d.entries, d.n
    match cone:
        case ConeId.CP:
            return _eig_verdict(arr, params.tol, "choi")
        case ConeId.CCP:
            return _eig_verdict(ptranspose(arr, n), params.tol, "partial_transpose")
        case ConeId.T:
            return _ppt(arr, n, params.tol)
        case ConeId.P:
            return _positive(arr, n, params)
        case ConeId.D:
            return _decomposable(d, params)
        case ConeId.SP:
            return _separable(d, params)
    msg = f"unknown cone {cone!r}"
    raise InvalidParamsError(msg)


# ----------------------------------------------------------------------------- slices


def _unit_choi(n: int) -> np.ndarray:
    return np.eye(n * n, dtype=np.complex128) / n


def slice_membership(d: ChoiMat, body: BodySpec) -> Verdict:
    _check_choi(d, body.n)
    params, n, arr = body.params, body.n, d.entries
    slack = _slack(arr, params.tol)
    match body.slice:
        case Slice.CONE:
            return cone_membership(d, body.cone, params)
        case Slice.BASE:
            tr = float(np.trace(arr).real)
            if abs(tr - n) > slack:
                return Verdict(Status.OUT, -abs(tr - n), Certificate("trace", {"trace": tr, "expected": n}))
            return cone_membership(d, body.cone, params)
        case Slice.TP:
            dev = float(np.linalg.norm(ptrace_b(arr, n) - np.eye(n)))
            if dev > slack:
                return Verdict(Status.OUT, -dev, Certificate("partial_trace", {"deviation": dev}))
            return cone_membership(d, body.cone, params)
        case Slice.TNI:
            cp = cone_membership(d, ConeId.CP, params)
            if not cp.inside:
                return cp
            w, v = eigh_raw(symmetrize(np.eye(n) - ptrace_b(arr, n)))
            if w[0] < -slack:
                cert = Certificate(
                    "eigenvector", {"operator": "subnormalization", "vector": v[:, 0], "value": float(w[0])}
                )
                return Verdict(Status.OUT, float(w[0]), cert)
            return Verdict(Status.IN, min(cp.margin, float(w[0])))
        case Slice.SYM:
            return sym_membership(arr, body)
        case Slice.SYM_POLAR:
            return sym_polar_membership(arr, body)
    msg = f"unsupported slice {body.slice!r}"
    raise UnsupportedSliceError(msg)


def sym_polar_membership(arr: np.ndarray, body: BodySpec) -> Verdict:
    """``y`` is in the order interval iff ``e - y`` and ``e + y`` lie in the dual cone."""
    n, params = body.n, body.params
    dual = body.cone.dual
    e = _unit_choi(n)
    verdicts = [
        cone_membership(ChoiMat.from_array(e + s * arr, n, symmetrize=True), dual, params) for s in (-1, 1)
    ]
    for sign, verdict in zip(("e-y", "e+y"), verdicts, strict=True):
        if verdict.status is Status.OUT:
            cert = verdict.certificate
            data = {"side": sign, **({} if cert is None else {"inner": cert.to_json()})}
            return Verdict(Status.OUT, verdict.margin, Certificate("order_interval", data))
    margin = min(v.margin for v in verdicts)
    if all(v.inside for v in verdicts):
        return Verdict(Status.IN, margin, heuristic=any(v.heuristic for v in verdicts))
    return Verdict(Status.UNKNOWN, margin, heuristic=True)


def sym_membership(arr: np.ndarray, body: BodySpec) -> Verdict:
    """Membership in ``conv(-C^b ∪ C^b)`` taken around the zero map.

    ``CP^sym`` and ``CcP^sym`` are the trace-norm balls of radius ``N`` in the
    appropriate picture; ``T^sym`` and ``D^sym`` are searched by projections.
    ``SP^sym`` and ``P^sym`` reuse those searches and the see-saw oracles.
    """
    n, params = body.n, body.params
    radius = float(n)
    norm1 = trace_norm(arr)
    norm1_pt = trace_norm(ptranspose(arr, n))
    tol = params.tol * max(radius, norm1)
    match body.cone:
        case ConeId.CP:
            return _trace_ball_verdict(arr, norm1, radius, tol, "choi")
        case ConeId.CCP:
            return _trace_ball_verdict(ptranspose(arr, n), norm1_pt, radius, tol, "partial_transpose")
        case ConeId.T:
            if norm1 > radius + tol:
                return _trace_ball_verdict(arr, norm1, radius, tol, "choi")
            if norm1_pt > radius + tol:
                return _trace_ball_verdict(ptranspose(arr, n), norm1_pt, radius, tol, "partial_transpose")
            return _sym_ppt(arr, n, params)
        case ConeId.D:
            if norm1 <= radius + tol or norm1_pt <= radius + tol:
                return Verdict(Status.IN, radius - min(norm1, norm1_pt))
            return _sym_decomposable(arr, n, params)
        case ConeId.SP:
            ppt = sym_membership(arr, BodySpec(ConeId.T, n, Slice.SYM, params))
            if n == 2 or ppt.status is Status.OUT:  # noqa: PLR2004
                return ppt
            return _sym_separable(arr, n, norm1, params)
        case ConeId.P:
            if norm1 <= radius + tol or norm1_pt <= radius + tol:
                return Verdict(Status.IN, radius - min(norm1, norm1_pt))
            return _sym_positive(arr, n, params)
    msg = f"unknown cone {body.cone!r}"
    raise InvalidParamsError(msg)


def _trace_ball_verdict(arr: np.ndarray, norm1: float, radius: float, tol: float, operator: str) -> Verdict:
    if norm1 <= radius + tol:
        return Verdict(Status.IN, radius - norm1)
    w, v = eigh_raw(symmetrize(arr))
    sign = (v * np.sign(w)) @ v.conj().T
    data = {"operator": operator, "value": norm1, "radius": radius, "witness": sign}
    cert = Certificate("trace_norm", data)
    return Verdict(Status.OUT, radius - norm1, cert)


def _sym_ppt(arr: np.ndarray, n: int, params: OracleParams) -> Verdict:
    """Search ``A`` with ``A`` and ``A - y`` PPT and ``Tr A <= (N + Tr y) / 2``."""
    d = n * n
    cap = (n + float(np.trace(arr).real)) / 2

    def psd(x: np.ndarray) -> np.ndarray:
        return proj_psd(x)

    def ppt(x: np.ndarray) -> np.ndarray:
        return ptranspose(proj_psd(ptranspose(x, n)), n)

    def shifted_psd(x: np.ndarray) -> np.ndarray:
        return arr + proj_psd(x - arr)

    def shifted_ppt(x: np.ndarray) -> np.ndarray:
        return arr + ptranspose(proj_psd(ptranspose(x - arr, n)), n)

    def trace_cap(x: np.ndarray) -> np.ndarray:
        excess = float(np.trace(x).real) - cap
        return x if excess <= 0 else x - excess * np.eye(d) / d

    res = dykstra(
        proj_psd(arr),
        [psd, ppt, shifted_psd, shifted_ppt, trace_cap],
        tol=params.dykstra_tol,
        max_iter=params.dykstra_max_iter,
        plateau_window=params.plateau_window,
        plateau_rtol=params.plateau_rtol,
    )
    a = res.points[-1]
    if res.converged and _is_ppt(a, n, params.dykstra_tol) and _is_ppt(a - arr, n, params.dykstra_tol):
        cert = Certificate("sym_decomposition", {"positive": a, "negative": a - arr})
        return Verdict(Status.IN, -res.gap, cert)
    return Verdict(Status.UNKNOWN, -res.gap, heuristic=True, note="projection search did not converge")


def _is_ppt(arr: np.ndarray, n: int, tol: float) -> bool:
    slack = _slack(arr, tol)
    psd = eigvalsh(symmetrize(arr))[0] >= -slack
    return bool(psd and eigvalsh(symmetrize(ptranspose(arr, n)))[0] >= -slack)


def _sym_decomposable(arr: np.ndarray, n: int, params: OracleParams) -> Verdict:
    """Split ``y = y1 + y2`` with ``|y1|_1 <= s N`` and ``|y2^Γ|_1 <= (1 - s) N``."""
    radius = float(n)
    inner_iter = min(params.dykstra_max_iter, 2_000)

    def pair_gap(s: float) -> tuple[float, DykstraResult]:
        def first(x: np.ndarray) -> np.ndarray:
            return proj_trace_norm_ball(x, s * radius)

        def second(x: np.ndarray) -> np.ndarray:
            return arr - ptranspose(proj_trace_norm_ball(ptranspose(arr - x, n), (1 - s) * radius), n)

        res = dykstra(
            arr / 2,
            [first, second],
            tol=params.dykstra_tol,
            max_iter=inner_iter,
            plateau_window=min(params.plateau_window, inner_iter),
            plateau_rtol=params.plateau_rtol,
        )
        return res.gap, res

    opt = minimize_scalar(
        lambda s: pair_gap(s)[0], bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-6}
    )
    s_best = float(opt.x)
    gap, res = pair_gap(s_best)
    if gap <= params.dykstra_tol:
        y1 = res.points[0]
        cert = Certificate("sym_split", {"weight": s_best, "cp_part": y1, "ccp_part": arr - y1})
        return Verdict(Status.IN, -gap, cert)
    witness = _order_interval_witness(arr, n, res.points[0] - res.points[1], params)
    if witness is not None:
        return Verdict(Status.OUT, 1.0 - float(witness.data["value"]), witness)
    return Verdict(Status.UNKNOWN, -gap, heuristic=True, note="mixing-weight search did not close the gap")


def _zero_or(x: np.ndarray, n: int, cone: ConeId, params: OracleParams) -> Verdict:
    if float(np.linalg.norm(x)) <= params.tol:
        return Verdict(Status.IN, 0.0, note="zero matrix")
    return cone_membership(ChoiMat.from_array(x, n, symmetrize=True), cone, params)


def _sym_separable(arr: np.ndarray, n: int, norm1: float, params: OracleParams) -> Verdict:
    """Split ``y = a - b`` with ``a = y_+ + sI`` and ``b = y_- + sI`` at the largest affordable shift."""
    d = n * n
    w, v = eigh_raw(symmetrize(arr))
    shift = max(0.0, (n - norm1) / (2 * d))
    a = (v * np.clip(w, 0.0, None)) @ v.conj().T + shift * np.eye(d)
    b = a - arr
    sides = [_zero_or(x, n, ConeId.SP, params) for x in (a, b)]
    margin = min(s.margin for s in sides)
    if all(s.inside for s in sides):
        cert = Certificate("sym_decomposition", {"positive": a, "negative": b})
        return Verdict(Status.IN, margin, cert, heuristic=any(s.heuristic for s in sides))
    note = "no separable split of the positive and negative parts"
    return Verdict(Status.UNKNOWN, margin, heuristic=True, note=note)


def _separable_interval_witness(arr: np.ndarray, n: int, params: OracleParams) -> Verdict | None:
    """Look for ``z`` with ``e ± z`` separable and ``<y, z> > 1``, which excludes ``y`` from ``P^sym``."""
    hs = float(np.linalg.norm(arr))
    candidates = [arr / (n * hs)]
    w, v = eigh_raw(symmetrize(arr))
    candidates.append((v * np.sign(w)) @ v.conj().T / n)
    w2, v2 = eigh_raw(symmetrize(ptranspose(arr, n)))
    candidates.append(ptranspose((v2 * np.sign(w2)) @ v2.conj().T, n) / n)
    e = _unit_choi(n)
    for idx, raw in enumerate(candidates):
        z = raw * (1 - 1e-9)
        value = float(np.vdot(z, arr).real)
        if value <= 1 + params.tol:
            continue
        if idx == 0:
            # e ± z lies in the separable ball about e
            sides = [Verdict(Status.IN, 0.0)]
        else:
            sides = [_zero_or(e + s * z, n, ConeId.SP, params) for s in (1, -1)]
        if all(s.inside for s in sides):
            cert = Certificate("polar_witness", {"witness": z, "value": value, "interval": "SP"})
            return Verdict(Status.OUT, 1.0 - value, cert, heuristic=any(s.heuristic for s in sides))
    return None


def _sym_positive(arr: np.ndarray, n: int, params: OracleParams) -> Verdict:
    """``P^sym`` contains ``D^sym`` and the order interval ``-e <= y <= e`` of P; its polar is that of SP."""
    witness = _separable_interval_witness(arr, n, params)
    if witness is not None:
        return witness
    e = _unit_choi(n)
    sides = [_zero_or(e + s * arr, n, ConeId.P, params) for s in (1, -1)]
    if all(s.inside for s in sides):
        cert = Certificate("sym_decomposition", {"positive": (e + arr) / 2, "negative": (e - arr) / 2})
        heuristic = any(s.heuristic for s in sides)
        return Verdict(Status.IN, min(s.margin for s in sides), cert, heuristic=heuristic)
    decomposable = _sym_decomposable(arr, n, params)
    if decomposable.status is Status.IN:
        return decomposable
    note = "no split and no separable witness"
    return Verdict(Status.UNKNOWN, decomposable.margin, heuristic=True, note=note)


def _order_interval_witness(
    arr: np.ndarray, n: int, gap_direction: np.ndarray, params: OracleParams
) -> Certificate | None:
    """Find ``z`` with ``e ± z`` PPT and ``<y, z> > 1``: a point of the polar body separating ``y``."""
    w, v = eigh_raw(symmetrize(arr))
    g1 = (v * np.sign(w)) @ v.conj().T
    pt = ptranspose(arr, n)
    w2, v2 = eigh_raw(symmetrize(pt))
    g2 = ptranspose((v2 * np.sign(w2)) @ v2.conj().T, n)
    candidates = [(1 - lam) * g1 + lam * g2 for lam in np.linspace(0.0, 1.0, 21)]
    candidates.append(symmetrize(-gap_direction))
    best: tuple[float, np.ndarray] | None = None
    for g in candidates:
        op = max(
            float(np.max(np.abs(eigvalsh(symmetrize(g))))),
            float(np.max(np.abs(eigvalsh(ptranspose(g, n))))),
        )
        if op <= 0:
            continue
        z = g / (n * op) * (1 - 1e-9)
        value = float(np.vdot(z, arr).real)
        if best is None or value > best[0]:
            best = (value, z)
    if best is not None and best[0] > 1 + params.tol:
        return Certificate("polar_witness", {"witness": best[1], "value": best[0]})
    return None


# ----------------------------------------------------------------------------- certificates


def verify_certificate(d: ChoiMat, certificate: Certificate) -> float:
    """Re-evaluate a certificate against ``D``.

    Violation certificates return the violating value (negative means violated, or
    for polar and trace-norm witnesses the excess over the bound with a minus sign).
    Decomposition certificates return the reconstruction residual.
    """
    n, arr, data = d.n, d.entries, certificate.data
    match certificate.kind:
        case "eigenvector":
            vec = np.asarray(data["vector"])
            op = {
                "choi": arr,
                "partial_transpose": ptranspose(arr, n),
                "subnormalization": np.eye(n) - ptrace_b(arr, n),
            }[data["operator"]]
            return float(np.vdot(vec, op @ vec).real)
        case "product_pair":
            xi, eta = np.asarray(data["xi"]), np.asarray(data["eta"])
            image = apply_map(choi_to_map(d), np.outer(xi, xi.conj()))
            return float(np.vdot(eta, image @ eta).real)
        case "dual_witness":
            return float(np.vdot(np.asarray(data["witness"]), arr).real)
        case "trace":
            return -abs(float(np.trace(arr).real) - n)
        case "partial_trace":
            return -float(np.linalg.norm(ptrace_b(arr, n) - np.eye(n)))
        case "trace_norm":
            target = arr if data["operator"] == "choi" else ptranspose(arr, n)
            return float(data["radius"]) - float(np.vdot(np.asarray(data["witness"]), target).real)
        case "polar_witness":
            return 1.0 - float(np.vdot(np.asarray(data["witness"]), arr).real)
        case "sym_decomposition":
            pos, neg = np.asarray(data["positive"]), np.asarray(data["negative"])
            excess = max(0.0, float(np.trace(pos + neg).real) - n)
            return float(np.linalg.norm(pos - neg - arr)) + excess
        case "decomposition":
            a, b = np.asarray(data["a"]), np.asarray(data["b"])
            return float(np.linalg.norm(arr - a - ptranspose(b, n)))
        case "separable":
            psis = np.asarray(data["vectors"])
            recon = np.einsum("k,ki,kj->ij", np.asarray(data["weights"]), psis, psis.conj())
            return float(np.linalg.norm(arr - recon))
    msg = f"certificate kind {certificate.kind!r} cannot be re-evaluated"
    raise ValueError(msg)


# ----------------------------------------------------------------------------- support functions


def _check_direction(u: HermMat, body: BodySpec) -> np.ndarray:
    if u.dim != body.n * body.n:
        msg = f"direction has dim {u.dim}, body needs {body.n * body.n}"
        raise DimensionMismatchError(msg)
    arr = u.entries
    if abs(float(np.trace(arr).real)) > 1e-9:  # noqa: PLR2004
        msg = "support directions must be traceless"
        raise DirectionError(msg)
    if abs(float(np.linalg.norm(arr)) - 1.0) > 1e-9:  # noqa: PLR2004
        msg = "support directions must have unit Hilbert-Schmidt norm"
        raise DirectionError(msg)
    return arr


def support_function(u: HermMat, body: BodySpec, *, pool: Sequence[np.ndarray] = ()) -> Support:
    """``h_K(u) = max_{y in K} <u, y - e>`` for the base of a cone.

    ``pool`` may hold extra base points (for instance hit-and-run samples of ``T^b``)
    that tighten the lower end of interval-valued supports.
    """
    if body.slice is not Slice.BASE:
        msg = f"support functions are implemented for base slices only, not {body.slice.value}"
        raise UnsupportedSliceError(msg)
    arr = _check_direction(u, body)
    n, params = body.n, body.params
    h_cp = n * float(eigvalsh(arr)[-1])
    h_ccp = n * float(eigvalsh(ptranspose(arr, n))[-1])
    match body.cone:
        case ConeId.CP:
            return Support.exact(h_cp)
        case ConeId.CCP:
            return Support.exact(h_ccp)
        case ConeId.D:
            return Support.exact(max(h_cp, h_ccp))
        case ConeId.SP:
            lo = _product_support(arr, n, params)
            hi = min(h_cp, h_ccp)
            return Support(lo, lo, max(lo, hi), heuristic=True)
        case ConeId.T:
            return _ppt_support(arr, n, params, h_cp, h_ccp, pool)
        case ConeId.P:
            return _positive_support(arr, body, max(h_cp, h_ccp))
    msg = f"unknown cone {body.cone!r}"
    raise InvalidParamsError(msg)


def _product_support(arr: np.ndarray, n: int, params: OracleParams) -> float:
    res = seesaw_max(
        arr, n, restarts=params.seesaw_restarts, iters=params.seesaw_iters, rng=params.rng(_SEESAW_STREAM)
    )
    return n * res.value


def _ppt_support(
    arr: np.ndarray, n: int, params: OracleParams, h_cp: float, h_ccp: float, pool: Sequence[np.ndarray]
) -> Support:
    hi = min(h_cp, h_ccp)
    candidates = [_product_support(arr, n, params)]
    neg = max(-float(eigvalsh(arr)[0]), -float(eigvalsh(ptranspose(arr, n))[0]))
    if neg > 0:
        candidates.append(1.0 / (n * neg))
    e = _unit_choi(n)
    _, v = eigh_raw(arr)
    top = n * np.outer(v[:, -1], v[:, -1].conj())
    if _is_ppt(top, n, params.tol):
        candidates.append(h_cp)
    _, v2 = eigh_raw(ptranspose(arr, n))
    top_pt = ptranspose(n * np.outer(v2[:, -1], v2[:, -1].conj()), n)
    if _is_ppt(top_pt, n, params.tol):
        candidates.append(h_ccp)
    candidates.extend(float(np.vdot(arr, np.asarray(p) - e).real) for p in pool)
    lo = min(max(candidates), hi)
    return Support((lo + hi) / 2, lo, hi)


def _positive_support(arr: np.ndarray, body: BodySpec, lower: float) -> Support:
    """Gauge of ``-u`` in ``SP^b - e``, bracketed between ``h_D(u)`` and a certified point.

    The upper end only moves to values ``t`` for which ``e - u / t`` is certified
    separable, so the bracket is rigorous; ``Unknown`` counts as outside.
    """
    n = body.n
    sp = BodySpec(ConeId.SP, n, Slice.BASE, body.params)
    e = _unit_choi(n)

    def separable_at(t: float) -> bool:
        point = ChoiMat.from_array(e - arr / t, n, symmetrize=True)
        return slice_membership(point, sp).inside

    if separable_at(lower):
        return Support.exact(lower)
    lo, hi = lower, math.sqrt(n * n - 1) * (1 + 1e-9)
    for _ in range(20):
        if hi - lo <= 1e-6 * hi:
            break
        mid = 0.5 * (lo + hi)
        if separable_at(mid):
            hi = mid
        else:
            lo = mid
    return Support(hi, lower, hi, heuristic=True)
