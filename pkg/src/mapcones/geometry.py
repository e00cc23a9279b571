"""Exact formulas, Monte Carlo estimators and the verification suite.

Volumes are carried as logarithms throughout; ``vrad(K) = (vol K / vol B^m)^(1/m)``
is assembled as ``exp((log vol K - log vol B^m) / m)``. Mean width here is the
average support value ``w(K) = E_u h_K(u)`` over uniform unit directions ``u``,
measured from the body's centre, so a ball of radius ``r`` has width ``r``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.special import gammaln

from .bodies import (
    ClippedBody,
    ConvexBody,
    EuclideanBall,
    MatrixBody,
    OperatorInterval,
    log_ball_volume,
    log_volume_states,
)
from .cones import BodySpec, ConeId, OracleParams, Slice, Status, cone_membership, slice_membership
from .errors import (
    DimensionMismatchError,
    InvalidParamsError,
    MixingError,
    NormalizationError,
    UnsupportedSliceError,
)
from .matcore import ChoiMat, HermMat, max_entangled_vector, psd_sqrt, ptrace_b, ptranspose, swap_operator
from .randgen import (
    RngStream,
    find_chord,
    ginibre,
    haar_unitary,
    random_channel_tp,
    random_state_hs,
    random_unit_vector,
    walk,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence

type Progress = Callable[[str], None] | None

ANALYTIC_TOL = 1e-9
UNKNOWN_WARN_RATE = 0.02
MAX_VOLUME_DIM = 16


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_samples: int
    seed: int
    wall_time: float = 0.0

    def to_json(self, *, timing: bool = False) -> dict[str, Any]:
        out = asdict(self)
        if not timing:
            out.pop("wall_time")
        return out


@dataclass(frozen=True)
class ExactVolume:
    log_volume: float
    volume: float | None
    dim: int

    @property
    def vrad(self) -> float:
        return vrad_from_log_vol(self.log_volume, self.dim)


# ----------------------------------------------------------------------------- exact formulas


def exact_vol_states(d: int) -> ExactVolume:
    """Volume of the trace-one PSD ``d x d`` matrices.

    ``sqrt(d) (2 pi)^{d(d-1)/2} prod_{k<=d} Gamma(k) / Gamma(d^2)``
    """
    if d < 2:  # noqa: PLR2004
        msg = f"state sets need d >= 2, got {d}"
        raise InvalidParamsError(msg)
    log_vol = log_volume_states(d)
    volume = math.exp(log_vol) if log_vol > -700 else None  # noqa: PLR2004
    return ExactVolume(log_vol, volume, d * d - 1)


def vrad_states(d: int) -> float:
    return exact_vol_states(d).vrad


def ball_vol(m: int) -> float:
    return math.exp(log_ball_volume(m))


def vrad_from_log_vol(log_vol: float, m: int) -> float:
    return math.exp((log_vol - log_ball_volume(m)) / m)


def vrad_from_vol(vol: float, m: int) -> float:
    if vol <= 0:
        msg = f"volume must be positive, got {vol}"
        raise InvalidParamsError(msg)
    return vrad_from_log_vol(math.log(vol), m)


def log_binomial(m: int, k: int) -> float:
    return float(gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1))


def bmk(m: int, k: int) -> float:
    """``(vol B^m / (vol B^k vol B^{m-k}))^{1/m}``."""
    if not 0 < k < m:
        msg = f"bmk needs 0 < k < m, got m={m}, k={k}"
        raise InvalidParamsError(msg)
    return math.exp((log_ball_volume(m) - log_ball_volume(k) - log_ball_volume(m - k)) / m)


def section_bounds(vrad_body: float, r: float, big_r: float, m: int, k: int) -> tuple[float, float]:
    """Bracket on ``vrad(K ∩ H)`` for a ``k``-dimensional section through the centre."""
    if not 0 < r <= big_r:
        msg = f"need 0 < r <= R, got r={r}, R={big_r}"
        raise InvalidParamsError(msg)
    log_b = math.log(bmk(m, k))
    base = math.log(vrad_body) + log_b
    lo = (base - (m - k) / m * math.log(big_r)) * m / k
    hi = (base - (m - k) / m * math.log(r) + log_binomial(m, k) / m) * m / k
    return math.exp(lo), math.exp(hi)


def tp_section_bounds(cone: ConeId, n: int) -> tuple[float, float]:
    """Bracket on the volume radius of the TP section from the base bounds and the common radii."""
    m, k = n**4 - 1, n**4 - n * n
    r, big_r = 1 / math.sqrt(n * n - 1), math.sqrt(n * n - 1)
    if cone in {ConeId.CP, ConeId.CCP}:
        lo_base = hi_base = cp_base_vrad(n)
    else:
        lo_base, hi_base, _ = base_vrad_bounds(cone, n)
    return section_bounds(lo_base, r, big_r, m, k)[0], section_bounds(hi_base, r, big_r, m, k)[1]


def asymptotic_trend(ds: Sequence[int] = (2, 4, 9, 16, 25)) -> list[tuple[int, float]]:
    """``vrad(M_d) * sqrt(d)``, which decreases toward ``e^{-1/4}``."""
    return [(d, vrad_states(d) * math.sqrt(d)) for d in ds]


def cp_base_vrad(n: int) -> float:
    """``vrad(CP_N^b) = N vrad(M_{N^2})``."""
    return n * vrad_states(n * n)


def inclusion_constant_bracket(n: int) -> tuple[float, float]:
    """Bracket on the smallest ``R`` with ``CP^b - e ⊂ R (SP^b - e)``."""
    return n * n / 2 + 1, float(n * n - 1)


# ----------------------------------------------------------------------------- bound tables


@dataclass(frozen=True)
class BoundCheck:
    source: str
    quantity: str
    lower: float | None
    upper: float | None
    value: float | None
    stderr: float = 0.0
    passed: bool | None = None

    @classmethod
    def evaluate(
        cls,
        source: str,
        quantity: str,
        lower: float | None,
        upper: float | None,
        value: float | None,
        stderr: float = 0.0,
    ) -> BoundCheck:
        if value is None:
            return cls(source, quantity, lower, upper, None, stderr, None)
        slack = 3 * stderr + ANALYTIC_TOL
        ok = (lower is None or value >= lower - slack) and (upper is None or value <= upper + slack)
        return cls(source, quantity, lower, upper, value, stderr, ok)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def base_vrad_bounds(cone: ConeId, n: int) -> tuple[float, float, str]:
    """Finite-N bounds on the volume radius of a base."""
    r_cp = cp_base_vrad(n)
    root = math.sqrt(n)
    match cone:
        case ConeId.CP | ConeId.CCP:
            return 0.5, 1.0, "finite-N base bound"
        case ConeId.P:
            return root / 4, 6 * root, "finite-N base bound"
        case ConeId.SP:
            return 1 / (6 * root), 4 / root, "finite-N base bound"
        case ConeId.T:
            return r_cp / 4, r_cp, "finite-N base bound"
        case ConeId.D:
            return r_cp, 8 * r_cp, "finite-N base bound"
    msg = f"unknown cone {cone!r}"
    raise InvalidParamsError(msg)


def base_width_bound(cone: ConeId, n: int) -> tuple[float | None, str]:
    match cone:
        case ConeId.CP | ConeId.CCP:
            return 2.0, "w(CP^b) <= 2"
        case ConeId.SP:
            return 4 / math.sqrt(n), "w(SP^b) <= 4/sqrt(N)"
        case ConeId.D:
            return 4.0, "w(D^b) <= 2 w(CP^b)"
    return None, "no width bound"


# ----------------------------------------------------------------------------- volume estimation


@dataclass(frozen=True)
class Schedule:
    chains: int = 8
    samples_per_phase: int = 2000
    burn_in: int | None = None
    thinning: int | None = None
    max_rel_stderr: float = 0.25
    workers: int = 1

    def __post_init__(self) -> None:
        if self.chains < 2 or self.samples_per_phase < 1 or self.workers < 1:  # noqa: PLR2004
            msg = "schedule needs at least 2 chains, 1 sample per phase and 1 worker"
            raise InvalidParamsError(msg)


@dataclass(frozen=True)
class VolumeResult:
    vrad: Estimate
    log_volume: Estimate
    dim: int
    phases: int
    ratios: list[float] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "vrad": self.vrad.to_json(),
            "log_volume": self.log_volume.to_json(),
            "dim": self.dim,
            "phases": self.phases,
            "ratios": self.ratios,
        }


def _as_stream(rng: RngStream | int) -> RngStream:
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))


def phase_radii(r0: float, big_r: float, m: int) -> list[float]:
    """Radii ``r0 2^{i/m}`` up to and including the outradius."""
    radii = [r0]
    while radii[-1] * 2 ** (1 / m) < big_r:
        radii.append(radii[-1] * 2 ** (1 / m))
    if big_r > radii[-1]:
        radii.append(big_r)
    return radii


def _run_chain(
    body: ConvexBody,
    radii: list[float],
    stream: RngStream,
    schedule: Schedule,
    label: str,
    progress: Progress,
) -> tuple[float, list[float]]:
    gen = stream.generator()
    m = body.dim
    thin = schedule.thinning or m
    x = np.zeros(m)
    log_vol = log_ball_volume(m) + m * math.log(radii[0])
    ratios: list[float] = []
    for i in range(1, len(radii)):
        phase = ClippedBody(body, radii[i])
        burn = schedule.burn_in if schedule.burn_in is not None else (10 * m if i == 1 else m)
        x = walk(phase, x, burn, gen)
        hits = 0
        for _ in range(schedule.samples_per_phase):
            x = walk(phase, x, thin, gen)
            hits += float(np.linalg.norm(x)) <= radii[i - 1]
        ratio = hits / schedule.samples_per_phase
        if hits == 0:
            msg = f"{label}: phase {i} never returned to the inner ball"
            raise MixingError(msg, partial={"phase": i, "ratios": ratios})
        ratios.append(ratio)
        log_vol -= math.log(ratio)
        if progress is not None:
            progress(f"{label} phase {i}/{len(radii) - 1} ratio={ratio:.3f}")
    return log_vol, ratios


def volume_mcmc(
    body: ConvexBody | BodySpec,
    rng: RngStream | int,
    schedule: Schedule | None = None,
    *,
    progress: Progress = None,
) -> VolumeResult:
    """Multiphase hit-and-run volume estimate across independent chains."""
    schedule = schedule or Schedule()
    body = MatrixBody(body) if isinstance(body, BodySpec) else body
    stream = _as_stream(rng)
    m = body.dim
    if m > MAX_VOLUME_DIM:
        msg = f"{body.label} has dimension {m}; volume estimation is limited to dimension {MAX_VOLUME_DIM}"
        raise InvalidParamsError(msg)
    radii = phase_radii(body.inradius, body.outradius, m)
    start = time.perf_counter()

    def run(c: int) -> tuple[float, list[float]]:
        label = f"chain {c + 1}/{schedule.chains}"
        return _run_chain(body, radii, stream.child(c), schedule, label, progress)

    if schedule.workers > 1:
        with ThreadPoolExecutor(max_workers=schedule.workers) as pool:
            results = list(pool.map(run, range(schedule.chains)))
    else:
        results = [run(c) for c in range(schedule.chains)]

    log_vols = np.array([r[0] for r in results])
    ratio_table = np.array([r[1] for r in results]).reshape(schedule.chains, len(radii) - 1)
    mean_ratios = ratio_table.mean(axis=0) if ratio_table.size else np.array([])
    if ratio_table.size:
        rel = ratio_table.std(axis=0, ddof=1) / math.sqrt(schedule.chains) / mean_ratios
        worst = int(np.argmax(rel))
        if rel[worst] > schedule.max_rel_stderr:
            msg = f"phase {worst + 1} ratio has relative stderr {rel[worst]:.2f}; chains are not mixing"
            raise MixingError(
                msg, partial={"log_volumes": log_vols.tolist(), "ratios": mean_ratios.tolist(), "dim": m}
            )
    wall = time.perf_counter() - start
    mean_log = float(log_vols.mean())
    se_log = float(log_vols.std(ddof=1) / math.sqrt(schedule.chains))
    vrad = vrad_from_log_vol(mean_log, m)
    n_samples = schedule.chains * (len(radii) - 1) * schedule.samples_per_phase
    return VolumeResult(
        vrad=Estimate(vrad, vrad * se_log / m, n_samples, stream.seed, wall),
        log_volume=Estimate(mean_log, se_log, n_samples, stream.seed, wall),
        dim=m,
        phases=len(radii) - 1,
        ratios=[float(r) for r in mean_ratios],
    )


# ----------------------------------------------------------------------------- mean width


@dataclass(frozen=True)
class WidthResult:
    estimate: Estimate
    lo: Estimate
    hi: Estimate
    heuristic: bool = False

    @property
    def is_interval(self) -> bool:
        return self.lo.value != self.hi.value

    def to_json(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate.to_json(),
            "lo": self.lo.to_json(),
            "hi": self.hi.to_json(),
            "heuristic": self.heuristic,
        }


def _chain_estimate(per_chain: np.ndarray, n_samples: int, seed: int, wall: float) -> Estimate:
    chains = len(per_chain)
    stderr = float(per_chain.std(ddof=1) / math.sqrt(chains)) if chains > 1 else 0.0
    return Estimate(float(per_chain.mean()), stderr, n_samples, seed, wall)


def mean_width_mc(
    body: ConvexBody | BodySpec,
    n_dirs: int,
    rng: RngStream | int,
    *,
    chains: int = 8,
    progress: Progress = None,
) -> WidthResult:
    """Average support value over uniform unit directions of the tangent space."""
    body = MatrixBody(body) if isinstance(body, BodySpec) else body
    stream = _as_stream(rng)
    per_chain = max(1, n_dirs // chains)
    start = time.perf_counter()
    est, lo, hi = np.zeros(chains), np.zeros(chains), np.zeros(chains)
    heuristic = False
    for c in range(chains):
        gen = stream.child(c).generator()
        acc = np.zeros(3)
        for _ in range(per_chain):
            s = body.support(random_unit_vector(body.dim, gen))
            if s is None:
                msg = f"{body.label} has no support function"
                raise UnsupportedSliceError(msg)
            acc += (s.estimate, s.lo, s.hi)
            heuristic = heuristic or s.heuristic
        est[c], lo[c], hi[c] = acc / per_chain
        if progress is not None:
            progress(f"width chain {c + 1}/{chains} mean={est[c]:.4f}")
    wall = time.perf_counter() - start
    total = per_chain * chains
    return WidthResult(
        _chain_estimate(est, total, stream.seed, wall),
        _chain_estimate(lo, total, stream.seed, wall),
        _chain_estimate(hi, total, stream.seed, wall),
        heuristic,
    )


@dataclass(frozen=True)
class UrysohnBracket:
    lower: float
    upper: float
    lower_stderr: float
    upper_stderr: float
    heuristic: bool = False

    def contains(self, value: float, stderr: float = 0.0) -> bool:
        lo_slack = 3 * math.hypot(stderr, self.lower_stderr)
        hi_slack = 3 * math.hypot(stderr, self.upper_stderr)
        return self.lower - lo_slack - ANALYTIC_TOL <= value <= self.upper + hi_slack + ANALYTIC_TOL

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def urysohn_bracket(
    body: ConvexBody | BodySpec,
    n_dirs: int,
    rng: RngStream | int,
    *,
    chains: int = 8,
    progress: Progress = None,
) -> UrysohnBracket:
    """``[1 / w(K°), w(K)]``, using the upper ends of interval-valued widths."""
    body = MatrixBody(body) if isinstance(body, BodySpec) else body
    stream = _as_stream(rng)
    polar = body.polar()
    if polar is None:
        msg = f"{body.label} has no polar body"
        raise UnsupportedSliceError(msg)
    width = mean_width_mc(body, n_dirs, stream.child(0), chains=chains, progress=progress)
    dual_width = mean_width_mc(polar, n_dirs, stream.child(1), chains=chains, progress=progress)
    w_dual = dual_width.hi.value
    return UrysohnBracket(
        lower=1.0 / w_dual,
        upper=width.hi.value,
        lower_stderr=dual_width.hi.stderr / (w_dual * w_dual),
        upper_stderr=width.hi.stderr,
        heuristic=width.heuristic or dual_width.heuristic,
    )


# ----------------------------------------------------------------------------- random base points


def _hs_states(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    g = (rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))) / math.sqrt(2)
    w = g @ g.conj().transpose(0, 2, 1)
    return w / np.trace(w, axis1=1, axis2=2).real[:, None, None]


def _ptranspose_batch(arr: np.ndarray, n: int) -> np.ndarray:
    return arr.reshape(-1, n, n, n, n).transpose(0, 1, 4, 3, 2).reshape(-1, n * n, n * n)


def _product_states(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    x = ginibre(count, n, rng)
    y = ginibre(count, n, rng)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    psi = np.einsum("ka,kb->kab", x, y).reshape(count, n * n)
    return np.einsum("ki,kj->kij", psi, psi.conj())


def random_base_points(cone: ConeId, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points of the base ``C^b`` (trace ``N``), shape ``(count, N^2, N^2)``.

    Not uniform: CP uses Hilbert-Schmidt states, T shrinks them toward ``e`` along
    the ray until PPT, D mixes a CP and a CcP point, SP mixes product states.
    """
    d = n * n
    e = np.eye(d) / n
    match cone:
        case ConeId.CP:
            return n * _hs_states(d, count, rng)
        case ConeId.CCP:
            return _ptranspose_batch(n * _hs_states(d, count, rng), n)
        case ConeId.T:
            g = n * _hs_states(d, count, rng) - e
            lmin = np.linalg.eigvalsh(_ptranspose_batch(g, n))[:, 0]
            t_max = np.where(lmin < 0, np.minimum(1.0, 1.0 / (n * np.maximum(-lmin, 1e-300))), 1.0)
            t = t_max * rng.uniform(0.5, 1.0, size=count)
            return e + t[:, None, None] * g
        case ConeId.D | ConeId.P:
            s = rng.uniform(size=count)[:, None, None]
            first = n * _hs_states(d, count, rng)
            second = _ptranspose_batch(n * _hs_states(d, count, rng), n)
            return s * first + (1 - s) * second
        case ConeId.SP:
            parts = 4
            weights = rng.dirichlet(np.ones(parts), size=count)
            out = np.zeros((count, d, d), dtype=np.complex128)
            for j in range(parts):
                out += weights[:, j, None, None] * _product_states(n, count, rng)
            return n * out
    msg = f"unknown cone {cone!r}"
    raise InvalidParamsError(msg)


def random_tp_point(cone: ConeId, n: int, rng: np.random.Generator) -> np.ndarray:
    """A point of the TP section of ``cone``."""
    if cone is ConeId.SP:
        u = haar_unitary(n, rng)
        out = np.zeros((n * n, n * n), dtype=np.complex128)
        for k in range(n):
            a = np.outer(u[:, k], u[:, k].conj())
            out += np.kron(a, random_state_hs(n, rng).entries)
        return out
    channel = random_channel_tp(n, rng).entries
    if cone in {ConeId.CP, ConeId.D, ConeId.P}:
        return channel
    if cone is ConeId.CCP:
        return ptranspose(channel, n)
    e = np.eye(n * n) / n
    g = channel - e
    neg = max(-float(np.linalg.eigvalsh(g)[0]), -float(np.linalg.eigvalsh(ptranspose(g, n))[0]))
    t = min(1.0, 1.0 / (n * neg)) if neg > 0 else 1.0
    return e + t * rng.uniform(0.5, 1.0) * g


# ----------------------------------------------------------------------------- duality


def duality_pair_value(phi: ChoiMat, psi: ChoiMat) -> float:
    """``<-(D_Phi - e), D_Psi - e>`` for two points of the base hyperplane."""
    if phi.n != psi.n:
        msg = f"maps act on different sizes: {phi.n} != {psi.n}"
        raise DimensionMismatchError(msg)
    n = phi.n
    for d in (phi, psi):
        if abs(d.trace() - n) > ANALYTIC_TOL * n:
            msg = f"Choi matrix has trace {d.trace():.12g}, expected {n}"
            raise NormalizationError(msg)
    e = np.eye(n * n) / n
    return -float(np.vdot(phi.entries - e, psi.entries - e).real)


@dataclass(frozen=True)
class DualityReport:
    n: int
    cp_pairs: int
    td_pairs: int
    max_cp: float
    max_td: float
    attained: float

    @property
    def passed(self) -> bool:
        return self.max_cp <= 1 + ANALYTIC_TOL and self.max_td <= 1 + ANALYTIC_TOL

    def to_json(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


def _pair_values(x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    e = np.eye(n * n) / n
    return -np.einsum("kij,kij->k", (x - e).conj(), y - e).real


def duality_experiment(
    n: int,
    pairs: int,
    rng: RngStream | int,
    *,
    td_pairs: int | None = None,
    batch: int = 2000,
    progress: Progress = None,
) -> DualityReport:
    """Largest pair value over random ``(CP^b, CP^b)`` and ``(T^b, D^b)`` pairs."""
    stream = _as_stream(rng)
    td_pairs = max(1, pairs // 10) if td_pairs is None else td_pairs
    gen = stream.child(0).generator()
    max_cp = -math.inf
    done = 0
    while done < pairs:
        k = min(batch, pairs - done)
        first = random_base_points(ConeId.CP, n, k, gen)
        vals = _pair_values(first, random_base_points(ConeId.CP, n, k, gen), n)
        max_cp = max(max_cp, float(vals.max()))
        done += k
        if progress is not None:
            progress(f"duality CP pairs {done}/{pairs} max={max_cp:.6f}")
    gen = stream.child(1).generator()
    max_td = -math.inf
    done = 0
    while done < td_pairs:
        k = min(batch, td_pairs - done)
        first = random_base_points(ConeId.T, n, k, gen)
        vals = _pair_values(first, random_base_points(ConeId.D, n, k, gen), n)
        max_td = max(max_td, float(vals.max()))
        done += k
    d = n * n
    first = np.zeros((d, d))
    first[0, 0] = n
    second = np.zeros((d, d))
    second[1, 1] = n
    attained = duality_pair_value(ChoiMat.from_array(first, n), ChoiMat.from_array(second, n))
    return DualityReport(n, pairs, td_pairs, max_cp, max_td, attained)


# ----------------------------------------------------------------------------- radii


@dataclass(frozen=True)
class RadiiReport:
    label: str
    inradius: float
    outradius: float
    inner_probes: int
    inner_failures: int
    inner_unknown: int
    outer_probes: int
    outer_max: float
    outer_witness: float | None
    inner_witness: float | None
    inner_witness_member: bool | None
    offending: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = self.inner_failures == 0 and self.outer_max <= self.outradius + ANALYTIC_TOL
        if self.outer_witness is not None:
            ok = ok and abs(self.outer_witness - self.outradius) <= ANALYTIC_TOL
        if self.inner_witness is not None:
            ok = ok and abs(self.inner_witness - self.inradius) <= ANALYTIC_TOL
            ok = ok and bool(self.inner_witness_member)
        return ok

    @property
    def unknown_rate(self) -> float:
        return self.inner_unknown / max(1, self.inner_probes)

    def to_json(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


def fourier_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)


def outradius_witness(spec: BodySpec) -> np.ndarray | None:
    """A pure point at distance ``sqrt(N^2 - 1)`` from ``e``, or ``None`` when the slice has none.

    Bases use the product vector ``F e_1 (x) F e_1``. TP sections of CP, D and P use the
    Choi matrix of the Fourier unitary channel. The TP sections of T and SP hold no
    pure points, since a pure TP Choi matrix is maximally entangled.
    """
    n = spec.n
    f = fourier_matrix(n)
    if spec.slice is Slice.BASE:
        psi = np.kron(f[:, 0], f[:, 0])
        return n * np.outer(psi, psi.conj())
    if spec.slice is Slice.TP and spec.cone in {ConeId.CP, ConeId.D, ConeId.P}:
        v = np.kron(np.eye(n), f) @ max_entangled_vector(n)
        return np.outer(v, v.conj())
    return None


def inradius_witness(spec: BodySpec) -> np.ndarray | None:
    """Reflection of a pure witness through ``e``, scaled onto the inscribed sphere."""
    n = spec.n
    pure = outradius_witness(spec)
    if pure is None and spec.slice is Slice.TP:
        pure = outradius_witness(BodySpec(ConeId.CP, n, Slice.TP))
    if pure is None:
        return None
    e = np.eye(n * n) / n
    return e - (pure - e) / (n * n - 1)


def _boundary_distances(body: ConvexBody, n_probes: int, gen: np.random.Generator) -> np.ndarray:
    x0 = np.zeros(body.dim)
    return np.array([find_chord(body, x0, random_unit_vector(body.dim, gen))[1] for _ in range(n_probes)])


def radii_verify(
    target: BodySpec | ConvexBody,
    n_probes: int,
    rng: RngStream | int,
    *,
    eps: float = 1e-6,
    progress: Progress = None,
) -> RadiiReport:
    """Probe the inscribed and circumscribed balls around the centre."""
    stream = _as_stream(rng)
    if not isinstance(target, BodySpec):
        return _radii_generic(target, n_probes, stream, eps)
    spec = target
    if spec.slice not in {Slice.BASE, Slice.TP}:
        msg = f"radii are verified for base and TP slices, not {spec.slice.value}"
        raise UnsupportedSliceError(msg)
    body = MatrixBody(spec)
    n = spec.n
    e = np.eye(n * n) / n
    r, big_r = body.inradius, body.outradius
    gen = stream.child(0).generator()
    failures, unknown = 0, 0
    offending: list[str] = []
    for k in range(n_probes):
        v = random_unit_vector(body.dim, gen)
        verdict = slice_membership(body.point(r * (1 - eps) * v), spec)
        if verdict.status is Status.OUT:
            failures += 1
            offending.append(f"inner probe {k}: margin {verdict.margin:.3e}")
        elif verdict.status is Status.UNKNOWN:
            unknown += 1
        if progress is not None and (k + 1) % max(1, n_probes // 10) == 0:
            progress(f"radii inner probes {k + 1}/{n_probes}")
    gen = stream.child(1).generator()
    if spec.slice is Slice.BASE:
        points = random_base_points(spec.cone, n, n_probes, gen)
    else:
        points = np.array([random_tp_point(spec.cone, n, gen) for _ in range(n_probes)])
    dists = np.linalg.norm(points - e, axis=(1, 2))
    outer_max = float(dists.max()) if len(dists) else 0.0
    if outer_max > big_r + ANALYTIC_TOL:
        offending.append(f"outer probe at distance {outer_max:.12g}")
    notes: list[str] = []
    pure = outradius_witness(spec)
    outer_witness = None
    if pure is None:
        notes.append("no pure point in this section; outradius witness not applicable")
    else:
        outer_witness = float(np.linalg.norm(pure - e))
    inner = inradius_witness(spec)
    inner_witness, inner_member = None, None
    if inner is not None:
        inner_witness = float(np.linalg.norm(inner - e))
        inner_member = slice_membership(ChoiMat.from_array(inner, n, symmetrize=True), spec).inside
    if unknown / max(1, n_probes) > UNKNOWN_WARN_RATE:
        notes.append(f"oracle returned Unknown on {unknown}/{n_probes} inner probes")
    return RadiiReport(
        spec.label,
        r,
        big_r,
        n_probes,
        failures,
        unknown,
        len(dists),
        outer_max,
        outer_witness,
        inner_witness,
        inner_member,
        offending,
        notes,
    )


def _radii_generic(body: ConvexBody, n_probes: int, stream: RngStream, eps: float) -> RadiiReport:
    gen = stream.child(0).generator()
    failures = 0
    offending: list[str] = []
    for k in range(n_probes):
        v = random_unit_vector(body.dim, gen)
        if not body.contains(body.inradius * (1 - eps) * v):
            failures += 1
            offending.append(f"inner probe {k}")
    dists = _boundary_distances(body, n_probes, stream.child(1).generator())
    return RadiiReport(
        body.label,
        body.inradius,
        body.outradius,
        n_probes,
        failures,
        0,
        n_probes,
        float(dists.max()),
        None,
        None,
        None,
        offending,
    )


# ----------------------------------------------------------------------------- block positivity


@dataclass(frozen=True)
class TraceCheck:
    passed: bool
    trace_of_square: float
    square_of_trace: float
    heuristic: bool

    @property
    def margin(self) -> float:
        return self.square_of_trace - self.trace_of_square


def block_positive_trace_check(m: HermMat, n: int, params: OracleParams | None = None) -> TraceCheck:
    """``Tr(M^2) <= (Tr M)^2`` for a block-positive ``M``."""
    params = params or OracleParams()
    choi = ChoiMat(n, m)
    verdict = cone_membership(choi, ConeId.P, params)
    if verdict.status is not Status.IN:
        msg = "matrix is not accepted as block positive"
        raise InvalidParamsError(msg)
    tr = m.trace()
    tr2 = float(np.vdot(m.entries, m.entries).real)
    return TraceCheck(tr2 <= tr * tr + ANALYTIC_TOL, tr2, tr * tr, verdict.heuristic)


@dataclass(frozen=True)
class BlockPositiveSamples:
    """SWAP followed by perturbed decomposable points that the P oracle accepted."""

    matrices: list[HermMat]
    attempts: int
    rejected: int

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self) -> Iterator[HermMat]:
        return iter(self.matrices)


def block_positive_samples(
    n: int,
    count: int,
    rng: RngStream | int,
    params: OracleParams | None = None,
    *,
    max_attempts: int | None = None,
) -> BlockPositiveSamples:
    """Random block-positive matrices: SWAP, then see-saw-accepted perturbations of ``D^b`` points.

    Rejected candidates are redrawn; running out of ``max_attempts`` (default ``50 * count``)
    raises ``InvalidParamsError``.
    """
    params = params or OracleParams()
    limit = 50 * count if max_attempts is None else max_attempts
    gen = _as_stream(rng).generator()
    scale = 0.2 / (n * n)
    out = [HermMat(swap_operator(n))]
    attempts = rejected = 0
    while len(out) < count:
        if attempts >= limit:
            msg = f"only {len(out) - 1} of {count - 1} perturbations were accepted in {attempts} attempts"
            raise InvalidParamsError(msg)
        attempts += 1
        base = random_base_points(ConeId.D, n, 1, gen)[0]
        g = ginibre(n * n, n * n, gen)
        choi = ChoiMat.from_array(base + scale * (g + g.conj().T), n, symmetrize=True)
        if cone_membership(choi, ConeId.P, params).inside:
            out.append(choi.mat)
        else:
            rejected += 1
    return BlockPositiveSamples(out[:count], attempts, rejected)


# ----------------------------------------------------------------------------- Santalo


@dataclass(frozen=True)
class SantaloResult:
    product: Estimate
    vrad_body: Estimate
    vrad_polar: Estimate
    exact: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "product": self.product.to_json(),
            "vrad_body": self.vrad_body.to_json(),
            "vrad_polar": self.vrad_polar.to_json(),
            "exact": self.exact,
        }


def _vrad_of(body: ConvexBody, stream: RngStream, schedule: Schedule | None, progress: Progress) -> Estimate:
    exact = body.log_volume_exact()
    if exact is not None:
        return Estimate(vrad_from_log_vol(exact, body.dim), 0.0, 0, stream.seed)
    return volume_mcmc(body, stream, schedule, progress=progress).vrad


def santalo_product(
    body: ConvexBody | BodySpec,
    rng: RngStream | int = 0,
    schedule: Schedule | None = None,
    *,
    progress: Progress = None,
) -> SantaloResult:
    """``vrad(K) vrad(K°)``, exact where both volumes have closed forms."""
    body = MatrixBody(body) if isinstance(body, BodySpec) else body
    stream = _as_stream(rng)
    polar = body.polar()
    if polar is None:
        msg = f"{body.label} has no polar body"
        raise UnsupportedSliceError(msg)
    a = _vrad_of(body, stream.child(0), schedule, progress)
    b = _vrad_of(polar, stream.child(1), schedule, progress)
    value = a.value * b.value
    stderr = math.hypot(a.stderr * b.value, b.stderr * a.value)
    exact = a.stderr == 0 and b.stderr == 0 and a.n_samples == 0 and b.n_samples == 0
    product = Estimate(value, stderr, a.n_samples + b.n_samples, stream.seed, a.wall_time + b.wall_time)
    return SantaloResult(product, a, b, exact)


# ----------------------------------------------------------------------------- no-duality witness


@dataclass(frozen=True)
class NoDualityReport:
    n: int
    numerator: float
    denominator: float
    ratio: float
    sampled_max: float
    witness_in_cp_base: bool

    @property
    def passed(self) -> bool:
        return (
            self.ratio >= self.n - ANALYTIC_TOL
            and self.sampled_max <= self.denominator + ANALYTIC_TOL
            and self.witness_in_cp_base
        )

    def to_json(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


def no_duality_discrepancy(n: int, n_probes: int = 1000, rng: RngStream | int = 0) -> NoDualityReport:
    """Gap between the support of ``CP^b`` and of ``CP^TP`` along one traceless direction.

    ``u`` carries ``E_11 - I/N`` in its ``(1,1)`` block; ``x = N E_11 (x) E_11`` is a
    point of ``CP^b`` with ``<u, x> = N - 1`` while every TP channel gives at most
    ``1 - 1/N``.
    """
    if n < 2:  # noqa: PLR2004
        msg = f"n must be at least 2, got {n}"
        raise InvalidParamsError(msg)
    d = n * n
    u = np.zeros((d, d))
    u[:n, :n] = -np.eye(n) / n
    u[0, 0] += 1.0
    x = np.zeros((d, d))
    x[0, 0] = n
    in_base = slice_membership(ChoiMat.from_array(x, n), BodySpec(ConeId.CP, n, Slice.BASE)).inside
    numerator = float(np.vdot(u, x).real)
    denominator = 1.0 - 1.0 / n
    gen = _as_stream(rng).generator()
    values = [float(np.vdot(u, random_channel_tp(n, gen).entries).real) for _ in range(n_probes)]
    sampled = max(values, default=-math.inf)
    return NoDualityReport(n, numerator, denominator, numerator / denominator, sampled, in_base)


# ----------------------------------------------------------------------------- TNI maps


def fibration_map(d: ChoiMat, m: HermMat) -> ChoiMat:
    """``g_M(D) = (M^{1/2} (x) I) D (M^{1/2} (x) I)``; maps ``Tr_B D = I`` to ``Tr_B = M``."""
    if m.dim != d.n:
        msg = f"M must be {d.n}x{d.n}, got {m.dim}"
        raise DimensionMismatchError(msg)
    k = np.kron(psd_sqrt(m.entries), np.eye(d.n))
    return ChoiMat.from_array(k @ d.entries @ k, d.n, symmetrize=True)


@dataclass(frozen=True)
class TniReport:
    n: int
    lower: float
    upper: float
    log_vol_tni: Estimate | None = None
    log_vol_tp: Estimate | None = None
    log_vol_interval: Estimate | None = None
    fiber_max_error: float = math.nan
    identity_max_error: float = math.nan
    aborted: str | None = None

    @property
    def log_ratio(self) -> float | None:
        if self.log_vol_tni is None or self.log_vol_tp is None or self.log_vol_interval is None:
            return None
        return self.log_vol_tni.value - self.log_vol_tp.value - self.log_vol_interval.value

    @property
    def ratio(self) -> float | None:
        lr = self.log_ratio
        return None if lr is None else math.exp(lr)

    @property
    def in_bracket(self) -> bool | None:
        r = self.ratio
        return None if r is None else self.lower <= r <= self.upper

    @property
    def fiber_ok(self) -> bool:
        return self.fiber_max_error <= ANALYTIC_TOL and self.identity_max_error <= ANALYTIC_TOL

    def to_json(self) -> dict[str, Any]:
        def est(e: Estimate | None) -> dict[str, Any] | None:
            return None if e is None else e.to_json()

        return {
            "n": self.n,
            "lower": self.lower,
            "upper": self.upper,
            "log_vol_tni": est(self.log_vol_tni),
            "log_vol_tp": est(self.log_vol_tp),
            "log_vol_interval": est(self.log_vol_interval),
            "ratio": self.ratio,
            "in_bracket": self.in_bracket,
            "fiber_max_error": self.fiber_max_error,
            "identity_max_error": self.identity_max_error,
            "fiber_ok": self.fiber_ok,
            "aborted": self.aborted,
        }


def tni_bracket(n: int) -> tuple[float, float]:
    """``[(e N^{5/2})^{-N^2}, N^{-N^2/2}]``."""
    return (math.e * n**2.5) ** (-(n * n)), float(n) ** (-(n * n) / 2)


def fiber_errors(n: int, samples: int, rng: RngStream | int) -> tuple[float, float]:
    """Worst ``|Tr_B g_M(D) - M|`` and worst ``|g_I(D) - D|`` over random channels."""
    gen = _as_stream(rng).generator()
    eye = HermMat.identity(n)
    fiber, ident = 0.0, 0.0
    for _ in range(samples):
        d = random_channel_tp(n, gen)
        m = random_state_hs(n, gen).entries * gen.uniform(0.1, float(n))
        image = fibration_map(d, HermMat.from_array(m, symmetrize=True))
        fiber = max(fiber, float(np.linalg.norm(ptrace_b(image.entries, n) - m)))
        ident = max(ident, float(np.linalg.norm(fibration_map(d, eye).entries - d.entries)))
    return fiber, ident


def tni_experiment(
    n: int = 2,
    schedule: Schedule | None = None,
    rng: RngStream | int = 0,
    *,
    g_samples: int = 1000,
    progress: Progress = None,
) -> TniReport:
    """Volume ratio ``vol(CP^TNI) / (vol(CP^TP) vol(0 ⪯ M ⪯ I))`` and the fibre identities."""
    if n != 2:  # noqa: PLR2004
        msg = f"the TNI experiment runs at N=2 only (dimension 16), got N={n}"
        raise InvalidParamsError(msg)
    stream = _as_stream(rng)
    lower, upper = tni_bracket(n)
    fiber, ident = fiber_errors(n, g_samples, stream.child(3))
    partial: dict[str, Estimate] = {}
    bodies: dict[str, ConvexBody] = {
        "log_vol_tni": MatrixBody(BodySpec(ConeId.CP, n, Slice.TNI)),
        "log_vol_tp": MatrixBody(BodySpec(ConeId.CP, n, Slice.TP)),
        "log_vol_interval": OperatorInterval(n),
    }
    try:
        for k, (name, body) in enumerate(bodies.items()):
            partial[name] = volume_mcmc(body, stream.child(k), schedule, progress=progress).log_volume
    except MixingError as err:
        return TniReport(
            n, lower, upper, **partial, fiber_max_error=fiber, identity_max_error=ident, aborted=str(err)
        )
    return TniReport(n, lower, upper, **partial, fiber_max_error=fiber, identity_max_error=ident)


# ----------------------------------------------------------------------------- reports


@dataclass(frozen=True)
class GeometryReport:
    body: str
    vrad: Estimate | float | None = None
    width: WidthResult | None = None
    inradius_check: bool | None = None
    outradius_check: bool | None = None
    bound_refs: list[BoundCheck] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        checks = [b.passed for b in self.bound_refs if b.passed is not None]
        checks += [c for c in (self.inradius_check, self.outradius_check) if c is not None]
        return all(checks)

    def to_json(self) -> dict[str, Any]:
        vrad: Any = self.vrad.to_json() if isinstance(self.vrad, Estimate) else self.vrad
        return {
            "body": self.body,
            "vrad": vrad,
            "width": None if self.width is None else self.width.to_json(),
            "inradius_check": self.inradius_check,
            "outradius_check": self.outradius_check,
            "bounds": [b.to_json() for b in self.bound_refs],
            "warnings": list(self.warnings),
            "passed": self.passed,
        }


def ball_report(radius: float, dim: int) -> GeometryReport:
    """Exact report for a Euclidean ball: every radius equals ``r``."""
    ball = EuclideanBall(dim, radius)
    vrad = vrad_from_log_vol(ball.log_volume_exact(), dim)
    return GeometryReport(
        ball.label,
        vrad=vrad,
        inradius_check=math.isclose(ball.inradius, radius),
        outradius_check=math.isclose(ball.outradius, radius),
        bound_refs=[BoundCheck.evaluate("ball", "vrad", radius, radius, vrad)],
    )
