"""Convex bodies in tangent coordinates around an interior centre.

Every body exposes the ``randgen.WalkBody`` protocol (``dim``, ``inradius``,
``contains``, ``chord``, ``point``) plus, where known, its exact log-volume, support
function and polar body. Spectrahedral bodies return exact hit-and-run chords from
generalized eigenvalues; oracle-only bodies return ``None`` and the sampler falls
back to doubling and bisection.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .cones import BodySpec, ConeId, Slice, Support, slice_membership, support_function
from .errors import UnsupportedSliceError
from .matcore import ChoiMat, HermMat, eigvalsh, hermitian_basis, ptrace_b, ptranspose
from .randgen import boundary_distance

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable


def log_ball_volume(m: int) -> float:
    """``log vol(B_2^m) = (m/2) log pi - log Gamma(m/2 + 1)``."""
    return 0.5 * m * math.log(math.pi) - float(gammaln(m / 2 + 1))


def log_volume_states(d: int) -> float:
    """Log-volume of the trace-one PSD ``d x d`` matrices (dimension ``d^2 - 1``)."""
    k = np.arange(1, d + 1)
    return (
        0.5 * math.log(d)
        + d * (d - 1) / 2 * math.log(2 * math.pi)
        + float(np.sum(gammaln(k)))
        - float(gammaln(d * d))
    )


def lmi_chord(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> tuple[float, float] | None:
    """Interval of ``t`` with ``A + t B ⪰ 0`` for every pair; ``A`` must be positive definite."""
    lo, hi = -math.inf, math.inf
    for a, b in pairs:
        try:
            mu = linalg.eigh(b, a, eigvals_only=True)
        except (linalg.LinAlgError, ValueError):
            return None
        if mu[0] < 0:
            hi = min(hi, -1.0 / mu[0])
        if mu[-1] > 0:
            lo = max(lo, -1.0 / mu[-1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return None
    return lo, hi


def ball_chord(x: np.ndarray, v: np.ndarray, radius: float) -> tuple[float, float]:
    """Chord of the centred ball through ``x`` along unit ``v``."""
    b = float(x @ v)
    disc = b * b - float(x @ x) + radius * radius
    root = math.sqrt(max(disc, 0.0))
    return -b - root, -b + root


class ConvexBody(ABC):
    """A bounded convex body with an interior centre at coordinate 0."""

    label: str = "body"

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def inradius(self) -> float: ...

    @property
    @abstractmethod
    def outradius(self) -> float: ...

    @abstractmethod
    def contains(self, x: np.ndarray) -> bool: ...

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None:  # noqa: PLR6301
        return None

    def point(self, x: np.ndarray) -> Any:  # noqa: ANN401, PLR6301
        return x

    def log_volume_exact(self) -> float | None:  # noqa: PLR6301
        return None

    def support(self, u: np.ndarray) -> Support | None:  # noqa: PLR6301
        """Support value along a unit direction in tangent coordinates, when available."""
        return None

    def polar(self) -> ConvexBody | None:  # noqa: PLR6301
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label}, dim={self.dim})"


class EuclideanBall(ConvexBody):
    def __init__(self, dim: int, radius: float = 1.0) -> None:
        self._dim = dim
        self.radius = radius
        self.label = f"ball(r={radius:g})"

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def inradius(self) -> float:
        return self.radius

    @property
    def outradius(self) -> float:
        return self.radius

    def contains(self, x: np.ndarray) -> bool:
        return float(np.linalg.norm(x)) <= self.radius

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
        return ball_chord(x, v, self.radius)

    def log_volume_exact(self) -> float:
        return log_ball_volume(self._dim) + self._dim * math.log(self.radius)

    def support(self, u: np.ndarray) -> Support:
        return Support.exact(self.radius * float(np.linalg.norm(u)))

    def polar(self) -> EuclideanBall:
        return EuclideanBall(self._dim, 1.0 / self.radius)


class Cube(ConvexBody):
    """``[-a, a]^m``."""

    def __init__(self, dim: int, half_width: float = 1.0) -> None:
        self._dim = dim
        self.half_width = half_width
        self.label = f"cube(a={half_width:g})"

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def inradius(self) -> float:
        return self.half_width

    @property
    def outradius(self) -> float:
        return self.half_width * math.sqrt(self._dim)

    def contains(self, x: np.ndarray) -> bool:
        return float(np.max(np.abs(x))) <= self.half_width

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
        a = self.half_width
        moving = np.abs(v) > 1e-300  # noqa: PLR2004
        t1 = (-a - x[moving]) / v[moving]
        t2 = (a - x[moving]) / v[moving]
        return float(np.max(np.minimum(t1, t2))), float(np.min(np.maximum(t1, t2)))

    def log_volume_exact(self) -> float:
        return self._dim * math.log(2 * self.half_width)

    def support(self, u: np.ndarray) -> Support:
        return Support.exact(self.half_width * float(np.sum(np.abs(u))))

    def polar(self) -> CrossPolytope:
        return CrossPolytope(self._dim, 1.0 / self.half_width)


class CrossPolytope(ConvexBody):
    """``{x : |x|_1 <= rho}``."""

    def __init__(self, dim: int, radius: float = 1.0) -> None:
        self._dim = dim
        self.radius = radius
        self.label = f"cross-polytope(r={radius:g})"

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def inradius(self) -> float:
        return self.radius / math.sqrt(self._dim)

    @property
    def outradius(self) -> float:
        return self.radius

    def contains(self, x: np.ndarray) -> bool:
        return float(np.sum(np.abs(x))) <= self.radius

    def log_volume_exact(self) -> float:
        return self._dim * math.log(2 * self.radius) - float(gammaln(self._dim + 1))

    def support(self, u: np.ndarray) -> Support:
        return Support.exact(self.radius * float(np.max(np.abs(u))))

    def polar(self) -> Cube:
        return Cube(self._dim, 1.0 / self.radius)


class CustomBody(ConvexBody):
    """A body known only through a membership callable."""

    def __init__(
        self,
        dim: int,
        contains: Callable[[np.ndarray], bool],
        *,
        inradius: float,
        outradius: float,
        label: str = "custom",
        log_volume: float | None = None,
    ) -> None:
        self._dim = dim
        self._contains = contains
        self._inradius = inradius
        self._outradius = outradius
        self._log_volume = log_volume
        self.label = label

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def inradius(self) -> float:
        return self._inradius

    @property
    def outradius(self) -> float:
        return self._outradius

    def contains(self, x: np.ndarray) -> bool:
        return bool(self._contains(x))

    def log_volume_exact(self) -> float | None:
        return self._log_volume


class ScaledBody(ConvexBody):
    """``f * K`` for a body ``K`` centred at the origin."""

    def __init__(self, inner: ConvexBody, factor: float) -> None:
        self.inner = inner
        self.factor = factor
        self.label = f"{factor:g}*{inner.label}"

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def inradius(self) -> float:
        return self.factor * self.inner.inradius

    @property
    def outradius(self) -> float:
        return self.factor * self.inner.outradius

    def contains(self, x: np.ndarray) -> bool:
        return self.inner.contains(x / self.factor)

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None:
        inner = self.inner.chord(x / self.factor, v)
        if inner is None:
            return None
        return inner[0] * self.factor, inner[1] * self.factor

    def point(self, x: np.ndarray) -> Any:  # noqa: ANN401
        return self.inner.point(x / self.factor)

    def log_volume_exact(self) -> float | None:
        inner = self.inner.log_volume_exact()
        return None if inner is None else inner + self.dim * math.log(self.factor)

    def support(self, u: np.ndarray) -> Support | None:
        inner = self.inner.support(u)
        if inner is None:
            return None
        f = self.factor
        return Support(f * inner.estimate, f * inner.lo, f * inner.hi, inner.heuristic)

    def polar(self) -> ConvexBody | None:
        inner = self.inner.polar()
        return None if inner is None else ScaledBody(inner, 1.0 / self.factor)


class ClippedBody(ConvexBody):
    """``K ∩ B_rho``: the phase bodies of the multiphase volume estimator."""

    def __init__(self, inner: ConvexBody, radius: float) -> None:
        self.inner = inner
        self.radius = radius
        self.label = f"{inner.label}∩B({radius:.4g})"

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def inradius(self) -> float:
        return min(self.inner.inradius, self.radius)

    @property
    def outradius(self) -> float:
        return min(self.inner.outradius, self.radius)

    def contains(self, x: np.ndarray) -> bool:
        return float(np.linalg.norm(x)) <= self.radius and self.inner.contains(x)

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
        lo, hi = ball_chord(x, v, self.radius)
        exact = self.inner.chord(x, v)
        if exact is not None:
            return max(lo, exact[0]), min(hi, exact[1])
        initial = max(self.inner.inradius, 1e-6)
        up = boundary_distance(self.inner.contains, x, v, initial=min(initial, hi), limit=max(hi, 0.0))
        down = boundary_distance(self.inner.contains, x, -v, initial=min(initial, -lo), limit=max(-lo, 0.0))
        return -down, up

    def point(self, x: np.ndarray) -> Any:  # noqa: ANN401
        return self.inner.point(x)


class StateBody(ConvexBody):
    """Density matrices of size ``d``: trace one and positive semidefinite."""

    def __init__(self, d: int) -> None:
        self.d = d
        self.basis = hermitian_basis(d)[1:]
        self.center = np.eye(d, dtype=np.complex128) / d
        self.label = f"states(d={d})"

    @property
    def dim(self) -> int:
        return self.d * self.d - 1

    @property
    def inradius(self) -> float:
        return 1.0 / math.sqrt(self.d * (self.d - 1))

    @property
    def outradius(self) -> float:
        return math.sqrt(1 - 1 / self.d)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return self.center + np.tensordot(x, self.basis, axes=1)

    def contains(self, x: np.ndarray) -> bool:
        m = self.matrix(x)
        return float(eigvalsh(m)[0]) >= -1e-9 * max(1.0, float(np.linalg.norm(m)))

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None:
        return lmi_chord([(self.matrix(x), np.tensordot(v, self.basis, axes=1))])

    def point(self, x: np.ndarray) -> HermMat:
        return HermMat.from_array(self.matrix(x), symmetrize=True)

    def log_volume_exact(self) -> float:
        return log_volume_states(self.d)

    def support(self, u: np.ndarray) -> Support:
        return Support.exact(float(eigvalsh(np.tensordot(u, self.basis, axes=1))[-1]))

    def polar(self) -> ScaledBody:
        return ScaledBody(StateBody(self.d), float(self.d))


class OperatorInterval(ConvexBody):
    """``{M : 0 ⪯ M ⪯ I_N}`` in the ``N^2``-dimensional space of Hermitian matrices."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.basis = hermitian_basis(n)
        self.center = np.eye(n, dtype=np.complex128) / 2
        self.label = f"interval(N={n})"

    @property
    def dim(self) -> int:
        return self.n * self.n

    @property
    def inradius(self) -> float:
        return 0.5

    @property
    def outradius(self) -> float:
        return math.sqrt(self.n) / 2

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return self.center + np.tensordot(x, self.basis, axes=1)

    def contains(self, x: np.ndarray) -> bool:
        w = eigvalsh(self.matrix(x))
        return bool(w[0] >= -1e-9 and w[-1] <= 1 + 1e-9)  # noqa: PLR2004

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None:
        m = self.matrix(x)
        dv = np.tensordot(v, self.basis, axes=1)
        return lmi_chord([(m, dv), (np.eye(self.n) - m, -dv)])

    def point(self, x: np.ndarray) -> HermMat:
        return HermMat.from_array(self.matrix(x), symmetrize=True)

    def support(self, u: np.ndarray) -> Support:
        return Support.exact(0.5 * float(np.sum(np.abs(eigvalsh(np.tensordot(u, self.basis, axes=1))))))


def tangent_basis(spec: BodySpec) -> np.ndarray:
    """Orthonormal Hermitian directions spanning the slice's tangent space."""
    n = spec.n
    full = hermitian_basis(n * n)
    if spec.slice is Slice.BASE:
        return full[1:]
    if spec.slice is Slice.TP:
        k = full.shape[0]
        partial = np.trace(full.reshape(k, n, n, n, n), axis1=2, axis2=4)
        small = hermitian_basis(n)
        constraint = np.einsum("aij,kji->ak", small, partial).real
        kernel = linalg.null_space(constraint)
        return np.einsum("ik,ijl->kjl", kernel, full)
    return full


_LMI_CONES = frozenset({ConeId.CP, ConeId.CCP, ConeId.T})


class MatrixBody(ConvexBody):
    """A slice of a cone of maps as a convex body of Choi matrices."""

    def __init__(self, spec: BodySpec) -> None:
        if spec.slice is Slice.CONE:
            msg = "a full cone is unbounded and cannot be sampled; choose a slice"
            raise UnsupportedSliceError(msg)
        self.spec = spec
        self.n = spec.n
        self.basis = tangent_basis(spec)
        self.center = self._center()
        self.label = spec.label

    def _center(self) -> np.ndarray:
        n, d = self.n, self.n * self.n
        eye = np.eye(d, dtype=np.complex128)
        if self.spec.slice in {Slice.BASE, Slice.TP}:
            return eye / n
        if self.spec.slice is Slice.TNI:
            return eye / (n + math.sqrt(n))
        return np.zeros((d, d), dtype=np.complex128)

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def inradius(self) -> float:
        n, sl, cone = self.n, self.spec.slice, self.spec.cone
        if sl in {Slice.BASE, Slice.TP}:
            return 1.0 / math.sqrt(n * n - 1)
        if sl is Slice.TNI:
            return 1.0 / (n + math.sqrt(n))
        if sl is Slice.SYM:
            return 1.0 if cone in {ConeId.CP, ConeId.CCP} else 1.0 / n
        return 1.0 / n

    @property
    def outradius(self) -> float:
        n, sl, cone = self.n, self.spec.slice, self.spec.cone
        if sl in {Slice.BASE, Slice.TP}:
            return math.sqrt(n * n - 1)
        if sl is Slice.TNI:
            return n * (1 + 1.0 / (n + math.sqrt(n)))
        if sl is Slice.SYM:
            return float(n)
        return 1.0 if cone in {ConeId.CP, ConeId.CCP} else float(n)

    def direction(self, v: np.ndarray) -> np.ndarray:
        return np.tensordot(v, self.basis, axes=1)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return self.center + self.direction(x)

    def coords(self, arr: np.ndarray) -> np.ndarray:
        """Tangent coordinates of a matrix lying in the slice's affine hull."""
        return np.einsum("kij,ji->k", self.basis, np.asarray(arr) - self.center).real

    def point(self, x: np.ndarray) -> ChoiMat:
        return ChoiMat.from_array(self.matrix(x), self.n, symmetrize=True)

    def contains(self, x: np.ndarray) -> bool:
        return slice_membership(self.point(x), self.spec).inside

    def constraint_residual(self, x: np.ndarray) -> float:
        m = self.matrix(x)
        match self.spec.slice:
            case Slice.BASE:
                return abs(float(np.trace(m).real) - self.n)
            case Slice.TP:
                return float(np.linalg.norm(ptrace_b(m, self.n) - np.eye(self.n)))
        return 0.0

    def chord(self, x: np.ndarray, v: np.ndarray) -> tuple[float, float] | None:
        n, cone, sl = self.n, self.spec.cone, self.spec.slice
        a, b = self.matrix(x), self.direction(v)
        pairs: list[tuple[np.ndarray, np.ndarray]] = []
        if sl in {Slice.BASE, Slice.TP, Slice.TNI} and cone in _LMI_CONES:
            if cone in {ConeId.CP, ConeId.T}:
                pairs.append((a, b))
            if cone in {ConeId.CCP, ConeId.T}:
                pairs.append((ptranspose(a, n), ptranspose(b, n)))
            if sl is Slice.TNI:
                pairs.append((np.eye(n) - ptrace_b(a, n), -ptrace_b(b, n)))
            return lmi_chord(pairs)
        if sl is Slice.SYM_POLAR and cone.dual in _LMI_CONES:
            e = np.eye(n * n) / n
            for sign in (1.0, -1.0):
                if cone.dual in {ConeId.CP, ConeId.T}:
                    pairs.append((e + sign * a, sign * b))
                if cone.dual in {ConeId.CCP, ConeId.T}:
                    pairs.append((ptranspose(e + sign * a, n), sign * ptranspose(b, n)))
            return lmi_chord(pairs)
        return None

    def log_volume_exact(self) -> float | None:
        if self.spec.slice is Slice.BASE and self.spec.cone in {ConeId.CP, ConeId.CCP}:
            return self.dim * math.log(self.n) + log_volume_states(self.n * self.n)
        return None

    def support(self, u: np.ndarray) -> Support | None:
        if self.spec.slice is not Slice.BASE:
            return None
        direction = self.direction(u / np.linalg.norm(u))
        return support_function(HermMat.from_array(direction, symmetrize=True), self.spec)

    def polar(self) -> ConvexBody | None:
        """Polar about the centre, up to a reflection (which preserves volume and width)."""
        spec = self.spec
        if spec.slice is Slice.BASE:
            return MatrixBody(BodySpec(spec.cone.dual, spec.n, Slice.BASE, spec.params))
        if spec.slice is Slice.SYM:
            return MatrixBody(BodySpec(spec.cone, spec.n, Slice.SYM_POLAR, spec.params))
        if spec.slice is Slice.SYM_POLAR:
            return MatrixBody(BodySpec(spec.cone, spec.n, Slice.SYM, spec.params))
        return None


def body_for(spec: BodySpec) -> MatrixBody:
    return MatrixBody(spec)
