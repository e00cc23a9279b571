"""Dense Hermitian algebra and the map <-> Choi-matrix transforms.

Index conventions, fixed once for the whole package:

* A map ``Phi`` on ``N x N`` matrices is a ``SuperOp`` with entries
  ``Phi[(n, nu), (m, mu)]`` so that ``rho'[n, nu] = sum Phi[(n, nu), (m, mu)] rho[m, mu]``.
  The compound index ``(a, b)`` is ``a * N + b``.
* The Choi (dynamical) matrix is ``D[(m, n), (mu, nu)] = Phi[(n, nu), (m, mu)]``, so the
  ``(m, mu)`` block of ``D`` is ``Phi(E_{m mu})``.
* ``Tr_B`` is the block trace: ``(Tr_B D)[m, mu] = Tr Phi(E_{m mu})``. A map is trace
  preserving iff ``Tr_B D = I``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, overload

import numpy as np

from .errors import DimensionMismatchError, EigenConvergenceError, HermiticityError

HERMITIAN_TOL = 1e-12

type Subsystem = Literal["A", "B"]


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


def hermitian_deviation(arr: np.ndarray) -> float:
    return float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0


def symmetrize(arr: np.ndarray) -> np.ndarray:
    """Return the Hermitian part ``(A + A^dagger) / 2``."""
    return (arr + arr.conj().T) / 2


@dataclass(frozen=True, eq=False)
class HermMat:
    """Dense complex Hermitian matrix.

    Construction rejects matrices whose deviation from Hermiticity exceeds
    ``HERMITIAN_TOL`` times ``max(1, max |entry|)``. Use ``HermMat.from_array(a,
    symmetrize=True)`` to repair rounding drift explicitly.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            msg = f"HermMat needs a non-empty square matrix, got shape {arr.shape}"
            raise DimensionMismatchError(msg)
        if not np.all(np.isfinite(arr)):
            msg = "HermMat entries must be finite"
            raise HermiticityError(msg)
        scale = max(1.0, float(np.max(np.abs(arr))))
        dev = hermitian_deviation(arr)
        if dev > HERMITIAN_TOL * scale:
            msg = f"matrix is not Hermitian (max deviation {dev:.3e})"
            raise HermiticityError(msg)
        object.__setattr__(self, "entries", _frozen(arr))

    @classmethod
    def from_array(cls, arr: Any, *, symmetrize: bool = False) -> HermMat:  # noqa: ANN401
        a = np.asarray(arr, dtype=np.complex128)
        if symmetrize:
            a = (a + a.conj().T) / 2
        return cls(a)

    @classmethod
    def identity(cls, d: int) -> HermMat:
        return cls(np.eye(d, dtype=np.complex128))

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def __add__(self, other: HermMat) -> HermMat:
        _check_same_dim(self, other)
        return HermMat(self.entries + other.entries)

    def __sub__(self, other: HermMat) -> HermMat:
        _check_same_dim(self, other)
        return HermMat(self.entries - other.entries)

    def __neg__(self) -> HermMat:
        return HermMat(-self.entries)

    def __mul__(self, scalar: float) -> HermMat:
        return HermMat(self.entries * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HermMat(dim={self.dim})"


def _check_same_dim(a: HermMat, b: HermMat) -> None:
    if a.dim != b.dim:
        msg = f"dimension mismatch: {a.dim} != {b.dim}"
        raise DimensionMismatchError(msg)


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Linear map on ``N x N`` matrices in the ``Phi[(n, nu), (m, mu)]`` convention."""

    n: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries)
        d = self.n * self.n
        if self.n < 1 or arr.shape != (d, d):
            msg = f"SuperOp with n={self.n} needs shape {(d, d)}, got {arr.shape}"
            raise DimensionMismatchError(msg)
        object.__setattr__(self, "entries", _frozen(arr))

    @property
    def hermiticity_preserving(self) -> bool:
        n = self.n
        phi = self.entries.reshape(n, n, n, n)
        swapped = phi.transpose(1, 0, 3, 2).conj()
        scale = max(1.0, float(np.max(np.abs(phi))))
        return bool(np.max(np.abs(phi - swapped)) <= HERMITIAN_TOL * scale)

    def __repr__(self) -> str:
        return f"SuperOp(n={self.n})"


@dataclass(frozen=True, eq=False)
class ChoiMat:
    """Choi matrix of a Hermiticity-preserving map, size ``N^2``."""

    n: int
    mat: HermMat

    def __post_init__(self) -> None:
        if self.n < 1 or self.mat.dim != self.n * self.n:
            msg = f"Choi matrix for n={self.n} must have dim {self.n * self.n}, got {self.mat.dim}"
            raise DimensionMismatchError(msg)

    @classmethod
    def from_array(
        cls, arr: Any, n: int | None = None, *, symmetrize: bool = False  # noqa: ANN401
    ) -> ChoiMat:
        herm = HermMat.from_array(arr, symmetrize=symmetrize)
        if n is None:
            n = math.isqrt(herm.dim)
            if n * n != herm.dim:
                msg = f"matrix dimension {herm.dim} is not a perfect square"
                raise DimensionMismatchError(msg)
        return cls(n, herm)

    @property
    def entries(self) -> np.ndarray:
        return self.mat.entries

    def block(self, m: int, mu: int) -> np.ndarray:
        """Return ``Phi(E_{m mu})``."""
        n = self.n
        return self.mat.entries[m * n : (m + 1) * n, mu * n : (mu + 1) * n]

    def trace(self) -> float:
        return self.mat.trace()

    def __add__(self, other: ChoiMat) -> ChoiMat:
        return ChoiMat(self.n, self.mat + other.mat)

    def __sub__(self, other: ChoiMat) -> ChoiMat:
        return ChoiMat(self.n, self.mat - other.mat)

    def __mul__(self, scalar: float) -> ChoiMat:
        return ChoiMat(self.n, self.mat * scalar)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ChoiMat(n={self.n})"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigen-decomposition with eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T

    @property
    def max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def min(self) -> float:
        return float(self.eigenvalues[-1])


# ----------------------------------------------------------------------------- raw array kernels


def block_view(arr: np.ndarray, n: int) -> np.ndarray:
    """View an ``N^2 x N^2`` array as the four-index tensor ``D4[m, n, mu, nu]``."""
    return arr.reshape(n, n, n, n)


def ptrace_b(arr: np.ndarray, n: int) -> np.ndarray:
    return np.trace(block_view(arr, n), axis1=1, axis2=3)


def ptrace_a(arr: np.ndarray, n: int) -> np.ndarray:
    return np.trace(block_view(arr, n), axis1=0, axis2=2)


def ptranspose(arr: np.ndarray, n: int) -> np.ndarray:
    return block_view(arr, n).transpose(0, 3, 2, 1).reshape(n * n, n * n)


def eigvalsh(arr: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian array, wrapping LAPACK failures."""
    try:
        return np.linalg.eigvalsh(arr)
    except np.linalg.LinAlgError as err:
        raise _convergence_error(arr, err) from err


def eigh_raw(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenpairs of a Hermitian array, wrapping LAPACK failures."""
    try:
        return np.linalg.eigh(arr)
    except np.linalg.LinAlgError as err:
        raise _convergence_error(arr, err) from err


def _convergence_error(arr: np.ndarray, err: Exception) -> EigenConvergenceError:
    finite = bool(np.all(np.isfinite(arr)))
    condition = {
        "dim": float(arr.shape[0]),
        "hs_norm": float(np.linalg.norm(arr)) if finite else math.inf,
        "hermitian_deviation": hermitian_deviation(arr) if finite else math.inf,
    }
    msg = f"eigensolver did not converge on a {arr.shape[0]}x{arr.shape[0]} matrix: {err}"
    return EigenConvergenceError(msg, condition=condition)


def proj_psd(arr: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix."""
    w, v = eigh_raw(symmetrize(arr))
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T


def psd_sqrt(arr: np.ndarray, *, inverse: bool = False) -> np.ndarray:
    w, v = eigh_raw(symmetrize(arr))
    if inverse:
        if np.min(w) <= 0:
            msg = "matrix is singular; no inverse square root"
            raise np.linalg.LinAlgError(msg)
        s = 1.0 / np.sqrt(w)
    else:
        s = np.sqrt(np.clip(w, 0.0, None))
    return (v * s) @ v.conj().T


# ----------------------------------------------------------------------------- public operations


def hs_inner(a: HermMat, b: HermMat) -> float:
    """Hilbert-Schmidt inner product ``Tr(A B)``."""
    _check_same_dim(a, b)
    return float(np.vdot(a.entries, b.entries).real)


def eigh(a: HermMat) -> Spectrum:
    w, v = eigh_raw(a.entries)
    return Spectrum(eigenvalues=w[::-1].copy(), eigenvectors=v[:, ::-1].copy())


def partial_trace(d: ChoiMat, subsystem: Subsystem = "B") -> HermMat:
    if subsystem == "B":
        out = ptrace_b(d.entries, d.n)
    elif subsystem == "A":
        out = ptrace_a(d.entries, d.n)
    else:
        msg = f"subsystem must be 'A' or 'B', got {subsystem!r}"
        raise ValueError(msg)
    return HermMat.from_array(out, symmetrize=True)


def partial_transpose(d: ChoiMat) -> ChoiMat:
    return ChoiMat(d.n, HermMat(ptranspose(d.entries, d.n)))


def map_to_choi(phi: SuperOp) -> ChoiMat:
    """Reshuffle ``Phi[(n, nu), (m, mu)]`` into ``D[(m, n), (mu, nu)]``.

    Raises ``HermiticityError`` if the map does not preserve Hermiticity.
    """
    n = phi.n
    d4 = phi.entries.reshape(n, n, n, n).transpose(2, 0, 3, 1)
    return ChoiMat(n, HermMat(d4.reshape(n * n, n * n)))


def choi_to_map(d: ChoiMat) -> SuperOp:
    n = d.n
    phi4 = block_view(d.entries, n).transpose(1, 3, 0, 2)
    return SuperOp(n, phi4.reshape(n * n, n * n))


@overload
def apply_map(phi: SuperOp, rho: HermMat) -> HermMat: ...
@overload
def apply_map(phi: SuperOp, rho: np.ndarray) -> np.ndarray: ...
def apply_map(phi: SuperOp, rho: HermMat | np.ndarray) -> HermMat | np.ndarray:
    """Contract ``rho'[n, nu] = Phi[(n, nu), (m, mu)] rho[m, mu]``.

    Hermitian inputs give ``HermMat`` outputs (the map must preserve Hermiticity); raw
    arrays such as ``E_12`` are mapped as plain complex matrices.
    """
    arr = rho.entries if isinstance(rho, HermMat) else np.asarray(rho, dtype=np.complex128)
    if arr.shape != (phi.n, phi.n):
        msg = f"map acts on {phi.n}x{phi.n} matrices, got shape {arr.shape}"
        raise DimensionMismatchError(msg)
    out = (phi.entries @ arr.reshape(-1)).reshape(phi.n, phi.n)
    if not isinstance(rho, HermMat):
        return out
    scale = max(1.0, float(np.max(np.abs(out))))
    if hermitian_deviation(out) > 1e-10 * scale:
        msg = "map output is not Hermitian; the map does not preserve Hermiticity"
        raise HermiticityError(msg)
    return HermMat.from_array(out, symmetrize=True)


def apply_via_choi(d: ChoiMat, rho: np.ndarray) -> np.ndarray:
    """Evaluate ``Tr_A[D (rho^T x I)]``, an independent route to ``apply_map``."""
    n = d.n
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (n, n):
        msg = f"map acts on {n}x{n} matrices, got shape {rho.shape}"
        raise DimensionMismatchError(msg)
    prod = d.entries @ np.kron(rho.T, np.eye(n))
    return ptrace_a(prod, n)


# ----------------------------------------------------------------------------- standard maps and states


def identity_map(n: int) -> SuperOp:
    return SuperOp(n, np.eye(n * n, dtype=np.complex128))


def depolarizing_map(n: int) -> SuperOp:
    """The completely depolarizing map ``rho -> Tr(rho) I / N``."""
    phi = np.zeros((n, n, n, n), dtype=np.complex128)
    for a in range(n):
        for m in range(n):
            phi[a, a, m, m] = 1.0 / n
    return SuperOp(n, phi.reshape(n * n, n * n))


def transposition_map(n: int) -> SuperOp:
    phi = np.zeros((n, n, n, n), dtype=np.complex128)
    for m in range(n):
        for mu in range(n):
            phi[mu, m, m, mu] = 1.0
    return SuperOp(n, phi.reshape(n * n, n * n))


def max_entangled_vector(n: int) -> np.ndarray:
    """``xi = sum_m e_m (x) e_m`` (unnormalized, norm ``sqrt(N)``)."""
    return np.eye(n, dtype=np.complex128).reshape(-1)


def rho_max(n: int) -> ChoiMat:
    xi = max_entangled_vector(n)
    return ChoiMat(n, HermMat(np.outer(xi, xi.conj())))


def swap_operator(n: int) -> np.ndarray:
    s = np.zeros((n, n, n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            s[a, b, b, a] = 1.0
    return s.reshape(n * n, n * n)


def depolarizing_choi(n: int) -> ChoiMat:
    """``e = I_{N^2} / N``: the Choi matrix of the completely depolarizing map."""
    return ChoiMat(n, HermMat(np.eye(n * n, dtype=np.complex128) / n))


def isotropic_choi(n: int, p: float) -> ChoiMat:
    """Choi matrix of ``(1 - p) Phi_* + p Id``."""
    arr = (1 - p) * np.eye(n * n, dtype=np.complex128) / n + p * rho_max(n).entries
    return ChoiMat(n, HermMat.from_array(arr, symmetrize=True))


def hermitian_basis(d: int) -> np.ndarray:
    """HS-orthonormal basis of ``d x d`` Hermitian matrices, shape ``(d^2, d, d)``.

    Element 0 is ``I / sqrt(d)``; the remaining ``d^2 - 1`` are traceless.
    """
    basis = [np.eye(d, dtype=np.complex128) / math.sqrt(d)]
    for k in range(1, d):
        diag = np.zeros(d)
        diag[:k] = 1.0
        diag[k] = -k
        basis.append(np.diag(diag / math.sqrt(k * (k + 1))).astype(np.complex128))
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=np.complex128)
            sym[j, k] = sym[k, j] = 1 / math.sqrt(2)
            anti = np.zeros((d, d), dtype=np.complex128)
            anti[j, k] = -1j / math.sqrt(2)
            anti[k, j] = 1j / math.sqrt(2)
            basis.extend((sym, anti))
    return np.stack(basis)


# ----------------------------------------------------------------------------- matrix JSON


def matrix_to_dict(arr: np.ndarray) -> dict[str, Any]:
    arr = np.asarray(arr, dtype=np.complex128)
    return {"dim": int(arr.shape[0]), "re": arr.real.tolist(), "im": arr.imag.tolist()}


def matrix_from_dict(data: dict[str, Any]) -> np.ndarray:
    try:
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as err:
        msg = f"malformed matrix JSON: {err}"
        raise ValueError(msg) from err
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        msg = f"matrix JSON declares dim {dim} but carries shapes {re.shape} / {im.shape}"
        raise DimensionMismatchError(msg)
    return re + 1j * im


def _rows(arr: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(f"{x:.17g}" for x in row) + "]" for row in arr) + "]"


def dumps_matrix(arr: np.ndarray) -> str:
    """Serialize to the ``{"dim", "re", "im"}`` schema with 17 significant digits."""
    arr = np.asarray(arr, dtype=np.complex128)
    return f'{{"dim": {arr.shape[0]}, "re": {_rows(arr.real)}, "im": {_rows(arr.imag)}}}\n'


def load_matrix(path: Path) -> np.ndarray:
    return matrix_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_matrix(path: Path, arr: np.ndarray) -> None:
    Path(path).write_text(dumps_matrix(arr), encoding="utf-8")
