"""Dense complex linear algebra on small Hilbert spaces.

Hermitian operators, density matrices, tensor products, partial traces,
eigendecomposition with a fixed phase convention, and thermal / ground
state construction.  Everything is dense: target systems have dimension
at most 2**4, so numpy's LAPACK bindings are the whole story.

All types are immutable after construction (arrays are copied and marked
read-only) and all operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGroundStateError,
    DimensionMismatchError,
    EigenConvergenceError,
    HermiticityError,
)

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-12
EIGENVALUE_FLOOR = -1e-10


def _frozen_copy(matrix: np.ndarray, dtype=complex) -> np.ndarray:
    out = np.array(matrix, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _symmetrized(matrix: np.ndarray, context: str) -> np.ndarray:
    """Return (A + A†)/2, rejecting violations above the repair threshold.

    Small anti-Hermitian parts are rounding drift and are silently
    removed; anything larger is a real bug in the caller.
    """
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"{context}: expected a square matrix, got shape {matrix.shape}")
    scale = max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)
    violation = float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0
    if violation > HERMITICITY_ATOL * scale:
        raise HermiticityError(f"{context}: Hermiticity violated by {violation:.3e} (scale {scale:.3e})")
    return 0.5 * (matrix + matrix.conj().T)


@dataclass(frozen=True)
class HermitianOperator:
    """A dense Hermitian matrix on a Hilbert space of dimension ``dim``."""

    matrix: np.ndarray

    def __post_init__(self):
        sym = _symmetrized(self.matrix, "HermitianOperator")
        object.__setattr__(self, "matrix", _frozen_copy(sym))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix + other.matrix)

    def scaled(self, factor: float) -> "HermitianOperator":
        return HermitianOperator(factor * self.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace, positive-semidefinite Hermitian matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        sym = _symmetrized(self.matrix, "DensityMatrix")
        trace = float(np.real(np.trace(sym)))
        if abs(trace - 1.0) > TRACE_ATOL:
            raise DimensionMismatchError(f"DensityMatrix: trace {trace!r} differs from 1 beyond tolerance")
        lowest = float(np.linalg.eigvalsh(sym)[0])
        if lowest < EIGENVALUE_FLOOR:
            raise HermiticityError(f"DensityMatrix: negative eigenvalue {lowest:.3e} below PSD floor")
        object.__setattr__(self, "matrix", _frozen_copy(sym))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues sorted ascending with phase-fixed orthonormal columns.

    Phase convention: in each eigenvector, the component of largest
    magnitude is made real and non-negative, so repeated decompositions
    of the same matrix are bit-for-bit comparable.
    """

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_copy(self.values, dtype=float))
        object.__setattr__(self, "vectors", _frozen_copy(self.vectors))


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    fixed = np.array(vectors, copy=True)
    for col in range(fixed.shape[1]):
        v = fixed[:, col]
        pivot = int(np.argmax(np.abs(v)))
        amplitude = v[pivot]
        if abs(amplitude) > 0:
            fixed[:, col] = v * (amplitude.conjugate() / abs(amplitude))
    return fixed


def eig_hermitian(a: HermitianOperator) -> EigenSystem:
    """Full eigendecomposition of a Hermitian operator."""
    try:
        values, vectors = np.linalg.eigh(a.matrix)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(f"eigh failed to converge: {exc}") from exc
    return EigenSystem(values=values, vectors=_fix_phases(vectors))


def tensor_product(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Kronecker product, a-index major."""
    return HermitianOperator(np.kron(a.matrix, b.matrix))


def _partial_trace_array(rho: np.ndarray, local_dims: list[int], keep: set[int]) -> np.ndarray:
    n_sites = len(local_dims)
    total = int(np.prod(local_dims))
    if rho.shape != (total, total):
        raise DimensionMismatchError(
            f"partial_trace: local dims {local_dims} give dimension {total}, state has shape {rho.shape}"
        )
    keep_sorted = sorted(keep)
    if not keep_sorted:
        raise DimensionMismatchError("partial_trace: keep set must be non-empty")
    if keep_sorted[0] < 0 or keep_sorted[-1] >= n_sites:
        raise DimensionMismatchError(f"partial_trace: keep sites {keep_sorted} out of range for {n_sites} sites")

    tensor = rho.reshape(local_dims + local_dims)
    traced = [s for s in range(n_sites) if s not in keep]
    # Trace highest site index first so lower axis positions stay valid.
    for site in sorted(traced, reverse=True):
        remaining = tensor.ndim // 2
        tensor = np.trace(tensor, axis1=site, axis2=site + remaining)
    kept_dim = int(np.prod([local_dims[s] for s in keep_sorted]))
    return tensor.reshape(kept_dim, kept_dim)


def partial_trace(rho: DensityMatrix, local_dims: list[int], keep: set[int]) -> DensityMatrix:
    """Trace out every site not in ``keep``; kept sites stay in site order."""
    return DensityMatrix(_partial_trace_array(rho.matrix, list(local_dims), set(keep)))


def partial_trace_matrix(matrix: np.ndarray, local_dims: list[int], keep: set[int]) -> np.ndarray:
    """Partial trace of a plain matrix (used for state derivatives, which are traceless)."""
    return _partial_trace_array(np.asarray(matrix, dtype=complex), list(local_dims), set(keep))


def thermal_state(h: HermitianOperator, temperature: float) -> DensityMatrix:
    """Gibbs state at the given temperature (k_B = 1).

    Energies are shifted by the ground energy before exponentiation so
    that small temperatures never overflow.
    """
    if temperature <= 0:
        raise ValueError(f"thermal_state: temperature must be positive, got {temperature!r}")
    system = eig_hermitian(h)
    shifted = system.values - system.values[0]
    weights = np.exp(-shifted / temperature)
    weights /= weights.sum()
    rho = (system.vectors * weights) @ system.vectors.conj().T
    return DensityMatrix(rho)


def ground_state(h: HermitianOperator, gap_tolerance: float = 1e-9) -> DensityMatrix:
    """Projector onto the unique lowest eigenvector.

    Raises when the spectral gap is within ``gap_tolerance``: every use
    of a pure ground state here assumes it is unique.
    """
    if gap_tolerance <= 0:
        raise ValueError(f"ground_state: gap tolerance must be positive, got {gap_tolerance!r}")
    system = eig_hermitian(h)
    if h.dim < 2:
        raise DimensionMismatchError("ground_state: need dimension >= 2")
    gap = float(system.values[1] - system.values[0])
    if gap <= gap_tolerance:
        raise DegenerateGroundStateError(
            f"ground state degenerate: gap {gap:.3e} <= tolerance {gap_tolerance:.3e}"
        )
    v0 = system.vectors[:, 0]
    return DensityMatrix(np.outer(v0, v0.conj()))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the trace norm of the difference."""
    diff_eigs = np.linalg.eigvalsh(a.matrix - b.matrix)
    return 0.5 * float(np.sum(np.abs(diff_eigs)))
