"""Classical and quantum Fisher information with singularity diagnostics.

The quantum information matrix is computed from state derivatives in two
interchangeable ways: generic central differences of a state function,
or exact derivatives for thermal (Gibbs) and non-degenerate ground
states.  On top of the matrices themselves sit the diagnostics this
package exists for: spectra with a tunable rank cut, re-parametrization,
rank-1 factorization checks against a candidate effective parameter,
and the Moore-Penrose pseudoinverse with the effective-variance formula.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateGroundStateError,
    DimensionMismatchError,
    NumericalError,
    SingularMatrixError,
)
from .models import ParameterPoint
from .operators import (
    DensityMatrix,
    HermitianOperator,
    eig_hermitian,
    partial_trace,
    partial_trace_matrix,
)

SUPPORT_EPSILON = 1e-12        # relative cut on e_k + e_l in spectral sums
PROBABILITY_CUTOFF = 1e-14     # outcomes below this carry no classical information
DEFAULT_RANK_TOLERANCE = 1e-9
DEFAULT_PINV_RCOND = 1e-10


class FisherKind(enum.Enum):
    QUANTUM = "QUANTUM"
    CLASSICAL = "CLASSICAL"


class DerivMethod(enum.Enum):
    CENTRAL_DIFF = "CENTRAL_DIFF"
    ANALYTIC = "ANALYTIC"


@dataclass(frozen=True)
class FisherMatrix:
    labels: tuple
    matrix: np.ndarray
    kind: FisherKind

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0)
        if np.max(np.abs(mat - mat.T)) > 1e-10 * scale:
            raise DimensionMismatchError("FisherMatrix: matrix not symmetric")
        mat = 0.5 * (mat + mat.T)
        eigs = np.linalg.eigvalsh(mat)
        if eigs.size and eigs[0] < -1e-8 * max(eigs[-1], 1e-300):
            raise NumericalError(f"FisherMatrix: negative eigenvalue {eigs[0]:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def to_json_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "kind": self.kind.value,
            "matrix": [float(x) for x in self.matrix.reshape(-1)],
            "shape": list(self.matrix.shape),
        }


@dataclass(frozen=True)
class QfimSpectrum:
    eigenvalues: np.ndarray       # descending
    eigenvectors: np.ndarray      # columns, sign-fixed
    rank: int
    rank_tolerance: float

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "eigenvectors": [float(x) for x in self.eigenvectors.reshape(-1)],
            "rank": int(self.rank),
            "rank_tolerance": float(self.rank_tolerance),
        }


@dataclass(frozen=True)
class DerivativeBundle:
    rho: DensityMatrix
    drho: tuple              # one Hermitian traceless matrix per parameter
    method: DerivMethod
    step_sizes: tuple
    labels: tuple = ()

    def __post_init__(self):
        cleaned = []
        for k, d in enumerate(self.drho):
            d = np.asarray(d, dtype=complex)
            scale = max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)
            if np.max(np.abs(d - d.conj().T)) > 1e-10 * scale:
                raise DimensionMismatchError(f"DerivativeBundle: drho[{k}] not Hermitian")
            if abs(np.trace(d)) > 1e-8 * scale:
                raise DimensionMismatchError(f"DerivativeBundle: drho[{k}] not traceless")
            d = 0.5 * (d + d.conj().T)
            d -= (np.trace(d) / d.shape[0]) * np.eye(d.shape[0])
            d.setflags(write=False)
            cleaned.append(d)
        object.__setattr__(self, "drho", tuple(cleaned))
        object.__setattr__(self, "step_sizes", tuple(float(s) for s in self.step_sizes))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_params(self) -> int:
        return len(self.drho)


def default_step_rule(theta: float) -> float:
    return 1e-5 * max(1.0, abs(theta))


def derivative_bundle(
    state_fn: Callable[[ParameterPoint], DensityMatrix],
    point: ParameterPoint,
    step_rule: Callable[[float], float] = default_step_rule,
    labels: Sequence[str] = (),
) -> DerivativeBundle:
    """Central-difference state derivatives along every free parameter."""
    rho = state_fn(point)
    drho = []
    steps = []
    for i, theta in enumerate(point.values):
        step = float(step_rule(theta))
        upper = state_fn(point.displaced(i, +step)).matrix
        lower = state_fn(point.displaced(i, -step)).matrix
        drho.append((upper - lower) / (2.0 * step))
        steps.append(step)
    return DerivativeBundle(rho=rho, drho=tuple(drho), method=DerivMethod.CENTRAL_DIFF,
                            step_sizes=tuple(steps), labels=tuple(labels))


def _gibbs_weights(energies: np.ndarray, temperature: float) -> np.ndarray:
    shifted = energies - energies.min()
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def thermal_derivative_bundle(
    hamiltonian: HermitianOperator,
    temperature: float,
    dh_list: Sequence[Optional[np.ndarray]],
    labels: Sequence[str] = (),
    temperature_index: Optional[int] = None,
) -> DerivativeBundle:
    """Exact Gibbs-state derivatives.

    ``dh_list[i]`` is dH/d(theta_i); the slot at ``temperature_index``
    (if any) may be None and receives the exact temperature derivative
    (H - <H>) rho / T^2 instead.  Coupling derivatives use the divided
    difference of the Boltzmann map, which stays accurate through
    near-degeneracies.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature!r}")
    system = eig_hermitian(hamiltonian)
    energies = system.values
    vectors = system.vectors
    probs = _gibbs_weights(energies, temperature)
    rho = DensityMatrix((vectors * probs) @ vectors.conj().T)

    # Divided differences of w(E) = exp(-(E - E_min)/T), normalized later.
    n = len(energies)
    shifted = energies - energies.min()
    w = np.exp(-shifted / temperature)
    z = w.sum()
    phi = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            delta = energies[a] - energies[b]
            if abs(delta) < 1e-14:
                phi[a, b] = -w[b] / temperature
            else:
                phi[a, b] = w[b] * math.expm1(-delta / temperature) / delta

    drho = []
    for i, dh in enumerate(dh_list):
        if temperature_index is not None and i == temperature_index:
            mean_e = float(probs @ energies)
            diag = probs * (energies - mean_e) / temperature**2
            drho.append((vectors * diag) @ vectors.conj().T)
            continue
        if dh is None:
            raise ValueError(f"dh_list[{i}] is None but is not the temperature slot")
        a_mat = vectors.conj().T @ np.asarray(dh, dtype=complex) @ vectors
        d_exp = a_mat * phi
        trace_term = float(np.real(np.trace(d_exp))) / z
        d_rho_eig = d_exp / z - np.diag(probs) * trace_term
        drho.append(vectors @ d_rho_eig @ vectors.conj().T)

    return DerivativeBundle(rho=rho, drho=tuple(drho), method=DerivMethod.ANALYTIC,
                            step_sizes=(0.0,) * len(drho), labels=tuple(labels))


def ground_derivative_bundle(
    hamiltonian: HermitianOperator,
    dh_list: Sequence[np.ndarray],
    labels: Sequence[str] = (),
    gap_tolerance: float = 1e-9,
) -> DerivativeBundle:
    """Exact pure ground-state derivatives from first-order perturbation theory."""
    system = eig_hermitian(hamiltonian)
    gap = float(system.values[1] - system.values[0])
    if gap <= gap_tolerance:
        raise DegenerateGroundStateError(
            f"ground state degenerate: gap {gap:.3e} <= tolerance {gap_tolerance:.3e}"
        )
    vectors = system.vectors
    psi = vectors[:, 0]
    rho = DensityMatrix(np.outer(psi, psi.conj()))
    excited = vectors[:, 1:]
    denom = system.values[0] - system.values[1:]
    drho = []
    for dh in dh_list:
        amp = excited.conj().T @ np.asarray(dh, dtype=complex) @ psi
        dpsi = excited @ (amp / denom)
        d = np.outer(dpsi, psi.conj()) + np.outer(psi, dpsi.conj())
        drho.append(d)
    return DerivativeBundle(rho=rho, drho=tuple(drho), method=DerivMethod.ANALYTIC,
                            step_sizes=(0.0,) * len(drho), labels=tuple(labels))


def reduce_bundle(bundle: DerivativeBundle, local_dims: Sequence[int], keep) -> DerivativeBundle:
    """Partial-trace a bundle onto a subsystem; derivatives commute with the trace."""
    rho = partial_trace(bundle.rho, list(local_dims), set(keep))
    drho = tuple(partial_trace_matrix(d, list(local_dims), set(keep)) for d in bundle.drho)
    return DerivativeBundle(rho=rho, drho=drho, method=bundle.method,
                            step_sizes=bundle.step_sizes, labels=bundle.labels)


def _bundle_labels(bundle: DerivativeBundle) -> tuple:
    if bundle.labels:
        return bundle.labels
    return tuple(f"theta_{i}" for i in range(bundle.n_params))


def _eigenbasis_blocks(bundle: DerivativeBundle):
    system = eig_hermitian(HermitianOperator(bundle.rho.matrix))
    weights = np.clip(system.values, 0.0, None)
    blocks = [system.vectors.conj().T @ d @ system.vectors for d in bundle.drho]
    return weights, system.vectors, blocks


def qfim_mixed(bundle: DerivativeBundle) -> FisherMatrix:
    """Spectral-sum information matrix, restricted to the state's support."""
    weights, _vectors, blocks = _eigenbasis_blocks(bundle)
    denom = weights[:, None] + weights[None, :]
    mask = denom > SUPPORT_EPSILON
    safe = np.where(mask, denom, 1.0)
    d = bundle.n_params
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            terms = 2.0 * np.real(blocks[i] * blocks[j].T) / safe
            val = float(np.sum(terms[mask]))
            out[i, j] = out[j, i] = val
    return FisherMatrix(labels=_bundle_labels(bundle), matrix=out, kind=FisherKind.QUANTUM)


def qfim_pure(psi: DensityMatrix, bundle: DerivativeBundle) -> FisherMatrix:
    """Pure-state information matrix, 2 Tr[d_i rho d_j rho] (gauge-free form)."""
    purity = psi.purity()
    if purity < 1.0 - 1e-8:
        raise NumericalError(f"qfim_pure: state purity {purity!r} below pure-state threshold")
    d = bundle.n_params
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            val = 2.0 * float(np.real(np.trace(bundle.drho[i] @ bundle.drho[j])))
            out[i, j] = out[j, i] = val
    return FisherMatrix(labels=_bundle_labels(bundle), matrix=out, kind=FisherKind.QUANTUM)


def qfim_mixed_population_split(bundle: DerivativeBundle, degeneracy_gap: float = 1e-8) -> FisherMatrix:
    """Population/eigenvector split of the information matrix.

    Uses eigensystem perturbation formulas, so it requires a strictly
    non-degenerate state spectrum; it exists as an independent
    cross-check of ``qfim_mixed`` on that class of states.
    """
    weights, _vectors, blocks = _eigenbasis_blocks(bundle)
    gaps = np.diff(np.sort(weights))
    if gaps.size and float(gaps.min()) <= degeneracy_gap:
        raise NumericalError(
            f"population-split form needs a non-degenerate spectrum (min gap {gaps.min():.3e})"
        )
    n = len(weights)
    d = bundle.n_params
    delta = weights[None, :] - weights[:, None]          # e_m - e_n at [n, m]
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(np.eye(n, dtype=bool), 0.0, 1.0 / delta)
    overlaps = [b * coeff for b in blocks]               # <e_n | d e_m> at [n, m]
    pop_grads = [np.real(np.diag(b)) for b in blocks]
    denom = weights[:, None] + weights[None, :]
    factor = np.where(denom > SUPPORT_EPSILON, delta**2 / np.where(denom > 0, denom, 1.0), 0.0)
    out = np.zeros((d, d))
    supported = weights > SUPPORT_EPSILON
    for i in range(d):
        for j in range(i, d):
            pop = float(np.sum(pop_grads[i][supported] * pop_grads[j][supported] / weights[supported]))
            vec = 2.0 * float(np.sum(factor * np.real(overlaps[i] * np.conj(overlaps[j]))))
            out[i, j] = out[j, i] = pop + vec
    return FisherMatrix(labels=_bundle_labels(bundle), matrix=out, kind=FisherKind.QUANTUM)


def sld(bundle: DerivativeBundle, param_index: int) -> HermitianOperator:
    """Symmetric logarithmic derivative on the state's support subspace."""
    weights, vectors, blocks = _eigenbasis_blocks(bundle)
    denom = weights[:, None] + weights[None, :]
    mask = denom > SUPPORT_EPSILON
    safe = np.where(mask, denom, 1.0)
    l_eig = np.where(mask, 2.0 * blocks[param_index] / safe, 0.0)
    return HermitianOperator(vectors @ l_eig @ vectors.conj().T)


def sld_commutator_expectation(bundle: DerivativeBundle, i: int, j: int) -> complex:
    """Tr(rho [L_i, L_j]); zero means the two bounds are jointly attainable."""
    li = sld(bundle, i).matrix
    lj = sld(bundle, j).matrix
    return complex(np.trace(bundle.rho.matrix @ (li @ lj - lj @ li)))


def sld_residual(bundle: DerivativeBundle, param_index: int) -> float:
    """Support-projected residual of d rho = (L rho + rho L)/2."""
    weights, vectors, _blocks = _eigenbasis_blocks(bundle)
    support = vectors[:, weights > SUPPORT_EPSILON]
    proj = support @ support.conj().T
    l_op = sld(bundle, param_index).matrix
    rho = bundle.rho.matrix
    resid = bundle.drho[param_index] - 0.5 * (l_op @ rho + rho @ l_op)
    return float(np.linalg.norm(proj @ resid @ proj))


def cfim(probabilities: Sequence[float], dprob: Sequence[Sequence[float]],
         labels: Sequence[str] = ()) -> FisherMatrix:
    """Classical information matrix of an outcome distribution and its gradients."""
    p = np.asarray(probabilities, dtype=float)
    if np.any(p < -1e-12):
        raise ValueError(f"negative probability in {p!r}")
    p = np.clip(p, 0.0, None)
    if abs(p.sum() - 1.0) > 1e-10:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    grads = [np.asarray(g, dtype=float) for g in dprob]
    for k, g in enumerate(grads):
        if g.shape != p.shape:
            raise DimensionMismatchError(f"gradient {k} has shape {g.shape}, expected {p.shape}")
        if abs(g.sum()) > 1e-8 * max(1.0, float(np.max(np.abs(g))) if g.size else 1.0):
            raise ValueError(f"gradient {k} does not sum to zero: {g.sum()!r}")
    keep = p > PROBABILITY_CUTOFF
    d = len(grads)
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            val = float(np.sum(grads[i][keep] * grads[j][keep] / p[keep]))
            out[i, j] = out[j, i] = val
    if not labels:
        labels = tuple(f"theta_{i}" for i in range(d))
    return FisherMatrix(labels=tuple(labels), matrix=out, kind=FisherKind.CLASSICAL)


def qfim_spectrum(f: FisherMatrix, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> QfimSpectrum:
    """Descending eigensystem with a relative rank cut."""
    values, vectors = np.linalg.eigh(f.matrix)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    norm = float(np.max(np.abs(vectors))) if vectors.size else 1.0
    for col in range(vectors.shape[1]):
        v = vectors[:, col]
        nonzero = np.nonzero(np.abs(v) > 1e-12 * max(1.0, norm))[0]
        if nonzero.size and v[nonzero[0]] < 0:
            vectors[:, col] = -v
    threshold = rank_tolerance * max(float(values[0]) if values.size else 0.0, 1e-300)
    rank = int(np.sum(values > threshold))
    values.setflags(write=False)
    vectors.setflags(write=False)
    return QfimSpectrum(eigenvalues=values, eigenvectors=vectors, rank=rank,
                        rank_tolerance=rank_tolerance)


def reparametrize(f: FisherMatrix, jacobian: np.ndarray,
                  new_labels: Sequence[str] = ()) -> FisherMatrix:
    """Information matrix in new coordinates chi with jacobian[b, j] = d chi_b / d theta_j."""
    m = np.asarray(jacobian, dtype=float)
    if m.shape != (f.dim, f.dim):
        raise DimensionMismatchError(f"jacobian shape {m.shape} does not match dimension {f.dim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("jacobian contains non-finite entries")
    singvals = np.linalg.svd(m, compute_uv=False)
    if singvals[-1] <= 0 or singvals[0] / singvals[-1] > 1e12:
        raise SingularMatrixError(f"jacobian is singular (condition {singvals[0] / max(singvals[-1], 1e-300):.3e})")
    m_inv = np.linalg.inv(m)
    out = m_inv.T @ f.matrix @ m_inv
    out = 0.5 * (out + out.T)
    if not new_labels:
        new_labels = tuple(f"chi_{i}" for i in range(f.dim))
    return FisherMatrix(labels=tuple(new_labels), matrix=out, kind=f.kind)


class FactorizationResult(NamedTuple):
    is_rank1_consistent: bool
    effective_qfi: float
    residual_norm: float
    eigenvector_angle: float


def factorization_check(f: FisherMatrix, grad_omega: Sequence[float]) -> FactorizationResult:
    """Fit f against I_eff * (grad)(grad)^T and test rank-1 consistency.

    Consistency requires both a small least-squares residual and the top
    eigenvector aligning with the normalized gradient.
    """
    g = np.asarray(grad_omega, dtype=float)
    gnorm2 = float(g @ g)
    if gnorm2 == 0.0:
        raise ValueError("grad_omega must be nonzero")
    effective = float(g @ f.matrix @ g) / gnorm2**2
    residual = float(np.linalg.norm(f.matrix - effective * np.outer(g, g), ord="fro"))
    fnorm = float(np.linalg.norm(f.matrix, ord="fro"))
    if fnorm == 0.0:
        return FactorizationResult(True, 0.0, 0.0, 0.0)
    spectrum = qfim_spectrum(f)
    top = spectrum.eigenvectors[:, 0]
    cosang = abs(float(top @ g)) / math.sqrt(gnorm2)
    angle = math.acos(min(1.0, cosang))
    ok = residual <= 1e-6 * fnorm and angle <= 1e-5
    return FactorizationResult(bool(ok), effective, residual, angle)


def pseudoinverse(f: FisherMatrix, rcond: float = DEFAULT_PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse by spectral truncation (input is symmetric PSD)."""
    values, vectors = np.linalg.eigh(f.matrix)
    vmax = float(np.max(np.abs(values))) if values.size else 0.0
    keep = np.abs(values) > rcond * vmax
    inv = np.zeros_like(values)
    inv[keep] = 1.0 / values[keep]
    out = (vectors * inv) @ vectors.T
    return 0.5 * (out + out.T)


def effective_variance_via_pseudoinverse(pinv: np.ndarray, grad_omega: Sequence[float], m: int) -> float:
    """Error-propagated variance of a scalar function after m measurements."""
    if m < 1:
        raise ValueError(f"measurement count must be >= 1, got {m!r}")
    g = np.asarray(grad_omega, dtype=float)
    return float(g @ (np.asarray(pinv, dtype=float) / m) @ g)
