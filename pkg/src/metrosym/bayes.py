"""Measurement simulation and grid-based Bayesian estimation.

Outcome statistics come from the Born rule on a model state (pure
ground, thermal, or reduced thermal); records are seeded multinomial
draws; the posterior lives on a rectangular grid of log-weights and is
updated by adding log-likelihoods, so sequential batches and a single
merged batch agree exactly.  Coordinate transformations re-express the
posterior in effective coordinates, with ridge extraction and a
precision-scaling scan for the transformed estimand.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    ConfigError,
    DimensionMismatchError,
    PosteriorUnderflowError,
    SingularMatrixError,
)
from .fisher import (
    DerivativeBundle,
    DerivMethod,
    FisherMatrix,
    derivative_bundle,
    ground_derivative_bundle,
    qfim_mixed,
    qfim_pure,
    reduce_bundle,
    reparametrize,
    thermal_derivative_bundle,
)
from .models import (
    ModelKind,
    ModelSpec,
    ObservableName,
    ParameterPoint,
    build_hamiltonian,
    hamiltonian_derivative,
    merged_parameters,
    observable,
    observable_on_sites,
    xy_ring_ground_state_momentum,
)
from .operators import DensityMatrix, HermitianOperator, eig_hermitian, partial_trace, thermal_state

RNG_ALGORITHM = "numpy-pcg64"
LOG_PROBABILITY_FLOOR = math.log(1e-300)
RIDGE_MASS_CUTOFF = 1e-6


# ---------------------------------------------------------------------------
# POVMs and outcome models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PovmSet:
    """Orthogonal projectors summing to the identity, one per physical outcome."""

    projectors: tuple
    outcome_labels: tuple

    def __post_init__(self):
        projs = []
        dim = None
        for p in self.projectors:
            mat = p.matrix if isinstance(p, HermitianOperator) else np.asarray(p, dtype=complex)
            if dim is None:
                dim = mat.shape[0]
            if mat.shape != (dim, dim):
                raise DimensionMismatchError("PovmSet: projector dimensions differ")
            if np.max(np.abs(mat @ mat - mat)) > 1e-10:
                raise DimensionMismatchError("PovmSet: projector not idempotent")
            mat = np.array(mat)
            mat.setflags(write=False)
            projs.append(mat)
        for a in range(len(projs)):
            for b in range(a + 1, len(projs)):
                if np.max(np.abs(projs[a] @ projs[b])) > 1e-10:
                    raise DimensionMismatchError("PovmSet: projectors not mutually orthogonal")
        total = sum(projs)
        if np.max(np.abs(total - np.eye(dim))) > 1e-10:
            raise DimensionMismatchError("PovmSet: projectors do not sum to identity")
        object.__setattr__(self, "projectors", tuple(projs))
        object.__setattr__(self, "outcome_labels", tuple(float(x) for x in self.outcome_labels))

    @property
    def n_outcomes(self) -> int:
        return len(self.projectors)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def stacked(self) -> np.ndarray:
        return np.stack(self.projectors)


def povm_from_observable(op: HermitianOperator, cluster_tol: float = 1e-9) -> PovmSet:
    """Group the eigenprojectors of an observable by eigenvalue.

    Eigenvalues closer than ``cluster_tol`` (scaled by the spectral
    range) count as one outcome, giving the physical outcome set of the
    measurement.
    """
    system = eig_hermitian(op)
    values = system.values
    scale = max(1.0, float(np.max(np.abs(values))))
    projectors = []
    labels = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[start] > cluster_tol * scale:
            block = system.vectors[:, start:i]
            projectors.append(block @ block.conj().T)
            labels.append(float(np.mean(values[start:i])))
            start = i
    return PovmSet(projectors=tuple(projectors), outcome_labels=tuple(labels))


class RecipeKind(enum.Enum):
    GROUND = "GROUND"
    THERMAL = "THERMAL"
    REDUCED_THERMAL = "REDUCED_THERMAL"


@dataclass(frozen=True)
class StateRecipe:
    kind: RecipeKind
    kept_sites: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kept_sites", tuple(int(s) for s in self.kept_sites))
        if self.kind is RecipeKind.REDUCED_THERMAL and not self.kept_sites:
            raise ConfigError("REDUCED_THERMAL recipe requires kept_sites")


@dataclass(frozen=True)
class OutcomeModel:
    spec: ModelSpec
    recipe: StateRecipe
    povm: PovmSet


def site_resolved_magnetization_povm(n_sites: int) -> PovmSet:
    """Rank-1 projectors onto the z product basis, labeled by total magnetization.

    This is the fine-grained realization of a total-magnetization
    measurement (read out every spin, then sum).  For real state
    families — all pure probes here — it attains the quantum information
    matrix, which the eigenspace-grouped 5-outcome version does not.
    """
    dim = 2**n_sites
    projectors = []
    labels = []
    for s in range(dim):
        basis = np.zeros((dim, dim))
        basis[s, s] = 1.0
        projectors.append(basis)
        ups = n_sites - bin(s).count("1")
        labels.append(float(2 * ups - n_sites))
    return PovmSet(projectors=tuple(projectors), outcome_labels=tuple(labels))


def default_povm(spec: ModelSpec, name: ObservableName, recipe: StateRecipe) -> PovmSet:
    """POVM of the named observable on the space the recipe actually exposes.

    Total magnetization uses the site-resolved product basis (see
    ``site_resolved_magnetization_povm``); the two-site observables use
    eigenvalue-grouped projectors, which for those states lose nothing.
    """
    if name is ObservableName.TOTAL_MAGNETIZATION:
        return site_resolved_magnetization_povm(spec.n_sites)
    if recipe.kind is RecipeKind.REDUCED_THERMAL:
        return povm_from_observable(observable_on_sites(name, len(recipe.kept_sites)))
    return povm_from_observable(observable(spec, name))


def _temperature_of(spec: ModelSpec, point: ParameterPoint) -> float:
    params = merged_parameters(spec, point)
    if "T" not in params:
        raise ConfigError("thermal recipe requires a temperature parameter T")
    return float(params["T"])


def state_for(model: OutcomeModel, point: ParameterPoint) -> DensityMatrix:
    """Probe state at a parameter point, per the model's state recipe.

    For the XY ring ground state with even site number, the
    momentum-block assembly is used: it is the analytic even-parity
    solution, is deterministic across degenerate edges of sampling
    grids, and coincides with exact diagonalization in the model's
    validity regime.
    """
    spec = model.spec
    kind = model.recipe.kind
    if kind is RecipeKind.GROUND:
        if spec.kind is ModelKind.XY_RING and spec.n_sites % 2 == 0:
            params = merged_parameters(spec, point)
            psi = xy_ring_ground_state_momentum(
                spec.n_sites, params["lambda"], params["gamma"], params["h"]
            )
            return DensityMatrix(np.outer(psi, psi.conj()))
        from .operators import ground_state

        return ground_state(build_hamiltonian(spec, point))
    if kind is RecipeKind.THERMAL:
        return thermal_state(build_hamiltonian(spec, point), _temperature_of(spec, point))
    if kind is RecipeKind.REDUCED_THERMAL:
        full = thermal_state(build_hamiltonian(spec, point), _temperature_of(spec, point))
        dims = [2] * spec.n_sites
        return partial_trace(full, dims, set(model.recipe.kept_sites))
    raise ConfigError(f"unknown state recipe {kind!r}")


def born_probabilities(model: OutcomeModel, point: ParameterPoint) -> np.ndarray:
    """Outcome probabilities Tr[rho Pi_k] at a parameter point."""
    rho = state_for(model, point)
    return _born_from_state(rho.matrix, model.povm)


def _born_from_state(rho: np.ndarray, povm: PovmSet) -> np.ndarray:
    p = np.real(np.einsum("ij,kji->k", rho, povm.stacked()))
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-10:
        raise DimensionMismatchError(f"Born probabilities sum to {total!r}")
    return p / total


def model_bundle(model: OutcomeModel, point: ParameterPoint,
                 method: DerivMethod = DerivMethod.ANALYTIC) -> DerivativeBundle:
    """State derivatives along the model's free parameters.

    ANALYTIC uses exact Gibbs / perturbation-theory derivatives (the XY
    ring ground state instead differentiates the momentum-block state by
    central differences, matching the state the sampler uses).
    """
    spec = model.spec
    labels = spec.free_params
    if method is DerivMethod.CENTRAL_DIFF or (
        model.recipe.kind is RecipeKind.GROUND
        and spec.kind is ModelKind.XY_RING
        and spec.n_sites % 2 == 0
    ):
        return derivative_bundle(lambda pt: state_for(model, pt), point, labels=labels)

    if model.recipe.kind is RecipeKind.GROUND:
        ham = build_hamiltonian(spec, point)
        dh = [hamiltonian_derivative(spec, point, name) for name in labels]
        return ground_derivative_bundle(ham, dh, labels=labels)

    ham = build_hamiltonian(spec, point)
    temperature = _temperature_of(spec, point)
    t_index = labels.index("T") if "T" in labels else None
    dh = [
        None if (t_index is not None and i == t_index) else hamiltonian_derivative(spec, point, name)
        for i, name in enumerate(labels)
    ]
    bundle = thermal_derivative_bundle(ham, temperature, dh, labels=labels, temperature_index=t_index)
    if model.recipe.kind is RecipeKind.REDUCED_THERMAL:
        bundle = reduce_bundle(bundle, [2] * spec.n_sites, set(model.recipe.kept_sites))
    return bundle


def born_gradients(bundle: DerivativeBundle, povm: PovmSet):
    """(probabilities, per-parameter probability gradients) for a POVM."""
    stacked = povm.stacked()
    p = _born_from_state(bundle.rho.matrix, povm)
    grads = [np.real(np.einsum("ij,kji->k", d, stacked)) for d in bundle.drho]
    return p, grads


def model_qfim(model: OutcomeModel, point: ParameterPoint,
               method: DerivMethod = DerivMethod.ANALYTIC) -> FisherMatrix:
    """Quantum information matrix of the model state at a point."""
    bundle = model_bundle(model, point, method)
    if model.recipe.kind is RecipeKind.GROUND:
        return qfim_pure(bundle.rho, bundle)
    return qfim_mixed(bundle)


# ---------------------------------------------------------------------------
# Measurement records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementRecord:
    counts: tuple
    total: int
    seed: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError(f"negative count in {counts!r}")
        if sum(counts) != self.total:
            raise ValueError(f"counts sum to {sum(counts)}, declared total {self.total}")
        object.__setattr__(self, "counts", counts)

    @staticmethod
    def merged(records: Sequence["MeasurementRecord"]) -> "MeasurementRecord":
        if not records:
            raise ValueError("cannot merge zero records")
        counts = np.sum([r.counts for r in records], axis=0)
        return MeasurementRecord(counts=tuple(int(c) for c in counts),
                                 total=int(sum(r.total for r in records)),
                                 seed=records[0].seed)

    def to_json_dict(self, outcome_labels: Sequence[float] = ()) -> dict:
        out = {"seed": int(self.seed), "M": int(self.total), "counts": list(self.counts)}
        if outcome_labels:
            out["outcome_labels"] = [float(x) for x in outcome_labels]
        return out


def sample_record(probabilities: Sequence[float], m: int, seed: int) -> MeasurementRecord:
    """Seeded multinomial draw; identical (seed, probabilities, m) give identical counts."""
    if m < 1:
        raise ValueError(f"measurement count must be >= 1, got {m!r}")
    p = np.asarray(probabilities, dtype=float)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(m, p / p.sum())
    return MeasurementRecord(counts=tuple(int(c) for c in counts), total=int(m), seed=int(seed))


def sample_batches(probabilities: Sequence[float], m_total: int, batch_size: int,
                   seed: int) -> list:
    """Sequential batches from one seeded stream, covering m_total measurements."""
    if m_total < 1 or batch_size < 1:
        raise ValueError("m_total and batch_size must be >= 1")
    p = np.asarray(probabilities, dtype=float)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    records = []
    remaining = m_total
    while remaining > 0:
        m = min(batch_size, remaining)
        counts = rng.multinomial(m, p)
        records.append(MeasurementRecord(counts=tuple(int(c) for c in counts), total=int(m), seed=int(seed)))
        remaining -= m
    return records


def log_likelihood(record: MeasurementRecord, probabilities: Sequence[float]) -> float:
    """Multinomial log-likelihood without the count-multiplicity constant.

    That constant does not depend on the parameters, so it cancels in
    the posterior normalization; dropping it avoids factorial overflow.
    """
    p = np.asarray(probabilities, dtype=float)
    counts = np.asarray(record.counts, dtype=float)
    if p.shape != counts.shape:
        raise DimensionMismatchError(f"{len(counts)} counts vs {len(p)} probabilities")
    logs = np.log(np.clip(p, 1e-300, None))
    return float(counts @ logs)


# ---------------------------------------------------------------------------
# Posterior grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridAxis:
    minimum: float
    maximum: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2 or not self.maximum > self.minimum:
            raise ConfigError(f"invalid grid axis ({self.minimum}, {self.maximum}, {self.n_points})")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.minimum, self.maximum, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.maximum - self.minimum) / (self.n_points - 1)


def _trapezoid_weights(axis: GridAxis) -> np.ndarray:
    w = np.full(axis.n_points, axis.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def grid_cell_weights(axes: Sequence[GridAxis]) -> np.ndarray:
    """Trapezoidal integration weights over the full grid."""
    out = _trapezoid_weights(axes[0])
    for ax in axes[1:]:
        out = np.multiply.outer(out, _trapezoid_weights(ax))
    return out


@dataclass(frozen=True)
class PosteriorGrid:
    """Raw log-weights on a rectangular grid plus the log partition value.

    ``densities`` divides out the partition value, so the trapezoidal
    integral of the returned array is one.
    """

    axes: tuple
    log_weights: np.ndarray
    log_norm: float

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float)
        if np.any(np.isnan(lw)):
            raise PosteriorUnderflowError("posterior contains NaN log-weights")
        lw.setflags(write=False)
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "log_weights", lw)

    @property
    def densities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_norm)

    @staticmethod
    def from_log_weights(axes: Sequence[GridAxis], log_weights: np.ndarray) -> "PosteriorGrid":
        axes = tuple(axes)
        log_weights = np.asarray(log_weights, dtype=float)
        expected = tuple(ax.n_points for ax in axes)
        if log_weights.shape != expected:
            raise DimensionMismatchError(f"log-weight shape {log_weights.shape} vs grid {expected}")
        return PosteriorGrid(axes=axes, log_weights=log_weights,
                             log_norm=_log_partition(axes, log_weights))


def _log_partition(axes: Sequence[GridAxis], log_weights: np.ndarray) -> float:
    peak = float(np.max(log_weights))
    if not np.isfinite(peak):
        raise PosteriorUnderflowError("all posterior cells underflowed")
    cells = grid_cell_weights(axes)
    return peak + math.log(float(np.sum(cells * np.exp(log_weights - peak))))


def uniform_prior(axes: Sequence[GridAxis]) -> PosteriorGrid:
    axes = tuple(axes)
    volume = 1.0
    for ax in axes:
        volume *= ax.maximum - ax.minimum
    shape = tuple(ax.n_points for ax in axes)
    return PosteriorGrid.from_log_weights(axes, np.full(shape, -math.log(volume)))


def _xy_ground_table(model: OutcomeModel, axes) -> np.ndarray:
    """Vectorized Born table for the XY ring ground state over a 2d grid."""
    from .models import xy_ring_block_amplitudes, xy_ring_block_basis

    spec = model.spec
    grid0, grid1 = np.meshgrid(axes[0].values, axes[1].values, indexing="ij")
    fields = {name: np.full(grid0.shape, value) for name, value in spec.fixed_params.items()}
    fields[spec.free_params[0]] = grid0
    fields[spec.free_params[1]] = grid1
    amps = xy_ring_block_amplitudes(spec.n_sites, fields["lambda"], fields["gamma"], fields["h"])
    basis = xy_ring_block_basis(spec.n_sites)
    block_povm = np.stack([basis.conj() @ p @ basis.T for p in model.povm.projectors])
    table = np.einsum("xya,kab,xyb->xyk", amps.conj(), block_povm, amps).real
    table = np.clip(table, 0.0, None)
    return table / table.sum(axis=-1, keepdims=True)


def probability_table(model: OutcomeModel, axes: Sequence[GridAxis], threads: int = 1) -> np.ndarray:
    """Born probabilities at every grid cell, shape (*grid, n_outcomes).

    Cells where the state is undefined (degenerate ground state) carry
    zero probability for every outcome and are excluded by the
    likelihood floor.  Worker count never changes the values: rows are
    assembled in index order.
    """
    from .errors import DegenerateGroundStateError

    axes = tuple(axes)
    if len(axes) != 2:
        raise DimensionMismatchError("probability tables are built for two-parameter grids")
    if (
        model.recipe.kind is RecipeKind.GROUND
        and model.spec.kind is ModelKind.XY_RING
        and model.spec.n_sites % 2 == 0
    ):
        return _xy_ground_table(model, axes)
    vals0 = axes[0].values
    vals1 = axes[1].values
    n_out = model.povm.n_outcomes

    def row(i: int) -> np.ndarray:
        out = np.zeros((len(vals1), n_out))
        for j, y in enumerate(vals1):
            point = ParameterPoint((vals0[i], y))
            try:
                out[j] = born_probabilities(model, point)
            except DegenerateGroundStateError:
                out[j] = 0.0
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(len(vals0))))
    else:
        rows = [row(i) for i in range(len(vals0))]
    return np.stack(rows)


def posterior_update(prior: PosteriorGrid, record: MeasurementRecord,
                     model: Optional[OutcomeModel] = None,
                     table: Optional[np.ndarray] = None) -> PosteriorGrid:
    """Add the record's log-likelihood cell-wise and recompute the normalization.

    Updates are additive in log space: applying records r1 then r2
    yields exactly the same raw log-weights as one merged record.
    ``table`` short-circuits the per-cell Born evaluation when the same
    model/grid combination is reused.
    """
    if table is None:
        if model is None:
            raise ConfigError("posterior_update needs either a model or a probability table")
        table = probability_table(model, prior.axes)
    expected = tuple(ax.n_points for ax in prior.axes) + (len(record.counts),)
    if table.shape != expected:
        raise DimensionMismatchError(f"table shape {table.shape}, expected {expected}")
    counts = np.asarray(record.counts, dtype=float)
    log_table = np.log(np.clip(table, 1e-300, None))
    log_weights = prior.log_weights + log_table @ counts
    return PosteriorGrid.from_log_weights(prior.axes, log_weights)


def marginalize(posterior: PosteriorGrid, axis_index: int):
    """(axis values, univariate density) after integrating out the other axis."""
    if len(posterior.axes) != 2:
        raise DimensionMismatchError("marginalize expects a two-parameter grid")
    other = 1 - axis_index
    weights = _trapezoid_weights(posterior.axes[other])
    dens = posterior.densities
    marg = np.tensordot(dens, weights, axes=([other], [0]))
    return posterior.axes[axis_index].values, marg


@dataclass(frozen=True)
class MomentSummary:
    means: tuple
    variances: tuple
    covariance: np.ndarray


def bayes_mean_and_variance(posterior: PosteriorGrid) -> MomentSummary:
    """Trapezoidal mean, variance, and covariance of the posterior."""
    cells = grid_cell_weights(posterior.axes)
    dens = posterior.densities
    weight = cells * dens
    total = float(np.sum(weight))
    grids = np.meshgrid(*[ax.values for ax in posterior.axes], indexing="ij")
    means = [float(np.sum(weight * g)) / total for g in grids]
    d = len(posterior.axes)
    cov = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            val = float(np.sum(weight * (grids[i] - means[i]) * (grids[j] - means[j]))) / total
            cov[i, j] = cov[j, i] = val
    return MomentSummary(means=tuple(means), variances=tuple(np.diag(cov)), covariance=cov)


def bvm_reference(point_true: ParameterPoint, qfim: FisherMatrix, m: int):
    """Asymptotic Gaussian (mean, covariance) the posterior approaches.

    Only defined for invertible information matrices; singular problems
    have no such limit and raise.
    """
    matrix = qfim.matrix
    eigs = np.linalg.eigvalsh(matrix)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > 1e10:
        raise SingularMatrixError(
            "information matrix is singular or near-singular: no Gaussian posterior limit"
        )
    cov = np.linalg.inv(m * matrix)
    return np.asarray(point_true.values, dtype=float), cov


# ---------------------------------------------------------------------------
# Coordinate transformations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoordinateMap:
    """Invertible map (x0, x1) -> (u, v) between grid coordinates.

    ``jacobian_det(u, v)`` is |d(x0, x1)/d(u, v)|, the factor that keeps
    transformed densities normalized.  ``grad_forward`` returns the 2x2
    matrix d(u, v)/d(x0, x1) for information-matrix re-parametrization.
    """

    name: str
    forward: Callable
    inverse: Callable
    jacobian_det: Callable
    grad_forward: Callable


def identity_map() -> CoordinateMap:
    return CoordinateMap(
        name="identity",
        forward=lambda x0, x1: (x0, x1),
        inverse=lambda u, v: (u, v),
        jacobian_det=lambda u, v: np.ones_like(np.asarray(u, dtype=float)),
        grad_forward=lambda x0, x1: np.eye(2),
    )


def hyperbolic_ratio_map(numerator_axis: int = 0) -> CoordinateMap:
    """u = log sqrt(a/b), v = sqrt(a b) with a the numerator-axis value.

    The estimand u parametrizes the ratio of the two grid coordinates;
    v moves along ratio contours.
    """
    num = numerator_axis

    def fwd(x0, x1):
        a, b = (x0, x1) if num == 0 else (x1, x0)
        return 0.5 * np.log(a / b), np.sqrt(a * b)

    def inv(u, v):
        a = v * np.exp(u)
        b = v * np.exp(-u)
        return (a, b) if num == 0 else (b, a)

    def jac(u, v):
        return 2.0 * np.abs(np.asarray(v, dtype=float)) * np.ones_like(np.asarray(u, dtype=float))

    def grad(x0, x1):
        a, b = (x0, x1) if num == 0 else (x1, x0)
        du = np.array([0.5 / a, -0.5 / b])
        dv = np.array([0.5 * math.sqrt(b / a), 0.5 * math.sqrt(a / b)])
        if num != 0:
            du = du[::-1]
            dv = dv[::-1]
        return np.array([du, dv])

    return CoordinateMap(f"hyperbolic_ratio(numerator_axis={num})", fwd, inv, jac, grad)


def hyperbolic_product_map(numerator_axis: int = 0) -> CoordinateMap:
    """u = sqrt(a b), v = log sqrt(a/b): the estimand is the geometric mean."""
    base = hyperbolic_ratio_map(numerator_axis)

    def fwd(x0, x1):
        r, p = base.forward(x0, x1)
        return p, r

    def inv(u, v):
        return base.inverse(v, u)

    def jac(u, v):
        return 2.0 * np.abs(np.asarray(u, dtype=float)) * np.ones_like(np.asarray(v, dtype=float))

    def grad(x0, x1):
        g = base.grad_forward(x0, x1)
        return g[::-1]

    return CoordinateMap(f"hyperbolic_product(numerator_axis={numerator_axis})", fwd, inv, jac, grad)


def transform_posterior(posterior: PosteriorGrid, cmap: CoordinateMap,
                        target_axes: Sequence[GridAxis],
                        include_jacobian: bool = True) -> PosteriorGrid:
    """Re-express the posterior density on a uniform grid in map coordinates.

    Density at (u, v) is the bilinear interpolation of the source
    density at the inverse image, times the inverse-map Jacobian when
    ``include_jacobian`` (the density-correct convention).  Inverse
    images outside the source grid get zero weight.
    """
    if len(posterior.axes) != 2 or len(target_axes) != 2:
        raise DimensionMismatchError("transform_posterior expects two-parameter grids")
    target_axes = tuple(target_axes)
    interp = RegularGridInterpolator(
        (posterior.axes[0].values, posterior.axes[1].values),
        posterior.densities,
        method="linear",
        bounds_error=False,
        fill_value=0.0,
    )
    uu, vv = np.meshgrid(target_axes[0].values, target_axes[1].values, indexing="ij")
    x0, x1 = cmap.inverse(uu, vv)
    dens = interp(np.stack([x0.ravel(), x1.ravel()], axis=-1)).reshape(uu.shape)
    if include_jacobian:
        dens = dens * cmap.jacobian_det(uu, vv)
    log_weights = np.log(np.clip(dens, 1e-300, None))
    return PosteriorGrid.from_log_weights(target_axes, log_weights)


def ridge_extract(posterior: PosteriorGrid, sweep_axis: int) -> list:
    """(sweep value, argmax along the other axis) for columns carrying mass.

    Columns whose integrated mass falls below a fixed fraction of the
    heaviest column are skipped; argmax ties break to the lower index.
    """
    if len(posterior.axes) != 2:
        raise DimensionMismatchError("ridge_extract expects a two-parameter grid")
    other = 1 - sweep_axis
    dens = posterior.densities
    weights = _trapezoid_weights(posterior.axes[other])
    mass = np.tensordot(dens, weights, axes=([other], [0]))
    cutoff = RIDGE_MASS_CUTOFF * float(np.max(mass))
    sweep_values = posterior.axes[sweep_axis].values
    other_values = posterior.axes[other].values
    out = []
    for idx, m in enumerate(mass):
        if m <= cutoff:
            continue
        column = dens[idx, :] if sweep_axis == 0 else dens[:, idx]
        out.append((float(sweep_values[idx]), float(other_values[int(np.argmax(column))])))
    return out


# ---------------------------------------------------------------------------
# Effective-precision scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanRow:
    m: int
    inv_variance: float
    crb_reference: float


@dataclass(frozen=True)
class ScanResult:
    rows: tuple
    estimand_qfi: float
    final_posterior: PosteriorGrid          # transformed, at the largest M
    final_marginal: tuple                   # (u values, density)


def effective_qfi_reference(model: OutcomeModel, truth: ParameterPoint, cmap: CoordinateMap,
                            method: DerivMethod = DerivMethod.ANALYTIC) -> float:
    """Single-parameter information for the map's estimand coordinate at the truth."""
    qfim = model_qfim(model, truth, method)
    jac = cmap.grad_forward(truth.values[0], truth.values[1])
    transformed = reparametrize(qfim, jac, new_labels=("u", "v"))
    return float(transformed.matrix[0, 0])


def effective_crb_scan(
    model: OutcomeModel,
    cmap: CoordinateMap,
    truth: ParameterPoint,
    m_schedule: Sequence[int],
    seeds: Sequence[int],
    source_axes: Sequence[GridAxis],
    target_axes: Sequence[GridAxis],
    batch_size: int = 100,
    table: Optional[np.ndarray] = None,
    method: DerivMethod = DerivMethod.ANALYTIC,
) -> ScanResult:
    """Precision of the transformed estimand vs the scaling reference M * I(u).

    For each entry of the schedule: draw a seeded record at the truth,
    update a fresh uniform prior, transform to map coordinates,
    marginalize out the second coordinate, and report the inverse
    variance next to the information-matrix reference.
    """
    if len(seeds) != len(m_schedule):
        raise ConfigError("seeds and m_schedule must have equal length")
    if table is None:
        table = probability_table(model, source_axes)
    p_true = born_probabilities(model, truth)
    info_u = effective_qfi_reference(model, truth, cmap, method)
    prior = uniform_prior(source_axes)

    rows = []
    final_posterior = None
    final_marginal = None
    for m_total, seed in zip(m_schedule, seeds):
        records = sample_batches(p_true, int(m_total), batch_size, int(seed))
        merged = MeasurementRecord.merged(records)
        posterior = posterior_update(prior, merged, table=table)
        transformed = transform_posterior(posterior, cmap, target_axes)
        u_values, u_density = marginalize(transformed, 0)
        total = float(np.trapezoid(u_density, u_values))
        mean = float(np.trapezoid(u_density * u_values, u_values)) / total
        var = float(np.trapezoid(u_density * (u_values - mean) ** 2, u_values)) / total
        rows.append(ScanRow(m=int(m_total), inv_variance=1.0 / var,
                            crb_reference=float(m_total) * info_u))
        final_posterior = transformed
        final_marginal = (u_values, u_density / total)
    return ScanResult(rows=tuple(rows), estimand_qfi=info_u,
                      final_posterior=final_posterior, final_marginal=final_marginal)


def moment_test(values: np.ndarray, density: np.ndarray):
    """(skewness, excess kurtosis) of a sampled univariate density."""
    total = float(np.trapezoid(density, values))
    mean = float(np.trapezoid(density * values, values)) / total
    centered = values - mean
    var = float(np.trapezoid(density * centered**2, values)) / total
    mu3 = float(np.trapezoid(density * centered**3, values)) / total
    mu4 = float(np.trapezoid(density * centered**4, values)) / total
    return mu3 / var**1.5, mu4 / var**2 - 3.0
