"""Spin models, observables, and closed-form information-matrix references.

Four families of spin-1/2 probes are covered:

* XY ring: periodic nearest-neighbour couplings ``lambda`` with anisotropy
  ``gamma`` in a transverse field ``h``.
* XY all-to-all: the collective-spin version of the same model.
* Heisenberg chain: open chain with a distinguished central bond ``K``
  inside outer bonds ``J``.
* Heisenberg trimer: triangle with bond ``K`` between spins 1 and 2 and
  bonds ``J`` to spin 3, optionally in a Zeeman field ``B``.

Alongside the Hamiltonian builders, this module carries every analytic
reference used by the test oracles: the free-fermion dispersion and
momentum-block ground state of the ring, closed-form information
matrices for the ring and the three-spin system, the trimer multiplet
populations and their contour lines, and the generic two-level closed
form.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .operators import HermitianOperator, eig_hermitian

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

PARAMETER_NAMES = frozenset({"lambda", "gamma", "h", "J", "K", "T", "B"})


class ModelKind(enum.Enum):
    XY_RING = "XY_RING"
    XY_ALL2ALL = "XY_ALL2ALL"
    HEISENBERG_CHAIN = "HEISENBERG_CHAIN"
    HEISENBERG_TRIMER = "HEISENBERG_TRIMER"


class ObservableName(enum.Enum):
    TOTAL_MAGNETIZATION = "TOTAL_MAGNETIZATION"
    CENTRAL_SPIN_CORRELATION = "CENTRAL_SPIN_CORRELATION"
    S12_SQUARED = "S12_SQUARED"


class QfimForm(enum.Enum):
    RING_LAMBDA_GAMMA = "RING_LAMBDA_GAMMA"
    RING_LAMBDA_H = "RING_LAMBDA_H"
    N3_LAMBDA_GAMMA = "N3_LAMBDA_GAMMA"
    TRIMER_POPULATIONS = "TRIMER_POPULATIONS"
    TWO_LEVEL_PQ = "TWO_LEVEL_PQ"


_KIND_PARAMETERS = {
    ModelKind.XY_RING: frozenset({"lambda", "gamma", "h", "T"}),
    ModelKind.XY_ALL2ALL: frozenset({"lambda", "gamma", "h", "T"}),
    ModelKind.HEISENBERG_CHAIN: frozenset({"J", "K", "T"}),
    ModelKind.HEISENBERG_TRIMER: frozenset({"J", "K", "T", "B"}),
}


class ModelRegimeWarning(UserWarning):
    """Parameters fall outside the regime where the model's guarantees are validated."""


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    n_sites: int
    fixed_params: dict
    free_params: tuple

    def __post_init__(self):
        object.__setattr__(self, "free_params", tuple(self.free_params))
        object.__setattr__(self, "fixed_params", dict(self.fixed_params))
        if not self.free_params:
            raise ConfigError("ModelSpec: free_params must be non-empty")
        allowed = _KIND_PARAMETERS[self.kind]
        for name in list(self.free_params) + list(self.fixed_params):
            if name not in PARAMETER_NAMES:
                raise ConfigError(f"ModelSpec: unknown parameter name {name!r}")
            if name not in allowed:
                raise ConfigError(f"ModelSpec: parameter {name!r} not used by {self.kind.value}")
        if len(set(self.free_params)) != len(self.free_params):
            raise ConfigError("ModelSpec: duplicate free parameter")
        overlap = set(self.free_params) & set(self.fixed_params)
        if overlap:
            raise ConfigError(f"ModelSpec: parameters both free and fixed: {sorted(overlap)}")
        kind, n = self.kind, self.n_sites
        if kind in (ModelKind.XY_RING, ModelKind.XY_ALL2ALL) and n < 3:
            raise ConfigError(f"{kind.value} requires n_sites >= 3, got {n}")
        if kind is ModelKind.HEISENBERG_TRIMER and n != 3:
            raise ConfigError(f"{kind.value} requires n_sites = 3, got {n}")
        if kind is ModelKind.HEISENBERG_CHAIN and (n < 4 or n % 2):
            raise ConfigError(f"{kind.value} requires even n_sites >= 4, got {n}")

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "n_sites": self.n_sites,
            "fixed_params": dict(self.fixed_params),
            "free_params": list(self.free_params),
        }

    @staticmethod
    def from_dict(data: dict) -> "ModelSpec":
        return ModelSpec(
            kind=ModelKind(data["kind"]),
            n_sites=int(data["n_sites"]),
            fixed_params=dict(data.get("fixed_params", {})),
            free_params=tuple(data["free_params"]),
        )


@dataclass(frozen=True)
class ParameterPoint:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def displaced(self, index: int, delta: float) -> "ParameterPoint":
        vals = list(self.values)
        vals[index] += delta
        return ParameterPoint(tuple(vals))


def merged_parameters(spec: ModelSpec, point: ParameterPoint) -> dict:
    """Fixed parameters overlaid with the free values at ``point``."""
    if len(point.values) != len(spec.free_params):
        raise ConfigError(
            f"ParameterPoint has {len(point.values)} values for {len(spec.free_params)} free parameters"
        )
    params = dict(spec.fixed_params)
    params.update(zip(spec.free_params, point.values))
    return params


def _require(params: dict, names: tuple, kind: ModelKind) -> list:
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"{kind.value}: missing parameters {missing}")
    return [float(params[n]) for n in names]


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-site operator at ``site`` of an ``n_sites`` register."""
    out = np.array([[1.0 + 0j]])
    for j in range(n_sites):
        out = np.kron(out, op if j == site else IDENTITY_2)
    return out


def collective_spin(op: np.ndarray, n_sites: int) -> np.ndarray:
    """S_alpha = sum_j sigma_alpha^j / 2."""
    return sum(site_operator(op, j, n_sites) for j in range(n_sites)) / 2.0


def _heisenberg_bond(i: int, j: int, n_sites: int) -> np.ndarray:
    """sigma_i . sigma_j summed over x, y, z."""
    return sum(
        site_operator(p, i, n_sites) @ site_operator(p, j, n_sites)
        for p in (PAULI_X, PAULI_Y, PAULI_Z)
    )


_STRUCTURE_CACHE: dict = {}


def hamiltonian_structure(kind: ModelKind, n: int) -> tuple:
    """Parameter-independent coupling matrices for H = sum_t coeff_t(params) * mat_t.

    Cached per (kind, n_sites): grid scans rebuild Hamiltonians tens of
    thousands of times and only the scalar coefficients change.
    """
    key = (kind, n)
    cached = _STRUCTURE_CACHE.get(key)
    if cached is not None:
        return cached

    if kind in (ModelKind.XY_RING, ModelKind.XY_ALL2ALL):
        if kind is ModelKind.XY_RING:
            xx = np.zeros((2**n, 2**n), dtype=complex)
            yy = np.zeros((2**n, 2**n), dtype=complex)
            for j in range(n):
                jp = (j + 1) % n
                xx += site_operator(PAULI_X, j, n) @ site_operator(PAULI_X, jp, n)
                yy += site_operator(PAULI_Y, j, n) @ site_operator(PAULI_Y, jp, n)
            xx *= 0.5
            yy *= 0.5
            field = sum(site_operator(PAULI_Z, j, n) for j in range(n)).astype(complex)
        else:
            sx_c = collective_spin(PAULI_X, n)
            sy_c = collective_spin(PAULI_Y, n)
            xx = sx_c @ sx_c
            yy = sy_c @ sy_c
            field = 2.0 * collective_spin(PAULI_Z, n)
        mats = (xx, yy, field)
    elif kind is ModelKind.HEISENBERG_CHAIN:
        central = n // 2 - 1
        outer = np.zeros((2**n, 2**n), dtype=complex)
        for bond in range(n - 1):
            if bond != central:
                outer += _heisenberg_bond(bond, bond + 1, n)
        mats = (outer, _heisenberg_bond(central, central + 1, n).astype(complex))
    elif kind is ModelKind.HEISENBERG_TRIMER:
        mats = (
            _heisenberg_bond(0, 1, 3) / 4.0,
            (_heisenberg_bond(0, 2, 3) + _heisenberg_bond(1, 2, 3)) / 4.0,
            collective_spin(PAULI_Z, 3).astype(complex),
        )
    else:
        raise ConfigError(f"unsupported model kind {kind!r}")
    for m in mats:
        m.setflags(write=False)
    _STRUCTURE_CACHE[key] = mats
    return mats


def _structure_coefficients(kind: ModelKind, params: dict) -> tuple:
    if kind in (ModelKind.XY_RING, ModelKind.XY_ALL2ALL):
        lam, gam, h = _require(params, ("lambda", "gamma", "h"), kind)
        return lam * (1 + gam), lam * (1 - gam), h
    if kind is ModelKind.HEISENBERG_CHAIN:
        jc, kc = _require(params, ("J", "K"), kind)
        return jc, kc
    if kind is ModelKind.HEISENBERG_TRIMER:
        jc, kc = _require(params, ("J", "K"), kind)
        return kc, jc, float(params.get("B", 0.0))
    raise ConfigError(f"unsupported model kind {kind!r}")


def build_hamiltonian(spec: ModelSpec, point: ParameterPoint) -> HermitianOperator:
    params = merged_parameters(spec, point)
    kind = spec.kind
    if kind is ModelKind.XY_ALL2ALL:
        lam, gam, h = _require(params, ("lambda", "gamma", "h"), kind)
        if not (abs(h - 1.0) < 1e-12 and lam > 0 and gam > 0):
            warnings.warn(
                "all-to-all XY validated only for h = 1 and lambda, gamma > 0 "
                "(extremal-spin ground sector)",
                ModelRegimeWarning,
                stacklevel=2,
            )
    mats = hamiltonian_structure(kind, spec.n_sites)
    coeffs = _structure_coefficients(kind, params)
    mat = sum(c * m for c, m in zip(coeffs, mats))
    return HermitianOperator(mat)


def hamiltonian_derivative(spec: ModelSpec, point: ParameterPoint, name: str) -> np.ndarray:
    """Exact dH/d(name) at ``point``.  Temperature is not a Hamiltonian parameter."""
    params = merged_parameters(spec, point)
    kind = spec.kind
    if name == "T":
        raise ValueError("temperature parametrizes the state, not the Hamiltonian")
    if name not in _KIND_PARAMETERS[kind]:
        raise ConfigError(f"{kind.value}: unknown parameter {name!r}")
    mats = hamiltonian_structure(kind, spec.n_sites)

    if kind in (ModelKind.XY_RING, ModelKind.XY_ALL2ALL):
        lam, gam, _h = _require(params, ("lambda", "gamma", "h"), kind)
        xx, yy, field = mats
        if name == "lambda":
            return (1 + gam) * xx + (1 - gam) * yy
        if name == "gamma":
            return lam * (xx - yy)
        if name == "h":
            return np.array(field)

    if kind is ModelKind.HEISENBERG_CHAIN:
        if name == "J":
            return np.array(mats[0])
        if name == "K":
            return np.array(mats[1])

    if kind is ModelKind.HEISENBERG_TRIMER:
        if name == "K":
            return np.array(mats[0])
        if name == "J":
            return np.array(mats[1])
        if name == "B":
            return np.array(mats[2])

    raise ConfigError(f"{kind.value}: no derivative for parameter {name!r}")


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

def two_site_correlation_matrix() -> np.ndarray:
    """sigma . sigma on two spins (4x4): eigenvalues -3 (singlet), +1 (triplet)."""
    return sum(np.kron(p, p) for p in (PAULI_X, PAULI_Y, PAULI_Z))


def two_site_s12_squared_matrix() -> np.ndarray:
    """(S_1 + S_2)^2 on two spins (4x4): eigenvalues 0 (singlet), 2 (triplet)."""
    return 1.5 * np.eye(4, dtype=complex) + 0.5 * two_site_correlation_matrix()


_OBSERVABLE_KINDS = {
    ObservableName.TOTAL_MAGNETIZATION: (ModelKind.XY_RING, ModelKind.XY_ALL2ALL),
    ObservableName.CENTRAL_SPIN_CORRELATION: (ModelKind.HEISENBERG_CHAIN,),
    ObservableName.S12_SQUARED: (ModelKind.HEISENBERG_TRIMER,),
}


def observable(spec: ModelSpec, name: ObservableName) -> HermitianOperator:
    """Measurement operator on the full Hilbert space of the model."""
    if spec.kind not in _OBSERVABLE_KINDS[name]:
        raise ConfigError(f"observable {name.value} incompatible with model {spec.kind.value}")
    n = spec.n_sites
    if name is ObservableName.TOTAL_MAGNETIZATION:
        return HermitianOperator(sum(site_operator(PAULI_Z, j, n) for j in range(n)))
    if name is ObservableName.CENTRAL_SPIN_CORRELATION:
        i = n // 2 - 1
        return HermitianOperator(_embed_two_site(two_site_correlation_matrix(), i, i + 1, n))
    if name is ObservableName.S12_SQUARED:
        return HermitianOperator(_embed_two_site(two_site_s12_squared_matrix(), 0, 1, n))
    raise ConfigError(f"unknown observable {name!r}")


def observable_on_sites(name: ObservableName, n_kept: int) -> HermitianOperator:
    """The same measurement restricted to a reduced register of kept sites."""
    if n_kept != 2:
        raise DimensionMismatchError(f"reduced observables are two-site, got {n_kept} kept sites")
    if name is ObservableName.CENTRAL_SPIN_CORRELATION:
        return HermitianOperator(two_site_correlation_matrix())
    if name is ObservableName.S12_SQUARED:
        return HermitianOperator(two_site_s12_squared_matrix())
    raise ConfigError(f"observable {name.value} has no two-site reduction")


def _embed_two_site(op4: np.ndarray, i: int, j: int, n_sites: int) -> np.ndarray:
    if j != i + 1:
        raise DimensionMismatchError("two-site embedding expects adjacent sites")
    left = np.eye(2**i, dtype=complex)
    right = np.eye(2 ** (n_sites - j - 1), dtype=complex)
    return np.kron(np.kron(left, op4), right)


# ---------------------------------------------------------------------------
# XY ring free-fermion solution
# ---------------------------------------------------------------------------

def xy_ring_momenta(n_sites: int) -> list:
    """Antiperiodic momenta pi(2n+1)/N of the even-parity sector."""
    return [math.pi * (2 * m + 1) / n_sites for m in range(n_sites // 2)]


def xy_ring_dispersion(n_sites: int, lam: float, gamma: float, h: float) -> list:
    """(k, epsilon_k) pairs with epsilon_k = 2 sqrt((h + lam cos k)^2 + lam^2 gamma^2 sin^2 k)."""
    if n_sites < 3:
        raise ConfigError(f"dispersion needs n_sites >= 3, got {n_sites}")
    out = []
    for k in xy_ring_momenta(n_sites):
        eps = 2.0 * math.sqrt((h + lam * math.cos(k)) ** 2 + (lam * gamma * math.sin(k)) ** 2)
        out.append((k, eps))
    return out


def _jw_annihilator(site: int, n_sites: int) -> np.ndarray:
    lower = np.array([[0, 0], [1, 0]], dtype=complex)
    out = np.array([[1.0 + 0j]])
    for j in range(n_sites):
        if j < site:
            out = np.kron(out, -PAULI_Z)
        elif j == site:
            out = np.kron(out, lower)
        else:
            out = np.kron(out, IDENTITY_2)
    return out


_PAIR_OPERATOR_CACHE: dict = {}


def _pair_operators(n_sites: int) -> list:
    """Parameter-independent pair creation operators, one per positive momentum."""
    cached = _PAIR_OPERATOR_CACHE.get(n_sites)
    if cached is not None:
        return cached
    annihilators = [_jw_annihilator(j, n_sites) for j in range(n_sites)]

    def creation_momentum(k: float) -> np.ndarray:
        phases = np.exp(1j * k * np.arange(n_sites)) / math.sqrt(n_sites)
        return sum(ph * c.conj().T for ph, c in zip(phases, annihilators))

    pairs = [creation_momentum(k) @ creation_momentum(-k) for k in xy_ring_momenta(n_sites)]
    _PAIR_OPERATOR_CACHE[n_sites] = pairs
    return pairs


def xy_ring_ground_state_momentum(n_sites: int, lam: float, gamma: float, h: float) -> np.ndarray:
    """Ground-state vector assembled from two-level momentum blocks.

    Valid for even N; each antiperiodic momentum pair (k, -k) carries a
    pair amplitude tan(theta_k/2) with theta_k = atan2(-2 lam gamma sin k,
    2(h + lam cos k)).  For odd N this falls back to full diagonalization.
    Describes the even-fermion-parity state; at strong coupling and small
    anisotropy the true finite-ring ground state can cross into the odd
    sector, outside the regime treated here.
    """
    if n_sites % 2:
        spec = ModelSpec(ModelKind.XY_RING, n_sites, {"gamma": gamma, "h": h}, ("lambda",))
        ham = build_hamiltonian(spec, ParameterPoint((lam,)))
        system = eig_hermitian(ham)
        return np.array(system.vectors[:, 0])

    psi = np.zeros(2**n_sites, dtype=complex)
    psi[-1] = 1.0  # all spins down: the fermionic vacuum
    for k, pair in zip(xy_ring_momenta(n_sites), _pair_operators(n_sites)):
        a = 2.0 * (h + lam * math.cos(k))
        b = 2.0 * gamma * lam * math.sin(k)
        theta = math.atan2(-b, a)
        psi = math.cos(theta / 2) * psi + 1j * math.sin(theta / 2) * (pair @ psi)
    return psi / np.linalg.norm(psi)


_BLOCK_BASIS_CACHE: dict = {}


def xy_ring_block_basis(n_sites: int) -> np.ndarray:
    """Pair-occupation product basis spanning the even-parity ground manifold.

    Row index runs over occupation bitmasks of the N/2 momentum pairs
    (bit m set = pair at momentum pi(2m+1)/N filled); every ground state
    of the ring is a combination of these 2**(N/2) fixed vectors, which
    is what makes grid-wide state evaluation a single matrix product.
    """
    if n_sites % 2:
        raise DimensionMismatchError("block basis exists for even site numbers only")
    cached = _BLOCK_BASIS_CACHE.get(n_sites)
    if cached is not None:
        return cached
    pairs = _pair_operators(n_sites)
    n_blocks = n_sites // 2
    vac = np.zeros(2**n_sites, dtype=complex)
    vac[-1] = 1.0
    basis = np.zeros((2**n_blocks, 2**n_sites), dtype=complex)
    for mask in range(2**n_blocks):
        vec = vac
        for m in range(n_blocks):
            if mask & (1 << m):
                vec = pairs[m] @ vec
        basis[mask] = vec
    basis.setflags(write=False)
    _BLOCK_BASIS_CACHE[n_sites] = basis
    return basis


def xy_ring_block_amplitudes(n_sites: int, lam, gamma, h) -> np.ndarray:
    """Amplitudes on the block basis for arrays of couplings (broadcast together).

    Output shape is broadcast(lam, gamma, h) + (2**(N/2),); combining
    with ``xy_ring_block_basis`` gives the ground-state vectors.
    """
    lam = np.asarray(lam, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    h = np.asarray(h, dtype=float)
    shape = np.broadcast(lam, gamma, h).shape
    n_blocks = n_sites // 2
    cos_half = np.empty(shape + (n_blocks,))
    sin_half = np.empty(shape + (n_blocks,))
    for m, k in enumerate(xy_ring_momenta(n_sites)):
        a = 2.0 * (h + lam * math.cos(k))
        b = 2.0 * gamma * lam * math.sin(k)
        theta = np.arctan2(-b, a)
        cos_half[..., m] = np.cos(theta / 2)
        sin_half[..., m] = np.sin(theta / 2)
    amps = np.ones(shape + (2**n_blocks,), dtype=complex)
    for mask in range(2**n_blocks):
        acc = np.ones(shape)
        for m in range(n_blocks):
            acc = acc * (sin_half[..., m] if mask & (1 << m) else cos_half[..., m])
        amps[..., mask] = acc * (1j) ** bin(mask).count("1")
    return amps


# ---------------------------------------------------------------------------
# Closed-form information matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticQfim:
    matrix: np.ndarray
    provenance: QfimForm
    labels: tuple = ()

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
            raise DimensionMismatchError("AnalyticQfim: matrix not symmetric")
        mat = 0.5 * (mat + mat.T)
        if mat.size and np.linalg.eigvalsh(mat)[0] < -1e-10 * max(1.0, np.max(np.abs(mat))):
            raise DimensionMismatchError("AnalyticQfim: matrix not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


def _dispersion_sum(n_sites: int, lam: float, gamma: float, h: float):
    """Yields (k, sin^2 k factor 16 sin^2 k / eps^4, h + lam cos k)."""
    for k, eps in xy_ring_dispersion(n_sites, lam, gamma, h):
        yield k, 16.0 * math.sin(k) ** 2 / eps**4, h + lam * math.cos(k)


def xy_ring_qfim_lambda_gamma(n_sites: int, lam: float, gamma: float, h: float) -> np.ndarray:
    out = np.zeros((2, 2))
    for _k, pref, hk in _dispersion_sum(n_sites, lam, gamma, h):
        out += pref * np.array(
            [[h**2 * gamma**2, h * gamma * lam * hk], [h * gamma * lam * hk, lam**2 * hk**2]]
        )
    return out


def xy_ring_qfim_lambda_h(n_sites: int, lam: float, gamma: float, h: float) -> np.ndarray:
    s = sum(pref for _k, pref, _hk in _dispersion_sum(n_sites, lam, gamma, h))
    return s * np.array(
        [[h**2 * gamma**2, -h * lam * gamma**2], [-h * lam * gamma**2, gamma**2 * lam**2]]
    )


def xy_ring_det_lambda_gamma_n4(lam: float, gamma: float, h: float) -> float:
    """Closed-form determinant of the four-site ring (lambda, gamma) matrix."""
    denom = 4 * h**2 + 4 * h**2 * (gamma**2 - 1) * lam**2 + (gamma**2 + 1) ** 2 * lam**4
    return 8 * h**2 * gamma**2 * lam**4 / denom**2


def xy_ring_effective_qfi_ratio(n_sites: int, lam: float, gamma: float, h: float) -> float:
    """Single-parameter information for the field-to-coupling ratio h/lambda."""
    s = sum(pref for _k, pref, _hk in _dispersion_sum(n_sites, lam, gamma, h))
    return gamma**2 * lam**4 * s


def xy_ring_pinv_lambda_h(n_sites: int, lam: float, gamma: float, h: float) -> np.ndarray:
    """Closed-form pseudoinverse of the singular (lambda, h) matrix."""
    s = sum(pref for _k, pref, _hk in _dispersion_sum(n_sites, lam, gamma, h))
    pref = 1.0 / (s * gamma**2 * (h**2 + lam**2) ** 2)
    return pref * np.array([[h**2, -h * lam], [-h * lam, lam**2]])


def analytic_qfim(spec: ModelSpec, point: ParameterPoint, pair: tuple) -> AnalyticQfim:
    """Closed-form 2x2 information matrix for the supported (model, pair) cases."""
    params = merged_parameters(spec, point)
    is_xy = spec.kind in (ModelKind.XY_RING, ModelKind.XY_ALL2ALL)
    if not is_xy:
        raise ConfigError(f"no closed form for model {spec.kind.value}")
    lam, gam, h = _require(params, ("lambda", "gamma", "h"), spec.kind)
    if pair == ("lambda", "gamma"):
        if spec.kind is ModelKind.XY_ALL2ALL and spec.n_sites != 3:
            raise ConfigError("all-to-all closed form exists only at n_sites = 3")
        matrix = xy_ring_qfim_lambda_gamma(spec.n_sites, lam, gam, h)
        form = QfimForm.N3_LAMBDA_GAMMA if spec.n_sites == 3 else QfimForm.RING_LAMBDA_GAMMA
        return AnalyticQfim(matrix, form, pair)
    if pair == ("lambda", "h") and spec.kind is ModelKind.XY_RING:
        return AnalyticQfim(xy_ring_qfim_lambda_h(spec.n_sites, lam, gam, h), QfimForm.RING_LAMBDA_H, pair)
    raise ConfigError(f"no closed form for pair {pair!r} on {spec.kind.value}")


# ---------------------------------------------------------------------------
# Three-spin XY closed forms
# ---------------------------------------------------------------------------

def _n3_chi(lam: float, gamma: float, h: float) -> float:
    return ((3 * gamma**2 + 1) * lam**2 + 4 * h**2 + 4 * h * lam) ** 2


def n3_qfim_lambda_gamma(lam: float, gamma: float, h: float) -> np.ndarray:
    chi = _n3_chi(lam, gamma, h)
    off = 6 * gamma * h * lam * (2 * h + lam)
    return np.array([[12 * gamma**2 * h**2, off], [off, 3 * lam**2 * (lam + 2 * h) ** 2]]) / chi


def n3_nonzero_eigenvalue(lam: float, gamma: float, h: float) -> float:
    return 3 * (4 * h**2 * (gamma**2 + lam**2) + 4 * h * lam**3 + lam**4) / _n3_chi(lam, gamma, h)


def n3_null_vector(lam: float, gamma: float, h: float) -> np.ndarray:
    root = math.sqrt(4 * h * lam**3 + lam**4 + 4 * h**2 * (gamma**2 + lam**2))
    first = -lam * (2 * h + lam) / root
    second = 1.0 / math.sqrt(lam**2 * (2 * h + lam) ** 2 / (4 * gamma**2 * h**2) + 1.0)
    return np.array([first, second])


def n3_effective_parameter(lam: float, gamma: float, h: float) -> float:
    """The single combination lam*gamma/(2h + lam) controlling the three-spin ground state."""
    return lam * gamma / (2 * h + lam)


def n3_effective_qfi(lam: float, gamma: float, h: float) -> float:
    return 3 * (2 * h + lam) ** 4 / ((3 * gamma**2 + 1) * lam**2 + 4 * h**2 + 4 * h * lam) ** 2


# ---------------------------------------------------------------------------
# Heisenberg trimer analytics
# ---------------------------------------------------------------------------

def trimer_multiplet_energies(J: float, K: float) -> list:
    """(label, energy, degeneracy) for the three spin multiplets."""
    return [
        ("doublet_S12_0", -0.75 * K, 2),
        ("doublet_S12_1", 0.25 * K - J, 2),
        ("quartet_S12_1", 0.25 * K + 0.5 * J, 4),
    ]


def _trimer_state_probabilities(J: float, K: float, T: float) -> np.ndarray:
    """Per-state Boltzmann probabilities (p_{1/2,0}, p_{1/2,1}, p_{3/2,1})."""
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T!r}")
    energies = np.array([e for _l, e, _g in trimer_multiplet_energies(J, K)])
    degeneracy = np.array([g for _l, _e, g in trimer_multiplet_energies(J, K)], dtype=float)
    weights = np.exp(-(energies - energies.min()) / T)
    z = float(degeneracy @ weights)
    return weights / z


def trimer_reduced_populations(J: float, K: float, T: float) -> tuple:
    """(p_singlet, p_triplet) of the two-spin reduced thermal state.

    p_triplet is the probability per triplet state; the three triplet
    states together carry 3 * p_triplet and p_singlet + 3 p_triplet = 1.
    """
    p0, p1, p2 = _trimer_state_probabilities(J, K, T)
    p_singlet = 2.0 * p0
    p_triplet = (2.0 / 3.0) * p1 + (4.0 / 3.0) * p2
    return float(p_singlet), float(p_triplet)


def trimer_omega(J: float, K: float, T: float) -> float:
    """Thermal expectation of (S_1 + S_2)^2 on the reduced pair, = 6 p_triplet."""
    _p_singlet, p_triplet = trimer_reduced_populations(J, K, T)
    return 6.0 * p_triplet


def trimer_contour_K_of_T(J: float, T: float, omega: float) -> float:
    """Bond strength K at which the pair correlation equals ``omega`` at temperature T."""
    if not (0.0 < omega < 2.0):
        raise ValueError(f"omega must lie in (0, 2), got {omega!r}")
    if T <= 0:
        raise ValueError(f"temperature must be positive, got {T!r}")
    arg = (2.0 - omega) * math.exp(-J / (2 * T)) * (2.0 + math.exp(3 * J / (2 * T))) / omega
    return T * math.log(arg)


def _trimer_probability_gradients(J: float, K: float, T: float, names: tuple) -> np.ndarray:
    """d p_state / d name for the three multiplets, exact."""
    probs = _trimer_state_probabilities(J, K, T)
    degeneracy = np.array([2.0, 2.0, 4.0])
    energies = np.array([e for _l, e, _g in trimer_multiplet_energies(J, K)])
    de = {
        "K": np.array([-0.75, 0.25, 0.25]),
        "J": np.array([0.0, -1.0, 0.5]),
    }
    grads = np.zeros((len(names), 3))
    for row, name in enumerate(names):
        if name == "T":
            mean_e = float((degeneracy * probs) @ energies)
            grads[row] = probs * (energies - mean_e) / T**2
        elif name in de:
            mean_de = float((degeneracy * probs) @ de[name])
            grads[row] = probs * (mean_de - de[name]) / T
        else:
            raise ConfigError(f"trimer populations do not depend on parameter {name!r}")
    return grads


def trimer_qfim_populations(J: float, K: float, T: float, pair: tuple, reduced: bool = False) -> AnalyticQfim:
    """Information matrix of the trimer thermal populations for a parameter pair.

    The eigenbasis is pinned by symmetry, so only population derivatives
    contribute.  ``reduced=True`` gives the two-spin probe version, which
    is singular at every temperature.
    """
    probs = _trimer_state_probabilities(J, K, T)
    grads = _trimer_probability_gradients(J, K, T, pair)
    if reduced:
        p_sing = 2.0 * probs[0]
        p_trip = (2.0 / 3.0) * probs[1] + (4.0 / 3.0) * probs[2]
        g_sing = 2.0 * grads[:, 0]
        g_trip = (2.0 / 3.0) * grads[:, 1] + (4.0 / 3.0) * grads[:, 2]
        matrix = np.outer(g_sing, g_sing) / p_sing + 3.0 * np.outer(g_trip, g_trip) / p_trip
    else:
        degeneracy = np.array([2.0, 2.0, 4.0])
        matrix = sum(
            degeneracy[s] * np.outer(grads[:, s], grads[:, s]) / probs[s] for s in range(3)
        )
    return AnalyticQfim(matrix, QfimForm.TRIMER_POPULATIONS, pair)


# ---------------------------------------------------------------------------
# Generic two-level closed form
# ---------------------------------------------------------------------------

def two_level_qfim(p_value: float, q_value: float, grad_p, grad_q) -> AnalyticQfim:
    """Information matrix of a pure qubit with polar angle p and phase q.

    The d=2 determinant vanishes exactly when the Jacobian bracket
    d1p d2q - d2p d1q does; in particular whenever p and q depend on the
    parameters through one common scalar.
    """
    del q_value  # the phase value itself drops out; only its gradient enters
    gp = np.asarray(grad_p, dtype=float)
    gq = np.asarray(grad_q, dtype=float)
    if gp.shape != gq.shape:
        raise DimensionMismatchError("two_level_qfim: gradients must have the same length")
    matrix = 4.0 * np.outer(gp, gp) + math.sin(2.0 * p_value) ** 2 * np.outer(gq, gq)
    return AnalyticQfim(matrix, QfimForm.TWO_LEVEL_PQ)


# ---------------------------------------------------------------------------
# Thermal expectation helpers
# ---------------------------------------------------------------------------

def heisenberg_central_correlation(n_sites: int, J: float, K: float, T: float) -> float:
    """Thermal expectation of the central-pair correlation in the open chain."""
    from .operators import thermal_state

    spec = ModelSpec(ModelKind.HEISENBERG_CHAIN, n_sites, {"J": J, "K": K}, ("T",))
    ham = build_hamiltonian(spec, ParameterPoint((T,)))
    rho = thermal_state(ham, T)
    corr = observable(spec, ObservableName.CENTRAL_SPIN_CORRELATION)
    return float(np.real(np.trace(rho.matrix @ corr.matrix)))
