"""Multi-parameter quantum estimation on small spin models.

Dense operator algebra, spin-model builders with closed-form references,
classical/quantum Fisher information with singularity diagnostics, and
seeded grid-based Bayesian estimation with coordinate transformations.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateGroundStateError,
    DimensionMismatchError,
    HermiticityError,
    MetrosymError,
    NumericalError,
    PosteriorUnderflowError,
    SingularMatrixError,
)
from .operators import (
    DensityMatrix,
    EigenSystem,
    HermitianOperator,
    eig_hermitian,
    ground_state,
    partial_trace,
    tensor_product,
    thermal_state,
    trace_distance,
)
from .models import (
    AnalyticQfim,
    ModelKind,
    ModelSpec,
    ObservableName,
    ParameterPoint,
    QfimForm,
    analytic_qfim,
    build_hamiltonian,
    observable,
    trimer_contour_K_of_T,
    trimer_omega,
    trimer_reduced_populations,
    two_level_qfim,
    xy_ring_dispersion,
)
from .fisher import (
    DerivMethod,
    DerivativeBundle,
    FisherKind,
    FisherMatrix,
    QfimSpectrum,
    cfim,
    derivative_bundle,
    effective_variance_via_pseudoinverse,
    factorization_check,
    ground_derivative_bundle,
    pseudoinverse,
    qfim_mixed,
    qfim_pure,
    qfim_spectrum,
    reparametrize,
    sld,
    thermal_derivative_bundle,
)
from .bayes import (
    CoordinateMap,
    GridAxis,
    MeasurementRecord,
    OutcomeModel,
    PosteriorGrid,
    PovmSet,
    RecipeKind,
    StateRecipe,
    bayes_mean_and_variance,
    born_probabilities,
    bvm_reference,
    effective_crb_scan,
    hyperbolic_product_map,
    hyperbolic_ratio_map,
    log_likelihood,
    marginalize,
    posterior_update,
    povm_from_observable,
    ridge_extract,
    sample_record,
    transform_posterior,
    uniform_prior,
)
