import numpy as np
import pytest

from metrosym.bayes import (
    GridAxis,
    OutcomeModel,
    RecipeKind,
    StateRecipe,
    default_povm,
    probability_table,
)
from metrosym.models import ModelKind, ModelSpec, ObservableName


@pytest.fixture(scope="session")
def ring_lg_model():
    """XY ring, estimating (lambda, gamma) at known h=1, ground state, z-basis readout."""
    spec = ModelSpec(ModelKind.XY_RING, 4, {"h": 1.0}, ("lambda", "gamma"))
    recipe = StateRecipe(RecipeKind.GROUND)
    return OutcomeModel(spec, recipe, default_povm(spec, ObservableName.TOTAL_MAGNETIZATION, recipe))


@pytest.fixture(scope="session")
def ring_lh_model():
    """XY ring, estimating (lambda, h) at known gamma=1 (singular problem)."""
    spec = ModelSpec(ModelKind.XY_RING, 4, {"gamma": 1.0}, ("lambda", "h"))
    recipe = StateRecipe(RecipeKind.GROUND)
    return OutcomeModel(spec, recipe, default_povm(spec, ObservableName.TOTAL_MAGNETIZATION, recipe))


@pytest.fixture(scope="session")
def chain_reduced_model():
    """Heisenberg chain, (K, T) estimation from the central-pair reduced state."""
    spec = ModelSpec(ModelKind.HEISENBERG_CHAIN, 4, {"J": 1.0}, ("K", "T"))
    recipe = StateRecipe(RecipeKind.REDUCED_THERMAL, (1, 2))
    return OutcomeModel(spec, recipe, default_povm(spec, ObservableName.CENTRAL_SPIN_CORRELATION, recipe))


@pytest.fixture(scope="session")
def a2a_model():
    """All-to-all XY, (lambda, gamma) estimation at h=1, ground state."""
    spec = ModelSpec(ModelKind.XY_ALL2ALL, 4, {"h": 1.0}, ("lambda", "gamma"))
    recipe = StateRecipe(RecipeKind.GROUND)
    return OutcomeModel(spec, recipe, default_povm(spec, ObservableName.TOTAL_MAGNETIZATION, recipe))


@pytest.fixture(scope="session")
def axes_200():
    return (GridAxis(0.0, 2.0, 200), GridAxis(0.0, 2.0, 200))


@pytest.fixture(scope="session")
def ring_lg_table(ring_lg_model, axes_200):
    return probability_table(ring_lg_model, axes_200)


@pytest.fixture(scope="session")
def ring_lh_table(ring_lh_model, axes_200):
    return probability_table(ring_lh_model, axes_200)


@pytest.fixture(scope="session")
def chain_axes():
    return (GridAxis(0.0, 2.0, 200), GridAxis(0.02, 2.0, 200))


@pytest.fixture(scope="session")
def chain_reduced_table(chain_reduced_model, chain_axes):
    return probability_table(chain_reduced_model, chain_axes)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240809)
