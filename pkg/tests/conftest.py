import pytest
from hypothesis import strategies as st

from halluc_market.model import (
    CostFunction,
    MarketParams,
    ModelCatalog,
    UpstreamModel,
    UserPopulation,
    UserType,
)
from halluc_market.scenario import load_preset

HIGH = UserType(3.0, 10.0)
LOW = UserType(1.0, 1.5)
MODEL_A = UpstreamModel("A", 0.05, 0.20)
MODEL_B = UpstreamModel("B", 0.30, 0.13)
COST = CostFunction(1 / 8, 2)


def population(mu=0.5):
    return UserPopulation(HIGH, LOW, mu)


@pytest.fixture
def pop():
    return population()


@pytest.fixture
def catalog():
    return ModelCatalog([MODEL_A, MODEL_B])


@pytest.fixture
def params():
    return MarketParams(0.95, 0.70)


@pytest.fixture(scope="session")
def preset():
    return load_preset()


models = st.builds(
    UpstreamModel,
    id=st.just("m"),
    wholesale_fee=st.floats(0.01, 1.0),
    baseline_hallucination=st.floats(0.02, 0.6),
)
efforts = st.floats(1e-3, 8.0)
deltas = st.floats(0.05, 0.99)
betas = st.floats(0.2, 2.0)


@st.composite
def populations(draw, mu=st.floats(0.01, 0.99)):
    vl = draw(st.floats(0.2, 3.0))
    al = draw(st.floats(0.2, 5.0))
    vh = vl + draw(st.floats(0.1, 4.0))
    ah = al + draw(st.floats(0.1, 15.0))
    return UserPopulation(UserType(vh, ah), UserType(vl, al), draw(mu))
