"""
Configuration partagée pour les tests.

Chaque test reçoit le marqueur de son répertoire (unit, integration,
e2e) ; les expériences Monte Carlo longues portent en plus `slow` et
ne tournent qu'avec `pytest -m slow`.
"""

from pathlib import Path

import pytest

from structmix.domain.families import FamilyKind
from structmix.domain.mixing import MixingDistribution
from structmix.domain.model import MixtureModel

_LAYERS = ("unit", "integration", "e2e")


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    for item in items:
        layer = Path(str(item.fspath)).parent.name
        if layer in _LAYERS:
            item.add_marker(getattr(pytest.mark, layer))


@pytest.fixture
def normal_deux_atomes() -> MixtureModel:
    """Ψ₀ = {(−2, ½), (2, ½)}, σ₀ = 1 : le modèle des expériences de convergence."""
    return MixtureModel(
        FamilyKind.normal(), MixingDistribution((-2.0, 2.0), (0.5, 0.5)), 1.0
    )


@pytest.fixture
def gumbel_deux_atomes() -> MixtureModel:
    return MixtureModel(
        FamilyKind.gumbel(), MixingDistribution((0.0, 1.0), (0.5, 0.5)), 1.0
    )
