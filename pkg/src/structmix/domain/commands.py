"""
Commands du domaine.

Chaque command correspond à une opération exposée par la ligne de
commande ; elle transporte des objets du domaine déjà validés, la
lecture et l'écriture des fichiers restant à la charge de l'entrypoint.
"""

from dataclasses import dataclass
from typing import Optional, Union

from structmix.domain.estimate import FitConfig
from structmix.domain.experiment import ExperimentPlan
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.domain.mixing import AnyMixing, MultivariateMixing
from structmix.domain.model import Dataset, MixtureModel, MultivariateMixtureModel


class Command:
    """Classe de base pour toutes les commands."""
    pass


@dataclass(frozen=True)
class SimulerÉchantillon(Command):
    """Demande de n tirages i.i.d. d'un modèle de mélange."""

    modèle: Union[MixtureModel, MultivariateMixtureModel]
    n: int
    graine: int


@dataclass(frozen=True)
class AjusterMélange(Command):
    """Demande d'estimation du maximum de vraisemblance."""

    famille: Union[FamilyKind, DensityGenerator]
    données: Dataset
    config: FitConfig


@dataclass(frozen=True)
class Certifier(Command):
    """Demande de certification des constantes et conditions pour un modèle vrai."""

    modèle: Union[MixtureModel, MultivariateMixtureModel]
    ordre: Optional[int] = None
    graine: int = 0


@dataclass(frozen=True)
class CalculerDistance(Command):
    """Demande de D(Ψ₁, Ψ₂) (ou D* pour des lois multivariées)."""

    psi1: Union[AnyMixing, MultivariateMixing]
    psi2: Union[AnyMixing, MultivariateMixing]


@dataclass(frozen=True)
class LancerExpérience(Command):
    """Demande d'exécution et d'archivage d'une expérience Monte Carlo."""

    id_expérience: str
    plan: ExperimentPlan
    jobs: int = 1
