"""
Handlers pour les commands et events.

- Command handlers : exécutent une opération du domaine (peuvent échouer)
- Event handlers : réagissent à un fait passé (journalisation du suivi)
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from sqlalchemy.exc import SQLAlchemyError

from structmix.domain import certify, commands, estimate, events, mixing, model
from structmix.domain.certify import CertificationReport
from structmix.domain.estimate import FitResult
from structmix.domain.exceptions import (
    InvalidModelError,
    PersistenceError,
    StructmixError,
)
from structmix.domain.experiment import Experiment
from structmix.domain.families import DensityGenerator
from structmix.domain.mixing import DistanceEstimate, MultivariateMixing
from structmix.domain.model import Dataset, MultivariateMixtureModel

if TYPE_CHECKING:
    from structmix.service_layer.unit_of_work import AbstractUnitOfWork

logger = logging.getLogger(__name__)


# --- Exceptions ---


class ExpérienceDéjàArchivée(StructmixError):
    """Levée quand l'identifiant d'expérience existe déjà dans l'archive."""
    pass


# --- Command Handlers ---


def simuler_échantillon(cmd: commands.SimulerÉchantillon) -> Dataset:
    if isinstance(cmd.modèle, MultivariateMixtureModel):
        return model.mv_sample(cmd.modèle, cmd.n, cmd.graine)
    return model.sample_mixture(cmd.modèle, cmd.n, cmd.graine)


def ajuster_mélange(cmd: commands.AjusterMélange) -> FitResult:
    if isinstance(cmd.famille, DensityGenerator):
        return estimate.mv_fit(cmd.famille, cmd.données, cmd.config)
    return estimate.fit(cmd.famille, cmd.données, cmd.config)


def certifier(cmd: commands.Certifier) -> CertificationReport:
    if isinstance(cmd.modèle, MultivariateMixtureModel):
        return certify.certify_mv(cmd.modèle, cmd.ordre, seed=cmd.graine)
    return certify.certify(cmd.modèle, cmd.ordre, seed=cmd.graine)


def calculer_distance(cmd: commands.CalculerDistance) -> DistanceEstimate:
    """D exacte en univarié, D* (cellules produit ou Monte Carlo) en multivarié."""
    multivariate = (
        isinstance(cmd.psi1, MultivariateMixing),
        isinstance(cmd.psi2, MultivariateMixing),
    )
    if all(multivariate):
        return mixing.distance_Dstar(cmd.psi1, cmd.psi2)  # type: ignore[arg-type]
    if any(multivariate):
        raise InvalidModelError(
            "distance entre une loi univariée et une loi multivariée"
        )
    value = mixing.distance_D(cmd.psi1, cmd.psi2)  # type: ignore[arg-type]
    return DistanceEstimate(value, 0.0, "exact")


def lancer_expérience(
    cmd: commands.LancerExpérience,
    uow: AbstractUnitOfWork,
) -> Experiment:
    """
    Exécute le plan puis archive l'expérience en une transaction.

    Une expérience dont un enregistrement a échoué est archivée avec le
    statut `partial`.
    """
    try:
        with uow:
            if uow.experiments.get(cmd.id_expérience) is not None:
                raise ExpérienceDéjàArchivée(
                    f"expérience déjà archivée : {cmd.id_expérience}"
                )
        experiment = Experiment(cmd.id_expérience, cmd.plan)
        experiment.run(jobs=cmd.jobs)
        with uow:
            uow.experiments.add(experiment)
            uow.commit()
    except SQLAlchemyError as e:
        raise PersistenceError(f"archive des expériences : {e}") from e
    return experiment


# --- Event Handlers ---


def journaliser_enregistrement(event: events.EnregistrementTerminé) -> None:
    logger.info(
        "[%s] n=%d r=%d : D=%.4g, erreur d'échelle=%.4g",
        event.id_expérience, event.n, event.réplication, event.d_value, event.sigma_err,
    )


def signaler_échec_enregistrement(event: events.EnregistrementÉchoué) -> None:
    logger.warning(
        "[%s] n=%d r=%d en échec : %s",
        event.id_expérience, event.n, event.réplication, event.erreur,
    )


def journaliser_fin_expérience(event: events.ExpérienceTerminée) -> None:
    logger.info(
        "[%s] expérience terminée (%s, %d enregistrements)",
        event.id_expérience, event.statut, event.nb_enregistrements,
    )
