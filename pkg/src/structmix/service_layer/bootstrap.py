"""
Bootstrap : assemblage de l'application (Composition Root).

Seul endroit qui choisit les implémentations concrètes ; les tests y
injectent un FakeUnitOfWork.
"""

from __future__ import annotations

from typing import Any

from structmix.domain import commands, events
from structmix.service_layer import handlers, messagebus, unit_of_work


def bootstrap(
    uow: unit_of_work.AbstractUnitOfWork | None = None,
    archive_uri: str | None = None,
    **extra_dependencies: Any,
) -> messagebus.MessageBus:
    """
    Construit le MessageBus. Sans UoW fourni, l'archive est celle de
    `archive_uri`, ou à défaut de STRUCTMIX_ARCHIVE_URI.
    """
    if uow is None:
        factory = unit_of_work.session_factory_for(archive_uri) if archive_uri else None
        uow = unit_of_work.SqlAlchemyUnitOfWork(factory)

    return messagebus.MessageBus(
        uow=uow,
        event_handlers=EVENT_HANDLERS,
        command_handlers=COMMAND_HANDLERS,
        dependencies=dict(extra_dependencies),
    )


# --- Routage des messages vers les handlers ---

EVENT_HANDLERS: dict[type[events.Event], list] = {
    events.EnregistrementTerminé: [handlers.journaliser_enregistrement],
    events.EnregistrementÉchoué: [handlers.signaler_échec_enregistrement],
    events.ExpérienceTerminée: [handlers.journaliser_fin_expérience],
}

COMMAND_HANDLERS: dict[type[commands.Command], Any] = {
    commands.SimulerÉchantillon: handlers.simuler_échantillon,
    commands.AjusterMélange: handlers.ajuster_mélange,
    commands.Certifier: handlers.certifier,
    commands.CalculerDistance: handlers.calculer_distance,
    commands.LancerExpérience: handlers.lancer_expérience,
}
