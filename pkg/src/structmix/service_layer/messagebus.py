"""
Message Bus de structmix.

Les commands (simuler, ajuster, certifier, mesurer, lancer une
expérience) ont un handler unique dont le résultat est rendu à
l'appelant. Les events de l'agrégat Experiment, collectés par le UoW
après chaque handler, sont distribués à leurs abonnés ; l'échec d'un
abonné est journalisé sans interrompre l'expérience.

Les dépendances des handlers (`uow`, ou toute dépendance passée à
`bootstrap`) sont liées une fois pour toutes à la construction du bus.
"""

from __future__ import annotations

import functools
import inspect
import logging
from collections import deque
from typing import Any, Callable

from structmix.domain import commands, events
from structmix.service_layer import unit_of_work

logger = logging.getLogger(__name__)

Message = commands.Command | events.Event


class MessageBus:
    def __init__(
        self,
        uow: unit_of_work.AbstractUnitOfWork,
        event_handlers: dict[type[events.Event], list[Callable]],
        command_handlers: dict[type[commands.Command], Callable],
        dependencies: dict[str, Any] | None = None,
    ):
        self.uow = uow
        available = {"uow": uow, **(dependencies or {})}
        self.event_handlers = {
            kind: [_bind(handler, available) for handler in subscribers]
            for kind, subscribers in event_handlers.items()
        }
        self.command_handlers = {
            kind: _bind(handler, available)
            for kind, handler in command_handlers.items()
        }

    def handle(self, message: Message) -> list[Any]:
        """
        Traite `message` puis les events qu'il a fait émettre.

        Renvoie les résultats des commands dans l'ordre de traitement ;
        les CLI et les tests déstructurent `[résultat] = bus.handle(cmd)`.
        """
        pending: deque[Message] = deque([message])
        results: list[Any] = []
        while pending:
            current = pending.popleft()
            if isinstance(current, commands.Command):
                results.append(self._run_command(current))
            elif isinstance(current, events.Event):
                self._publish(current)
            else:
                raise TypeError(f"ni command ni event : {current!r}")
            pending.extend(self.uow.collect_new_events())
        return results

    def _run_command(self, command: commands.Command) -> Any:
        name = type(command).__name__
        try:
            handler = self.command_handlers[type(command)]
        except KeyError:
            raise TypeError(f"aucun handler pour la command {name}") from None
        logger.debug("command %s", name)
        return handler(command)

    def _publish(self, event: events.Event) -> None:
        for handler in self.event_handlers.get(type(event), []):
            try:
                handler(event)
            except Exception:
                name = getattr(handler, "__name__", handler)
                logger.exception("abonné %s en échec sur %s", name, event)


def _bind(handler: Callable, available: dict[str, Any]) -> Callable:
    """Lie les paramètres du handler (après le message) aux dépendances de même nom."""
    wanted = list(inspect.signature(handler).parameters)[1:]
    bound = functools.partial(
        handler, **{name: available[name] for name in wanted if name in available}
    )
    functools.update_wrapper(bound, handler)
    return bound
