"""
Pattern Unit of Work.

Le UoW délimite la transaction d'archivage d'une expérience et collecte
les événements émis par les agrégats vus pendant cette transaction :

    with uow:
        uow.experiments.add(experiment)
        uow.commit()

Sans commit, la sortie du bloc annule la transaction.
"""

from __future__ import annotations

import abc
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.pool import StaticPool

from structmix import config
from structmix.adapters import orm, repository
from structmix.domain import events


class AbstractUnitOfWork(abc.ABC):
    experiments: repository.AbstractRepository

    def __enter__(self) -> AbstractUnitOfWork:
        return self

    def __exit__(self, *args: object) -> None:
        self.rollback()

    def commit(self) -> None:
        self._commit()

    def collect_new_events(self) -> Iterator[events.Event]:
        """Vide la liste d'événements de chaque expérience suivie par le repository."""
        # Aucun repository tant que le UoW n'a jamais été ouvert.
        repo = getattr(self, "experiments", None)
        if repo is None:
            return
        for experiment in repo.seen:
            while experiment.événements:
                yield experiment.événements.pop(0)

    @abc.abstractmethod
    def _commit(self) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def rollback(self) -> None:
        raise NotImplementedError


def session_factory_for(uri: str) -> sessionmaker:
    """
    Fabrique de sessions pour une URI, tables créées au passage.

    SQLite en mémoire n'existe que le temps d'une connexion : on la
    partage entre sessions avec StaticPool.
    """
    if uri in ("sqlite://", "sqlite:///:memory:"):
        engine = create_engine(
            uri, connect_args={"check_same_thread": False}, poolclass=StaticPool
        )
    else:
        engine = create_engine(uri)
    orm.create_tables(engine)
    return sessionmaker(bind=engine)


class SqlAlchemyUnitOfWork(AbstractUnitOfWork):
    """UoW sur une session SQLAlchemy, ouverte à l'entrée et fermée à la sortie."""

    def __init__(self, session_factory: sessionmaker | None = None):
        self.session_factory = session_factory or session_factory_for(
            config.get_archive_uri()
        )

    def __enter__(self) -> SqlAlchemyUnitOfWork:
        self.session: Session = self.session_factory()
        self.experiments = repository.SqlAlchemyRepository(self.session)
        return super().__enter__()  # type: ignore[return-value]

    def __exit__(self, *args: object) -> None:
        super().__exit__(*args)
        self.session.close()

    def _commit(self) -> None:
        self.session.commit()

    def rollback(self) -> None:
        self.session.rollback()
