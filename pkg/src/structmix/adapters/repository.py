"""
Pattern Repository pour les expériences archivées.

Interface de type collection (add, get) au-dessus de l'archive SQL.
Comme pour tout repository, les agrégats ajoutés ou consultés sont
suivis dans `seen` pour que le Unit of Work collecte leurs événements.
"""

from __future__ import annotations

import abc
import json
import math
from typing import Any, Optional

from sqlalchemy import insert, select
from sqlalchemy.orm import Session

from structmix.adapters import codec, orm
from structmix.domain.experiment import Experiment, ExperimentRecord


class AbstractRepository(abc.ABC):
    """
    Interface abstraite du repository.

    Template Method : add/get gèrent `seen`, les sous-classes
    implémentent _add/_get.
    """

    def __init__(self) -> None:
        self.seen: set[Experiment] = set()

    def add(self, experiment: Experiment) -> None:
        self._add(experiment)
        self.seen.add(experiment)

    def get(self, experiment_id: str) -> Optional[Experiment]:
        experiment = self._get(experiment_id)
        if experiment:
            self.seen.add(experiment)
        return experiment

    @abc.abstractmethod
    def _add(self, experiment: Experiment) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def _get(self, experiment_id: str) -> Optional[Experiment]:
        raise NotImplementedError


def _nullable(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


def _float(value: Optional[float]) -> float:
    return math.nan if value is None else float(value)


class SqlAlchemyRepository(AbstractRepository):
    """Repository sur les tables Core de `orm`, traduction explicite des lignes."""

    def __init__(self, session: Session):
        super().__init__()
        self.session = session

    def _add(self, experiment: Experiment) -> None:
        self.session.execute(
            insert(orm.experiments).values(
                id=experiment.experiment_id,
                plan=codec.dumps(codec.plan_to_dict(experiment.plan)),
                status=experiment.status,
                created_at=experiment.created_at,
            )
        )
        if experiment.records:
            self.session.execute(
                insert(orm.experiment_records),
                [
                    self._record_row(experiment.experiment_id, rec)
                    for rec in experiment.records
                ],
            )

    @staticmethod
    def _record_row(experiment_id: str, rec: ExperimentRecord) -> dict[str, Any]:
        return {
            "experiment_id": experiment_id,
            "n": rec.n,
            "replication": rec.replication,
            "seed": str(rec.seed),
            "d_value": _nullable(rec.d_value),
            "sigma_err": _nullable(rec.sigma_err),
            "loglik_gap": _nullable(rec.loglik_gap),
            "converged": rec.converged,
            "wall_time": rec.wall_time,
            "error": rec.error,
        }

    def _get(self, experiment_id: str) -> Optional[Experiment]:
        row = self.session.execute(
            select(orm.experiments).where(orm.experiments.c.id == experiment_id)
        ).first()
        if row is None:
            return None
        rows = self.session.execute(
            select(orm.experiment_records)
            .where(orm.experiment_records.c.experiment_id == experiment_id)
            .order_by(orm.experiment_records.c.n, orm.experiment_records.c.replication)
        ).all()
        records = [
            ExperimentRecord(
                n=r.n,
                replication=r.replication,
                seed=int(r.seed),
                d_value=_float(r.d_value),
                sigma_err=_float(r.sigma_err),
                loglik_gap=_float(r.loglik_gap),
                converged=bool(r.converged),
                wall_time=float(r.wall_time),
                error=r.error,
            )
            for r in rows
        ]
        plan = codec.plan_from_dict(
            json.loads(row.plan), source=f"archive:{experiment_id}"
        )
        return Experiment(
            experiment_id, plan, records=records, created_at=row.created_at
        )
