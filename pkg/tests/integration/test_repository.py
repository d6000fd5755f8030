"""
Tests d'intégration du Repository et du Unit of Work avec SQLite.

Ces tests vérifient que la traduction ligne ↔ objet du domaine est fidèle :
- une expérience et ses enregistrements survivent à un aller-retour
- NaN (enregistrement en échec) et graines 64 bits sont restitués
- sans commit, rien n'est archivé
"""

import math
from datetime import datetime, timezone

from structmix.adapters import repository
from structmix.domain.estimate import FitConfig
from structmix.domain.experiment import Experiment, ExperimentPlan, ExperimentRecord
from structmix.service_layer import unit_of_work


def make_session():
    """Session sur une base SQLite en mémoire, tables créées."""
    return make_session_factory()()


def make_session_factory(uri: str = "sqlite://"):
    return unit_of_work.session_factory_for(uri)


def expérience(vrai, experiment_id="exp-1") -> Experiment:
    config = FitConfig(order=2, restarts=3)
    plan = ExperimentPlan(vrai, 2, (100, 400), 1, 7, config, theory_guards=True)
    records = [
        ExperimentRecord(100, 0, 2**64 - 1, 0.125, 0.03, 1.5, True, 0.25),
        ExperimentRecord(
            400, 0, 12345, math.nan, math.nan, math.nan, False, 0.5,
            error="InsufficientDataError: n=2 observations pour m=2 composantes",
        ),
    ]
    créée = datetime(2024, 6, 1, tzinfo=timezone.utc)
    return Experiment(experiment_id, plan, records=records, created_at=créée)


class TestSqlAlchemyRepository:
    def test_sauvegarder_et_recharger_une_expérience(self, normal_deux_atomes):
        session = make_session()
        repo = repository.SqlAlchemyRepository(session)
        originale = expérience(normal_deux_atomes)

        repo.add(originale)
        session.commit()

        rechargée = repository.SqlAlchemyRepository(session).get("exp-1")
        assert rechargée is not None
        assert rechargée == originale
        assert rechargée.plan == originale.plan
        assert rechargée.status == "partial"

    def test_enregistrements_restitués_à_l_identique(self, normal_deux_atomes):
        session = make_session()
        repo = repository.SqlAlchemyRepository(session)
        originale = expérience(normal_deux_atomes)
        repo.add(originale)
        session.commit()

        rechargés = repository.SqlAlchemyRepository(session).get("exp-1").records
        assert len(rechargés) == 2
        assert rechargés[0] == originale.records[0]
        assert rechargés[0].seed == 2**64 - 1
        assert rechargés[1].same_outcome(originale.records[1])
        assert math.isnan(rechargés[1].d_value)
        assert rechargés[1].error.startswith("InsufficientDataError")

    def test_expérience_inconnue(self):
        repo = repository.SqlAlchemyRepository(make_session())
        assert repo.get("inconnue") is None
        assert repo.seen == set()

    def test_get_suit_l_expérience(self, normal_deux_atomes):
        session = make_session()
        repository.SqlAlchemyRepository(session).add(expérience(normal_deux_atomes))
        session.commit()
        repo = repository.SqlAlchemyRepository(session)
        rechargée = repo.get("exp-1")
        assert repo.seen == {rechargée}


class TestSqlAlchemyUnitOfWork:
    def test_commit_archive(self, normal_deux_atomes):
        uow = unit_of_work.SqlAlchemyUnitOfWork(make_session_factory())
        with uow:
            uow.experiments.add(expérience(normal_deux_atomes))
            uow.commit()
        with uow:
            assert uow.experiments.get("exp-1") is not None

    def test_sans_commit_rien_n_est_archivé(self, normal_deux_atomes):
        uow = unit_of_work.SqlAlchemyUnitOfWork(make_session_factory())
        with uow:
            uow.experiments.add(expérience(normal_deux_atomes))
        with uow:
            assert uow.experiments.get("exp-1") is None

    def test_archive_sur_fichier(self, normal_deux_atomes, tmp_path):
        uri = f"sqlite:///{tmp_path / 'archive.db'}"
        with unit_of_work.SqlAlchemyUnitOfWork(make_session_factory(uri)) as uow:
            uow.experiments.add(expérience(normal_deux_atomes))
            uow.commit()
        with unit_of_work.SqlAlchemyUnitOfWork(make_session_factory(uri)) as uow:
            assert uow.experiments.get("exp-1").records[0].d_value == 0.125

    def test_events_collectés_une_seule_fois(self, normal_deux_atomes):
        uow = unit_of_work.SqlAlchemyUnitOfWork(make_session_factory())
        exp = expérience(normal_deux_atomes)
        exp.événements.append(object())
        with uow:
            uow.experiments.add(exp)
            assert len(list(uow.collect_new_events())) == 1
            assert list(uow.collect_new_events()) == []
