"""
Tests unitaires du banc Monte Carlo : graines, enregistrements, résumé,
agrégat Experiment et ses events.
"""

import math

import numpy as np
import pytest

from structmix.domain import events, experiment
from structmix.domain.estimate import FitConfig
from structmix.domain.exceptions import InvalidModelError
from structmix.domain.experiment import Experiment, ExperimentPlan, ExperimentRecord
from structmix.domain.families import DensityGenerator
from structmix.domain.mixing import MultivariateMixing
from structmix.domain.model import MultivariateMixtureModel


def plan_normal(vrai, n_grid=(60, 120), replications=2, **kwargs) -> ExperimentPlan:
    return ExperimentPlan(
        true_model=vrai,
        fit_order=2,
        n_grid=n_grid,
        replications=replications,
        base_seed=42,
        fit_config=FitConfig(order=2, restarts=2, max_iter=200),
        **kwargs,
    )


def enregistrement(
    n=100, r=0, d=0.1, s=0.05, converged=True, wall_time=0.5, error=None
) -> ExperimentRecord:
    return ExperimentRecord(n, r, 7, d, s, 1.0, converged, wall_time, error)


class TestPlan:
    def test_grille_strictement_croissante(self, normal_deux_atomes):
        with pytest.raises(InvalidModelError):
            plan_normal(normal_deux_atomes, n_grid=(100, 100))

    def test_graine_de_base_positive(self, normal_deux_atomes):
        with pytest.raises(InvalidModelError):
            ExperimentPlan(normal_deux_atomes, 2, (10,), 1, -1, FitConfig(order=2))

    def test_ordre_du_plan_prioritaire(self, normal_deux_atomes):
        plan = ExperimentPlan(normal_deux_atomes, 3, (10,), 1, 0, FitConfig(order=1))
        assert plan.effective_config().order == 3

    def test_gardes_théoriques(self, normal_deux_atomes):
        config = plan_normal(normal_deux_atomes, theory_guards=True).effective_config()
        lo, hi = config.sigma_bounds
        assert 0 < lo < 1.0 < hi

    def test_gardes_théoriques_refusées_en_multivarié(self):
        vrai = MultivariateMixtureModel.from_matrix(
            DensityGenerator(2),
            MultivariateMixing.from_atoms([[0.0, 0.0]], [1.0]),
            np.eye(2),
        )
        with pytest.raises(InvalidModelError):
            plan_normal(vrai, theory_guards=True)


class TestGraines:
    def test_dérivation_stable(self):
        assert experiment.derive_seed(42, 100, 3) == experiment.derive_seed(42, 100, 3)

    def test_graines_distinctes(self):
        graines = {
            experiment.derive_seed(42, n, r) for n in (100, 400) for r in range(50)
        }
        assert len(graines) == 100

    def test_flux_de_données_et_d_ajustement_distincts(self):
        données = experiment.derive_seed(1, 10, 0, experiment.DATA_STREAM)
        ajustement = experiment.derive_seed(1, 10, 0, experiment.FIT_STREAM)
        assert données != ajustement

    def test_graine_sur_64_bits(self):
        assert 0 <= experiment.derive_seed(2**40, 6400, 49) < 2**64


class TestEnregistrements:
    def test_mesures_dans_les_bornes(self, normal_deux_atomes):
        records = experiment.run_experiment(plan_normal(normal_deux_atomes))
        attendus = [(60, 0), (60, 1), (120, 0), (120, 1)]
        assert [(rec.n, rec.replication) for rec in records] == attendus
        for rec in records:
            assert not rec.failed
            assert 0.0 <= rec.d_value <= 4.0
            assert rec.sigma_err >= 0.0
            assert not rec.gap_violation

    def test_rejeu_identique(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes)
        premier = experiment.run_experiment(plan)
        second = experiment.run_experiment(plan)
        assert all(a.same_outcome(b) for a, b in zip(premier, second))

    def test_enregistrement_rejouable_isolément(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes)
        records = experiment.run_experiment(plan)
        seul = experiment.run_record(plan, plan.effective_config(), 120, 1)
        assert seul.same_outcome(records[3])

    def test_parallélisme_sans_effet_sur_le_résultat(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes, n_grid=(60,))
        séquentiel = experiment.run_experiment(plan, jobs=1)
        parallèle = experiment.run_experiment(plan, jobs=2)
        assert all(a.same_outcome(b) for a, b in zip(séquentiel, parallèle))

    def test_échec_capturé(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes, n_grid=(2, 60), replications=1)
        records = experiment.run_experiment(plan)
        échoué, réussi = records
        assert échoué.failed
        assert "InsufficientDataError" in échoué.error
        assert math.isnan(échoué.d_value)
        assert not échoué.converged
        assert not réussi.failed

    def test_même_issue_ignore_le_temps(self):
        assert enregistrement(wall_time=0.1).same_outcome(enregistrement(wall_time=9.0))
        nan = enregistrement(d=math.nan)
        assert nan.same_outcome(enregistrement(d=math.nan))
        assert not nan.same_outcome(enregistrement())

    def test_multivarié(self):
        vrai = MultivariateMixtureModel.from_matrix(
            DensityGenerator(2),
            MultivariateMixing.from_atoms([[-3.0, -3.0], [3.0, 3.0]], [0.5, 0.5]),
            np.eye(2),
        )
        plan = plan_normal(vrai, n_grid=(200,), replications=1)
        [rec] = experiment.run_experiment(plan)
        assert not rec.failed
        assert rec.d_value < 0.5
        assert rec.sigma_err < 0.5


class TestRésumé:
    def test_un_seul_enregistrement(self):
        [ligne] = experiment.summarize([enregistrement(d=0.2, s=0.03)])
        assert (ligne.median_D, ligne.p10_D, ligne.p90_D) == (0.2, 0.2, 0.2)
        assert ligne.median_sigma_err == 0.03
        assert ligne.convergence_rate == 1.0
        assert ligne.mean_wall_time == 0.5

    def test_enregistrements_identiques(self):
        [ligne] = experiment.summarize([enregistrement(r=r) for r in range(5)])
        assert ligne.p10_D == ligne.median_D == ligne.p90_D == 0.1

    def test_échecs_exclus_des_percentiles(self):
        records = [
            enregistrement(r=0, d=0.1),
            enregistrement(
                r=1,
                d=math.nan,
                s=math.nan,
                converged=False,
                error="InsufficientDataError: n",
            ),
        ]
        [ligne] = experiment.summarize(records)
        assert ligne.median_D == 0.1
        assert ligne.convergence_rate == 0.5

    def test_une_ligne_par_taille(self):
        lignes = experiment.summarize([enregistrement(n=400), enregistrement(n=100)])
        assert [ligne.n for ligne in lignes] == [100, 400]

    def test_aucun_enregistrement(self):
        with pytest.raises(InvalidModelError):
            experiment.summarize([])


class TestAgrégatExperiment:
    def test_statut_initial(self, normal_deux_atomes):
        assert Experiment("exp-1", plan_normal(normal_deux_atomes)).status == "pending"

    def test_events_émis(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes, n_grid=(2, 60), replications=1)
        exp = Experiment("exp-1", plan)
        exp.run()
        assert exp.status == "partial"
        assert [type(e) for e in exp.événements] == [
            events.EnregistrementÉchoué,
            events.EnregistrementTerminé,
            events.ExpérienceTerminée,
        ]
        assert exp.événements[-1] == events.ExpérienceTerminée("exp-1", "partial", 2)

    def test_identité_par_identifiant(self, normal_deux_atomes):
        plan = plan_normal(normal_deux_atomes)
        assert Experiment("a", plan) == Experiment("a", plan)
        assert len({Experiment("a", plan), Experiment("a", plan)}) == 1


def strictement_décroissante(valeurs) -> bool:
    return all(b < a for a, b in zip(valeurs, valeurs[1:]))


@pytest.mark.slow
class TestConvergenceEmpirique:
    def test_cas_univarié(self, normal_deux_atomes):
        plan = ExperimentPlan(
            true_model=normal_deux_atomes,
            fit_order=2,
            n_grid=(100, 400, 1600, 6400),
            replications=50,
            base_seed=20240601,
            fit_config=FitConfig(order=2, restarts=5),
        )
        records = experiment.run_experiment(plan, jobs=-1)
        lignes = experiment.summarize(records)
        assert strictement_décroissante([ligne.median_D for ligne in lignes])
        assert strictement_décroissante([ligne.median_sigma_err for ligne in lignes])
        assert lignes[-1].median_D < 0.05
        assert lignes[-1].median_sigma_err < 0.05
        assert not any(rec.gap_violation for rec in records)

    def test_cas_multivarié(self):
        vrai = MultivariateMixtureModel.from_matrix(
            DensityGenerator(2),
            MultivariateMixing.from_atoms([[-3.0, -3.0], [3.0, 3.0]], [0.5, 0.5]),
            np.eye(2),
        )
        plan = ExperimentPlan(
            true_model=vrai,
            fit_order=2,
            n_grid=(200, 800, 3200),
            replications=20,
            base_seed=20240602,
            fit_config=FitConfig(order=2, restarts=5),
        )
        lignes = experiment.summarize(experiment.run_experiment(plan, jobs=-1))
        assert strictement_décroissante([ligne.median_D for ligne in lignes])
        assert strictement_décroissante([ligne.median_sigma_err for ligne in lignes])
        assert lignes[-1].median_sigma_err < 0.08
