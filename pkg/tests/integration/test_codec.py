"""
Tests d'intégration des formats de fichiers : modèles JSON, échantillons
CSV, enregistrements et résumés d'expérience.
"""

import json
import math

import numpy as np
import pytest

from structmix.adapters import codec
from structmix.domain.exceptions import PersistenceError, SchemaError
from structmix.domain.experiment import ExperimentRecord, SummaryRow
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.domain.mixing import (
    ExtendedMixing,
    MixingDistribution,
    MultivariateMixing,
)
from structmix.domain.model import Dataset, MixtureModel, MultivariateMixtureModel

RECORDS = [
    ExperimentRecord(100, 0, 2**63 + 5, 0.1 + 0.2, 1 / 3, -2.5e-9, True, 0.123456789),
    ExperimentRecord(
        100, 1, 7, math.nan, math.nan, math.nan, False, 0.01,
        error="QuadratureError: x, y",
    ),
    ExperimentRecord(400, 0, 8, 0.05, 0.01, 3.0, False, 1.5),
]


class TestModèles:
    def test_modèle_univarié(self, normal_deux_atomes, tmp_path):
        path = tmp_path / "model.json"
        codec.write_json(path, codec.model_to_dict(normal_deux_atomes))
        assert codec.read_model(path) == normal_deux_atomes

    def test_modèle_de_student(self, tmp_path):
        vrai = MixtureModel(
            FamilyKind.student_t(5),
            MixingDistribution.from_atoms([0.1, 0.7], [1 / 3, 2 / 3]),
            0.3,
        )
        path = tmp_path / "t.json"
        codec.write_json(path, codec.model_to_dict(vrai))
        assert codec.read_model(path) == vrai
        assert json.loads(path.read_text())["family"] == {"tag": "student_t", "nu": 5}

    def test_modèle_multivarié(self, tmp_path):
        vrai = MultivariateMixtureModel.from_matrix(
            DensityGenerator(2),
            MultivariateMixing.from_atoms([[-3.0, -3.0], [3.0, 3.0]], [0.5, 0.5]),
            np.array([[1.0, 0.2], [0.2, 2.0]]),
        )
        path = tmp_path / "mv.json"
        codec.write_json(path, codec.model_to_dict(vrai))
        assert codec.read_model(path) == vrai

    def test_loi_extraite_d_un_modèle(self, normal_deux_atomes, tmp_path):
        path = tmp_path / "model.json"
        codec.write_json(path, codec.model_to_dict(normal_deux_atomes))
        assert codec.read_mixing(path) == normal_deux_atomes.mixing

    def test_loi_étendue(self, tmp_path):
        psi = ExtendedMixing(
            0.25, 0.5, MixingDistribution.from_atoms([1.0, 2.0], [0.5, 0.5])
        )
        path = tmp_path / "ext.json"
        codec.write_json(path, codec.mixing_to_dict(psi))
        assert codec.read_mixing(path) == psi

    def test_famille_student_en_dictionnaire(self, tmp_path):
        path = tmp_path / "t.json"
        document = {
            "schema": 1,
            "kind": "mixture_model",
            "family": {"student_t": 5},
            "mixing": {"support": [0.0], "weights": [1.0]},
            "sigma": 1.0,
        }
        path.write_text(json.dumps(document))
        assert codec.read_model(path).family == FamilyKind.student_t(5)

    @pytest.mark.parametrize(
        "famille", [{"foo": 1}, {"student_t": "cinq"}, {"student_t": True}, 3, []]
    )
    def test_famille_malformée(self, tmp_path, famille):
        path = tmp_path / "m.json"
        document = {
            "schema": 1,
            "kind": "mixture_model",
            "family": famille,
            "mixing": {"support": [0.0], "weights": [1.0]},
            "sigma": 1.0,
        }
        path.write_text(json.dumps(document))
        with pytest.raises(SchemaError):
            codec.read_model(path)

    def test_loi_sans_kind(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"schema": 1, "support": [0.0], "weights": [1.0]}))
        assert codec.read_mixing(path) == MixingDistribution.point_mass(0.0)

    def test_loi_multivariée_sans_kind(self, tmp_path):
        path = tmp_path / "g.json"
        document = {"schema": 1, "support": [[0.0, 1.0]], "weights": [1.0]}
        path.write_text(json.dumps(document))
        attendu = MultivariateMixing.from_atoms([[0.0, 1.0]], [1.0])
        assert codec.read_mixing(path) == attendu

    def test_loi_étendue_sans_kind(self, tmp_path):
        path = tmp_path / "ext.json"
        document = {
            "schema": 1,
            "gamma": 0.25,
            "rho": 0.5,
            "inner": {"support": [1.0, 2.0], "weights": [0.5, 0.5]},
        }
        path.write_text(json.dumps(document))
        attendu = ExtendedMixing(
            0.25, 0.5, MixingDistribution.from_atoms([1.0, 2.0], [0.5, 0.5])
        )
        assert codec.read_mixing(path) == attendu

    def test_modèle_sans_kind(self, normal_deux_atomes, tmp_path):
        document = codec.model_to_dict(normal_deux_atomes)
        del document["kind"]
        path = tmp_path / "model.json"
        path.write_text(json.dumps(document))
        assert codec.read_model(path) == normal_deux_atomes

    def test_document_inclassable(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"schema": 1, "sigma": 1.0}))
        with pytest.raises(SchemaError):
            codec.read_model(path)

    @pytest.mark.parametrize("texte", ["student_t(5)", "student_t:5"])
    def test_famille_en_texte(self, texte):
        assert codec.parse_family(texte) == FamilyKind.student_t(5)

    def test_version_de_schéma_manquante(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"kind": "mixture_model"}))
        with pytest.raises(SchemaError):
            codec.read_model(path)

    def test_champ_manquant(self, tmp_path):
        path = tmp_path / "model.json"
        document = {"schema": 1, "kind": "mixture_model", "family": {"tag": "normal"}}
        path.write_text(json.dumps(document))
        with pytest.raises(SchemaError):
            codec.read_model(path)

    def test_json_invalide(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{")
        with pytest.raises(SchemaError):
            codec.read_model(path)

    def test_fichier_absent(self, tmp_path):
        with pytest.raises(PersistenceError, match="absent.json"):
            codec.read_model(tmp_path / "absent.json")


class TestÉchantillons:
    def test_univarié(self, tmp_path):
        data = Dataset(np.array([0.1, -2.0 / 3.0, 1e-300]))
        codec.write_dataset(tmp_path / "x.csv", data)
        assert (tmp_path / "x.csv").read_text().splitlines()[0] == "x"
        relu = codec.read_dataset(tmp_path / "x.csv")
        np.testing.assert_array_equal(relu.observations, data.observations)

    def test_multivarié(self, tmp_path):
        data = Dataset(np.random.default_rng(0).normal(size=(5, 3)))
        codec.write_dataset(tmp_path / "x.csv", data)
        assert (tmp_path / "x.csv").read_text().splitlines()[0] == "x1,x2,x3"
        relu = codec.read_dataset(tmp_path / "x.csv")
        np.testing.assert_array_equal(relu.observations, data.observations)

    def test_en_tête_seul(self, tmp_path):
        (tmp_path / "x.csv").write_text("x\n")
        with pytest.raises(SchemaError):
            codec.read_dataset(tmp_path / "x.csv")

    def test_valeur_non_numérique(self, tmp_path):
        (tmp_path / "x.csv").write_text("x\n1.0\nabc\n")
        with pytest.raises(SchemaError):
            codec.read_dataset(tmp_path / "x.csv")

    def test_une_coordonnée_reste_multivariée(self, tmp_path):
        data = Dataset(np.array([[0.5], [-1.5], [2.0]]))
        codec.write_dataset(tmp_path / "x.csv", data)
        assert (tmp_path / "x.csv").read_text().splitlines()[0] == "x1"
        relu = codec.read_dataset(tmp_path / "x.csv")
        assert relu.observations.shape == (3, 1)
        np.testing.assert_array_equal(relu.observations, data.observations)

    @pytest.mark.parametrize("en_tête", ["y", "x2,x1", "x,x1", "x0"])
    def test_en_tête_invalide(self, tmp_path, en_tête):
        colonnes = len(en_tête.split(","))
        ligne = ",".join(["1.0"] * colonnes)
        (tmp_path / "x.csv").write_text(f"{en_tête}\n{ligne}\n")
        with pytest.raises(SchemaError):
            codec.read_dataset(tmp_path / "x.csv")


class TestEnregistrements:
    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_aller_retour(self, tmp_path, fmt):
        path = tmp_path / f"records.{fmt}"
        codec.persist_records(RECORDS, path, fmt)
        relus = codec.read_records(path, fmt)
        assert len(relus) == len(RECORDS)
        for relu, original in zip(relus, RECORDS):
            assert relu.same_outcome(original)
            assert relu.wall_time == original.wall_time

    def test_colonnes_stables(self, tmp_path):
        path = tmp_path / "records.csv"
        codec.persist_records(RECORDS, path)
        lignes = path.read_text().splitlines()
        attendu = "n,rep,seed,D,sigma_err,loglik_gap,converged,wall_time,error"
        assert lignes[0] == attendu
        assert lignes[1].split(",")[6] == "true"

    def test_sans_échec_pas_de_colonne_error(self, tmp_path):
        réussis = [r for r in RECORDS if r.error is None]
        path = tmp_path / "records.csv"
        codec.persist_records(réussis, path)
        lignes = path.read_text().splitlines()
        assert lignes[0] == "n,rep,seed,D,sigma_err,loglik_gap,converged,wall_time"
        assert all(len(ligne.split(",")) == 8 for ligne in lignes)
        relus = codec.read_records(path)
        assert [r.error for r in relus] == [None, None]
        assert relus[0].same_outcome(réussis[0])

    def test_json_porte_toujours_error(self, tmp_path):
        path = tmp_path / "records.json"
        codec.persist_records([RECORDS[0]], path, "json")
        [document] = json.loads(path.read_text())["records"]
        assert document["error"] is None

    def test_tri_par_taille_puis_réplication(self, tmp_path):
        path = tmp_path / "records.csv"
        codec.persist_records(list(reversed(RECORDS)), path)
        ordre = [(r.n, r.replication) for r in codec.read_records(path)]
        assert ordre == [(100, 0), (100, 1), (400, 0)]

    def test_aucun_enregistrement_en_tête_seul(self, tmp_path):
        path = tmp_path / "records.csv"
        codec.persist_records([], path)
        assert path.read_text().splitlines() == [",".join(codec.RECORD_COLUMNS)]
        assert codec.read_records(path) == []

    def test_colonnes_inattendues(self, tmp_path):
        path = tmp_path / "records.csv"
        path.write_text("n,rep\n1,0\n")
        with pytest.raises(SchemaError):
            codec.read_records(path)

    def test_format_inconnu(self, tmp_path):
        with pytest.raises(SchemaError):
            codec.persist_records(
                RECORDS, tmp_path / "r.xml", "xml"  # type: ignore[arg-type]
            )

    def test_répertoire_absent(self, tmp_path):
        with pytest.raises(PersistenceError):
            codec.persist_records(RECORDS, tmp_path / "absent" / "records.csv")


class TestRésumé:
    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_aller_retour(self, tmp_path, fmt):
        lignes = [
            SummaryRow(100, 0.2, 0.1, 0.3, 0.05, 0.01, 0.09, 1.0, 0.25),
            SummaryRow(400, 0.1, 0.05, 0.2, 0.02, 0.005, 0.04, 0.98, 1.25),
        ]
        path = tmp_path / f"summary.{fmt}"
        codec.persist_summary(lignes, path, fmt)
        assert codec.read_summary(path, fmt) == lignes

    def test_colonnes(self, tmp_path):
        path = tmp_path / "summary.csv"
        codec.persist_summary([], path)
        assert path.read_text().splitlines()[0] == (
            "n,median_D,p10_D,p90_D,median_sigma_err,p10_sigma_err,p90_sigma_err,"
            "convergence_rate,mean_wall_time"
        )
