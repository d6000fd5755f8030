"""
Tests unitaires des lois mélangeantes et des distances D et D*.
"""

import math

import numpy as np
import pytest

from structmix.domain import mixing
from structmix.domain.exceptions import DimensionMismatchError, InvalidModelError
from structmix.domain.mixing import (
    ExtendedMixing,
    MixingDistribution,
    MultivariateMixing,
)


def loi_aléatoire(rng: np.random.Generator) -> MixingDistribution:
    m = int(rng.integers(1, 6))
    return MixingDistribution.from_atoms(
        rng.uniform(-10.0, 10.0, size=m), rng.dirichlet(np.ones(m)), normalize=True
    )


class TestFormeCanonique:
    def test_atomes_triés(self):
        psi = MixingDistribution.from_atoms([2.0, -1.0], [0.25, 0.75])
        assert psi.support == (-1.0, 2.0)
        assert psi.weights == (0.75, 0.25)

    def test_atomes_confondus_fusionnés(self):
        psi = MixingDistribution.from_atoms([1.0, 1.0 + 1e-13, 2.0], [0.2, 0.3, 0.5])
        assert psi.order == 2
        assert psi.weights == pytest.approx((0.5, 0.5))

    def test_poids_nuls_retirés(self):
        psi = MixingDistribution.from_atoms([0.0, 1.0], [1.0, 0.0])
        assert psi == MixingDistribution.point_mass(0.0)

    def test_poids_de_somme_différente_de_un(self):
        with pytest.raises(InvalidModelError):
            MixingDistribution((0.0, 1.0), (0.5, 0.6))

    def test_poids_négatif(self):
        with pytest.raises(InvalidModelError):
            MixingDistribution.from_atoms([0.0, 1.0], [1.5, -0.5])

    def test_support_non_croissant(self):
        with pytest.raises(InvalidModelError):
            MixingDistribution((1.0, 0.0), (0.5, 0.5))

    def test_ordre_déclaré(self):
        psi = MixingDistribution.from_atoms([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
        psi.check_order(3)
        with pytest.raises(InvalidModelError):
            psi.check_order(2)

    def test_image_affine(self):
        psi = MixingDistribution.from_atoms([-1.0, 2.0], [0.5, 0.5]).affine(2.0, 1.0)
        assert psi.support == (-1.0, 5.0)

    def test_évaluation_continue_à_droite(self):
        psi = MixingDistribution.point_mass(0.0)
        assert mixing.evaluate(psi, 0.0) == 1.0
        assert mixing.evaluate(psi, -1e-9) == 0.0


class TestDistanceD:
    def test_deux_masses_de_dirac(self):
        d = mixing.distance_D(
            MixingDistribution.point_mass(0.0), MixingDistribution.point_mass(1.0)
        )
        assert d == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)

    def test_propriétés_de_métrique(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a, b, c = loi_aléatoire(rng), loi_aléatoire(rng), loi_aléatoire(rng)
            dab = mixing.distance_D(a, b)
            assert mixing.distance_D(a, a) == 0.0
            assert dab == mixing.distance_D(b, a)
            assert dab > 0.0
            assert 0.0 <= dab <= 4.0
            assert mixing.distance_D(a, c) <= dab + mixing.distance_D(b, c) + 1e-12

    def test_accord_avec_la_quadrature(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b = loi_aléatoire(rng), loi_aléatoire(rng)
            assert mixing.distance_D(a, b) == pytest.approx(
                mixing.distance_D_quadrature(a, b), abs=1e-9
            )

    def test_masse_partie_vers_moins_l_infini(self):
        escaped = ExtendedMixing.escaped(gamma=1.0)
        d = mixing.distance_D(escaped, MixingDistribution.point_mass(0.0))
        assert d == pytest.approx(1.0)

    def test_masse_partie_vers_plus_l_infini(self):
        escaped = ExtendedMixing.escaped(gamma=0.0)
        d = mixing.distance_D(escaped, MixingDistribution.point_mass(0.0))
        assert d == pytest.approx(1.0)

    @pytest.mark.parametrize("mu", [1.0, 10.0, 100.0])
    def test_dirac_qui_s_éloigne_converge_dans_l_espace_étendu(self, mu):
        limite = ExtendedMixing.escaped(gamma=0.0)
        d = mixing.distance_D(MixingDistribution.point_mass(mu), limite)
        assert d == pytest.approx(math.exp(-mu), rel=1e-12)

    def test_dirac_symétriques(self):
        t = 0.5
        d = mixing.distance_D(
            MixingDistribution.point_mass(-t), MixingDistribution.point_mass(t)
        )
        assert d == pytest.approx(2.0 * (1.0 - math.exp(-t)), rel=1e-14)

    def test_espace_étendu_invalide(self):
        with pytest.raises(InvalidModelError):
            ExtendedMixing(0.7, 0.5, MixingDistribution.point_mass(0.0))

    def test_distance_sur_les_couples(self):
        psi = MixingDistribution.point_mass(0.0)
        assert mixing.parameter_distance(psi, 1.0, psi, 1.5) == 0.5


class TestDistanceDStar:
    def test_produit_exact_en_dimension_deux(self):
        psi1 = MultivariateMixing.from_atoms([[0.0, 0.0]], [1.0])
        psi2 = MultivariateMixing.from_atoms([[1.0, 1.0]], [1.0])
        estimate = mixing.distance_Dstar(psi1, psi2)
        assert estimate.method == "product"
        assert estimate.stderr == 0.0
        assert estimate.value == pytest.approx(1.0 - math.exp(-2.0), rel=1e-12)

    def test_monte_carlo_dans_les_barres_d_erreur(self):
        psi1 = MultivariateMixing.from_atoms([[-1.0, 0.5], [1.0, -0.5]], [0.4, 0.6])
        psi2 = MultivariateMixing.from_atoms([[0.0, 0.0], [2.0, 1.0]], [0.5, 0.5])
        exact = mixing.distance_Dstar(psi1, psi2, method="product").value
        mc = mixing.distance_Dstar(
            psi1, psi2, method="monte_carlo", n_draws=200_000, seed=3
        )
        assert abs(mc.value - exact) <= 5.0 * mc.stderr

    def test_dimension_un_coïncide_avec_D(self):
        uni = MixingDistribution.from_atoms([-1.0, 2.0], [0.3, 0.7])
        other = MixingDistribution.from_atoms([0.5], [1.0])
        mv1 = MultivariateMixing.from_atoms([[-1.0], [2.0]], [0.3, 0.7])
        mv2 = MultivariateMixing.from_atoms([[0.5]], [1.0])
        assert mixing.distance_Dstar(mv1, mv2).value == pytest.approx(
            mixing.distance_D(uni, other), rel=1e-12
        )

    def test_dimensions_différentes(self):
        psi1 = MultivariateMixing.from_atoms([[0.0, 0.0]], [1.0])
        psi2 = MultivariateMixing.from_atoms([[0.0, 0.0, 0.0]], [1.0])
        with pytest.raises(DimensionMismatchError):
            mixing.distance_Dstar(psi1, psi2)

    def test_points_fusionnés(self):
        psi = MultivariateMixing.from_atoms(
            [[1.0, 2.0], [1.0, 2.0], [0.0, 5.0]], [0.25, 0.25, 0.5]
        )
        assert psi.support == ((0.0, 5.0), (1.0, 2.0))
        assert psi.weights == (0.5, 0.5)

    def test_évaluation_multivariée(self):
        psi = MultivariateMixing.from_atoms([[0.0, 0.0], [1.0, -1.0]], [0.5, 0.5])
        assert mixing.evaluate_mv(psi, np.array([0.5, 0.5])) == 0.5
        assert mixing.evaluate_mv(psi, np.array([1.0, 0.0])) == 1.0
