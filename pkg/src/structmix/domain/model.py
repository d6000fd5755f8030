"""
Modèle de mélange fini à paramètre structurel.

    g(x;Ψ,σ) = Σⱼ αⱼ f(x;μⱼ,σ)

Le paramètre d'échelle σ (ou la matrice Σ dans le cas multivarié) est
commun à toutes les composantes. Ce module porte la densité du mélange,
la log-vraisemblance, la simulation et la borne supérieure
ℓ_n ≤ n(log v0 − log σ) qui sert dans toute la preuve.

Les log-vraisemblances sont évaluées par log-sum-exp sur les composantes :
des atomes très séparés font sous-dépasser une somme naïve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from structmix.domain import families
from structmix.domain.exceptions import (
    DimensionMismatchError,
    InvalidModelError,
    SingularCovarianceError,
    ZeroDensityError,
)
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.domain.mixing import MixingDistribution, MultivariateMixing

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixtureModel:
    """Mélange univarié (famille, Ψ, σ)."""

    family: FamilyKind
    mixing: MixingDistribution
    sigma: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidModelError(f"σ doit être > 0 et fini, reçu {self.sigma!r}")

    @property
    def order(self) -> int:
        return self.mixing.order

    def affine(self, a: float, c: float) -> MixtureModel:
        """Modèle de X' = aX + c : atomes aμⱼ + c, échelle aσ."""
        return MixtureModel(self.family, self.mixing.affine(a, c), a * self.sigma)


@dataclass(frozen=True)
class MultivariateMixtureModel:
    """Mélange elliptique en dimension p (générateur, Ψ, Σ commune)."""

    generator: DensityGenerator
    mixing: MultivariateMixing
    Sigma: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        cov = np.asarray(self.Sigma, dtype=float)
        p = self.generator.dim
        if cov.shape != (p, p):
            raise DimensionMismatchError(f"Σ de forme {cov.shape}, attendu ({p}, {p})")
        if self.mixing.dim != p:
            raise DimensionMismatchError(
                f"Ψ de dimension {self.mixing.dim}, attendu {p}"
            )
        atol = 1e-12 * max(1.0, np.abs(cov).max())
        if not np.allclose(cov, cov.T, rtol=0.0, atol=atol):
            raise InvalidModelError("Σ n'est pas symétrique")
        if not np.all(np.isfinite(cov)):
            raise InvalidModelError("Σ contient des valeurs non finies")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise SingularCovarianceError("Σ n'est pas définie positive") from e

    @classmethod
    def from_matrix(
        cls, generator: DensityGenerator, mixing: MultivariateMixing, cov: np.ndarray
    ) -> MultivariateMixtureModel:
        cov = np.asarray(cov, dtype=float)
        rows = tuple(tuple(float(v) for v in row) for row in cov)
        return cls(generator, mixing, rows)

    @property
    def dim(self) -> int:
        return self.generator.dim

    @property
    def order(self) -> int:
        return self.mixing.order

    @cached_property
    def cov(self) -> np.ndarray:
        return np.asarray(self.Sigma, dtype=float)

    @cached_property
    def chol(self) -> np.ndarray:
        """Facteur de Cholesky inférieur L, Σ = L Lᵀ."""
        return np.linalg.cholesky(self.cov)

    @cached_property
    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Échantillon i.i.d. X₁,…,Xₙ (réels, ou vecteurs de ℝ^p en lignes).

    La provenance (graine, modèle vrai) accompagne les données simulées.
    """

    observations: np.ndarray
    seed: int | None = None
    model_id: str | None = None

    def __post_init__(self) -> None:
        obs = np.array(self.observations, dtype=float)
        if obs.ndim not in (1, 2) or obs.shape[0] == 0:
            raise InvalidModelError(
                f"observations de forme {obs.shape} : attendu (n,) ou (n, p), n ≥ 1"
            )
        if not np.all(np.isfinite(obs)):
            raise InvalidModelError("observations non finies")
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.observations.shape == other.observations.shape
            and self.observations.tobytes() == other.observations.tobytes()
            and self.seed == other.seed
            and self.model_id == other.model_id
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n(self) -> int:
        return int(self.observations.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.observations.ndim == 1 else int(self.observations.shape[1])

    def concat(self, other: Dataset) -> Dataset:
        return Dataset(np.concatenate([self.observations, other.observations]))

    def affine(self, a: float, c: float) -> Dataset:
        return Dataset(
            a * self.observations + c, seed=self.seed, model_id=self.model_id
        )


@dataclass(frozen=True)
class LikelihoodEvaluation:
    """
    Log-vraisemblance et nombre d'observations de densité nulle.

    `underflow > 0` est l'état signalé : la valeur vaut alors −∞.
    """

    value: float
    underflow: int


# --- Cas univarié ---


def _as_array(x: np.ndarray | float | Dataset) -> np.ndarray:
    if isinstance(x, Dataset):
        return x.observations
    return np.atleast_1d(np.asarray(x, dtype=float))


def component_log_densities(model: MixtureModel, x: np.ndarray | float) -> np.ndarray:
    """Matrice (n, m) des log{αⱼ f(xᵢ;μⱼ,σ)}."""
    x = _as_array(x)
    log_f = families.log_density(
        model.family, x[:, None], model.mixing.locations[None, :], model.sigma
    )
    return np.log(model.mixing.alphas)[None, :] + log_f


def mixture_log_density(model: MixtureModel, x: np.ndarray | float) -> np.ndarray:
    """log g(x;Ψ,σ), stabilisé par log-sum-exp."""
    return logsumexp(component_log_densities(model, x), axis=1)


def mixture_density(model: MixtureModel, x: np.ndarray | float) -> np.ndarray | float:
    """g(x;Ψ,σ) = Σⱼ αⱼ f(x;μⱼ,σ)."""
    values = np.exp(mixture_log_density(model, x))
    return float(values[0]) if np.ndim(x) == 0 else values


def _evaluate(terms: np.ndarray) -> LikelihoodEvaluation:
    underflow = int(np.count_nonzero(np.isneginf(terms)))
    if underflow:
        return LikelihoodEvaluation(-math.inf, underflow)
    # np.sum : sommation par paires à ordre fixe, stable d'une exécution à l'autre.
    return LikelihoodEvaluation(float(np.sum(terms)), 0)


def evaluate_log_likelihood(model: MixtureModel, data: Dataset) -> LikelihoodEvaluation:
    if data.dim != 1 or data.observations.ndim != 1:
        raise DimensionMismatchError("données multivariées pour un modèle univarié")
    return _evaluate(mixture_log_density(model, data.observations))


def _finish(evaluation: LikelihoodEvaluation, strict: bool) -> float:
    if evaluation.underflow:
        message = f"densité de mélange nulle pour {evaluation.underflow} observation(s)"
        if strict:
            raise ZeroDensityError(message)
        logger.warning(message)
    return evaluation.value


def log_likelihood(model: MixtureModel, data: Dataset, strict: bool = False) -> float:
    """
    ℓ_n(Ψ,σ) = Σᵢ log g(Xᵢ;Ψ,σ).

    Si une densité sous-dépasse malgré la stabilisation, renvoie −∞ avec
    un avertissement, ou lève ZeroDensityError en mode strict.
    """
    return _finish(evaluate_log_likelihood(model, data), strict)


def likelihood_upper_bound(model: MixtureModel, n: int) -> float:
    """n(log v0 − log σ), majorant de ℓ_n pour tout Ψ."""
    v0 = families.constants(model.family).v0
    return n * (math.log(v0) - math.log(model.sigma))


def sample_mixture(model: MixtureModel, n: int, seed: int) -> Dataset:
    """
    n tirages i.i.d. de g(·;Ψ,σ) : composante j avec probabilité αⱼ,
    puis tirage dans f(·;μⱼ,σ). Déterministe pour une graine donnée.
    """
    if n < 1:
        raise InvalidModelError(f"n doit être ≥ 1, reçu {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.order, size=n, p=model.mixing.alphas)
    z = families.std_sample(model.family, rng, n)
    x = model.mixing.locations[labels] + model.sigma * z
    return Dataset(x, seed=seed, model_id=model.family.name)


def affine_transform_loglik_identity(
    model: MixtureModel, data: Dataset, a: float, c: float
) -> tuple[float, float]:
    """
    (ℓ_n(Ψ,σ; X), ℓ_n(Ψ_{a,c}, aσ; aX + c) + n log a).

    Les deux valeurs coïncident : c'est la forme testable de l'équivariance
    de position-échelle.
    """
    if not a > 0:
        raise InvalidModelError(f"a doit être > 0, reçu {a!r}")
    original = log_likelihood(model, data)
    moved = log_likelihood(model.affine(a, c), data.affine(a, c))
    return original, moved + data.n * math.log(a)


# --- Cas multivarié ---


def _as_matrix(model: MultivariateMixtureModel, x: np.ndarray | Dataset) -> np.ndarray:
    x = x.observations if isinstance(x, Dataset) else np.asarray(x, dtype=float)
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"observations de dimension {x.shape[1]}, attendu {model.dim}"
        )
    return x


def mv_component_log_densities(
    model: MultivariateMixtureModel, x: np.ndarray | Dataset
) -> np.ndarray:
    """
    Matrice (n, m) des log{αⱼ f(xᵢ;𝛍ⱼ,Σ)}.

    Forme quadratique par résolution triangulaire avec le facteur de
    Cholesky, jamais par inversion explicite de Σ.
    """
    x = _as_matrix(model, x)
    chol = model.chol
    columns = []
    for mu in model.mixing.points:
        y = linalg.solve_triangular(chol, (x - mu).T, lower=True)
        quad = np.sum(y * y, axis=0)
        columns.append(model.generator.log_f0(quad) - 0.5 * model.log_det)
    return np.log(model.mixing.alphas)[None, :] + np.stack(columns, axis=1)


def mv_density(model: MultivariateMixtureModel, x: np.ndarray) -> np.ndarray | float:
    """g(𝐱;Ψ,Σ) pour un point (p,) ou un lot (n, p)."""
    values = np.exp(logsumexp(mv_component_log_densities(model, x), axis=1))
    return float(values[0]) if np.ndim(x) == 1 else values


def mv_evaluate_log_likelihood(
    model: MultivariateMixtureModel, data: Dataset
) -> LikelihoodEvaluation:
    return _evaluate(logsumexp(mv_component_log_densities(model, data), axis=1))


def mv_log_likelihood(
    model: MultivariateMixtureModel, data: Dataset, strict: bool = False
) -> float:
    return _finish(mv_evaluate_log_likelihood(model, data), strict)


def mv_likelihood_upper_bound(model: MultivariateMixtureModel, n: int) -> float:
    """n(log v0 − ½ log|Σ|)."""
    v0 = families.generator_constants(model.generator).v0
    return n * (math.log(v0) - 0.5 * model.log_det)


def mv_sample(model: MultivariateMixtureModel, n: int, seed: int) -> Dataset:
    if n < 1:
        raise InvalidModelError(f"n doit être ≥ 1, reçu {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.order, size=n, p=model.mixing.alphas)
    z = rng.standard_normal((n, model.dim))
    x = model.mixing.points[labels] + z @ model.chol.T
    return Dataset(x, seed=seed, model_id=f"multivariate_normal({model.dim})")
