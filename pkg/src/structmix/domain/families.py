"""
Familles de composantes de position-échelle.

Quatre familles univariées (normale, logistique, Gumbel, Student) et le
générateur de densité de la loi normale multivariée. Chaque famille
fournit sa densité standard f(z;0,1), sa fonction quantile, un
échantillonneur, et les constantes (v0, v1, β) de l'enveloppe

    f(z;0,1) ≤ min{v0, v1·|z|^(-β)}

qui bornent la vraisemblance dans la preuve de convergence.

Les densités sont évaluées en log (scipy.stats) puis exponentiées, ce
qui garde des queues exactes là où une évaluation directe sous-dépasse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats
from scipy.special import gammaln

from structmix.domain import numerics
from structmix.domain.exceptions import InvalidModelError

# Constante d'Euler–Mascheroni, 20 chiffres significatifs.
EULER_GAMMA = 0.57721566490153286061

LOG_2PI = math.log(2.0 * math.pi)

FamilyTag = Literal["normal", "logistic", "gumbel", "student_t"]


@dataclass(frozen=True)
class FamilyKind:
    """
    Value Object identifiant une famille univariée.

    `nu` (degrés de liberté, entier ≥ 1) n'a de sens que pour Student.
    """

    tag: FamilyTag
    nu: int | None = None

    def __post_init__(self) -> None:
        if self.tag not in ("normal", "logistic", "gumbel", "student_t"):
            raise InvalidModelError(f"famille inconnue : {self.tag!r}")
        if self.tag == "student_t":
            if not isinstance(self.nu, int) or isinstance(self.nu, bool) or self.nu < 1:
                raise InvalidModelError(
                    f"Student : ν doit être un entier ≥ 1, reçu {self.nu!r}"
                )
        elif self.nu is not None:
            raise InvalidModelError(
                f"ν n'est pas un paramètre de la famille {self.tag}"
            )

    @classmethod
    def normal(cls) -> FamilyKind:
        return cls("normal")

    @classmethod
    def logistic(cls) -> FamilyKind:
        return cls("logistic")

    @classmethod
    def gumbel(cls) -> FamilyKind:
        return cls("gumbel")

    @classmethod
    def student_t(cls, nu: int) -> FamilyKind:
        return cls("student_t", nu)

    @property
    def name(self) -> str:
        if self.tag == "student_t":
            return f"student_t({self.nu})"
        return self.tag

    @property
    def log_c_nu(self) -> float:
        """log C_ν = log Γ((ν+1)/2) − log{√(νπ) Γ(ν/2)} (Student uniquement)."""
        if self.nu is None:
            raise InvalidModelError(
                f"C_ν n'est défini que pour Student, pas {self.tag}"
            )
        nu = float(self.nu)
        return float(
            gammaln((nu + 1.0) / 2.0) - 0.5 * math.log(nu * math.pi) - gammaln(nu / 2.0)
        )


# Familles dont l'identifiabilité (condition C1) est établie dans la littérature.
SUPPORTED_FAMILIES: tuple[str, ...] = ("normal", "logistic", "gumbel", "student_t")


@dataclass(frozen=True)
class FamilyConstants:
    """Constantes (v0, v1, β) de l'enveloppe de queue."""

    v0: float
    v1: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.v0 > 0 and self.v1 > 0):
            raise InvalidModelError(f"v0 et v1 doivent être > 0 : {self}")
        if not self.beta > 1:
            raise InvalidModelError(f"β doit être > 1 : {self}")

    def envelope(self, z: np.ndarray | float) -> np.ndarray:
        """min{v0, v1·|z|^(-β)} ; vaut v0 en z = 0."""
        absz = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            tail = self.v1 * absz ** (-self.beta)
        return np.minimum(self.v0, tail)

    def radial_envelope(self, x: np.ndarray | float) -> np.ndarray:
        """min{v0, v1·x^(-β/2)} pour x ≥ 0 (version multivariée de l'enveloppe)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            tail = self.v1 * x ** (-self.beta / 2.0)
        return np.minimum(self.v0, tail)


@dataclass(frozen=True)
class DensityGenerator:
    """
    Générateur de densité f0 d'une loi elliptique en dimension p :
    f(x;μ,Σ) = |Σ|^(-1/2) f0((x−μ)ᵀΣ⁻¹(x−μ)).

    Seul le générateur normal est implémenté.
    """

    dim: int
    kind: Literal["multivariate_normal"] = "multivariate_normal"

    def __post_init__(self) -> None:
        if self.kind != "multivariate_normal":
            raise InvalidModelError(f"générateur non supporté : {self.kind!r}")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise InvalidModelError(f"dimension invalide : {self.dim!r}")

    def log_f0(self, x: np.ndarray | float) -> np.ndarray:
        return -0.5 * self.dim * LOG_2PI - 0.5 * np.asarray(x, dtype=float)

    def f0(self, x: np.ndarray | float) -> np.ndarray:
        return np.exp(self.log_f0(x))


# --- Densités ---


def std_log_density(family: FamilyKind, z: np.ndarray | float) -> np.ndarray:
    """log f(z;0,1)."""
    if family.tag == "normal":
        return stats.norm.logpdf(z)
    if family.tag == "logistic":
        return stats.logistic.logpdf(z)
    if family.tag == "gumbel":
        return stats.gumbel_r.logpdf(z)
    return stats.t.logpdf(z, df=family.nu)


def std_density(family: FamilyKind, z: np.ndarray | float) -> np.ndarray:
    """f(z;0,1), densité standard de la famille."""
    return np.exp(std_log_density(family, z))


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise InvalidModelError(f"σ doit être > 0, reçu {sigma!r}")


def log_density(
    family: FamilyKind, x: np.ndarray | float, mu: np.ndarray | float, sigma: float
) -> np.ndarray:
    """log f(x;μ,σ) = log f((x−μ)/σ;0,1) − log σ."""
    _check_sigma(sigma)
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return std_log_density(family, z) - math.log(sigma)


def density(
    family: FamilyKind, x: np.ndarray | float, mu: np.ndarray | float, sigma: float
) -> np.ndarray:
    """f(x;μ,σ) = σ⁻¹ f((x−μ)/σ;0,1)."""
    return np.exp(log_density(family, x, mu, sigma))


# --- Simulation ---


def std_quantile(family: FamilyKind, u: np.ndarray | float) -> np.ndarray:
    """Fonction quantile (inverse de la fonction de répartition) de f(·;0,1)."""
    if family.tag == "normal":
        return stats.norm.ppf(u)
    if family.tag == "logistic":
        return stats.logistic.ppf(u)
    if family.tag == "gumbel":
        return stats.gumbel_r.ppf(u)
    return stats.t.ppf(u, df=family.nu)


def _open_uniform(rng: np.random.Generator, size: int | None) -> np.ndarray:
    u = rng.random(size)
    return np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def std_sample(
    family: FamilyKind, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """
    Tirages de f(·;0,1).

    Logistique et Gumbel par inversion de la fonction de répartition ;
    normale par le générateur ; Student par Z / √(χ²_ν/ν).
    """
    if family.tag == "normal":
        return rng.standard_normal(size)
    if family.tag in ("logistic", "gumbel"):
        return std_quantile(family, _open_uniform(rng, size))
    z = rng.standard_normal(size)
    chi2 = rng.chisquare(family.nu, size)
    return z / np.sqrt(chi2 / family.nu)


def sample(
    family: FamilyKind,
    mu: float,
    sigma: float,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Tirages de f(·;μ,σ)."""
    _check_sigma(sigma)
    return mu + sigma * std_sample(family, rng, size)


# --- Constantes de l'enveloppe ---


def constants(family: FamilyKind) -> FamilyConstants:
    """(v0, v1, β) de la famille : normale (2π)^(-1/2), (2π)^(-1/2), 2 ; etc."""
    if family.tag == "normal":
        v = 1.0 / math.sqrt(2.0 * math.pi)
        return FamilyConstants(v0=v, v1=v, beta=2.0)
    if family.tag in ("logistic", "gumbel"):
        return FamilyConstants(v0=1.0, v1=1.0, beta=2.0)
    return FamilyConstants(v0=1.0, v1=float(family.nu), beta=2.0)


def generator_constants(gen: DensityGenerator) -> FamilyConstants:
    """v0 = (2π)^(-p/2), v1 = v0·(p+1)^((p+1)/2), β = p+1 pour le générateur normal."""
    if gen.kind != "multivariate_normal":
        raise InvalidModelError(f"générateur non supporté : {gen.kind!r}")
    p = gen.dim
    v0 = (2.0 * math.pi) ** (-p / 2.0)
    v1 = v0 * (p + 1.0) ** ((p + 1.0) / 2.0)
    return FamilyConstants(v0=v0, v1=v1, beta=p + 1.0)


# --- Entropie croisée ∫ log f(x;μ,1) f(x;0,1) dx ---


@dataclass(frozen=True)
class CrossEntropy:
    """
    Valeur de ∫ log f(x;μ,1) f(x;0,1) dx, étiquetée selon sa nature :
    forme close exacte, minorant analytique, ou quadrature.
    """

    value: float
    kind: Literal["exact", "lower_bound", "quadrature"]


def cross_entropy_quadrature(family: FamilyKind, mu: float) -> float:
    """∫ log f(x;μ,1) f(x;0,1) dx par quadrature adaptative (tolérance 1e-10)."""

    def integrand(x: float) -> float:
        return numerics.xlogy_density(
            float(std_log_density(family, x)),
            float(std_log_density(family, x - mu)),
        )

    return numerics.integrate_real_line(
        integrand, breakpoints=(0.0, mu), epsabs=1e-10
    ).value


def cross_entropy_closed_form(family: FamilyKind, mu: float) -> CrossEntropy:
    """
    Formes closes de l'entropie croisée quand elles existent.

    Normale et Gumbel : valeur exacte. Logistique : minorant
    −μ − 2 log 2 − (1 + μ² + π²/3). Student : pas de forme close,
    valeur par quadrature.
    """
    if not math.isfinite(mu):
        raise InvalidModelError(f"μ doit être fini, reçu {mu!r}")
    if family.tag == "normal":
        return CrossEntropy(-0.5 * LOG_2PI - 0.5 * (mu * mu + 1.0), "exact")
    if family.tag == "gumbel":
        return CrossEntropy(mu - EULER_GAMMA - math.exp(mu), "exact")
    if family.tag == "logistic":
        bound = -mu - 2.0 * math.log(2.0) - (1.0 + mu * mu + math.pi**2 / 3.0)
        return CrossEntropy(bound, "lower_bound")
    return CrossEntropy(cross_entropy_quadrature(family, mu), "quadrature")
