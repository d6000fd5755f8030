"""
Certification des constantes et conditions de la preuve de convergence.

À partir d'un modèle vrai déclaré (vérité de simulation), on calcule :

- a = (1+β)/(2β), b = 2(β+1)/(β−1), ε₀ = (3mbv0/σ0)^(−1/(1−a)) ;
- K₀ = ∫ log g · g (entropie négative du vrai mélange) et Δ = v0/exp(K₀−1) ;
- le plus grand ε satisfaisant simultanément
    D1 : ε ≤ ε₀
    D2 : ε ≤ (v1/v0)^(−2/(β+1))
    D3 : b⁻¹ log v0 + (1−b⁻¹) log v1 + ¼(β−1) log ε ≤ K₀ − 1 ;
- les analogues étoilés a*, b*, ε₀*, K₀*, Δ*, ε* en dimension p.

Les vérifications (C1, C2, C3, rejeu de D1–D3) produisent des rapports
lisibles par machine : nom, succès, marge, localisation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import gammaln

from structmix.domain import families, model, numerics
from structmix.domain.exceptions import InvalidModelError
from structmix.domain.families import DensityGenerator, FamilyConstants, FamilyKind
from structmix.domain.model import MixtureModel, MultivariateMixtureModel

logger = logging.getLogger(__name__)

C3_GRID_POINTS = 10_000
C3_GRID_RANGE = (1e-6, 1e6)
C3_TOLERANCE = 1e-12
# Marge admise sur le rejeu des conditions D (arrondi du log).
MARGIN_TOLERANCE = 1e-12

# Découpage autour de chaque pic, en unités de σ₀ : aucun morceau ne
# contient un pic loin de ses bornes.
K0_PEAK_OFFSETS = np.array([-8.0, -2.0, 0.0, 2.0, 8.0])


@dataclass(frozen=True)
class Check:
    """Une vérification : marge ≥ 0 signifie satisfaite."""

    name: str
    passed: bool
    margin: float
    location: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class K0Estimate:
    value: float
    stderr: float
    method: str


@dataclass(frozen=True)
class TheoryConstants:
    """Constantes du cas univarié ; les trois bornes de ε sont conservées."""

    a: float
    b: float
    eps0: float
    K0: float
    Delta: float
    eps: float
    m: int
    sigma0: float
    family_constants: FamilyConstants
    eps_bounds: tuple[float, float, float]
    K0_stderr: float = 0.0

    @property
    def scale_guard(self) -> tuple[float, float]:
        """Intervalle [ε, Δ] où l'EMV de σ est confiné asymptotiquement."""
        return (self.eps, self.Delta)


@dataclass(frozen=True)
class MvTheoryConstants:
    a_star: float
    b_star: float
    eps0_star: float
    K0_star: float
    Delta_star: float
    eps_star: float
    m: int
    p: int
    det_sigma0: float
    family_constants: FamilyConstants
    eps_bounds: tuple[float, float, float]
    K0_stderr: float = 0.0


@dataclass(frozen=True)
class C3Report:
    passed: bool
    max_violation: float
    location: float
    grid_points: int


@dataclass(frozen=True)
class C2Report:
    """Valeur de ΣⱼΣₕ α₀ⱼα₀ₕ ∫ log f(t;δⱼₕ,1) f(t;0,1) dt et sa finitude."""

    value: float
    finite: bool
    terms: tuple[tuple[float, float, str], ...]


@dataclass
class CertificationReport:
    """Rapport complet : constantes et liste des vérifications."""

    constants: TheoryConstants | MvTheoryConstants
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> list[Check]:
        return [check for check in self.checks if not check.passed]


# --- K₀ ---


def compute_K0(
    true_model: MixtureModel,
    method: Literal["quadrature", "monte_carlo"] = "quadrature",
    n_draws: int = 1_000_000,
    seed: int = 0,
) -> K0Estimate:
    """
    K₀ = ∫ log g(x;Ψ₀,σ₀) g(x;Ψ₀,σ₀) dx.

    En quadrature, chaque composante est intégrée en coordonnée réduite :
    K₀ = Σⱼ α₀ⱼ ∫ log g(μ₀ⱼ + σ₀t) f(t;0,1) dt, ce qui garde la masse
    de chaque pic à l'échelle 1 quel que soit σ₀. Sinon, moyenne de
    log g sur n_draws tirages frais avec erreur standard.
    """
    if method == "quadrature":
        family, sigma = true_model.family, true_model.sigma
        support = true_model.mixing.locations
        value = abserr = 0.0
        for mu, alpha in zip(support, true_model.mixing.weights):

            def integrand(t: float, mu: float = mu) -> float:
                log_f = float(families.std_log_density(family, t))
                log_g = float(model.mixture_log_density(true_model, mu + sigma * t)[0])
                return numerics.xlogy_density(log_f, log_g)

            peaks = np.add.outer((support - mu) / sigma, K0_PEAK_OFFSETS)
            integral = numerics.integrate_real_line(
                integrand, breakpoints=peaks.ravel(), epsabs=1e-9
            )
            value += alpha * integral.value
            abserr += alpha * integral.abserr
        return K0Estimate(value, abserr, "quadrature")
    if method != "monte_carlo":
        raise InvalidModelError(f"méthode inconnue : {method!r}")
    data = model.sample_mixture(true_model, n_draws, seed)
    log_g = model.mixture_log_density(true_model, data.observations)
    return K0Estimate(
        float(log_g.mean()),
        float(log_g.std(ddof=1) / math.sqrt(n_draws)),
        "monte_carlo",
    )


def mv_compute_K0(
    true_model: MultivariateMixtureModel, n_draws: int = 1_000_000, seed: int = 0
) -> K0Estimate:
    """K₀* par Monte Carlo (la quadrature devient impraticable au-delà de p = 3)."""
    data = model.mv_sample(true_model, n_draws, seed)
    terms = model.mv_component_log_densities(true_model, data)
    log_g = np.logaddexp.reduce(terms, axis=1)
    return K0Estimate(
        float(log_g.mean()),
        float(log_g.std(ddof=1) / math.sqrt(n_draws)),
        "monte_carlo",
    )


# --- Constantes univariées ---


def _eps_from_bounds(
    K0: float, v: FamilyConstants, b: float, d2_exponent: float, d3_factor: float
) -> tuple[float, float]:
    d2 = (v.v1 / v.v0) ** d2_exponent
    log_envelope = math.log(v.v0) / b + (1.0 - 1.0 / b) * math.log(v.v1)
    log_d3 = (K0 - 1.0 - log_envelope) / d3_factor
    return d2, math.exp(log_d3)


def compute_constants(
    true_model: MixtureModel,
    m: int,
    k0_method: Literal["quadrature", "monte_carlo"] = "quadrature",
    n_draws: int = 1_000_000,
    seed: int = 0,
) -> TheoryConstants:
    """a, b, ε₀, K₀, Δ et le plus grand ε vérifiant D1–D3 (ε = min des trois bornes)."""
    if m < 1:
        raise InvalidModelError(f"ordre m invalide : {m}")
    true_model.mixing.check_order(m)
    v = families.constants(true_model.family)
    beta = v.beta
    if not beta > 1:
        raise InvalidModelError(f"β doit être > 1, reçu {beta}")
    sigma0 = true_model.sigma
    a = (1.0 + beta) / (2.0 * beta)
    b = 2.0 * (beta + 1.0) / (beta - 1.0)
    eps0 = (3.0 * m * b * v.v0 / sigma0) ** (-1.0 / (1.0 - a))
    k0 = compute_K0(true_model, k0_method, n_draws=n_draws, seed=seed)
    delta = v.v0 / math.exp(k0.value - 1.0)
    # D3 : ¼(β−1) log ε ≤ K₀ − 1 − b⁻¹ log v0 − (1−b⁻¹) log v1
    d2, d3 = _eps_from_bounds(k0.value, v, b, -2.0 / (beta + 1.0), (beta - 1.0) / 4.0)
    eps = min(eps0, d2, d3)
    return TheoryConstants(
        a=a,
        b=b,
        eps0=eps0,
        K0=k0.value,
        Delta=delta,
        eps=eps,
        m=m,
        sigma0=sigma0,
        family_constants=v,
        eps_bounds=(eps0, d2, d3),
        K0_stderr=k0.stderr,
    )


def d_condition_margins(
    constants: TheoryConstants, eps: float | None = None
) -> dict[str, float]:
    """
    Marges de D1, D2, D3 pour ε (par défaut celui des constantes) ;
    une marge ≥ 0 signifie la condition satisfaite.
    """
    eps = constants.eps if eps is None else eps
    v, b = constants.family_constants, constants.b
    beta = v.beta
    lhs = (
        math.log(v.v0) / b
        + (1.0 - 1.0 / b) * math.log(v.v1)
        + 0.25 * (beta - 1.0) * math.log(eps)
    )
    return {
        "D1": constants.eps0 - eps,
        "D2": (v.v1 / v.v0) ** (-2.0 / (beta + 1.0)) - eps,
        "D3": (constants.K0 - 1.0) - lhs,
    }


def mv_d_condition_margins(
    constants: MvTheoryConstants, eps: float | None = None
) -> dict[str, float]:
    eps = constants.eps_star if eps is None else eps
    v, b, p = constants.family_constants, constants.b_star, constants.p
    beta = v.beta
    lhs = (
        math.log(v.v0) / b
        + (1.0 - 1.0 / b) * math.log(v.v1)
        + (beta - p) / 8.0 * math.log(eps)
    )
    return {
        "D1*": constants.eps0_star - eps,
        "D2*": (v.v1 / v.v0) ** (-4.0 / (beta - p + 2.0)) - eps,
        "D3*": (constants.K0_star - 1.0) - lhs,
    }


def scale_guard(constants: TheoryConstants) -> tuple[float, float]:
    return constants.scale_guard


def check_scale_guard(constants: TheoryConstants, sigma: float) -> Check:
    """σ ∈ [ε, Δ] ? La marge est la distance signée au bord le plus proche."""
    lo, hi = constants.scale_guard
    margin = min(sigma - lo, hi - sigma)
    return Check("scale_guard", margin >= 0, margin, location=sigma)


# --- Constantes multivariées ---


def compute_mv_constants(
    true_model: MultivariateMixtureModel,
    m: int,
    n_draws: int = 1_000_000,
    seed: int = 0,
) -> MvTheoryConstants:
    """
    a* = (β+p)/(2β), b* = 2(β−p+2)/(β−p), ε₀* solution fermée de
    v0 π^(p/2) / (|Σ₀|^(1/2) Γ(p/2+1)) · (ε₀*)^((1−a*)/2) = 1/(2mb*),
    K₀* par Monte Carlo, Δ* = {v0/exp(K₀*−1)}², ε* = min des bornes D1*–D3*.
    """
    if m < 1:
        raise InvalidModelError(f"ordre m invalide : {m}")
    if true_model.order > m:
        raise InvalidModelError(
            f"{true_model.order} atomes pour un ordre déclaré m={m}"
        )
    v = families.generator_constants(true_model.generator)
    p = true_model.dim
    beta = v.beta
    if not beta > p:
        raise InvalidModelError(f"β doit être > p : β={beta}, p={p}")
    a_star = (beta + p) / (2.0 * beta)
    b_star = 2.0 * (beta - p + 2.0) / (beta - p)
    log_c = (
        math.log(v.v0)
        + 0.5 * p * math.log(math.pi)
        - 0.5 * true_model.log_det
        - float(gammaln(p / 2.0 + 1.0))
    )
    # c · ε^((1−a*)/2) = 1/(2mb*)  ⇒  log ε = 2(−log(2mb*) − log c)/(1−a*)
    eps0_star = math.exp(2.0 * (-math.log(2.0 * m * b_star) - log_c) / (1.0 - a_star))
    k0 = mv_compute_K0(true_model, n_draws=n_draws, seed=seed)
    delta_star = (v.v0 / math.exp(k0.value - 1.0)) ** 2
    d2, d3 = _eps_from_bounds(
        k0.value, v, b_star, -4.0 / (beta - p + 2.0), (beta - p) / 8.0
    )
    return MvTheoryConstants(
        a_star=a_star,
        b_star=b_star,
        eps0_star=eps0_star,
        K0_star=k0.value,
        Delta_star=delta_star,
        eps_star=min(eps0_star, d2, d3),
        m=m,
        p=p,
        det_sigma0=math.exp(true_model.log_det),
        family_constants=v,
        eps_bounds=(eps0_star, d2, d3),
        K0_stderr=k0.stderr,
    )


def eps0_star_equation(constants: MvTheoryConstants, eps: float) -> float:
    """Résidu de l'équation de définition de ε₀* (nul en ε = ε₀*)."""
    v, p, m = constants.family_constants, constants.p, constants.m
    ball = math.sqrt(constants.det_sigma0) * math.gamma(p / 2.0 + 1.0)
    c = v.v0 * math.pi ** (p / 2.0) / ball
    target = 1.0 / (2.0 * m * constants.b_star)
    return c * eps ** ((1.0 - constants.a_star) / 2.0) - target


# --- Conditions C3 / C3* ---


def c3_grid(
    points: int = C3_GRID_POINTS,
    lo: float = C3_GRID_RANGE[0],
    hi: float = C3_GRID_RANGE[1],
) -> np.ndarray:
    """Grille log-espacée symétrique |x| ∈ [lo, hi]."""
    half = np.geomspace(lo, hi, points // 2)
    return np.concatenate((-half[::-1], half))


def verify_C3(
    target: FamilyKind | DensityGenerator,
    constants: FamilyConstants,
    grid: np.ndarray | None = None,
    tol: float = C3_TOLERANCE,
) -> C3Report:
    """
    Plus grande violation de f ≤ enveloppe sur la grille.

    Famille : f(x;0,1) ≤ min{v0, v1|x|^(−β)} sur ±[1e-6, 1e6].
    Générateur : f0(x) ≤ min{v0, v1 x^(−β/2)} sur x ∈ [1e-6, 1e6].
    """
    if isinstance(target, DensityGenerator):
        if grid is None:
            x = np.geomspace(*C3_GRID_RANGE, C3_GRID_POINTS)
        else:
            x = np.asarray(grid)
        violation = target.f0(x) - constants.radial_envelope(x)
    else:
        x = c3_grid() if grid is None else np.asarray(grid)
        violation = families.std_density(target, x) - constants.envelope(x)
    worst = int(np.argmax(violation))
    return C3Report(
        passed=bool(violation[worst] <= tol),
        max_violation=float(violation[worst]),
        location=float(x[worst]),
        grid_points=int(x.size),
    )


# --- Condition C2 ---


def verify_C2(true_model: MixtureModel) -> C2Report:
    """
    Condition suffisante de C2 : ΣⱼΣₕ α₀ⱼα₀ₕ ∫ log f(t;(μ₀ⱼ−μ₀ₕ)/σ₀,1) f(t;0,1) dt > −∞.

    Formes closes pour la normale et Gumbel, quadrature sinon (le
    minorant logistique ne donne pas la valeur).
    """
    family = true_model.family
    mu = true_model.mixing.locations / true_model.sigma
    alpha = true_model.mixing.alphas
    terms: list[tuple[float, float, str]] = []
    total = 0.0
    for j in range(len(mu)):
        for h in range(len(mu)):
            delta = float(mu[j] - mu[h])
            ce = families.cross_entropy_closed_form(family, delta)
            if ce.kind == "lower_bound":
                ce = families.CrossEntropy(
                    families.cross_entropy_quadrature(family, delta), "quadrature"
                )
            terms.append((delta, ce.value, ce.kind))
            total += alpha[j] * alpha[h] * ce.value
    return C2Report(value=total, finite=math.isfinite(total), terms=tuple(terms))


def mv_cross_entropy_closed_form(
    gen: DensityGenerator, mu: np.ndarray, cov: np.ndarray
) -> float:
    """
    ∫ log f(𝐱;𝛍,Σ) f(𝐱;𝟎,Σ) d𝐱 = −½p log 2π − ½ log|Σ| − ½p − ½ 𝛍ᵀΣ⁻¹𝛍
    pour le générateur normal.
    """
    if gen.kind != "multivariate_normal":
        raise InvalidModelError(f"générateur non supporté : {gen.kind!r}")
    mu = np.asarray(mu, dtype=float)
    chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    y = np.linalg.solve(chol, mu)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    p = gen.dim
    return -0.5 * p * families.LOG_2PI - 0.5 * log_det - 0.5 * p - 0.5 * float(y @ y)


def verify_mv_C2(true_model: MultivariateMixtureModel) -> C2Report:
    points = true_model.mixing.points
    alpha = true_model.mixing.alphas
    terms: list[tuple[float, float, str]] = []
    total = 0.0
    for j in range(len(points)):
        for h in range(len(points)):
            offset = points[j] - points[h]
            value = mv_cross_entropy_closed_form(
                true_model.generator, offset, true_model.cov
            )
            terms.append((float(np.abs(offset).sum()), value, "exact"))
            total += alpha[j] * alpha[h] * value
    return C2Report(value=total, finite=math.isfinite(total), terms=tuple(terms))


# --- Rapports complets ---


def _ordering_checks(
    eps: float, eps0: float, delta: float, suffix: str = ""
) -> list[Check]:
    return [
        Check(f"eps<=eps0{suffix}", eps <= eps0, eps0 - eps),
        Check(f"eps<Delta{suffix}", eps < delta, delta - eps),
    ]


def certify(
    true_model: MixtureModel,
    m: int | None = None,
    k0_method: Literal["quadrature", "monte_carlo"] = "quadrature",
    seed: int = 0,
) -> CertificationReport:
    """Constantes et vérifications C1, C2, C3, D1–D3 pour un modèle univarié."""
    m = true_model.order if m is None else m
    constants = compute_constants(true_model, m, k0_method=k0_method, seed=seed)
    family = true_model.family
    report = CertificationReport(constants)
    report.checks.append(
        Check("C1", family.tag in families.SUPPORTED_FAMILIES, 0.0, detail=family.name)
    )
    c2 = verify_C2(true_model)
    report.checks.append(Check("C2", c2.finite, c2.value))
    c3 = verify_C3(family, constants.family_constants)
    report.checks.append(
        Check("C3", c3.passed, -c3.max_violation, location=c3.location)
    )
    for name, margin in d_condition_margins(constants).items():
        report.checks.append(Check(name, margin >= -MARGIN_TOLERANCE, margin))
    report.checks.extend(
        _ordering_checks(constants.eps, constants.eps0, constants.Delta)
    )
    beta = constants.family_constants.beta
    a = constants.a
    report.checks.append(Check("a_in_(1/2,1)", 0.5 < a < 1.0, min(a - 0.5, 1.0 - a)))
    report.checks.append(
        Check("b>2", constants.b > 2.0, constants.b - 2.0, detail=f"beta={beta}")
    )
    _log_report(report, family.name)
    return report


def certify_mv(
    true_model: MultivariateMixtureModel,
    m: int | None = None,
    n_draws: int = 1_000_000,
    seed: int = 0,
) -> CertificationReport:
    """Analogue multivarié : C1*, C2*, C3*, D1*–D3*."""
    m = true_model.order if m is None else m
    constants = compute_mv_constants(true_model, m, n_draws=n_draws, seed=seed)
    report = CertificationReport(constants)
    report.checks.append(Check("C1*", True, 0.0, detail=true_model.generator.kind))
    c2 = verify_mv_C2(true_model)
    report.checks.append(Check("C2*", c2.finite, c2.value))
    c3 = verify_C3(true_model.generator, constants.family_constants)
    report.checks.append(
        Check("C3*", c3.passed, -c3.max_violation, location=c3.location)
    )
    for name, margin in mv_d_condition_margins(constants).items():
        report.checks.append(Check(name, margin >= -MARGIN_TOLERANCE, margin))
    report.checks.extend(
        _ordering_checks(
            constants.eps_star, constants.eps0_star, constants.Delta_star, "*"
        )
    )
    a = constants.a_star
    report.checks.append(Check("a*_in_(1/2,1)", 0.5 < a < 1.0, min(a - 0.5, 1.0 - a)))
    report.checks.append(Check("b*>2", constants.b_star > 2.0, constants.b_star - 2.0))
    _log_report(report, f"multivariate_normal({true_model.dim})")
    return report


def _log_report(report: CertificationReport, label: str) -> None:
    if report.passed:
        logger.info(
            "Certification %s : %d vérifications satisfaites", label, len(report.checks)
        )
    else:
        logger.warning(
            "Certification %s : échec de %s",
            label,
            ", ".join(check.name for check in report.failed),
        )
