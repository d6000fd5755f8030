"""
Estimation du maximum de vraisemblance par EM à échelle structurelle.

Le pas M met en commun les responsabilités de toutes les composantes pour
mettre à jour l'unique paramètre d'échelle σ (ou Σ). La globalisation se
fait par redémarrages multiples ; la chaîne retenue est celle de plus
grande log-vraisemblance finale, la plus petite en indice en cas
d'égalité à 1e-12 près.

Chaque pas n'est accepté que si la log-vraisemblance observée ne diminue
pas : les traces sont monotones par construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from structmix.domain import families, model
from structmix.domain.exceptions import (
    AllChainsFailedError,
    InsufficientDataError,
    InvalidModelError,
    SingularCovarianceError,
    StructmixError,
)
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.domain.mixing import MixingDistribution, MultivariateMixing
from structmix.domain.model import Dataset, MixtureModel, MultivariateMixtureModel

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-10
ASCENT_SLACK = 1e-10
TIE_TOL = 1e-12
SIGMA_GUARD = 1e-8
EIGEN_FLOOR = 1e-10
BRENT_MAXITER = 40


@dataclass(frozen=True)
class FitConfig:
    order: int
    restarts: int = 20
    max_iter: int = 500
    ll_tol: float = 1e-8
    sigma_bounds: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("order", "restarts", "max_iter"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise InvalidModelError(
                    f"{name} doit être un entier ≥ 1, reçu {value!r}"
                )
        if not self.ll_tol > 0:
            raise InvalidModelError(f"ll_tol doit être > 0, reçu {self.ll_tol!r}")
        if self.sigma_bounds is not None:
            lo, hi = self.sigma_bounds
            if not (0 < lo < hi and math.isfinite(hi)):
                raise InvalidModelError(f"bornes de σ invalides : {self.sigma_bounds}")


@dataclass(frozen=True)
class FitResult:
    """
    Résultat d'un ajustement : modèle retenu (forme canonique) et trace.

    Les compteurs `sigma_clamps`, `guard_hits` et `weight_floors`
    enregistrent les interventions des garde-fous sur la chaîne gagnante.
    """

    model: MixtureModel | MultivariateMixtureModel
    loglik: float
    iterations: int
    converged: bool
    restart_index: int
    trace: tuple[float, ...]
    sigma_clamps: int = 0
    guard_hits: int = 0
    weight_floors: int = 0

    @property
    def mixing(self) -> MixingDistribution | MultivariateMixing:
        return self.model.mixing

    @property
    def sigma(self) -> float:
        if not isinstance(self.model, MixtureModel):
            raise InvalidModelError("σ n'est défini que pour un ajustement univarié")
        return self.model.sigma

    @property
    def Sigma(self) -> np.ndarray:
        if not isinstance(self.model, MultivariateMixtureModel):
            raise InvalidModelError("Σ n'est défini que pour un ajustement multivarié")
        return self.model.cov


@dataclass(frozen=True)
class EmStep:
    """Modèle après un pas, sa log-vraisemblance, et si le pas a été accepté."""

    model: MixtureModel | MultivariateMixtureModel
    loglik: float
    improved: bool


# --- Machinerie d'une chaîne ---


@dataclass
class _Counters:
    sigma_clamps: int = 0
    guard_hits: int = 0
    weight_floors: int = 0


@dataclass
class _State:
    """Paramètres de travail d'une chaîne (atomes non canonisés) et termes log αⱼf."""

    mu: np.ndarray
    alpha: np.ndarray
    scale: float | np.ndarray
    terms: np.ndarray
    loglik: float


@dataclass
class _Chain:
    """Contexte d'une chaîne : données, famille, garde-fous, compteurs."""

    x: np.ndarray
    family: FamilyKind | None = None
    generator: DensityGenerator | None = None
    lo: float = 0.0
    hi: float = math.inf
    guard: float = 0.0
    xatol: float = 1e-10
    counters: _Counters = field(default_factory=_Counters)

    # -- termes et vraisemblance --

    def terms(
        self, mu: np.ndarray, alpha: np.ndarray, scale: float | np.ndarray
    ) -> np.ndarray:
        with np.errstate(divide="ignore"):
            log_alpha = np.log(alpha)
        if self.generator is None:
            assert self.family is not None
            log_f = families.log_density(
                self.family, self.x[:, None], mu[None, :], float(scale)
            )
            return log_alpha[None, :] + log_f
        log_f = _mv_log_f(self.generator, self.x, mu, np.asarray(scale))
        return log_alpha[None, :] + log_f

    def state(
        self, mu: np.ndarray, alpha: np.ndarray, scale: float | np.ndarray
    ) -> _State:
        terms = self.terms(mu, alpha, scale)
        return _State(mu, alpha, scale, terms, float(np.sum(logsumexp(terms, axis=1))))

    # -- garde-fous --

    def floor_weights(self, alpha: np.ndarray) -> np.ndarray:
        if np.any(alpha < WEIGHT_FLOOR):
            self.counters.weight_floors += 1
            logger.warning("poids < %g planchers et renormalisés", WEIGHT_FLOOR)
            alpha = np.maximum(alpha, WEIGHT_FLOOR)
            alpha = alpha / alpha.sum()
        return alpha

    def clamp_sigma(self, sigma: float) -> float:
        if sigma < self.guard:
            self.counters.guard_hits += 1
            logger.warning("σ=%g sous le garde-fou %g", sigma, self.guard)
            sigma = self.guard
        if sigma < self.lo or sigma > self.hi:
            self.counters.sigma_clamps += 1
            sigma = min(max(sigma, self.lo), self.hi)
        return sigma


def _mv_log_f(
    gen: DensityGenerator, x: np.ndarray, mu: np.ndarray, cov: np.ndarray
) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise SingularCovarianceError("Σ n'est pas définie positive") from e
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    columns = []
    for point in mu:
        y = linalg.solve_triangular(chol, (x - point).T, lower=True)
        columns.append(gen.log_f0(np.sum(y * y, axis=0)) - 0.5 * log_det)
    return np.stack(columns, axis=1)


def _weights(state: _State) -> np.ndarray:
    return np.exp(state.terms - logsumexp(state.terms, axis=1, keepdims=True))


def _accept(old: _State, new: _State) -> bool:
    return math.isfinite(new.loglik) and new.loglik >= old.loglik - ASCENT_SLACK


def _normal_m_step(chain: _Chain, state: _State) -> _State:
    x, w = chain.x, _weights(state)
    nk = w.sum(axis=0)
    alpha = chain.floor_weights(nk / x.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where(nk > 0, (w * x[:, None]).sum(axis=0) / nk, state.mu)
    s2 = float(np.sum(w * (x[:, None] - mu[None, :]) ** 2)) / x.size
    return chain.state(mu, alpha, chain.clamp_sigma(math.sqrt(s2)))


def _bounded_argmax(
    objective: Callable[[float], float], lo: float, hi: float, xatol: float
) -> float:
    res = optimize.minimize_scalar(
        lambda t: -objective(t),
        bounds=(lo, hi),
        method="bounded",
        options={"maxiter": BRENT_MAXITER, "xatol": xatol},
    )
    return float(res.x)


def _blockwise_m_step(chain: _Chain, state: _State) -> _State:
    """
    Montée par blocs : α en forme close, puis chaque μⱼ, puis log σ, par
    Brent borné sur la vraisemblance complétée ; un bloc n'est retenu que
    s'il n'abaisse pas la vraisemblance observée.
    """
    assert chain.family is not None
    family, x, w = chain.family, chain.x, _weights(state)
    current = state
    alpha = chain.floor_weights(w.sum(axis=0) / x.size)
    candidate = chain.state(state.mu, alpha, state.scale)
    if _accept(current, candidate):
        current = candidate

    xmin, xmax = float(x.min()), float(x.max())
    for j in range(current.mu.size):
        sigma = float(current.scale)

        def q_mu(t: float, j: int = j, sigma: float = sigma) -> float:
            return float(np.dot(w[:, j], families.log_density(family, x, t, sigma)))

        mu = current.mu.copy()
        mu[j] = _bounded_argmax(q_mu, xmin, xmax, chain.xatol)
        candidate = chain.state(mu, current.alpha, current.scale)
        if candidate.loglik >= current.loglik:
            current = candidate

    mu = current.mu

    def q_log_sigma(t: float) -> float:
        log_f = families.log_density(family, x[:, None], mu[None, :], math.exp(t))
        return float(np.sum(w * log_f))

    # Recherche sur [σ/10, 10σ] puis projection sur [lo, hi], comme en forme close.
    log_sigma = math.log(float(current.scale))
    lo = max(log_sigma - math.log(10.0), math.log(max(chain.guard, 1e-300)))
    hi = log_sigma + math.log(10.0)
    sigma = chain.clamp_sigma(math.exp(_bounded_argmax(q_log_sigma, lo, hi, 1e-12)))
    candidate = chain.state(mu, current.alpha, sigma)
    if candidate.loglik >= current.loglik:
        current = candidate
    return current


def _mv_m_step(chain: _Chain, state: _State) -> _State:
    x, w = chain.x, _weights(state)
    n, p = x.shape
    nk = w.sum(axis=0)
    alpha = chain.floor_weights(nk / n)
    mu = state.mu.copy()
    live = nk > 0
    mu[live] = (w[:, live].T @ x) / nk[live, None]
    cov = np.zeros((p, p))
    for j in range(mu.shape[0]):
        centred = x - mu[j]
        cov += (w[:, j, None] * centred).T @ centred
    cov = _floor_eigenvalues(cov / n, chain)
    return chain.state(mu, alpha, cov)


def _floor_eigenvalues(cov: np.ndarray, chain: _Chain) -> np.ndarray:
    """Symétrise Σ et plancher ses valeurs propres à 1e-10·trace/p."""
    cov = 0.5 * (cov + cov.T)
    p = cov.shape[0]
    floor = EIGEN_FLOOR * float(np.trace(cov)) / p
    values, vectors = np.linalg.eigh(cov)
    if np.any(values < floor):
        chain.counters.guard_hits += 1
        logger.warning("valeurs propres de Σ planchers à %g", floor)
        values = np.maximum(values, floor)
        cov = (vectors * values) @ vectors.T
        cov = 0.5 * (cov + cov.T)
    return cov


def _step(chain: _Chain, state: _State) -> tuple[_State, bool]:
    if chain.generator is not None:
        new = _mv_m_step(chain, state)
    elif chain.family is not None and chain.family.tag == "normal":
        new = _normal_m_step(chain, state)
    else:
        new = _blockwise_m_step(chain, state)
    if not _accept(state, new):
        return state, False
    return new, True


@dataclass(frozen=True)
class _ChainOutcome:
    state: _State
    iterations: int
    converged: bool
    trace: tuple[float, ...]
    counters: _Counters


def _run_chain(chain: _Chain, state: _State, config: FitConfig) -> _ChainOutcome:
    trace = [state.loglik]
    converged = False
    iterations = 0
    while iterations < config.max_iter:
        new, improved = _step(chain, state)
        iterations += 1
        if not improved:
            converged = True
            break
        gain = new.loglik - state.loglik
        state = new
        trace.append(state.loglik)
        if gain < config.ll_tol:
            converged = True
            break
    return _ChainOutcome(state, iterations, converged, tuple(trace), chain.counters)


# --- Pas EM public ---


def responsibilities(fitted: MixtureModel, data: Dataset) -> np.ndarray:
    """Matrice (n, m) des w_ij ∝ αⱼ f(Xᵢ;μⱼ,σ), normalisée par ligne."""
    chain = _Chain(data.observations, family=fitted.family)
    mixing = fitted.mixing
    return _weights(chain.state(mixing.locations, mixing.alphas, fitted.sigma))


def em_step(fitted: MixtureModel | MultivariateMixtureModel, data: Dataset) -> EmStep:
    """
    Une itération EM. Si le pas abaisserait ℓ_n, le modèle est renvoyé
    inchangé avec `improved=False`.
    """
    if isinstance(fitted, MultivariateMixtureModel):
        chain = _Chain(np.atleast_2d(data.observations), generator=fitted.generator)
        state = chain.state(fitted.mixing.points, fitted.mixing.alphas, fitted.cov)
    else:
        x = data.observations
        chain = _Chain(x, family=fitted.family, guard=SIGMA_GUARD * float(np.ptp(x)))
        chain.xatol = 1e-10 * max(float(np.ptp(x)), 1e-300)
        state = chain.state(fitted.mixing.locations, fitted.mixing.alphas, fitted.sigma)
    new, improved = _step(chain, state)
    if not improved:
        return EmStep(fitted, state.loglik, False)
    return EmStep(_to_model(chain, new), new.loglik, True)


def _to_model(chain: _Chain, state: _State) -> MixtureModel | MultivariateMixtureModel:
    if chain.generator is not None:
        mixing_mv = MultivariateMixing.from_atoms(state.mu, state.alpha, normalize=True)
        return MultivariateMixtureModel.from_matrix(
            chain.generator, mixing_mv, np.asarray(state.scale)
        )
    assert chain.family is not None
    mixing = MixingDistribution.from_atoms(state.mu, state.alpha, normalize=True)
    return MixtureModel(chain.family, mixing, float(state.scale))


# --- Ajustement multi-départs ---


def _initial_locations(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Quantiles (j+½)/m, décalés de ±½ écart-type par une perturbation tirée."""
    levels = (np.arange(m) + 0.5) / m
    quantiles = np.quantile(x, levels, axis=0)
    sd = x.std(axis=0)
    jitter = rng.uniform(-0.5, 0.5, size=quantiles.shape) * sd
    return quantiles + jitter


def _scale_factor(rng: np.random.Generator) -> float:
    """Facteur log-uniforme dans [0,3 ; 1]."""
    return math.exp(rng.uniform(math.log(0.3), 0.0))


def _select(outcomes: list[tuple[int, _ChainOutcome]]) -> tuple[int, _ChainOutcome]:
    best_index, best = outcomes[0]
    for index, outcome in outcomes[1:]:
        if outcome.state.loglik > best.state.loglik + TIE_TOL:
            best_index, best = index, outcome
    return best_index, best


def _multi_start(
    make_chain: Callable[[], _Chain],
    initial: Callable[[_Chain, np.random.Generator], _State],
    config: FitConfig,
) -> tuple[_Chain, int, _ChainOutcome]:
    outcomes: list[tuple[int, _ChainOutcome]] = []
    chains: dict[int, _Chain] = {}
    for r in range(config.restarts):
        chain = make_chain()
        rng = np.random.default_rng(config.seed + r)
        try:
            state = initial(chain, rng)
            if not math.isfinite(state.loglik):
                raise InvalidModelError("log-vraisemblance initiale non finie")
            outcome = _run_chain(chain, state, config)
        except (StructmixError, FloatingPointError, np.linalg.LinAlgError) as e:
            logger.debug("départ %d en échec : %s", r, e)
            continue
        logger.debug(
            "départ %d : ℓ=%.10g en %d itérations (convergé=%s)",
            r,
            outcome.state.loglik,
            outcome.iterations,
            outcome.converged,
        )
        outcomes.append((r, outcome))
        chains[r] = chain
    if not outcomes:
        raise AllChainsFailedError(f"les {config.restarts} départs ont échoué")
    index, best = _select(outcomes)
    return chains[index], index, best


def _result(
    chain: _Chain, index: int, outcome: _ChainOutcome, data: Dataset
) -> FitResult:
    fitted = _to_model(chain, outcome.state)
    if isinstance(fitted, MultivariateMixtureModel):
        loglik = model.mv_log_likelihood(fitted, data)
    else:
        loglik = model.log_likelihood(fitted, data)
    return FitResult(
        model=fitted,
        loglik=loglik,
        iterations=outcome.iterations,
        converged=outcome.converged,
        restart_index=index,
        trace=outcome.trace,
        sigma_clamps=outcome.counters.sigma_clamps,
        guard_hits=outcome.counters.guard_hits,
        weight_floors=outcome.counters.weight_floors,
    )


def fit(family: FamilyKind, data: Dataset, config: FitConfig) -> FitResult:
    """
    EMV (Ψ̂, σ̂) par EM multi-départs.

    Avec `sigma_bounds`, σ reste dans [lo, hi] à chaque pas et chaque
    intervention est comptée dans `sigma_clamps`.
    """
    if data.observations.ndim != 1:
        raise InvalidModelError("données multivariées : utiliser mv_fit")
    x = data.observations
    m = config.order
    if data.n <= m:
        raise InsufficientDataError(f"n={data.n} observations pour m={m} composantes")
    spread = float(np.ptp(x))
    if spread == 0.0:
        raise InsufficientDataError("observations toutes identiques")
    lo, hi = config.sigma_bounds or (0.0, math.inf)

    def make_chain() -> _Chain:
        return _Chain(
            x,
            family=family,
            lo=lo,
            hi=hi,
            guard=SIGMA_GUARD * spread,
            xatol=1e-10 * spread,
        )

    def initial(chain: _Chain, rng: np.random.Generator) -> _State:
        mu = _initial_locations(x, m, rng)
        sigma = chain.clamp_sigma(float(x.std()) * _scale_factor(rng))
        return chain.state(mu, np.full(m, 1.0 / m), sigma)

    chain, index, outcome = _multi_start(make_chain, initial, config)
    result = _result(chain, index, outcome, data)
    logger.info(
        "ajustement %s m=%d : ℓ=%.10g, σ̂=%.6g (départ %d)",
        family.name,
        m,
        result.loglik,
        result.sigma,
        index,
    )
    return result


def mv_fit(generator: DensityGenerator, data: Dataset, config: FitConfig) -> FitResult:
    """EMV (Ψ̂, Σ̂) par EM à pas M fermés, multi-départs comme `fit`."""
    x = np.atleast_2d(data.observations)
    if data.observations.ndim != 2 or x.shape[1] != generator.dim:
        raise InvalidModelError(
            f"données de forme {data.observations.shape}, "
            f"attendu (n, {generator.dim})"
        )
    if config.sigma_bounds is not None:
        raise InvalidModelError(
            "sigma_bounds n'a pas de sens pour un ajustement multivarié"
        )
    m, p = config.order, generator.dim
    if data.n <= p * m:
        raise InsufficientDataError(f"n={data.n} observations pour p·m={p * m}")
    sample_cov = np.cov(x, rowvar=False, bias=True).reshape(p, p)

    def make_chain() -> _Chain:
        return _Chain(x, generator=generator)

    def initial(chain: _Chain, rng: np.random.Generator) -> _State:
        mu = _initial_locations(x, m, rng)
        cov = _floor_eigenvalues(sample_cov * _scale_factor(rng), chain)
        return chain.state(mu, np.full(m, 1.0 / m), cov)

    chain, index, outcome = _multi_start(make_chain, initial, config)
    return _result(chain, index, outcome, data)


# --- Oracle de treillis ---


@dataclass(frozen=True)
class Lattice:
    """Treillis (μ₁, μ₂, α, σ) pour la recherche exhaustive à deux composantes."""

    mu1: tuple[float, ...]
    mu2: tuple[float, ...]
    alpha: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (self.mu1 and self.mu2 and self.alpha and self.sigma):
            raise InvalidModelError("treillis vide")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha):
            raise InvalidModelError("α hors de [0, 1]")
        if any(not s > 0 for s in self.sigma):
            raise InvalidModelError("σ doit être > 0")

    @classmethod
    def around(
        cls, truth: MixtureModel, half_width: float = 3.0, points: int = 21
    ) -> Lattice:
        """
        μⱼ sur [μ₀ⱼ − h, μ₀ⱼ + h], α sur [0, 1], σ géométrique sur [σ₀/4, 4σ₀].
        Un modèle vrai à un seul atome est traité comme deux atomes confondus.
        """
        locations = truth.mixing.support
        mu1, mu2 = locations[0], locations[-1]
        return cls(
            mu1=tuple(np.linspace(mu1 - half_width, mu1 + half_width, points).tolist()),
            mu2=tuple(np.linspace(mu2 - half_width, mu2 + half_width, points).tolist()),
            alpha=tuple(np.linspace(0.0, 1.0, points).tolist()),
            sigma=tuple((truth.sigma * np.geomspace(0.25, 4.0, points)).tolist()),
        )


@dataclass(frozen=True)
class LatticeOptimum:
    mu: tuple[float, float]
    alpha: float
    sigma: float
    loglik: float


def lattice_search(
    family: FamilyKind, data: Dataset, lattice: Lattice
) -> LatticeOptimum:
    """Maximise ℓ_n sur le treillis, vectorisé sur (α, μ₁, μ₂) pour chaque σ."""
    x = data.observations
    mu1, mu2 = np.asarray(lattice.mu1), np.asarray(lattice.mu2)
    alpha = np.asarray(lattice.alpha)
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(alpha), np.log1p(-alpha)
    best = LatticeOptimum((math.nan, math.nan), math.nan, math.nan, -math.inf)
    for sigma in lattice.sigma:
        f1 = families.log_density(family, x[None, :], mu1[:, None], sigma)
        f2 = families.log_density(family, x[None, :], mu2[:, None], sigma)
        # ℓ[a, k1, k2] = Σᵢ log{α f(xᵢ;μ₁) + (1−α) f(xᵢ;μ₂)}
        values = np.logaddexp(
            log_a[:, None, None, None] + f1[None, :, None, :],
            log_b[:, None, None, None] + f2[None, None, :, :],
        ).sum(axis=-1)
        a, k1, k2 = np.unravel_index(int(np.argmax(values)), values.shape)
        if values[a, k1, k2] > best.loglik:
            best = LatticeOptimum(
                (float(mu1[k1]), float(mu2[k2])),
                float(alpha[a]),
                float(sigma),
                float(values[a, k1, k2]),
            )
    return best
