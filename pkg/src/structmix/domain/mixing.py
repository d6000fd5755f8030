"""
Lois mélangeantes discrètes et distance D.

Une loi mélangeante Ψ est une fonction de répartition en escalier
Ψ(μ) = Σⱼ αⱼ I(μⱼ ≤ μ). La distance entre deux telles lois est

    D(Ψ₁, Ψ₂) = ∫ |Ψ₁(μ) − Ψ₂(μ)| exp(−|μ|) dμ,

calculée ici exactement : l'intégrande est constant entre deux points
de support consécutifs, chaque intervalle contribue |ΔΨ| fois la masse
exponentielle de l'intervalle.

L'espace étendu {γ + ρΨ} (masse échappée vers ±∞) et la version
multivariée D* (|μ| = Σ|μ_l|, intégrale sur ℝ^p) sont aussi couverts.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import integrate

from structmix.domain.exceptions import DimensionMismatchError, InvalidModelError
from structmix.domain.numerics import exp_weight_mass

MERGE_TOL = 1e-12
DROP_TOL = 1e-15
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MixingDistribution:
    """
    Value Object : loi mélangeante univariée sous forme canonique.

    Support strictement croissant, poids positifs de somme 1. Utiliser
    `from_atoms` pour construire depuis des atomes quelconques (tri,
    fusion des atomes confondus, suppression des poids nuls).
    """

    support: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.support) != len(self.weights) or not self.support:
            raise InvalidModelError(
                "support et poids doivent être non vides et de même longueur"
            )
        if not all(math.isfinite(t) for t in self.support):
            raise InvalidModelError(f"support non fini : {self.support}")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise InvalidModelError(f"poids négatifs ou non finis : {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidModelError(f"les poids ne somment pas à 1 : {self.weights}")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise InvalidModelError(
                f"support non strictement croissant : {self.support}"
            )

    @classmethod
    def from_atoms(
        cls,
        locations: Iterable[float],
        weights: Iterable[float],
        normalize: bool = False,
    ) -> MixingDistribution:
        """Forme canonique : tri, fusion à 1e-12 près, poids < 1e-15 retirés."""
        locs = np.asarray(list(locations), dtype=float)
        w = np.asarray(list(weights), dtype=float)
        if locs.shape != w.shape or locs.size == 0:
            raise InvalidModelError(
                "atomes et poids doivent être non vides et de même longueur"
            )
        if np.any(w < 0):
            raise InvalidModelError(f"poids négatifs : {w.tolist()}")
        if normalize:
            w = w / w.sum()
        order = np.argsort(locs, kind="stable")
        support: list[float] = []
        merged: list[float] = []
        for t, a in zip(locs[order], w[order]):
            if support and t - support[-1] < MERGE_TOL:
                merged[-1] += float(a)
            else:
                support.append(float(t))
                merged.append(float(a))
        kept = [(t, a) for t, a in zip(support, merged) if a >= DROP_TOL]
        if not kept:
            raise InvalidModelError("tous les poids sont nuls")
        return cls(tuple(t for t, _ in kept), tuple(a for _, a in kept))

    @classmethod
    def point_mass(cls, location: float) -> MixingDistribution:
        return cls((float(location),), (1.0,))

    @property
    def order(self) -> int:
        return len(self.support)

    @property
    def locations(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def alphas(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def check_order(self, m: int) -> None:
        if self.order > m:
            raise InvalidModelError(f"{self.order} atomes pour un ordre déclaré m={m}")

    def affine(self, a: float, c: float) -> MixingDistribution:
        """Loi image par μ ↦ aμ + c (a > 0)."""
        if not a > 0:
            raise InvalidModelError(f"a doit être > 0, reçu {a!r}")
        return MixingDistribution.from_atoms(a * self.locations + c, self.weights)


@dataclass(frozen=True)
class ExtendedMixing:
    """
    Élément de l'espace compactifié : Ψ̄(μ) = γ + ρ·Ψ(μ).

    γ est la masse partie vers −∞, 1 − γ − ρ celle partie vers +∞.
    """

    gamma: float
    rho: float
    inner: MixingDistribution

    def __post_init__(self) -> None:
        total = self.gamma + self.rho
        if self.gamma < 0 or self.rho < 0 or total > 1.0 + WEIGHT_SUM_TOL:
            raise InvalidModelError(
                f"γ={self.gamma}, ρ={self.rho} : il faut γ, ρ ≥ 0 et γ + ρ ≤ 1"
            )

    @classmethod
    def escaped(cls, gamma: float = 0.0) -> ExtendedMixing:
        """Toute la masse à l'infini : γ vers −∞, 1 − γ vers +∞."""
        return cls(gamma=gamma, rho=0.0, inner=MixingDistribution.point_mass(0.0))


AnyMixing = MixingDistribution | ExtendedMixing


def _steps(psi: AnyMixing) -> tuple[float, np.ndarray, np.ndarray]:
    """(valeur en −∞, points de saut, sauts) d'une fonction en escalier."""
    if isinstance(psi, ExtendedMixing):
        return psi.gamma, psi.inner.locations, psi.rho * psi.inner.alphas
    return 0.0, psi.locations, psi.alphas


def evaluate(psi: AnyMixing, mu: np.ndarray | float) -> np.ndarray:
    """Ψ(μ), continue à droite : Σⱼ αⱼ I(μⱼ ≤ μ) (+ γ, ×ρ pour l'espace étendu)."""
    base, jumps_at, jumps = _steps(psi)
    cumulative = np.concatenate(([0.0], np.cumsum(jumps)))
    idx = np.searchsorted(jumps_at, np.asarray(mu, dtype=float), side="right")
    return base + cumulative[idx]


def distance_D(psi1: AnyMixing, psi2: AnyMixing) -> float:
    """
    D(Ψ₁, Ψ₂) exacte.

    Les supports sont fusionnés ; sur (−∞, t₁), [t_k, t_{k+1}) et
    [t_last, ∞) la différence est constante, et chaque intervalle
    contribue |ΔΨ| · ∫ exp(−|μ|).
    """
    base1, at1, _ = _steps(psi1)
    base2, at2, _ = _steps(psi2)
    cuts = np.union1d(at1, at2)
    lower = np.concatenate(([-np.inf], cuts))
    upper = np.concatenate((cuts, [np.inf]))
    gap_left = abs(base1 - base2)
    gaps = np.abs(evaluate(psi1, cuts) - evaluate(psi2, cuts))
    diffs = np.concatenate(([gap_left], gaps))
    return float(np.sum(diffs * exp_weight_mass(lower, upper)))


def distance_D_quadrature(psi1: AnyMixing, psi2: AnyMixing, tol: float = 1e-9) -> float:
    """
    Oracle indépendant de `distance_D` : quadrature adaptative sur [−L, L].

    |Ψ₁ − Ψ₂| ≤ 1, donc la troncature coûte au plus 2e^(−L) ; L = log(4/tol)
    la rend inférieure à tol/2.
    """
    if not tol > 0:
        raise InvalidModelError(f"tol doit être > 0, reçu {tol!r}")
    half_width = math.log(4.0 / tol)
    base1, at1, jumps1 = _steps(psi1)
    base2, at2, jumps2 = _steps(psi2)
    points = [
        float(t)
        for t in np.union1d(np.union1d(at1, at2), [0.0])
        if -half_width < t < half_width
    ]
    # Listes Python + bisect : l'intégrande est appelé des milliers de fois.
    cuts1, levels1 = at1.tolist(), [base1, *(base1 + np.cumsum(jumps1)).tolist()]
    cuts2, levels2 = at2.tolist(), [base2, *(base2 + np.cumsum(jumps2)).tolist()]

    def integrand(mu: float) -> float:
        gap = abs(levels1[bisect_right(cuts1, mu)] - levels2[bisect_right(cuts2, mu)])
        return gap * math.exp(-abs(mu))

    value, _ = integrate.quad(
        integrand,
        -half_width,
        half_width,
        points=points,
        epsabs=tol / 4.0,
        epsrel=1e-13,
        limit=50 + 10 * len(points),
    )
    return float(value)


def parameter_distance(
    psi1: AnyMixing, sigma1: float, psi2: AnyMixing, sigma2: float
) -> float:
    """Distance D(Ψ₁,Ψ₂) + |σ₁ − σ₂| sur les couples (Ψ, σ)."""
    return distance_D(psi1, psi2) + abs(sigma1 - sigma2)


# --- Cas multivarié ---


@dataclass(frozen=True)
class MultivariateMixing:
    """
    Loi mélangeante sur ℝ^p : Ψ(𝛍) = Σⱼ αⱼ I(𝛍ⱼ ≤ 𝛍) coordonnée par coordonnée.

    Forme canonique : points distincts triés lexicographiquement.
    """

    support: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.support) != len(self.weights) or not self.support:
            raise InvalidModelError(
                "support et poids doivent être non vides et de même longueur"
            )
        dims = {len(point) for point in self.support}
        if len(dims) != 1 or 0 in dims:
            raise DimensionMismatchError(
                f"points de dimensions hétérogènes : {sorted(dims)}"
            )
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise InvalidModelError(f"poids négatifs ou non finis : {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidModelError(f"les poids ne somment pas à 1 : {self.weights}")
        if len(set(self.support)) != len(self.support):
            raise InvalidModelError("points de support non distincts")

    @classmethod
    def from_atoms(
        cls,
        points: Sequence[Sequence[float]],
        weights: Iterable[float],
        normalize: bool = False,
    ) -> MultivariateMixing:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(list(weights), dtype=float)
        if pts.shape[0] != w.size or w.size == 0:
            raise InvalidModelError(
                "atomes et poids doivent être non vides et de même longueur"
            )
        if np.any(w < 0):
            raise InvalidModelError(f"poids négatifs : {w.tolist()}")
        if normalize:
            w = w / w.sum()
        order = np.lexsort(pts.T[::-1])
        support: list[np.ndarray] = []
        merged: list[float] = []
        for point, a in zip(pts[order], w[order]):
            match = next(
                (
                    k
                    for k, q in enumerate(support)
                    if np.max(np.abs(point - q)) < MERGE_TOL
                ),
                None,
            )
            if match is None:
                support.append(point)
                merged.append(float(a))
            else:
                merged[match] += float(a)
        kept = [
            (tuple(float(v) for v in q), a)
            for q, a in zip(support, merged)
            if a >= DROP_TOL
        ]
        if not kept:
            raise InvalidModelError("tous les poids sont nuls")
        return cls(tuple(q for q, _ in kept), tuple(a for _, a in kept))

    @property
    def dim(self) -> int:
        return len(self.support[0])

    @property
    def order(self) -> int:
        return len(self.support)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def alphas(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


def evaluate_mv(psi: MultivariateMixing, mu: np.ndarray) -> np.ndarray:
    """Ψ(𝛍) pour un point (p,) ou un lot de points (N, p)."""
    mu = np.asarray(mu, dtype=float)
    single = mu.ndim == 1
    grid = np.atleast_2d(mu)
    below = np.all(psi.points[None, :, :] <= grid[:, None, :], axis=2)
    values = below.astype(float) @ psi.alphas
    return values[0] if single else values


@dataclass(frozen=True)
class DistanceEstimate:
    """Valeur de D* et erreur standard (nulle pour la méthode exacte)."""

    value: float
    stderr: float
    method: str


def _dstar_product(psi1: MultivariateMixing, psi2: MultivariateMixing) -> float:
    # L'intégrande est constant sur chaque cellule de la grille produit
    # formée par les coordonnées des deux supports.
    p = psi1.dim
    axes = [np.union1d(psi1.points[:, l], psi2.points[:, l]) for l in range(p)]
    lowers = [np.concatenate(([-np.inf], cuts)) for cuts in axes]
    uppers = [np.concatenate((cuts, [np.inf])) for cuts in axes]
    masses = [exp_weight_mass(lo, hi) for lo, hi in zip(lowers, uppers)]
    # Représentant de chaque cellule : sa borne inférieure, −∞ remplacé
    # par un point strictement à gauche de tout le support.
    reps = []
    for cuts, lo in zip(axes, lowers):
        r = lo.copy()
        r[0] = cuts[0] - 1.0
        reps.append(r)
    mesh = np.stack(np.meshgrid(*reps, indexing="ij"), axis=-1).reshape(-1, p)
    weight = masses[0]
    for mass in masses[1:]:
        weight = np.multiply.outer(weight, mass)
    gaps = np.abs(evaluate_mv(psi1, mesh) - evaluate_mv(psi2, mesh))
    return float(np.sum(gaps * weight.reshape(-1)))


def distance_Dstar(
    psi1: MultivariateMixing,
    psi2: MultivariateMixing,
    method: Literal["product", "monte_carlo"] | None = None,
    n_draws: int = 1_000_000,
    seed: int = 0,
) -> DistanceEstimate:
    """
    D*(Ψ₁, Ψ₂) = ∫_{ℝ^p} |Ψ₁(𝛍) − Ψ₂(𝛍)| exp(−Σ|μ_l|) d𝛍.

    `product` : décomposition exacte en cellules (défaut pour p ≤ 3).
    `monte_carlo` : 𝛍 à coordonnées Laplace indépendantes, D* = 2^p · E|Ψ₁ − Ψ₂|.
    """
    if psi1.dim != psi2.dim:
        raise DimensionMismatchError(f"dimensions {psi1.dim} et {psi2.dim}")
    p = psi1.dim
    if method is None:
        method = "product" if p <= 3 else "monte_carlo"
    if method == "product":
        return DistanceEstimate(_dstar_product(psi1, psi2), 0.0, "product")
    if method != "monte_carlo":
        raise InvalidModelError(f"méthode inconnue : {method!r}")
    rng = np.random.default_rng(seed)
    draws = rng.laplace(size=(n_draws, p))
    gaps = np.abs(evaluate_mv(psi1, draws) - evaluate_mv(psi2, draws))
    scale = 2.0**p
    return DistanceEstimate(
        value=float(scale * gaps.mean()),
        stderr=float(scale * gaps.std(ddof=1) / math.sqrt(n_draws)),
        method="monte_carlo",
    )
