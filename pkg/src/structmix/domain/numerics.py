"""
Intégration numérique sur la droite réelle.

Quadrature adaptative de QUADPACK (scipy.integrate.quad) : le domaine est
découpé aux points de rupture fournis (positions des atomes, discontinuités),
les deux demi-droites extrêmes sont traitées par le changement de variable
interne de QUADPACK pour les bornes infinies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import integrate

from structmix.domain.exceptions import QuadratureError


@dataclass(frozen=True)
class Integral:
    """Valeur d'une intégrale, borne d'erreur estimée et drapeau de convergence."""

    value: float
    abserr: float
    converged: bool


def integrate_real_line(
    func: Callable[[float], float],
    breakpoints: Iterable[float] = (),
    epsabs: float = 1e-10,
    epsrel: float = 1e-10,
    limit: int = 200,
    strict: bool = True,
) -> Integral:
    """
    Intègre `func` sur ℝ en découpant aux points de rupture.

    Lève QuadratureError si un morceau ne converge pas et que `strict`
    est vrai ; sinon le drapeau `converged` porte l'information.
    """
    points = sorted({float(p) for p in breakpoints if math.isfinite(p)})
    if not points:
        points = [0.0]
    bounds = [-math.inf, *points, math.inf]
    pieces = list(zip(bounds[:-1], bounds[1:]))
    tol = epsabs / len(pieces)

    total = 0.0
    magnitude = 0.0
    abserr = 0.0
    converged = True
    for lo, hi in pieces:
        if lo == hi:
            continue
        result = integrate.quad(
            func, lo, hi, epsabs=tol, epsrel=epsrel, limit=limit, full_output=1
        )
        total += result[0]
        magnitude += abs(result[0])
        abserr += result[1]
        # quad ne renvoie un message que lorsque ier > 0.
        if len(result) > 3:
            converged = False
    if not math.isfinite(total):
        converged = False
    # Chaque morceau garantit erreur ≤ max(tol, epsrel·|valeur|).
    elif abserr > 10.0 * (epsabs + epsrel * magnitude):
        converged = False
    if strict and not converged:
        raise QuadratureError(
            "quadrature adaptative non convergente "
            f"(valeur={total!r}, erreur={abserr:.3g})"
        )
    return Integral(value=total, abserr=abserr, converged=converged)


def xlogy_density(log_p: float, log_q: float) -> float:
    """p·log q à partir de log p, nul lorsque p sous-dépasse vers 0."""
    p = math.exp(log_p) if log_p > -745.0 else 0.0
    if p == 0.0:
        return 0.0
    return p * log_q


def exp_weight_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    ∫_a^b exp(-|μ|) dμ, vectorisé, bornes infinies acceptées.

    Formulation en expm1 par cas (intervalle à gauche de 0, à droite,
    ou à cheval) pour rester exacte sur les intervalles étroits.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape, dtype=float)

    right = a >= 0.0
    left = (b <= 0.0) & ~right
    across = ~(right | left)

    ar, br = a[right], b[right]
    out[right] = -np.exp(-ar) * np.expm1(-(br - ar))
    al, bl = a[left], b[left]
    out[left] = -np.exp(bl) * np.expm1(al - bl)
    out[across] = -np.expm1(a[across]) - np.expm1(-b[across])
    return out
