"""
Events du domaine.

Faits survenus pendant une expérience Monte Carlo : immuables,
nommés au passé.
"""

from dataclasses import dataclass


class Event:
    """Classe de base pour tous les events du domaine."""
    pass


@dataclass(frozen=True)
class EnregistrementTerminé(Event):
    """Un enregistrement (n, r) a été simulé, ajusté et mesuré."""

    id_expérience: str
    n: int
    réplication: int
    d_value: float
    sigma_err: float


@dataclass(frozen=True)
class EnregistrementÉchoué(Event):
    """Un enregistrement a échoué ; l'expérience continue."""

    id_expérience: str
    n: int
    réplication: int
    erreur: str


@dataclass(frozen=True)
class ExpérienceTerminée(Event):
    """Tous les enregistrements du plan ont été produits."""

    id_expérience: str
    statut: str
    nb_enregistrements: int

