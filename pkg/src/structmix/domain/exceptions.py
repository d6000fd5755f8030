"""
Exceptions du domaine.

Toutes les erreurs métier dérivent de StructmixError : la CLI les
convertit en code de sortie 1, les autres exceptions remontent telles
quelles (bug, pas erreur de domaine).
"""


class StructmixError(Exception):
    """Classe de base des erreurs de domaine."""


class InvalidModelError(StructmixError, ValueError):
    """Paramètres ou spécification de modèle invalides (σ ≤ 0, poids négatifs...)."""


class DimensionMismatchError(InvalidModelError):
    """Deux objets multivariés n'ont pas la même dimension p."""


class InsufficientDataError(StructmixError, ValueError):
    """Pas assez d'observations pour l'ordre demandé (n ≤ m, ou n ≤ p·m)."""


class QuadratureError(StructmixError):
    """L'intégration adaptative n'a pas convergé."""


class ZeroDensityError(StructmixError):
    """Une densité de mélange est nulle même après stabilisation log-sum-exp."""


class AllChainsFailedError(StructmixError):
    """Toutes les chaînes EM (redémarrages) ont échoué."""


class SingularCovarianceError(StructmixError):
    """La matrice Σ n'est pas définie positive."""


class SchemaError(StructmixError, ValueError):
    """Document JSON/CSV mal formé ou de version de schéma inconnue."""


class PersistenceError(StructmixError):
    """Erreur d'entrée/sortie, toujours accompagnée du chemin concerné."""
