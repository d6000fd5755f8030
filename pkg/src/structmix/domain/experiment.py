"""
Banc Monte Carlo de la convergence de l'EMV.

Pour chaque taille n de la grille et chaque réplication r : simuler n
tirages du modèle vrai, ajuster, puis mesurer D(Ψ̂,Ψ₀) (ou D*),
|σ̂ − σ₀| (ou ‖Σ̂ − Σ₀‖_F) et l'écart de log-vraisemblance
ℓ_n(ajusté) − ℓ_n(vrai).

D compare des fonctions de répartition, pas des paramètres étiquetés :
la permutation des composantes n'a aucun effet sur les mesures.

La graine de chaque enregistrement est un mélange 64 bits stable de
(graine de base, n, r) : tout enregistrement se rejoue isolément.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed

from structmix.domain import certify, estimate, events, mixing, model
from structmix.domain.estimate import FitConfig
from structmix.domain.exceptions import InvalidModelError, StructmixError
from structmix.domain.model import MixtureModel, MultivariateMixtureModel

logger = logging.getLogger(__name__)

GAP_TOLERANCE = 1e-8
DATA_STREAM, FIT_STREAM = 0, 1


@dataclass(frozen=True)
class ExperimentPlan:
    true_model: MixtureModel | MultivariateMixtureModel
    fit_order: int
    n_grid: tuple[int, ...]
    replications: int
    base_seed: int
    fit_config: FitConfig
    theory_guards: bool = False

    def __post_init__(self) -> None:
        if not self.n_grid:
            raise InvalidModelError("grille de tailles vide")
        if any(n < 1 for n in self.n_grid):
            raise InvalidModelError(f"tailles d'échantillon invalides : {self.n_grid}")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidModelError(
                f"grille non strictement croissante : {self.n_grid}"
            )
        if self.replications < 1:
            raise InvalidModelError(
                f"réplications doit être ≥ 1, reçu {self.replications}"
            )
        if self.fit_order < 1:
            raise InvalidModelError(f"ordre d'ajustement invalide : {self.fit_order}")
        if self.base_seed < 0:
            raise InvalidModelError(
                f"la graine de base doit être ≥ 0, reçu {self.base_seed}"
            )
        if self.theory_guards and self.multivariate:
            raise InvalidModelError(
                "theory_guards n'est défini que pour un modèle univarié"
            )

    @property
    def multivariate(self) -> bool:
        return isinstance(self.true_model, MultivariateMixtureModel)

    def effective_config(self) -> FitConfig:
        """Configuration d'ajustement à l'ordre du plan, σ ∈ [ε, Δ] si demandé."""
        config = dataclasses.replace(self.fit_config, order=self.fit_order)
        if self.theory_guards:
            assert isinstance(self.true_model, MixtureModel)
            constants = certify.compute_constants(self.true_model, self.fit_order)
            bounds = certify.scale_guard(constants)
            config = dataclasses.replace(config, sigma_bounds=bounds)
        return config


@dataclass(frozen=True)
class ExperimentRecord:
    """
    Un enregistrement (n, r). En cas d'échec, `error` porte le message,
    les mesures valent NaN et `converged` est faux.
    """

    n: int
    replication: int
    seed: int
    d_value: float
    sigma_err: float
    loglik_gap: float
    converged: bool
    wall_time: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def gap_violation(self) -> bool:
        """ℓ_n(ajusté) < ℓ_n(vrai) − 1e-8 sur un enregistrement convergé."""
        return self.converged and self.loglik_gap < -GAP_TOLERANCE

    def same_outcome(self, other: ExperimentRecord) -> bool:
        """Égalité de tous les champs sauf le temps d'exécution, NaN compris."""
        mine = dataclasses.astuple(dataclasses.replace(self, wall_time=0.0))
        theirs = dataclasses.astuple(dataclasses.replace(other, wall_time=0.0))
        return all(
            a == b or (_is_nan(a) and _is_nan(b))
            for a, b in zip(mine, theirs)
        )


@dataclass(frozen=True)
class SummaryRow:
    n: int
    median_D: float
    p10_D: float
    p90_D: float
    median_sigma_err: float
    p10_sigma_err: float
    p90_sigma_err: float
    convergence_rate: float
    mean_wall_time: float


def derive_seed(
    base_seed: int, n: int, replication: int, stream: int = DATA_STREAM
) -> int:
    """Graine 64 bits stable dérivée de (base, n, r, flux)."""
    state = np.random.SeedSequence([base_seed, n, replication, stream]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def run_record(
    plan: ExperimentPlan, config: FitConfig, n: int, replication: int
) -> ExperimentRecord:
    """Simule, ajuste et mesure un enregistrement ; un échec est capturé."""
    seed = derive_seed(plan.base_seed, n, replication)
    fit_seed = derive_seed(plan.base_seed, n, replication, FIT_STREAM)
    fit_config = dataclasses.replace(config, seed=fit_seed)
    started = time.perf_counter()
    try:
        truth = plan.true_model
        if isinstance(truth, MultivariateMixtureModel):
            data = model.mv_sample(truth, n, seed)
            result = estimate.mv_fit(truth.generator, data, fit_config)
            assert isinstance(result.model, MultivariateMixtureModel)
            d_value = mixing.distance_Dstar(result.model.mixing, truth.mixing).value
            sigma_err = float(np.linalg.norm(result.model.cov - truth.cov, ord="fro"))
            gap = result.loglik - model.mv_log_likelihood(truth, data)
        else:
            data = model.sample_mixture(truth, n, seed)
            result = estimate.fit(truth.family, data, fit_config)
            assert isinstance(result.model, MixtureModel)
            d_value = mixing.distance_D(result.model.mixing, truth.mixing)
            sigma_err = abs(result.model.sigma - truth.sigma)
            gap = result.loglik - model.log_likelihood(truth, data)
    except (StructmixError, FloatingPointError, np.linalg.LinAlgError) as e:
        logger.warning("enregistrement n=%d r=%d en échec : %s", n, replication, e)
        return ExperimentRecord(
            n, replication, seed, math.nan, math.nan, math.nan, False,
            time.perf_counter() - started, error=f"{type(e).__name__}: {e}",
        )
    record = ExperimentRecord(
        n=n,
        replication=replication,
        seed=seed,
        d_value=d_value,
        sigma_err=sigma_err,
        loglik_gap=gap,
        converged=result.converged,
        wall_time=time.perf_counter() - started,
    )
    if record.gap_violation:
        logger.warning(
            "n=%d r=%d : ℓ_n(ajusté) < ℓ_n(vrai) de %.3g", n, replication, -gap
        )
    return record


def run_experiment(plan: ExperimentPlan, jobs: int = 1) -> list[ExperimentRecord]:
    """
    Tous les enregistrements du plan, triés par (n, r).

    Les enregistrements sont indépendants et peuvent s'exécuter en
    parallèle (`jobs` processus joblib) sans changer le résultat.
    """
    config = plan.effective_config()
    tasks = [(n, r) for n in plan.n_grid for r in range(plan.replications)]
    records = Parallel(n_jobs=jobs)(
        delayed(run_record)(plan, config, n, r) for n, r in tasks
    )
    return sorted(records, key=lambda rec: (rec.n, rec.replication))


def summarize(records: list[ExperimentRecord]) -> list[SummaryRow]:
    """
    Par n : médiane et percentiles 10/90 de D et de l'erreur d'échelle
    (enregistrements réussis), taux de convergence et temps moyen (tous).
    """
    if not records:
        raise InvalidModelError("aucun enregistrement à résumer")
    rows = []
    for n in sorted({rec.n for rec in records}):
        group = [rec for rec in records if rec.n == n]
        ok = [rec for rec in group if not rec.failed]
        d = np.array([rec.d_value for rec in ok])
        s = np.array([rec.sigma_err for rec in ok])
        rows.append(
            SummaryRow(
                n=n,
                median_D=_percentile(d, 50),
                p10_D=_percentile(d, 10),
                p90_D=_percentile(d, 90),
                median_sigma_err=_percentile(s, 50),
                p10_sigma_err=_percentile(s, 10),
                p90_sigma_err=_percentile(s, 90),
                convergence_rate=sum(rec.converged for rec in group) / len(group),
                mean_wall_time=float(np.mean([rec.wall_time for rec in group])),
            )
        )
    return rows


def _is_nan(value: object) -> bool:
    return isinstance(value, float) and math.isnan(value)


def _percentile(values: np.ndarray, q: float) -> float:
    if values.size == 0:
        return math.nan
    return float(np.percentile(values, q))


ExperimentStatus = Literal["pending", "complete", "partial"]


class Experiment:
    """
    Agrégat racine d'une expérience archivée.

    Regroupe le plan et ses enregistrements ; c'est lui qui émet les
    événements du domaine au fil de l'exécution.
    """

    def __init__(
        self,
        experiment_id: str,
        plan: ExperimentPlan,
        records: Optional[list[ExperimentRecord]] = None,
        created_at: Optional[datetime] = None,
    ):
        self.experiment_id = experiment_id
        self.plan = plan
        self.records = records or []
        self.created_at = created_at or datetime.now(timezone.utc)
        self.événements: list[events.Event] = []

    def __repr__(self) -> str:
        return f"<Experiment {self.experiment_id}>"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Experiment):
            return NotImplemented
        return self.experiment_id == other.experiment_id

    def __hash__(self) -> int:
        return hash(self.experiment_id)

    @property
    def status(self) -> ExperimentStatus:
        if not self.records:
            return "pending"
        return "partial" if any(rec.failed for rec in self.records) else "complete"

    def run(self, jobs: int = 1) -> list[ExperimentRecord]:
        """Exécute le plan ; un événement par enregistrement, puis un de clôture."""
        self.records = run_experiment(self.plan, jobs=jobs)
        for rec in self.records:
            if rec.failed:
                self.événements.append(
                    events.EnregistrementÉchoué(
                        id_expérience=self.experiment_id,
                        n=rec.n,
                        réplication=rec.replication,
                        erreur=rec.error or "",
                    )
                )
            else:
                self.événements.append(
                    events.EnregistrementTerminé(
                        id_expérience=self.experiment_id,
                        n=rec.n,
                        réplication=rec.replication,
                        d_value=rec.d_value,
                        sigma_err=rec.sigma_err,
                    )
                )
        self.événements.append(
            events.ExpérienceTerminée(
                id_expérience=self.experiment_id,
                statut=self.status,
                nb_enregistrements=len(self.records),
            )
        )
        return self.records

    def summary(self) -> list[SummaryRow]:
        return summarize(self.records)
