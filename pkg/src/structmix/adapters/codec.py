"""
Formats de fichiers JSON et CSV.

Tous les documents JSON portent un champ "schema": 1 et un champ "kind".
Les flottants sont écrits par repr (représentation la plus courte qui
se relit à l'identique), ce qui rend les allers-retours exacts au bit
près. Les échecs d'entrée/sortie remontent en PersistenceError avec le
chemin concerné ; un document mal formé lève SchemaError.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from structmix.domain.certify import CertificationReport
from structmix.domain.estimate import FitConfig, FitResult
from structmix.domain.exceptions import PersistenceError, SchemaError, StructmixError
from structmix.domain.experiment import ExperimentPlan, ExperimentRecord, SummaryRow
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.domain.mixing import (
    AnyMixing,
    ExtendedMixing,
    MixingDistribution,
    MultivariateMixing,
)
from structmix.domain.model import Dataset, MixtureModel, MultivariateMixtureModel

SCHEMA_VERSION = 1

Format = Literal["csv", "json"]

RECORD_COLUMNS = (
    "n",
    "rep",
    "seed",
    "D",
    "sigma_err",
    "loglik_gap",
    "converged",
    "wall_time",
)
# Colonne ajoutée en dernier seulement si un enregistrement a échoué.
ERROR_COLUMN = "error"
SUMMARY_COLUMNS = tuple(f.name for f in dataclasses.fields(SummaryRow))


# --- Entrées / sorties brutes ---


def write_text(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise PersistenceError(f"écriture impossible de {path} : {e}") from e


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise PersistenceError(f"lecture impossible de {path} : {e}") from e


def dumps(payload: dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    write_text(path, dumps(payload))


def read_json(path: str | Path) -> dict[str, Any]:
    try:
        payload = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} : JSON invalide ({e})") from e
    return check_schema(payload, source=str(path))


def check_schema(
    payload: Any, source: str = "document", kinds: Iterable[str] | None = None
) -> dict[str, Any]:
    if not isinstance(payload, dict):
        raise SchemaError(f"{source} : un objet JSON est attendu")
    if payload.get("schema") != SCHEMA_VERSION:
        raise SchemaError(
            f"{source} : version de schéma {payload.get('schema')!r}, "
            f"attendu {SCHEMA_VERSION}"
        )
    if kinds is not None and payload.get("kind") not in kinds:
        raise SchemaError(
            f"{source} : document de type {payload.get('kind')!r}, "
            f"attendu {sorted(kinds)}"
        )
    return payload


def infer_kind(payload: dict[str, Any]) -> str | None:
    """
    Type d'un document sans champ "kind", déduit de ses clés : loi
    étendue (gamma, rho, inner), loi (support, weights ; support de
    vecteurs en multivarié) ou modèle (sigma ou Sigma).
    """
    kind = payload.get("kind")
    if kind is not None:
        return kind
    keys = set(payload)
    if {"gamma", "rho", "inner"} <= keys:
        return "extended_mixing"
    if {"support", "weights"} <= keys:
        support = payload["support"]
        vector = (
            isinstance(support, list) and bool(support) and isinstance(support[0], list)
        )
        return "mv_mixing" if vector else "mixing"
    if "mixing" in keys and "Sigma" in keys:
        return "mv_mixture_model"
    if "mixing" in keys and "sigma" in keys:
        return "mixture_model"
    return None


def _field(payload: dict[str, Any], name: str, source: str) -> Any:
    try:
        return payload[name]
    except KeyError:
        raise SchemaError(f"{source} : champ {name!r} manquant") from None


def _envelope(kind: str, **fields: Any) -> dict[str, Any]:
    return {"schema": SCHEMA_VERSION, "kind": kind, **fields}


# --- Familles, lois mélangeantes, modèles ---


def family_to_dict(family: FamilyKind) -> dict[str, Any]:
    if family.nu is None:
        return {"tag": family.tag}
    return {"tag": family.tag, "nu": family.nu}


def family_from_dict(payload: dict[str, Any] | str) -> FamilyKind:
    """
    Famille lue sous l'une des formes "normal", {"tag": "student_t", "nu": 5}
    ou {"student_t": 5}.
    """
    if isinstance(payload, str):
        return parse_family(payload)
    if not isinstance(payload, dict):
        raise SchemaError(f"famille invalide : {payload!r}")
    if "tag" in payload:
        return FamilyKind(payload["tag"], payload.get("nu"))
    if set(payload) == {"student_t"}:
        nu = payload["student_t"]
        if isinstance(nu, bool) or not isinstance(nu, int):
            raise SchemaError(f"degrés de liberté invalides : {nu!r}")
        return FamilyKind.student_t(nu)
    raise SchemaError(f"famille invalide : {payload!r}")


def parse_family(text: str) -> FamilyKind:
    """"normal", "logistic", "gumbel", "student_t(5)" ou "student_t:5"."""
    text = text.strip()
    for sep in ("(", ":"):
        if text.startswith("student_t" + sep):
            nu = text[len("student_t") + 1 :].rstrip(")")
            try:
                return FamilyKind.student_t(int(nu))
            except ValueError as e:
                raise SchemaError(f"degrés de liberté invalides : {nu!r}") from e
    return FamilyKind(text)  # type: ignore[arg-type]


def mixing_to_dict(psi: AnyMixing | MultivariateMixing) -> dict[str, Any]:
    if isinstance(psi, ExtendedMixing):
        return _envelope(
            "extended_mixing",
            gamma=psi.gamma,
            rho=psi.rho,
            inner=mixing_to_dict(psi.inner),
        )
    if isinstance(psi, MultivariateMixing):
        return _envelope(
            "mv_mixing",
            support=[list(p) for p in psi.support],
            weights=list(psi.weights),
        )
    return _envelope("mixing", support=list(psi.support), weights=list(psi.weights))


def mixing_from_dict(
    payload: dict[str, Any], source: str = "document"
) -> AnyMixing | MultivariateMixing:
    """
    Loi mélangeante tirée d'un document : loi seule, modèle ou résultat
    d'ajustement (on en extrait Ψ), pour composer sample → fit → distance.
    """
    if not isinstance(payload, dict):
        raise SchemaError(f"{source} : loi mélangeante invalide {payload!r}")
    kind = infer_kind(payload)
    if kind in ("mixture_model", "mv_mixture_model"):
        return mixing_from_dict(_field(payload, "mixing", source), source)
    if kind == "fit_result":
        return mixing_from_dict(_field(payload, "model", source), source)
    if kind == "extended_mixing":
        inner = mixing_from_dict(_field(payload, "inner", source), source)
        if not isinstance(inner, MixingDistribution):
            raise SchemaError(
                f"{source} : la loi intérieure d'une loi étendue est univariée"
            )
        gamma, rho = _field(payload, "gamma", source), _field(payload, "rho", source)
        return ExtendedMixing(float(gamma), float(rho), inner)
    support = _field(payload, "support", source)
    weights = _field(payload, "weights", source)
    if kind == "mv_mixing":
        return MultivariateMixing.from_atoms(support, weights)
    if kind == "mixing":
        return MixingDistribution.from_atoms(support, weights)
    raise SchemaError(f"{source} : type de loi mélangeante inconnu {kind!r}")


def model_to_dict(fitted: MixtureModel | MultivariateMixtureModel) -> dict[str, Any]:
    if isinstance(fitted, MultivariateMixtureModel):
        return _envelope(
            "mv_mixture_model",
            generator={"kind": fitted.generator.kind, "dim": fitted.generator.dim},
            mixing=mixing_to_dict(fitted.mixing),
            Sigma=[list(row) for row in fitted.Sigma],
        )
    return _envelope(
        "mixture_model",
        family=family_to_dict(fitted.family),
        mixing=mixing_to_dict(fitted.mixing),
        sigma=fitted.sigma,
    )


def model_from_dict(
    payload: dict[str, Any], source: str = "document"
) -> MixtureModel | MultivariateMixtureModel:
    payload = check_schema(payload, source)
    kind = infer_kind(payload)
    if kind not in ("mixture_model", "mv_mixture_model"):
        raise SchemaError(
            f"{source} : document de type {kind!r}, un modèle est attendu"
        )
    mixing = mixing_from_dict(_field(payload, "mixing", source), source)
    if kind == "mv_mixture_model":
        if not isinstance(mixing, MultivariateMixing):
            raise SchemaError(
                f"{source} : un modèle multivarié attend une loi multivariée"
            )
        gen = payload.get("generator", {"dim": mixing.dim})
        return MultivariateMixtureModel.from_matrix(
            DensityGenerator(
                int(_field(gen, "dim", source)),
                gen.get("kind", "multivariate_normal"),
            ),
            mixing,
            np.asarray(_field(payload, "Sigma", source), dtype=float),
        )
    if not isinstance(mixing, MixingDistribution):
        raise SchemaError(
            f"{source} : un modèle univarié attend une loi mélangeante univariée"
        )
    return MixtureModel(
        family_from_dict(_field(payload, "family", source)),
        mixing,
        float(_field(payload, "sigma", source)),
    )


def read_model(path: str | Path) -> MixtureModel | MultivariateMixtureModel:
    return model_from_dict(read_json(path), source=str(path))


def read_mixing(path: str | Path) -> AnyMixing | MultivariateMixing:
    return mixing_from_dict(read_json(path), source=str(path))


# --- Ajustement ---


def fit_config_to_dict(config: FitConfig) -> dict[str, Any]:
    payload = dataclasses.asdict(config)
    if config.sigma_bounds is not None:
        payload["sigma_bounds"] = list(config.sigma_bounds)
    return payload


def fit_config_from_dict(
    payload: dict[str, Any], order: int | None = None
) -> FitConfig:
    values = dict(payload)
    if order is not None:
        values.setdefault("order", order)
    if values.get("sigma_bounds") is not None:
        lo, hi = values["sigma_bounds"]
        values["sigma_bounds"] = (float(lo), float(hi))
    known = {f.name for f in dataclasses.fields(FitConfig)}
    unknown = set(values) - known
    if unknown:
        raise SchemaError(f"champs de configuration inconnus : {sorted(unknown)}")
    return FitConfig(**values)


def fit_result_to_dict(result: FitResult) -> dict[str, Any]:
    return _envelope(
        "fit_result",
        model=model_to_dict(result.model),
        loglik=result.loglik,
        iterations=result.iterations,
        converged=result.converged,
        restart_index=result.restart_index,
        trace=list(result.trace),
        sigma_clamps=result.sigma_clamps,
        guard_hits=result.guard_hits,
        weight_floors=result.weight_floors,
    )


def fit_result_from_dict(
    payload: dict[str, Any], source: str = "document"
) -> FitResult:
    payload = check_schema(payload, source, kinds=("fit_result",))
    return FitResult(
        model=model_from_dict(_field(payload, "model", source), source),
        loglik=float(payload["loglik"]),
        iterations=int(payload["iterations"]),
        converged=bool(payload["converged"]),
        restart_index=int(payload["restart_index"]),
        trace=tuple(float(v) for v in payload["trace"]),
        sigma_clamps=int(payload.get("sigma_clamps", 0)),
        guard_hits=int(payload.get("guard_hits", 0)),
        weight_floors=int(payload.get("weight_floors", 0)),
    )


# --- Certification ---


def report_to_dict(report: CertificationReport) -> dict[str, Any]:
    return _envelope(
        "certification_report",
        passed=report.passed,
        constants=dataclasses.asdict(report.constants),
        checks=[
            {
                "name": c.name,
                "pass": c.passed,
                "margin": c.margin,
                "location": c.location,
            }
            for c in report.checks
        ],
    )


# --- Plans d'expérience ---


def plan_to_dict(plan: ExperimentPlan) -> dict[str, Any]:
    return _envelope(
        "experiment_plan",
        true_model=model_to_dict(plan.true_model),
        fit_order=plan.fit_order,
        n_grid=list(plan.n_grid),
        replications=plan.replications,
        base_seed=plan.base_seed,
        fit_config=fit_config_to_dict(plan.fit_config),
        theory_guards=plan.theory_guards,
    )


def plan_from_dict(payload: dict[str, Any], source: str = "document") -> ExperimentPlan:
    payload = check_schema(payload, source, kinds=("experiment_plan",))
    fit_order = int(_field(payload, "fit_order", source))
    try:
        return ExperimentPlan(
            true_model=model_from_dict(_field(payload, "true_model", source), source),
            fit_order=fit_order,
            n_grid=tuple(int(n) for n in _field(payload, "n_grid", source)),
            replications=int(_field(payload, "replications", source)),
            base_seed=int(payload.get("base_seed", 0)),
            fit_config=fit_config_from_dict(
                payload.get("fit_config", {}), order=fit_order
            ),
            theory_guards=bool(payload.get("theory_guards", False)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, StructmixError):
            raise
        raise SchemaError(f"{source} : plan invalide ({e})") from e


def read_plan(path: str | Path) -> ExperimentPlan:
    return plan_from_dict(read_json(path), source=str(path))


# --- Échantillons CSV ---


def write_dataset(path: str | Path, data: Dataset) -> None:
    obs = data.observations
    header = ["x"] if obs.ndim == 1 else [f"x{k + 1}" for k in range(obs.shape[1])]
    rows = obs[:, None] if obs.ndim == 1 else obs
    _write_csv(path, header, ([repr(float(v)) for v in row] for row in rows))


def read_dataset(path: str | Path) -> Dataset:
    header, rows = _read_csv(path)
    vector_header = [f"x{k + 1}" for k in range(len(header))]
    if header != ["x"] and (not header or header != vector_header):
        raise SchemaError(f"{path} : en-tête attendu x ou x1,…,xp, reçu {header}")
    try:
        values = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as e:
        raise SchemaError(f"{path} : valeur non numérique ({e})") from e
    if values.size == 0:
        raise SchemaError(f"{path} : aucune observation")
    if values.shape[1] != len(header):
        raise SchemaError(
            f"{path} : {values.shape[1]} colonnes pour l'en-tête {header}"
        )
    # "x" : univarié ; x1,…,xp : multivarié, même pour p = 1.
    return Dataset(values[:, 0] if header == ["x"] else values)


def _write_csv(
    path: str | Path, header: Sequence[str], rows: Iterable[Sequence[str]]
) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise PersistenceError(f"écriture impossible de {path} : {e}") from e


def _read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, [])
            rows = [row for row in reader if row]
    except OSError as e:
        raise PersistenceError(f"lecture impossible de {path} : {e}") from e
    return [name.strip() for name in header], rows


# --- Enregistrements et résumé d'expérience ---


def record_to_dict(rec: ExperimentRecord) -> dict[str, Any]:
    return {
        "n": rec.n,
        "rep": rec.replication,
        "seed": rec.seed,
        "D": rec.d_value,
        "sigma_err": rec.sigma_err,
        "loglik_gap": rec.loglik_gap,
        "converged": rec.converged,
        "wall_time": rec.wall_time,
        "error": rec.error,
    }


def record_from_dict(payload: dict[str, Any]) -> ExperimentRecord:
    return ExperimentRecord(
        n=int(payload["n"]),
        replication=int(payload["rep"]),
        seed=int(payload["seed"]),
        d_value=float(payload["D"]),
        sigma_err=float(payload["sigma_err"]),
        loglik_gap=float(payload["loglik_gap"]),
        converged=bool(payload["converged"]),
        wall_time=float(payload["wall_time"]),
        error=payload.get("error"),
    )


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def persist_records(
    records: Sequence[ExperimentRecord], path: str | Path, fmt: Format = "csv"
) -> None:
    """
    Enregistrements triés par (n, r), en CSV ou en JSON équivalent.

    Le CSV a les huit colonnes de RECORD_COLUMNS ; la colonne `error`
    ne s'ajoute en dernier que si au moins un enregistrement a échoué.
    """
    ordered = sorted(records, key=lambda rec: (rec.n, rec.replication))
    rows = [record_to_dict(rec) for rec in ordered]
    if fmt == "json":
        write_json(path, _envelope("experiment_records", records=rows))
    elif fmt == "csv":
        columns = RECORD_COLUMNS
        if any(rec.failed for rec in ordered):
            columns = (*RECORD_COLUMNS, ERROR_COLUMN)
        _write_csv(path, columns, ([_cell(row[c]) for c in columns] for row in rows))
    else:
        raise SchemaError(f"format inconnu : {fmt!r}")


def read_records(path: str | Path, fmt: Format = "csv") -> list[ExperimentRecord]:
    if fmt == "json":
        payload = check_schema(
            read_json(path), str(path), kinds=("experiment_records",)
        )
        return [record_from_dict(row) for row in payload["records"]]
    header, rows = _read_csv(path)
    if tuple(header) not in (RECORD_COLUMNS, (*RECORD_COLUMNS, ERROR_COLUMN)):
        raise SchemaError(
            f"{path} : colonnes {header}, attendu {list(RECORD_COLUMNS)} (+ error)"
        )
    records = []
    for row in rows:
        values = dict(zip(header, row))
        if values["converged"] not in ("true", "false"):
            raise SchemaError(
                f"{path} : drapeau de convergence invalide {values['converged']!r}"
            )
        records.append(
            record_from_dict(
                {
                    **values,
                    "converged": values["converged"] == "true",
                    "error": values.get(ERROR_COLUMN) or None,
                }
            )
        )
    return records


def persist_summary(
    rows: Sequence[SummaryRow], path: str | Path, fmt: Format = "csv"
) -> None:
    dicts = [dataclasses.asdict(row) for row in rows]
    if fmt == "json":
        write_json(path, _envelope("experiment_summary", rows=dicts))
    elif fmt == "csv":
        cells = ([_cell(d[c]) for c in SUMMARY_COLUMNS] for d in dicts)
        _write_csv(path, SUMMARY_COLUMNS, cells)
    else:
        raise SchemaError(f"format inconnu : {fmt!r}")


def read_summary(path: str | Path, fmt: Format = "csv") -> list[SummaryRow]:
    if fmt == "json":
        payload = check_schema(
            read_json(path), str(path), kinds=("experiment_summary",)
        )
        dicts = payload["rows"]
    else:
        header, rows = _read_csv(path)
        if tuple(header) != SUMMARY_COLUMNS:
            raise SchemaError(
                f"{path} : colonnes {header}, attendu {list(SUMMARY_COLUMNS)}"
            )
        dicts = [dict(zip(header, row)) for row in rows]
    return [
        SummaryRow(
            n=int(d["n"]), **{c: float(d[c]) for c in SUMMARY_COLUMNS if c != "n"}
        )
        for d in dicts
    ]
