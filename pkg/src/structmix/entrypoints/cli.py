"""
Point d'entrée en ligne de commande (thin adapter).

La CLI convertit les arguments en commands, les envoie au message bus et
écrit les résultats dans les fichiers demandés. Aucune logique du
domaine ici.

Codes de sortie : 0 succès, 1 erreur du domaine (modèle invalide,
certification en échec, expérience partielle), 2 erreur d'usage.
Les diagnostics vont sur stderr, les données dans les fichiers ou stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence

from structmix import __version__, config
from structmix.adapters import codec
from structmix.domain import commands
from structmix.domain.estimate import FitConfig
from structmix.domain.exceptions import StructmixError
from structmix.domain.families import DensityGenerator, FamilyKind
from structmix.service_layer import bootstrap, messagebus

logger = logging.getLogger(__name__)

Runner = Callable[[argparse.Namespace, messagebus.MessageBus], int]

SCHEMAS = """\
Formats JSON (tous avec "schema": 1) :
  modèle univarié    {"kind": "mixture_model", "family": {"tag": "normal"},
                      "mixing": {"kind": "mixing", "support": [...], "weights": [...]},
                      "sigma": 1.0}
                     family.tag ∈ normal | logistic | gumbel | student_t (+ "nu"),
                     ou {"student_t": ν}
  modèle multivarié  {"kind": "mv_mixture_model",
                      "generator": {"kind": "multivariate_normal", "dim": p},
                      "mixing": {"kind": "mv_mixing", "support": [[...], ...],
                                 "weights": [...]},
                      "Sigma": [[...], ...]}
  loi mélangeante    {"kind": "mixing" | "mv_mixing" | "extended_mixing", ...}
  plan d'expérience  {"kind": "experiment_plan", "true_model": {...},
                      "fit_order": m, "n_grid": [...], "replications": R,
                      "base_seed": s, "fit_config": {"restarts": ..., ...},
                      "theory_guards": false}
Sans "kind", le type est déduit des clés du document.
Échantillons CSV : en-tête x (univarié) ou x1,…,xp."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structmix",
        description=(
            "Mélanges à paramètre structurel : simulation, EMV, certification, "
            "expériences."
        ),
        epilog=SCHEMAS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--seed", dest="global_seed", type=int, default=0, help="graine par défaut (0)"
    )
    parser.add_argument(
        "--quiet", action="store_true", help="n'afficher que les avertissements"
    )
    parser.add_argument(
        "--version", action="version", version=f"structmix {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SOUS-COMMANDE")

    def add(name: str, help: str, run: Runner) -> argparse.ArgumentParser:
        p = sub.add_parser(
            name,
            help=help,
            description=help,
            epilog=SCHEMAS,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.set_defaults(run=run)
        return p

    fit = add("fit", "estimer (Ψ̂, σ̂) par EM multi-départs", run_fit)
    fit.add_argument(
        "--family",
        required=True,
        help="normal, logistic, gumbel, student_t(ν) ou multivariate_normal",
    )
    fit.add_argument(
        "--order", "-m", type=int, required=True, help="ordre m du mélange"
    )
    fit.add_argument("--data", required=True, type=Path, help="échantillon CSV")
    fit.add_argument("--restarts", type=int, default=20)
    fit.add_argument("--max-iter", type=int, default=500)
    fit.add_argument("--ll-tol", type=float, default=1e-8)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--sigma-lo", type=float, default=None)
    fit.add_argument("--sigma-hi", type=float, default=None)
    fit.add_argument("--out", required=True, type=Path, help="résultat JSON")

    sample = add("sample", "simuler n tirages d'un modèle", run_sample)
    sample.add_argument("--model", required=True, type=Path, help="modèle JSON")
    sample.add_argument("--n", type=int, required=True)
    sample.add_argument("--seed", type=int, default=None)
    sample.add_argument("--out", required=True, type=Path, help="échantillon CSV")

    cert = add(
        "certify", "calculer les constantes et vérifier les conditions", run_certify
    )
    cert.add_argument("--model", required=True, type=Path, help="modèle vrai JSON")
    cert.add_argument(
        "--order",
        "-m",
        type=int,
        default=None,
        help="ordre déclaré (défaut : nombre d'atomes)",
    )
    cert.add_argument(
        "--seed", type=int, default=None, help="graine du Monte Carlo de K₀*"
    )
    cert.add_argument(
        "--out", type=Path, default=None, help="rapport JSON (défaut : stdout)"
    )

    dist = add("distance", "distance D(Ψ₁, Ψ₂) ou D*", run_distance)
    dist.add_argument(
        "--psi1", required=True, type=Path, help="loi, modèle ou résultat JSON"
    )
    dist.add_argument(
        "--psi2", required=True, type=Path, help="loi, modèle ou résultat JSON"
    )

    exp = add("experiment", "expérience Monte Carlo de convergence", run_experiment)
    exp.add_argument("--plan", required=True, type=Path, help="plan JSON")
    exp.add_argument("--out-records", required=True, type=Path)
    exp.add_argument("--out-summary", required=True, type=Path)
    exp.add_argument("--format", choices=("csv", "json"), default="csv")
    exp.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="processus joblib (défaut : STRUCTMIX_JOBS)",
    )
    exp.add_argument("--archive", default=None, help="URI SQLAlchemy de l'archive")
    exp.add_argument(
        "--id",
        dest="experiment_id",
        default=None,
        help="identifiant (défaut : nom du plan)",
    )
    return parser


def _seed(args: argparse.Namespace) -> int:
    return args.global_seed if args.seed is None else args.seed


# --- Sous-commandes ---


def run_sample(args: argparse.Namespace, bus: messagebus.MessageBus) -> int:
    true_model = codec.read_model(args.model)
    [data] = bus.handle(commands.SimulerÉchantillon(true_model, args.n, _seed(args)))
    codec.write_dataset(args.out, data)
    return 0


def run_fit(args: argparse.Namespace, bus: messagebus.MessageBus) -> int:
    data = codec.read_dataset(args.data)
    bounds = None
    if args.sigma_lo is not None:
        bounds = (args.sigma_lo, args.sigma_hi)
    fit_config = FitConfig(
        order=args.order,
        restarts=args.restarts,
        max_iter=args.max_iter,
        ll_tol=args.ll_tol,
        sigma_bounds=bounds,
        seed=_seed(args),
    )
    family: FamilyKind | DensityGenerator
    if args.family == "multivariate_normal":
        family = DensityGenerator(data.dim)
    else:
        family = codec.parse_family(args.family)
    [result] = bus.handle(commands.AjusterMélange(family, data, fit_config))
    codec.write_json(args.out, codec.fit_result_to_dict(result))
    return 0


def run_certify(args: argparse.Namespace, bus: messagebus.MessageBus) -> int:
    true_model = codec.read_model(args.model)
    [report] = bus.handle(commands.Certifier(true_model, args.order, _seed(args)))
    text = codec.dumps(codec.report_to_dict(report))
    if not report.passed:
        sys.stderr.write(text)
        failed = ", ".join(c.name for c in report.failed)
        logger.error("certification en échec : %s", failed)
        return 1
    if args.out is None:
        sys.stdout.write(text)
    else:
        codec.write_text(args.out, text)
    return 0


def run_distance(args: argparse.Namespace, bus: messagebus.MessageBus) -> int:
    psi1, psi2 = codec.read_mixing(args.psi1), codec.read_mixing(args.psi2)
    [estimate] = bus.handle(commands.CalculerDistance(psi1, psi2))
    if estimate.stderr:
        logger.info("erreur standard Monte Carlo : %.3g", estimate.stderr)
    print(repr(estimate.value))
    return 0


def run_experiment(args: argparse.Namespace, bus: messagebus.MessageBus) -> int:
    plan = codec.read_plan(args.plan)
    jobs = config.get_jobs() if args.jobs is None else args.jobs
    experiment_id = args.experiment_id or args.plan.stem
    [experiment] = bus.handle(commands.LancerExpérience(experiment_id, plan, jobs))
    codec.persist_records(experiment.records, args.out_records, args.format)
    codec.persist_summary(experiment.summary(), args.out_summary, args.format)
    if experiment.status == "partial":
        failed = sum(rec.failed for rec in experiment.records)
        logger.error("expérience partielle : %d enregistrement(s) en échec", failed)
        return 1
    return 0


# --- Dispatch ---


def configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else config.get_log_level()
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def main(argv: Sequence[str] | None = None) -> int:
    """
    dispatch(argv) : analyse, route vers la sous-commande, renvoie le code
    de sortie.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "fit" and (args.sigma_lo is None) != (args.sigma_hi is None):
            parser.error("--sigma-lo et --sigma-hi s'emploient ensemble")
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    configure_logging(args.quiet)
    try:
        bus = bootstrap.bootstrap(archive_uri=getattr(args, "archive", None))
        return args.run(args, bus)
    except StructmixError as e:
        sys.stderr.write(f"structmix {args.command} : {e}\n")
        return 1


dispatch = main


if __name__ == "__main__":
    sys.exit(main())
