"""
Tables SQLAlchemy de l'archive des expériences.

Les tables sont définies avec SQLAlchemy Core et la traduction
ligne ↔ objet du domaine est faite par le repository : les
enregistrements circulent entre processus joblib et doivent rester des
dataclasses ordinaires, sans instrumentation d'un mapper.

Les noms de colonnes SQL restent en ASCII. Les graines 64 bits non
signées dépassent l'entier signé de SQLite : elles sont stockées en
texte. SQLite stocke NaN comme NULL, d'où les colonnes de mesure
nullables.
"""

from sqlalchemy import (
    Boolean,
    Column,
    DateTime,
    Engine,
    Float,
    ForeignKey,
    Integer,
    MetaData,
    String,
    Table,
    Text,
)

metadata = MetaData()

experiments = Table(
    "experiments",
    metadata,
    Column("id", String(255), primary_key=True),
    Column("plan", Text, nullable=False),
    Column("status", String(16), nullable=False),
    Column("created_at", DateTime(timezone=True), nullable=False),
)

experiment_records = Table(
    "experiment_records",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("experiment_id", String(255), ForeignKey("experiments.id"), nullable=False),
    Column("n", Integer, nullable=False),
    Column("replication", Integer, nullable=False),
    Column("seed", String(20), nullable=False),
    Column("d_value", Float, nullable=True),
    Column("sigma_err", Float, nullable=True),
    Column("loglik_gap", Float, nullable=True),
    Column("converged", Boolean, nullable=False),
    Column("wall_time", Float, nullable=False),
    Column("error", Text, nullable=True),
)


def create_tables(engine: Engine) -> None:
    """Crée les tables absentes (idempotent)."""
    metadata.create_all(engine)
