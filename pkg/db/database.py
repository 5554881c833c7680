from sqlalchemy import create_engine, Column, Integer, String, DateTime, Float, ForeignKey, JSON
from sqlalchemy.orm import declarative_base, sessionmaker, relationship, Session
from datetime import datetime
from typing import Iterable, Mapping, Optional

DEFAULT_DATABASE_URL = "sqlite:///./networks.db"

Base = declarative_base()


class StudyRun(Base):
    __tablename__ = "study_runs"
    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False)     # simulate | estimate | stability | roc
    seed = Column(Integer, nullable=False)
    config = Column(JSON, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    results = relationship("StudyResult", back_populates="run", cascade="all, delete")
    stability = relationship("StabilityResult", back_populates="run", cascade="all, delete")


class StudyResult(Base):
    __tablename__ = "study_results"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("study_runs.id"))
    scenario = Column(String, nullable=False)
    method = Column(String, nullable=False)
    n = Column(Integer, nullable=False)
    replication = Column(Integer, nullable=False)
    mse = Column(Float, nullable=True)
    n_selected = Column(Integer, nullable=True)
    power = Column(Float, nullable=True)         # NULL when the truth has no edges
    tdr = Column(Float, nullable=True)           # NULL when nothing was selected
    runtime_ms = Column(Float, nullable=True)
    status = Column(String, default="ok")        # ok | failed
    run = relationship("StudyRun", back_populates="results")


class StabilityResult(Base):
    __tablename__ = "stability_results"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("study_runs.id"))
    dataset = Column(String, nullable=False)
    method = Column(String, nullable=False)
    kappa = Column(Float, nullable=True)
    R = Column(Integer, nullable=False)
    drop_fraction = Column(Float, nullable=False)
    run = relationship("StudyRun", back_populates="stability")


def init_db(url: str = DEFAULT_DATABASE_URL) -> sessionmaker:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def _number(value, kind=float):
    # None and NaN are stored as NULL
    if value is None or value != value:
        return None
    return kind(value)


def _new_run(db: Session, command: str, config: Mapping) -> StudyRun:
    run = StudyRun(command=command, seed=int(config.get("seed", 0)), config=dict(config))
    db.add(run)
    return run


def record_study(db: Session, command: str, config: Mapping, rows: Iterable[Mapping]) -> StudyRun:
    run = _new_run(db, command, config)
    for row in rows:
        run.results.append(StudyResult(
            scenario=row["scenario"],
            method=row["method"],
            n=int(row["n"]),
            replication=int(row["replication"]),
            mse=_number(row.get("mse")),
            n_selected=_number(row.get("n_selected"), int),
            power=_number(row.get("power")),
            tdr=_number(row.get("tdr")),
            runtime_ms=_number(row.get("runtime_ms")),
            status=row.get("status", "ok"),
        ))
    db.commit()
    db.refresh(run)
    return run


def record_stability(db: Session, config: Mapping, scores: Iterable[Mapping]) -> StudyRun:
    run = _new_run(db, "stability", config)
    for score in scores:
        run.stability.append(StabilityResult(
            dataset=score["dataset"],
            method=score["method"],
            kappa=_number(score.get("kappa")),
            R=int(score["R"]),
            drop_fraction=float(score["drop_fraction"]),
        ))
    db.commit()
    db.refresh(run)
    return run


def study_rows(db: Session, run_id: int) -> list:
    return db.query(StudyResult).filter(StudyResult.run_id == run_id).order_by(StudyResult.id).all()
