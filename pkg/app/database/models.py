# app/database/models.py
from sqlalchemy import (Column, Integer, String, DateTime, Text, Enum,
                        ForeignKey)
from sqlalchemy.orm import declarative_base, relationship
from datetime import datetime
import enum


Base = declarative_base()


class RunStatus(enum.Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False, index=True)
    config_hash = Column(String, nullable=False, index=True)
    status = Column(Enum(RunStatus), default=RunStatus.RUNNING, nullable=False)
    exit_code = Column(Integer, nullable=True)
    error = Column(Text, nullable=True)
    n_max = Column(Integer, nullable=True)
    gauge = Column(String, nullable=True)
    output_dir = Column(String, nullable=False)
    timestamp = Column(DateTime, default=datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)

    artifacts = relationship("RunArtifact", back_populates="run", cascade="all, delete-orphan")


class RunArtifact(Base):
    __tablename__ = "run_artifacts"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    path = Column(String, nullable=False)
    kind = Column(String, nullable=False)
    timestamp = Column(DateTime, default=datetime.utcnow)

    run = relationship("RunRecord", back_populates="artifacts")
