# app/database/db.py
import os
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker


BASE_DIR = Path(__file__).resolve().parent.parent.parent
DATABASE_URL = os.environ.get("RHOMBUS_DATABASE_URL", f"sqlite:///{BASE_DIR}/rhombus_runs.db")


def _make_engine(url: str):
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


engine = _make_engine(DATABASE_URL)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def configure(url: str):
    """Point the ledger at another database, e.g. an in-memory one for tests."""
    global engine
    engine = _make_engine(url)
    SessionLocal.configure(bind=engine)
    return engine


def init_db():
    from .models import Base
    Base.metadata.create_all(bind=engine)
