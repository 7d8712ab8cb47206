# app/services/run_ledger.py
import logging
from datetime import datetime
from typing import List, Optional

from sqlalchemy.exc import SQLAlchemyError

from app.database import db as database
from app.database.models import RunArtifact, RunRecord, RunStatus


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


class RunLedger:
    """Bookkeeping of CLI runs. A failing ledger never fails the run it records."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.run_id: Optional[int] = None
        self._pending: List[tuple] = []
        if enabled:
            try:
                database.init_db()
            except SQLAlchemyError as e:
                logger.warning(f"Run ledger unavailable, continuing without it: {str(e)}")
                self.enabled = False

    def start(self, command: str, config_hash: str, output_dir: str, n_max: Optional[int] = None,
              gauge: Optional[str] = None) -> Optional[int]:
        if not self.enabled:
            return None
        db = database.SessionLocal()
        try:
            run = RunRecord(
                command=command,
                config_hash=config_hash,
                status=RunStatus.RUNNING,
                n_max=n_max,
                gauge=gauge,
                output_dir=output_dir,
            )
            db.add(run)
            db.commit()
            self.run_id = run.id
            logger.info(f"Recorded run {run.id}: {command} ({config_hash[:12]})")
            return run.id
        except SQLAlchemyError as e:
            db.rollback()
            logger.warning(f"Could not record run start: {str(e)}")
            return None
        finally:
            db.close()

    def add_artifact(self, path: str, kind: str):
        self._pending.append((str(path), kind))

    def finish(self, exit_code: int = 0, error: Optional[str] = None):
        if not self.enabled or self.run_id is None:
            return
        db = database.SessionLocal()
        try:
            run = db.query(RunRecord).filter(RunRecord.id == self.run_id).first()
            if not run:
                logger.warning(f"Run {self.run_id} vanished from the ledger")
                return
            run.status = RunStatus.COMPLETED if exit_code == 0 else RunStatus.FAILED
            run.exit_code = exit_code
            run.error = error
            run.completed_at = datetime.utcnow()
            for path, kind in self._pending:
                db.add(RunArtifact(run_id=run.id, path=path, kind=kind))
            db.commit()
            logger.info(f"Run {run.id} finished with status {run.status.value}")
        except SQLAlchemyError as e:
            db.rollback()
            logger.warning(f"Could not record run completion: {str(e)}")
        finally:
            db.close()
            self._pending = []
