# tests/services/test_run_ledger.py
from app.database.models import RunRecord, RunStatus
from app.services.run_ledger import RunLedger


def fetch_runs(database):
    db = database.SessionLocal()
    try:
        return [(run.command, run.status, run.exit_code, run.error, sorted(a.path for a in run.artifacts))
                for run in db.query(RunRecord).order_by(RunRecord.id).all()]
    finally:
        db.close()


def test_completed_run_with_artifacts(ledger_db):
    ledger = RunLedger()
    run_id = ledger.start("spectrum", "f" * 64, "results", 6, "single-junction")
    assert run_id is not None
    ledger.add_artifact("results/spectrum_flux.csv", "csv")
    ledger.add_artifact("results/spectrum_flux.json", "json")
    ledger.finish(0)
    assert fetch_runs(ledger_db) == [
        ("spectrum", RunStatus.COMPLETED, 0, None, ["results/spectrum_flux.csv", "results/spectrum_flux.json"]),
    ]


def test_failed_run_keeps_message(ledger_db):
    ledger = RunLedger()
    ledger.start("fit", "a" * 64, "results")
    ledger.finish(3, "charge truncation did not converge")
    (command, status, exit_code, error, artifacts), = fetch_runs(ledger_db)
    assert status is RunStatus.FAILED
    assert exit_code == 3
    assert error == "charge truncation did not converge"
    assert artifacts == []


def test_disabled_ledger_records_nothing(ledger_db):
    ledger = RunLedger(enabled=False)
    assert ledger.start("quantize", "b" * 64, "results") is None
    ledger.finish(0)
    assert fetch_runs(ledger_db) == []


def test_unreachable_database_does_not_fail_the_run(tmp_path):
    from app.database import db as database

    original = str(database.engine.url)
    database.configure(f"sqlite:///{tmp_path / 'missing' / 'dir' / 'ledger.db'}")
    try:
        ledger = RunLedger()
        assert not ledger.enabled
        assert ledger.start("spectrum", "c" * 64, "results") is None
        ledger.finish(0)
    finally:
        database.configure(original)
