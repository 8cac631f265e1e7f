"""
Run store service.

Keeps API training runs in memory under UUID run IDs, with automatic
expiration. Runs execute in background threads and write their status here.
"""
import logging
import threading
import uuid
from datetime import datetime, timedelta, timezone
from threading import Lock
from typing import Any, Callable, Dict, List, Optional

from app.config import RUN_STORE_EXPIRATION_HOURS, RUN_STORE_MAX_RUNS
from app.errors import GaborNetError

logger = logging.getLogger(__name__)

STATUS_QUEUED = "queued"
STATUS_RUNNING = "running"
STATUS_DONE = "done"
STATUS_FAILED = "failed"

# Thread-safe run storage
_runs: Dict[str, Dict[str, Any]] = {}
_runs_lock = Lock()


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _create_empty_run(run_config: Dict[str, Any]) -> Dict[str, Any]:
    """Create a new run record."""
    return {
        "status": STATUS_QUEUED,
        "config": run_config,
        "report": None,
        "error": None,
        "created_at": _now(),
        "last_access": _now(),
    }


def generate_run_id() -> str:
    return str(uuid.uuid4())


def create_run(run_config: Dict[str, Any]) -> str:
    """
    Register a new run.

    Args:
        run_config: RunConfig document

    Returns:
        The new run ID
    """
    with _runs_lock:
        _cleanup_expired_runs()
        run_id = generate_run_id()
        _runs[run_id] = _create_empty_run(run_config)
        return run_id


def get_run(run_id: str) -> Optional[Dict[str, Any]]:
    """
    Get a run record by ID.

    Returns:
        A copy of the record, or None if not found
    """
    with _runs_lock:
        if run_id in _runs:
            _runs[run_id]["last_access"] = _now()
            return dict(_runs[run_id])
        return None


def set_run_value(run_id: str, key: str, value: Any) -> bool:
    """
    Set a value in a run record.

    Returns:
        True if successful, False if the run was not found
    """
    with _runs_lock:
        if run_id not in _runs:
            return False
        _runs[run_id][key] = value
        _runs[run_id]["last_access"] = _now()
        return True


def delete_run(run_id: str) -> bool:
    with _runs_lock:
        if run_id in _runs:
            del _runs[run_id]
            return True
        return False


def list_runs() -> List[Dict[str, Any]]:
    """Summaries of every stored run, oldest first."""
    with _runs_lock:
        ordered = sorted(_runs.items(), key=lambda x: x[1]["created_at"])
        return [
            {
                "run_id": run_id,
                "status": data["status"],
                "created_at": data["created_at"].isoformat(),
                "error": data["error"],
            }
            for run_id, data in ordered
        ]


def execute_run(run_id: str, work: Callable[[], Any]) -> None:
    """
    Run ``work`` and record its result as the run's report.

    Domain errors mark the run failed with their message; anything else is
    logged with a traceback and also marks it failed.
    """
    set_run_value(run_id, "status", STATUS_RUNNING)
    try:
        report = work()
    except GaborNetError as e:
        logger.warning(f"Run {run_id} failed: {e}")
        set_run_value(run_id, "error", str(e))
        set_run_value(run_id, "status", STATUS_FAILED)
        return
    except Exception as e:
        logger.exception(f"Run {run_id} crashed")
        set_run_value(run_id, "error", f"{type(e).__name__}: {e}")
        set_run_value(run_id, "status", STATUS_FAILED)
        return
    set_run_value(run_id, "report", report)
    set_run_value(run_id, "status", STATUS_DONE)


def start_run(run_id: str, work: Callable[[], Any]) -> threading.Thread:
    """Execute a registered run in a daemon thread."""
    thread = threading.Thread(target=execute_run, args=(run_id, work), daemon=True)
    thread.start()
    return thread


def _cleanup_expired_runs() -> int:
    """
    Remove expired runs.

    Returns:
        Number of runs removed
    """
    # Must be called with lock held
    expiration_threshold = _now() - timedelta(hours=RUN_STORE_EXPIRATION_HOURS)

    expired_ids = [
        run_id for run_id, data in _runs.items()
        if data["last_access"] < expiration_threshold and data["status"] != STATUS_RUNNING
    ]
    for run_id in expired_ids:
        del _runs[run_id]

    # Also drop the oldest finished runs if we're over the limit
    if len(_runs) >= RUN_STORE_MAX_RUNS:
        finished = sorted(
            ((rid, d) for rid, d in _runs.items() if d["status"] in (STATUS_DONE, STATUS_FAILED)),
            key=lambda x: x[1]["last_access"],
        )
        to_remove = len(_runs) - RUN_STORE_MAX_RUNS + 1
        for run_id, _ in finished[:to_remove]:
            del _runs[run_id]
            expired_ids.append(run_id)

    return len(expired_ids)


def get_run_stats() -> Dict[str, Any]:
    """Run counts by status, for monitoring."""
    with _runs_lock:
        counts = {status: 0 for status in (STATUS_QUEUED, STATUS_RUNNING, STATUS_DONE, STATUS_FAILED)}
        for data in _runs.values():
            counts[data["status"]] += 1
        return {"total_runs": len(_runs), **counts}


def clear_runs() -> None:
    with _runs_lock:
        _runs.clear()
