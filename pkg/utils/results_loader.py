import json
import logging
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)

JSON_ARTIFACTS = ("estimate_report.json", "diagnostics.json", "manifest.json")
CSV_ARTIFACTS = ("draws.csv", "metrics.csv", "replicates.csv")


def load_results(directory):
    """Read whichever CLI artifacts exist in ``directory``

    Keys are the artifact file stems (``estimate_report``, ``draws``,
    ``metrics``, ...). Unreadable files are logged and skipped; a missing
    directory raises FileNotFoundError.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"results directory not found: {directory}")

    found = {}
    for name in JSON_ARTIFACTS:
        path = directory / name
        if not path.exists():
            continue
        try:
            found[path.stem] = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("Skipping %s: %s", path, exc)

    for name in CSV_ARTIFACTS:
        path = directory / name
        if not path.exists():
            continue
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            logger.warning("Skipping %s: %s", path, exc)
            continue
        if name == "draws.csv" and "draw" in frame.columns:
            frame = frame.set_index("draw")
        found[path.stem] = frame

    logger.info("Loaded %d artifact(s) from %s", len(found), directory)
    return found


def reports_by_method(results):
    """Estimate reports keyed by method name"""
    report = results.get("estimate_report") or {}
    return {entry["method"]: entry for entry in report.get("estimates", [])}
