"""Process and information traceability for the eleven business metrics.

The bundled ``data/traceability.json`` holds four checkmark tables, each
mapping a row name to the metric ids it is checked for:

* ``etomLevel2ToLevel3``: level-2 process -> its level-3 processes
* ``etomLevel2Mapping``: level-2 process -> metric ids (documentation only)
* ``sidAbeMapping``: SID aggregate business entity -> metric ids
* ``etomLevel3Mapping``: level-3 process -> metric ids

The file is validated when first loaded.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

FORMAT = "otpmart-traceability/1"
_TABLES = ("etomLevel2Mapping", "sidAbeMapping", "etomLevel3Mapping")


class TraceabilityError(ValueError):
    pass


def check_document(doc: dict) -> None:
    if doc.get("format") != FORMAT:
        raise TraceabilityError(f"unsupported format {doc.get('format')!r}")
    metrics = doc.get("metrics")
    if not isinstance(metrics, list) or len(set(metrics)) != len(metrics):
        raise TraceabilityError("metrics must be a list of unique ids")
    hierarchy = doc.get("etomLevel2ToLevel3")
    if not isinstance(hierarchy, dict):
        raise TraceabilityError("etomLevel2ToLevel3 must be an object")
    for table in _TABLES:
        rows = doc.get(table)
        if not isinstance(rows, dict):
            raise TraceabilityError(f"{table} must be an object")
        for name, ids in rows.items():
            if not name or not isinstance(ids, list):
                raise TraceabilityError(f"{table}: bad row {name!r}")
            unknown = set(ids) - set(metrics)
            if unknown:
                raise TraceabilityError(f"{table}/{name}: unknown metric ids {sorted(unknown)}")
    missing = set(doc["etomLevel2Mapping"]) - set(hierarchy)
    if missing:
        raise TraceabilityError(f"level-2 processes missing from hierarchy: {sorted(missing)}")


@lru_cache(maxsize=1)
def load() -> dict:
    text = resources.files(__package__).joinpath("data/traceability.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    check_document(doc)
    return doc


def _checked(table: str, metric_id: str) -> list[str]:
    return [name for name, ids in load()[table].items() if metric_id in ids]


def traceability(metric_id: str) -> dict[str, list[str]]:
    """Level-3 processes and SID entities checked for ``metric_id``."""
    if metric_id not in load()["metrics"]:
        raise KeyError(f"unknown metric {metric_id!r}")
    return {
        "etomLevel3Processes": _checked("etomLevel3Mapping", metric_id),
        "sidEntities": _checked("sidAbeMapping", metric_id),
    }


def level2_processes(metric_id: str) -> list[str]:
    return _checked("etomLevel2Mapping", metric_id)
