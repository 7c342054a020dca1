import config.env  # noqa: F401  # load_dotenv side effect
import os
import io
import csv
import json
import logging
from enum import auto, StrEnum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from core.census import ComponentCensus, total_nullity
from explorer.process import ExplorationTrace

SCHEMA_VERSION: int = 1
# Significant digits of floats in CSV output
FLOAT_DIGITS: int = int(os.getenv("FLOAT_DIGITS", 17))

logger = logging.getLogger("hypergiant.reports")


class ReportFormat(StrEnum):
    CSV = auto()
    JSON = auto()


def format_value(value: Any) -> str:
    """Locale-independent text for one CSV cell."""
    match value:
        case None:
            return ""
        case bool():
            return "true" if value else "false"
        case float():
            return f"{value:.{FLOAT_DIGITS}g}"
        case StrEnum():
            return value.value
        case dict() | list() | tuple():
            return json.dumps(value, sort_keys=True, separators=(",", ":"))
        case _:
            return str(value)


def _jsonable(value: Any) -> Any:
    match value:
        case StrEnum():
            return value.value
        case Path():
            return str(value)
        case dict():
            return {str(key): _jsonable(item) for key, item in value.items()}
        case list() | tuple():
            return [_jsonable(item) for item in value]
        case _:
            return value


def csv_text(rows: Sequence[Mapping[str, Any]], kind: str, columns: Sequence[str] | None = None) -> str:
    """
    CSV with a ``# hypergiant <kind> v<schema>`` header line, then a fixed column row.
    Columns default to the keys of the first row, in order.
    """
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    buffer.write(f"# hypergiant {kind} v{SCHEMA_VERSION}\n")
    writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({column: format_value(row.get(column)) for column in columns})
    return buffer.getvalue()


def json_text(payload: Any) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    logger.info(f"Wrote {path}")
    return path


def trace_rows(trace: ExplorationTrace) -> list[dict[str, Any]]:
    """Per-round rows (i, |G_i|, |C(i)|, queries, edges, Delta_l for every l)."""
    return trace.to_rows()


def trace_document(trace: ExplorationTrace) -> dict[str, Any]:
    return {"schema": SCHEMA_VERSION, "summary": trace.summary(), "rounds": trace_rows(trace)}


def write_trace(trace: ExplorationTrace, path: str | Path, fmt: ReportFormat = ReportFormat.CSV) -> Path:
    match ReportFormat(fmt):
        case ReportFormat.CSV:
            return write_text(path, csv_text(trace_rows(trace), "trace"))
        case ReportFormat.JSON:
            return write_text(path, json_text(trace_document(trace)))


def census_document(census: ComponentCensus) -> dict[str, Any]:
    document = census.to_dict()
    document["schema"] = SCHEMA_VERSION
    document["total_nullity"] = total_nullity(census)
    return document


def write_census(census: ComponentCensus, path: str | Path) -> Path:
    return write_text(path, json_text(census_document(census)))


def write_records(
        records: Iterable[Mapping[str, Any]],
        summary: Mapping[str, Any],
        out_dir: str | Path,
        kind: str,
        fmt: ReportFormat = ReportFormat.CSV,
) -> list[Path]:
    """
    Trial records and the aggregate: ``<kind>_trials.csv`` plus ``<kind>_summary.json`` for CSV,
    a single ``<kind>.json`` otherwise.
    """
    out_dir = Path(out_dir)
    records = list(records)
    match ReportFormat(fmt):
        case ReportFormat.CSV:
            return [
                write_text(out_dir / f"{kind}_trials.csv", csv_text(records, kind)),
                write_text(out_dir / f"{kind}_summary.json", json_text({"schema": SCHEMA_VERSION, **summary})),
            ]
        case ReportFormat.JSON:
            document = {"schema": SCHEMA_VERSION, "trials": records, **summary}
            return [write_text(out_dir / f"{kind}.json", json_text(document))]
