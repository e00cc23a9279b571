"""JSON and CSV rendering of experiment reports."""

import csv
import io
import json
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from . import __version__
from .config import ExperimentConfig
from .geometry import BoundCheck, GeometryReport

CSV_COLUMNS = ("body", "quantity", "lower", "estimate", "stderr", "upper", "source", "pass", "status")


def render_json(document: Mapping[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=True) + "\n"


def envelope(config: ExperimentConfig, payload: Mapping[str, Any], *, passed: bool) -> dict[str, Any]:
    """Wrap a command payload with the config, seed and tool version."""
    return {
        "command": config.command,
        "version": __version__,
        "seed": config.seed,
        "config": config.to_json(),
        "passed": passed,
        **payload,
    }


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.12g}"


def bound_row(body: str, check: BoundCheck) -> dict[str, str]:
    return {
        "body": body,
        "quantity": check.quantity,
        "lower": _fmt(check.lower),
        "estimate": _fmt(check.value),
        "stderr": _fmt(check.stderr),
        "upper": _fmt(check.upper),
        "source": check.source,
        "pass": "" if check.passed is None else str(check.passed).lower(),
        "status": "pending" if check.value is None else "ok",
    }


def pending_row(body: str, quantity: str = "vrad") -> dict[str, str]:
    return dict.fromkeys(CSV_COLUMNS, "") | {"body": body, "quantity": quantity, "status": "pending"}


def emit_tables(results: Mapping[str, GeometryReport | None]) -> list[dict[str, str]]:
    """One row per bound check; a body with no result yet becomes a pending row."""
    rows: list[dict[str, str]] = []
    for body, report in results.items():
        if report is None:
            rows.append(pending_row(body))
            continue
        rows.extend(bound_row(body, check) for check in report.bound_refs)
    return rows


def render_csv(rows: Iterable[Mapping[str, str]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_outputs(
    out_dir: Path, name: str, json_text: str, rows: list[dict[str, str]] | None = None
) -> list[Path]:
    """Write ``<name>.json`` and, when rows are given, ``<name>.csv`` into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / f"{name}.json"]
    written[0].write_text(json_text, encoding="utf-8")
    if rows is not None:
        csv_path = out_dir / f"{name}.csv"
        with csv_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(render_csv(rows))
        written.append(csv_path)
    return written
