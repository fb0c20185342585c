"""CSV/JSON output helpers: metadata headers and lossless float formatting."""

from __future__ import annotations

import datetime
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def format_value(x) -> str:
    """17 significant digits for floats (lossless double round trip)."""
    if isinstance(x, (float, np.floating)):
        return f"{x:.17g}"
    if isinstance(x, (complex, np.complexfloating)):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return str(x)


def config_hash(config: Mapping) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    metadata: Mapping | None = None,
    timestamp: bool = True,
) -> None:
    """Comma-separated output with a '#'-prefixed metadata block.

    With ``timestamp`` disabled the output is byte-identical for identical
    inputs.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        lines.append(f"# generated_at: {stamp}")
    for key, val in (metadata or {}).items():
        lines.append(f"# {key}: {val}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of :func:`write_csv` for numeric tables (used in tests).

    Non-numeric cells (row labels) read back as NaN.
    """

    def parse(v: str) -> float:
        try:
            return float(v)
        except ValueError:
            return float("nan")

    meta: dict = {}
    header: list[str] | None = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([parse(v) for v in line.split(",")])
    return meta, header or [], np.asarray(rows)
