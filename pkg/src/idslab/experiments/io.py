"""CSV/JSON writers with provenance headers, and the per-cell resume store."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def write_csv(path: Path, provenance: dict, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    for k, v in provenance.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> tuple[dict, list[str], list[dict]]:
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line:
            lines.append(line)
    if not lines:
        return meta, [], []
    reader = csv.reader(lines)
    columns = next(reader)
    rows = []
    for r in reader:
        rows.append({c: _parse(v) for c, v in zip(columns, r)})
    return meta, columns, rows


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return float(v)
    except ValueError:
        return v


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _sorted(x):
    if isinstance(x, dict):
        return {k: _sorted(x[k]) for k in sorted(x)}
    if isinstance(x, list):
        return [_sorted(v) for v in x]
    return x


def write_json(path: Path, provenance: dict, payload: dict) -> Path:
    """Provenance first, then the payload with keys sorted at every level."""
    doc = {"provenance": provenance, **_sorted(_jsonable(payload))}
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class CellStore:
    """Append-only JSONL of finished cells, keyed by config hash.

    Floats survive the JSON round trip exactly, so a resumed run writes the
    same bytes as an uninterrupted one.
    """

    def __init__(self, path: Path, config_hash: str):
        self.path = Path(path)
        self.config_hash = config_hash
        self.cells: dict[str, Any] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn last line from an interrupted run
                if rec.get("hash") == config_hash:
                    self.cells[rec["cell"]] = rec["data"]

    def get(self, key: str):
        return self.cells.get(key)

    def put(self, key: str, data) -> None:
        data = _jsonable(data)
        self.cells[key] = data
        with self.path.open("a") as fh:
            fh.write(json.dumps({"hash": self.config_hash, "cell": key, "data": data}) + "\n")

    def compute(self, key: str, fn):
        cached = self.get(key)
        if cached is not None:
            return cached
        data = fn()
        self.put(key, data)
        return self.cells[key]
