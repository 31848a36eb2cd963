"""JSONL task files, the dataset manifest and CSV formatting."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable

from .piecewise import PiecewiseConstant
from .robust import Attack


class DataError(RuntimeError):
    """Dataset or results files are missing, stale or malformed."""


MANIFEST = "manifest.json"


def attack_to_dict(a: Attack) -> dict:
    return {"center": a.center, "delta": a.delta, "bump": a.bump.to_dict()}


def attack_from_dict(d: dict) -> Attack:
    return Attack(float(d["center"]), float(d["delta"]), PiecewiseConstant.from_dict(d["bump"]))


def task_record(task_id: int, kind: str, split: str, losses, meta: dict,
                true_losses=None, attacks=None) -> dict:
    rec = {
        "task_id": task_id,
        "kind": kind,
        "split": split,
        "m": len(losses),
        "losses": [f.to_dict() for f in losses],
        "meta": meta,
    }
    if true_losses is not None:
        rec["true_losses"] = [f.to_dict() for f in true_losses]
    if attacks is not None:
        rec["attacks"] = [attack_to_dict(a) for a in attacks]
    return rec


def write_task(path: Path, record: dict) -> None:
    path.write_text(json.dumps(record, sort_keys=True, allow_nan=False) + "\n")


def read_task(path: Path) -> dict:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read task file {path}: {exc}") from exc
    if len(lines) != 1:
        raise DataError(f"{path}: expected exactly one JSON line, found {len(lines)}")
    try:
        rec = json.loads(lines[0])
        rec["losses"] = [PiecewiseConstant.from_dict(d) for d in rec["losses"]]
        if "true_losses" in rec:
            rec["true_losses"] = [PiecewiseConstant.from_dict(d) for d in rec["true_losses"]]
        if "attacks" in rec:
            rec["attacks"] = [attack_from_dict(d) for d in rec["attacks"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed task record: {exc}") from exc
    if rec["m"] != len(rec["losses"]):
        raise DataError(f"{path}: m = {rec['m']} but {len(rec['losses'])} losses stored")
    return rec


def write_manifest(data_dir: Path, manifest: dict) -> None:
    (data_dir / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def read_manifest(data_dir: Path) -> dict:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise DataError(f"no manifest at {path}; run 'gen' first")
    try:
        return json.loads(path.read_text())
    except ValueError as exc:
        raise DataError(f"{path}: malformed manifest: {exc}") from exc


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def fmt(x) -> str:
    """CSV cell: 9 significant digits for floats, plain text otherwise."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.9g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row[h]) for h in header])


def read_csv(path: Path, required: list[str]) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise DataError(f"{path}: empty file")
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise DataError(f"{path}: missing columns {missing}")
            return list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
