"""Run records: what a simulation or a verification produced, and how to persist it.

On-disk layout of a record directory::

    metadata.json      config snapshot, status, fitted order, warnings
    diagnostics.csv    one row per output time (simulations)
    samples.csv        one row per sweep point (verifications)
    snapshots/NNNN_zeta.bin, NNNN_v.bin   binary field dumps (simulations)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .spectral import write_binary


def _jsonable(value: Any):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def _write_rows(path: Path, rows: list) -> None:
    if not rows:
        return
    names = []
    for row in rows:
        for key in row:
            if key not in names:
                names.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _jsonable(v) for k, v in row.items()})


@dataclass
class RunRecord:
    """Outcome of a simulation, convergence study or consistency sweep."""

    kind: str
    config: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    warnings: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)      # (time, ModelState)
    samples: list = field(default_factory=list)
    fitted_order: float | None = None
    order_band: tuple | None = None
    expected_order: float | None = None
    passed: bool | None = None
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def summary(self) -> dict:
        return _jsonable({
            "kind": self.kind,
            "status": self.status,
            "message": self.message,
            "warnings": self.warnings,
            "fitted_order": self.fitted_order,
            "order_band": self.order_band,
            "expected_order": self.expected_order,
            "passed": self.passed,
            "extras": self.extras,
            "config": self.config,
        })

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "metadata.json").write_text(json.dumps(self.summary(), indent=2))
        _write_rows(directory / "diagnostics.csv", self.diagnostics)
        _write_rows(directory / "samples.csv", self.samples)
        if self.snapshots:
            snapdir = directory / "snapshots"
            snapdir.mkdir(exist_ok=True)
            index = []
            for i, (time, state) in enumerate(self.snapshots):
                write_binary(state.zeta, snapdir / f"{i:04d}_zeta.bin")
                if state.v is not None:
                    write_binary(state.v, snapdir / f"{i:04d}_v.bin")
                index.append({"index": i, "time": time})
            _write_rows(snapdir / "index.csv", index)
        return directory
