"""Correlation histogram container and its CSV/JSON wire format."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class CorrelationHistogram:
    """Second-order correlation estimate (or analytic curve) on a lag grid.

    `tau` is in seconds and strictly increasing.  `values` are per-pulse-pair,
    time-integrated correlations; after normalization they are dimensionless
    with cross-pulse peaks near one.  `meta` carries the normalization state
    (scale, offset, offset_std, reference_width) plus grid provenance, and for
    analytic curves the within-pulse / cross-pulse component breakdown.
    """

    tau: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    kind: str  # 'cross' | 'auto'
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.tau.ndim != 1 or np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau grid must be 1-D and strictly increasing")
        if self.values.shape != self.tau.shape or self.stderr.shape != self.tau.shape:
            raise ValueError("values/stderr must match the tau grid shape")
        if np.any(self.stderr < 0):
            raise ValueError("standard errors must be non-negative")
        if self.kind not in ("cross", "auto"):
            raise ValueError(f"kind must be 'cross' or 'auto', got {self.kind!r}")

    def copy(self) -> "CorrelationHistogram":
        return CorrelationHistogram(
            self.tau.copy(), self.values.copy(), self.stderr.copy(), self.kind, dict(self.meta)
        )

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_ns", "value", "stderr", "kind"])
            for t, v, e in zip(self.tau, self.values, self.stderr):
                writer.writerow([repr(float(t) * 1e9), repr(float(v)), repr(float(e)), self.kind])
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta_path.write_text(json.dumps(_jsonable(self.meta), indent=2, sort_keys=True))

    def write_components_csv(self, path) -> None:
        """Long-format export for analytic curves: tau, value, component."""
        components = self.meta.get("components")
        if not components:
            raise ValueError("histogram has no component breakdown")
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_ns", "value", "component"])
            for name in ("within-pulse", "cross-pulse", "total"):
                for t, v in zip(self.tau, components[name]):
                    writer.writerow([repr(float(t) * 1e9), repr(float(v)), name])

    @classmethod
    def read_csv(cls, path) -> "CorrelationHistogram":
        path = Path(path)
        tau, values, stderr, kinds = [], [], [], []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if "component" in (reader.fieldnames or []):
                for row in reader:
                    if row["component"] == "total":
                        tau.append(float(row["tau_ns"]) * 1e-9)
                        values.append(float(row["value"]))
                        stderr.append(0.0)
                        kinds.append("cross")
            else:
                for row in reader:
                    tau.append(float(row["tau_ns"]) * 1e-9)
                    values.append(float(row["value"]))
                    stderr.append(float(row["stderr"]))
                    kinds.append(row["kind"])
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        kind = kinds[0] if kinds else "cross"
        return cls(np.array(tau), np.array(values), np.array(stderr), kind, meta)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj
