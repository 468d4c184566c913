"""Binary record stream format and JSON sidecar.

Layout: a fixed header (magic, version, dt, channel count, samples per
channel, shot count, scenario tag), then one block per shot of channel-
interleaved complex64 little-endian samples [a0, b0, a1, b1, ...].  A JSON
sidecar written next to the stream carries the full scenario and noise
configuration for provenance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"HOMRECS1"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQd64s")


@dataclass
class RecordBatch:
    """A batch of per-sequence dual-channel complex envelope records."""

    shot_ids: np.ndarray      # (B,) int64
    samples_a: np.ndarray     # (B, T) complex64
    samples_b: np.ndarray     # (B, T) complex64
    dt: float
    scenario_tag: str = ""

    def __post_init__(self):
        if self.samples_a.shape != self.samples_b.shape:
            raise ValueError("channel arrays must have equal shapes")
        if self.samples_a.ndim != 2 or len(self.shot_ids) != self.samples_a.shape[0]:
            raise ValueError("expected (B, T) sample arrays with B shot ids")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n_shots(self) -> int:
        return self.samples_a.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples_a.shape[1]


class RecordWriter:
    def __init__(self, path, dt: float, n_samples: int, scenario_tag: str = "",
                 sidecar: dict | None = None):
        self.path = Path(path)
        self.dt = dt
        self.n_samples = n_samples
        self.scenario_tag = scenario_tag
        self._fh = self.path.open("wb")
        self._shots = 0
        self._write_header()
        if sidecar is not None:
            sidecar = dict(sidecar)
            sidecar.setdefault("format", {"magic": MAGIC.decode(), "version": VERSION})
            self.path.with_suffix(self.path.suffix + ".json").write_text(
                json.dumps(sidecar, indent=2, sort_keys=True)
            )

    def _write_header(self):
        tag = self.scenario_tag.encode()[:64].ljust(64, b"\0")
        self._fh.seek(0)
        self._fh.write(
            _HEADER.pack(MAGIC, VERSION, 2, self.n_samples, self._shots, self.dt, tag)
        )

    def write(self, batch: RecordBatch) -> None:
        if batch.n_samples != self.n_samples:
            raise ValueError("batch sample count does not match the stream header")
        interleaved = np.empty((batch.n_shots, self.n_samples, 2), dtype=np.complex64)
        interleaved[:, :, 0] = batch.samples_a
        interleaved[:, :, 1] = batch.samples_b
        self._fh.seek(0, 2)
        self._fh.write(interleaved.astype("<c8").tobytes())
        self._shots += batch.n_shots

    def close(self) -> None:
        self._write_header()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path) -> dict:
    with Path(path).open("rb") as fh:
        magic, version, channels, n_samples, shots, dt, tag = _HEADER.unpack(
            fh.read(_HEADER.size)
        )
    if magic != MAGIC:
        raise ValueError(f"{path}: not a record stream (bad magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported record version {version}")
    return {
        "channels": channels,
        "n_samples": n_samples,
        "shots": shots,
        "dt": dt,
        "scenario_tag": tag.rstrip(b"\0").decode(),
    }


def read_sidecar(path) -> dict:
    side = Path(path).with_suffix(Path(path).suffix + ".json")
    return json.loads(side.read_text()) if side.exists() else {}


def iter_record_batches(path, batch_size: int = 1024):
    """Stream batches back from a record file; bounded memory."""
    header = read_header(path)
    n_samples, shots, dt = header["n_samples"], header["shots"], header["dt"]
    tag = header["scenario_tag"]
    shot_bytes = n_samples * 2 * 8  # complex64 interleaved pair per sample
    with Path(path).open("rb") as fh:
        fh.seek(_HEADER.size)
        done = 0
        while done < shots:
            take = min(batch_size, shots - done)
            raw = fh.read(take * shot_bytes)
            data = np.frombuffer(raw, dtype="<c8").reshape(take, n_samples, 2)
            yield RecordBatch(
                shot_ids=np.arange(done, done + take, dtype=np.int64),
                samples_a=np.ascontiguousarray(data[:, :, 0]),
                samples_b=np.ascontiguousarray(data[:, :, 1]),
                dt=dt,
                scenario_tag=tag,
            )
            done += take
