"""Append-only CSV cache of solved caps.

Rows are keyed by the function hash, the cap volume and the slope. Floats
are written with ``repr`` so a warm run reads back the exact bits a cold
run computed.
"""

from __future__ import annotations

import csv
import os
import threading
from pathlib import Path

import numpy as np

__all__ = ["CapCache"]


def _key(psi, delta, slope) -> tuple[str, str, str]:
    coords = ";".join(repr(float(v)) for v in np.atleast_1d(slope))
    return psi.hash(), repr(float(delta)), coords


class CapCache:
    """Cap rows (see :meth:`ulamfloat.caps.CapBatch.row`) persisted to a CSV file.

    Args:
        path: CSV file; created on the first store. ``None`` keeps the cache
            in memory only.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._rows: dict[tuple[str, str, str], list[float]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, newline="") as fh:
            for rec in csv.reader(fh):
                if len(rec) < 4 or rec[0] == "psi_hash":
                    continue
                self._rows[(rec[0], rec[1], rec[2])] = [float(v) for v in rec[3].split(";")]

    def __len__(self) -> int:
        return len(self._rows)

    def lookup(self, psi, delta, slope):
        row = self._rows.get(_key(psi, delta, slope))
        with self._lock:
            if row is None:
                self.misses += 1
            else:
                self.hits += 1
        return None if row is None else list(row)

    def store(self, psi, delta, slope, row) -> None:
        key = _key(psi, delta, slope)
        values = [float(v) for v in row]
        with self._lock:
            if key in self._rows:
                return
            self._rows[key] = values
            if self.path is None:
                return
            fresh = not self.path.exists()
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", newline="") as fh:
                writer = csv.writer(fh)
                if fresh:
                    writer.writerow(["psi_hash", "delta", "slope", "row"])
                writer.writerow([*key, ";".join(repr(v) for v in values)])
