"""Flat-file formats: CSV tables, key=value configs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError


def fmt(x) -> str:
    """17 significant digits, '.' decimal separator, independent of locale."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, columns: dict, footer: str | None = None) -> None:
    """Write equal-length columns; ``footer`` becomes a trailing ``# ...`` line."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    if len({c.shape[0] for c in cols}) > 1:
        raise DataError("columns must have equal length")
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in zip(*cols):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    if footer:
        buf.write(f"# {footer}\n")
    Path(path).write_bytes(buf.getvalue().encode("ascii"))


def read_csv(path, required: tuple[str, ...] | None = None) -> dict[str, np.ndarray]:
    """Read a numeric CSV with a header row. Blank and ``#`` lines are skipped.

    Raises :class:`DataError` naming the line of the first malformed row.
    """
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{p}: no such file")
    with p.open(newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{p}: empty file")
    header = [h.strip() for h in rows[0][1]]
    if required is not None and not set(required) <= set(header):
        raise DataError(f"{p}: expected columns {','.join(required)}, found {','.join(header)}")
    data = np.empty((len(rows) - 1, len(header)))
    for k, (line, r) in enumerate(rows[1:]):
        if len(r) != len(header):
            raise DataError(f"{p}: line {line}: expected {len(header)} fields, got {len(r)}")
        try:
            data[k] = [float(v) for v in r]
        except ValueError:
            raise DataError(f"{p}: line {line}: non-numeric field in {','.join(r)!r}") from None
        if not np.all(np.isfinite(data[k])):
            raise DataError(f"{p}: line {line}: non-finite value")
    return {h: data[:, j] for j, h in enumerate(header)}


def parse_kv(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {no}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def read_kv(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"{p}: no such config file")
    return parse_kv(p.read_text())


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    master_seed: int | None
    version: str
    wall_clock_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)
    python: str = field(default_factory=lambda: sys.version.split()[0])
    numpy: str = field(default_factory=lambda: np.__version__)
    machine: str = field(default_factory=platform.machine)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256(path)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=str) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
