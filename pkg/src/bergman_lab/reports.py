"""CSV tables, run manifests and the cache directory.

CSV: comma-separated, header row, floats with 17 significant digits so every
64-bit value round-trips.  Manifest: flat ``key=value`` lines listing the
config, the outputs with SHA-256 digests and the pass/fail summary.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from pathlib import Path

import numpy as np

from . import __version__
from .framing import atomic_write

CACHE_ENV = "BERGMAN_LAB_CACHE"


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def cache_dir(out_dir):
    env = os.environ.get(CACHE_ENV)
    path = Path(env) if env else Path(out_dir) / "cache"
    path.mkdir(parents=True, exist_ok=True)
    return path


class Run:
    """Collects outputs and checks of one command, then writes its manifest."""

    def __init__(self, command, out_dir, config):
        self.command = command
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.files = []
        self.inputs = []
        self.checks = []

    def write_csv(self, name, header, rows):
        path = self.out / name
        atomic_write(path, csv_text(header, rows))
        self.files.append(path)
        return path

    def add_file(self, path):
        self.files.append(Path(path))

    def add_input(self, path):
        self.inputs.append(Path(path))

    def check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def manifest_lines(self, wall_clock):
        lines = [f"command={self.command}", f"version={__version__}"]
        lines += [f"config.{k}={fmt(v)}" for k, v in self.config.items()]
        lines += [f"input.{p.name}.sha256={digest(p)}" for p in self.inputs]
        lines += [f"output.{p.name}.sha256={digest(p)}" for p in self.files]
        lines += [f"check.{name}={'pass' if ok else 'fail'}" for name, ok, _ in self.checks]
        lines += [f"wall_clock_s={wall_clock:.3f}", f"status={'pass' if self.passed else 'fail'}"]
        return lines

    def finish(self, wall_clock):
        path = self.out / f"manifest-{self.command.replace(' ', '-')}.txt"
        atomic_write(path, "\n".join(self.manifest_lines(wall_clock)) + "\n")
        return path


def read_manifest(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out
