"""Trajectory datasets, random initial conditions, and artifact plumbing.

Datasets are ordered (t, U, dU/dt) records on a fixed macro grid.  They are
serialized as CSV with 17-significant-digit floats, which round-trips
float64 exactly, so regenerated artifacts are byte-identical for a fixed
configuration and seed.  Every artifact is listed in a JSON manifest with
its SHA-256 content hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

#: float -> shortest text that restores the exact float64 value
FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# snapshot datasets
# ---------------------------------------------------------------------------

@dataclass
class SnapshotDataset:
    """Time-ordered (t, U, dU/dt) records on a fixed 1D or 2D macro grid."""

    times: np.ndarray
    fields: np.ndarray        # (n_records, *grid_shape)
    dudt: np.ndarray          # same shape as fields
    geometry: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        self.dudt = np.asarray(self.dudt, dtype=float)
        if self.fields.shape != self.dudt.shape:
            raise InputError("field and dU/dt arrays must have equal shapes")
        if self.times.ndim != 1 or self.times.size != self.fields.shape[0]:
            raise InputError("need one time stamp per record")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise InputError("record times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def grid_shape(self):
        return self.fields.shape[1:]

    @property
    def ndim(self):
        return self.fields.ndim - 1


def write_snapshot_csv(path, dataset: SnapshotDataset):
    """One row per (record, grid point); header t,i[,j],U,dUdt."""
    nd = dataset.ndim if len(dataset) else len(dataset.geometry.get("shape", (0,)))
    coords = ["i", "j"][:max(nd, 1)]
    lines = [",".join(["t"] + coords + ["U", "dUdt"])]
    for r in range(len(dataset)):
        t_text = FLOAT_FMT % dataset.times[r]
        u = dataset.fields[r]
        du = dataset.dudt[r]
        for idx in np.ndindex(u.shape):
            row = [t_text] + [str(k) for k in idx]
            row.append(FLOAT_FMT % u[idx])
            row.append(FLOAT_FMT % du[idx])
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot_csv(path):
    """Inverse of write_snapshot_csv (bitwise on the float values)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise InputError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "t" or header[-2:] != ["U", "dUdt"]:
        raise InputError(f"{path}:1: unrecognized header {lines[0]!r}")
    nd = len(header) - 3
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise InputError(f"{path}:{ln}: expected {len(header)} fields")
        try:
            t = float(parts[0])
            idx = tuple(int(p) for p in parts[1:1 + nd])
            u = float(parts[-2])
            du = float(parts[-1])
        except ValueError as exc:
            raise InputError(f"{path}:{ln}: {exc}") from None
        rows.append((t, idx, u, du))
    if not rows:
        return SnapshotDataset(np.zeros(0), np.zeros((0,) + (0,) * nd),
                               np.zeros((0,) + (0,) * nd))
    shape = tuple(max(r[1][d] for r in rows) + 1 for d in range(nd))
    times = sorted({r[0] for r in rows})
    t_index = {t: k for k, t in enumerate(times)}
    fields = np.full((len(times),) + shape, np.nan)
    dudt = np.full_like(fields, np.nan)
    for t, idx, u, du in rows:
        fields[(t_index[t],) + idx] = u
        dudt[(t_index[t],) + idx] = du
    if np.any(np.isnan(fields)) or np.any(np.isnan(dudt)):
        raise InputError(f"{path}: incomplete grid coverage in some record")
    return SnapshotDataset(np.asarray(times), fields, dudt)


# ---------------------------------------------------------------------------
# random initial conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialConditionSpec1D:
    """Random sum of 20 sines on [0, 1]: amplitudes U[-1,1], real
    wavenumbers U[0,4] (cycles per unit length), phases U[0,2*pi)."""

    terms: int = 20
    amplitude_range: tuple = (-1.0, 1.0)
    wavenumber_range: tuple = (0.0, 4.0)


@dataclass(frozen=True)
class InitialConditionSpec2D:
    """Random sum of 10 sine products on [0, 2*pi)^2 with integer
    wavenumbers in {1..5} per axis (bi-periodicity preserved)."""

    terms: int = 10
    amplitude_range: tuple = (-1.0, 1.0)
    wavenumber_choices: tuple = (1, 2, 3, 4, 5)


def superposition_1d(amplitudes, wavenumbers, phases):
    a = np.asarray(amplitudes, dtype=float)
    l = np.asarray(wavenumbers, dtype=float)
    phi = np.asarray(phases, dtype=float)

    def u0(x):
        x = np.asarray(x, dtype=float)
        return np.sum(a * np.sin(2 * np.pi * l * x[..., None] + phi), axis=-1)

    u0.coefficients = {"amplitudes": a, "wavenumbers": l, "phases": phi}
    return u0


def superposition_2d(amplitudes, lx, ly, phix, phiy):
    a = np.asarray(amplitudes, dtype=float)
    lx = np.asarray(lx, dtype=float)
    ly = np.asarray(ly, dtype=float)
    phix = np.asarray(phix, dtype=float)
    phiy = np.asarray(phiy, dtype=float)

    def u0(x, y):
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        return np.sum(a * np.sin(lx * x + phix) * np.sin(ly * y + phiy),
                      axis=-1)

    u0.coefficients = {"amplitudes": a, "lx": lx, "ly": ly,
                       "phix": phix, "phiy": phiy}
    return u0


def random_ic_1d(spec: InitialConditionSpec1D, rng):
    a = rng.uniform(*spec.amplitude_range, size=spec.terms)
    l = rng.uniform(*spec.wavenumber_range, size=spec.terms)
    phi = rng.uniform(0.0, 2 * np.pi, size=spec.terms)
    return superposition_1d(a, l, phi)


def random_ic_2d(spec: InitialConditionSpec2D, rng):
    a = rng.uniform(*spec.amplitude_range, size=spec.terms)
    choices = np.asarray(spec.wavenumber_choices)
    lx = choices[rng.integers(0, choices.size, size=spec.terms)]
    ly = choices[rng.integers(0, choices.size, size=spec.terms)]
    phix = rng.uniform(0.0, 2 * np.pi, size=spec.terms)
    phiy = rng.uniform(0.0, 2 * np.pi, size=spec.terms)
    return superposition_2d(a, lx, ly, phix, phiy)


def trajectory_rng(master_seed, index):
    """Counter-based per-trajectory stream: PCG64 seeded from the sequence
    [master_seed, index].  Streams for distinct indices are independent, so
    generation order (or parallelism) cannot change the draws."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    """Artifact inventory: one entry with a content hash per file."""

    def __init__(self, root, config=None, seed=None):
        self.root = Path(root)
        self.config = config or {}
        self.seed = seed
        self.entries = {}

    def add(self, path, kind):
        path = Path(path)
        rel = str(path.relative_to(self.root))
        if rel in self.entries:
            raise InputError(f"duplicate manifest entry {rel!r}")
        self.entries[rel] = {"kind": kind, "sha256": file_sha256(path)}

    def write(self, name="manifest.json"):
        doc = {"seed": self.seed, "config": self.config,
               "entries": self.entries}
        (self.root / name).write_text(json.dumps(doc, indent=2, sort_keys=True))
        return self.root / name

    @classmethod
    def load(cls, path):
        path = Path(path)
        doc = json.loads(path.read_text())
        m = cls(path.parent, config=doc.get("config"), seed=doc.get("seed"))
        m.entries = doc["entries"]
        return m

    def verify(self):
        """Check that every listed artifact exists and hashes correctly."""
        bad = []
        for rel, entry in self.entries.items():
            p = self.root / rel
            if not p.exists() or file_sha256(p) != entry["sha256"]:
                bad.append(rel)
        if bad:
            raise InputError(f"manifest verification failed for {bad}")
