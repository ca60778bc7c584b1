"""Versioned reference tables consumed by the simulation modules.

Each table ships as a data file with a sha256 recorded in
``data/CHECKSUMS.sha256``; loading verifies integrity and returns an
immutable table carrying its citation string. The transition weights are
data, not derived quantities: alternative weight files can be supplied to
the ensemble layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crystals import _data_path


class IntegrityError(RuntimeError):
    """Unknown table name or checksum mismatch on a reference data file."""


@dataclass(frozen=True)
class ReferenceTable:
    name: str
    citation: str
    values: np.ndarray
    row_labels: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def _parse_weights(path: Path) -> tuple[np.ndarray, tuple]:
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m, branch, w = line.split(",")
        rows.append((int(m), int(branch), float(w)))
    return np.array([r[2] for r in rows]), tuple((r[0], r[1]) for r in rows)


def _parse_sx(path: Path) -> tuple[np.ndarray, tuple]:
    labels, rows = [], []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, *vals = line.split(",")
        eta, m = head.split(";")
        labels.append((1 if eta == "+" else -1, int(m)))
        rows.append([float(v) for v in vals])
    return np.array(rows), tuple(labels)


def _parse_site_couplings(path: Path) -> tuple[np.ndarray, tuple]:
    labels, rows = [], []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        label, nx, ny, nz, a_cf, a_dd = line.split(",")
        labels.append(label)
        rows.append(
            [float(nx), float(ny), float(nz), float(a_cf), float(a_dd) if a_dd else np.nan]
        )
    return np.array(rows), tuple(labels)


_REGISTRY = {
    "weights_s1": (
        "weights_s1.csv",
        _parse_weights,
        "relative weights of the 18 bismuth donor EPR transitions; "
        "supplementary material of the source publication, table S1",
    ),
    "sx_s2": (
        "sx_s2.csv",
        _parse_sx,
        "|<k'|S_0x|k>| between bismuth donor levels at B0 = 1 G; "
        "supplementary material of the source publication, table S2",
    ),
    "site_couplings": (
        "site_couplings.csv",
        _parse_site_couplings,
        "single-site 29Si hyperfine couplings near the bismuth donor; "
        "supplementary material of the source publication, figures S3/S7",
    ),
}


def _expected_checksums() -> dict[str, str]:
    out = {}
    for line in _data_path("CHECKSUMS.sha256").read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        digest, name = line.split()
        out[name] = digest
    return out


def load_reference(name: str) -> ReferenceTable:
    """Load a reference table by name, verifying its checksum."""
    if name not in _REGISTRY:
        raise IntegrityError(f"unknown reference table {name!r}")
    filename, parser, citation = _REGISTRY[name]
    path = _data_path(filename)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    expected = _expected_checksums().get(filename)
    if digest != expected:
        raise IntegrityError(
            f"checksum mismatch for {filename}: {digest} != {expected}"
        )
    values, labels = parser(path)
    return ReferenceTable(name=name, citation=citation, values=values, row_labels=labels)


def transition_weights(table: ReferenceTable | None = None) -> dict[tuple[int, int], float]:
    """Weights keyed by (m, branch) for the weighted transition sum."""
    if table is None:
        table = load_reference("weights_s1")
    return dict(zip(table.row_labels, table.values.tolist()))
