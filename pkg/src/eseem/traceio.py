"""Trace, spectrum, and report file I/O with reproducible byte layout.

Traces are CSV files (``delay_s,amplitude`` rows) with ``#``-prefixed
metadata headers plus a JSON sidecar that duplicates the metadata
machine-readably. Floats are written with ``repr`` so a rewrite of the same
data is byte-identical and a read-back round-trips exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .ensemble import EseemTrace
from .spectral import EseemSpectrum


class TraceFormatError(ValueError):
    """Malformed trace or spectrum file."""


def config_digest(config: dict) -> str:
    """sha256 of the canonical JSON form of a configuration mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _meta_lines(metadata: dict) -> list[str]:
    lines = []
    for key in sorted(metadata):
        value = metadata[key]
        if isinstance(value, dict):
            value = json.dumps(value, sort_keys=True)
        lines.append(f"# {key} = {value}")
    return lines


def write_trace(path: str | Path, trace: EseemTrace, sidecar: bool = True) -> Path:
    path = Path(path)
    rows = [f"{repr(float(t))},{repr(float(a))}"
            for t, a in zip(trace.grid, trace.amplitude)]
    body = "\n".join(_meta_lines(trace.metadata) + ["delay_s,amplitude"] + rows)
    path.write_text(body + "\n")
    if sidecar:
        side = path.with_suffix(path.suffix + ".json")
        side.write_text(
            json.dumps(
                {"metadata": trace.metadata, "n_points": int(trace.grid.size)},
                sort_keys=True,
                indent=1,
            )
            + "\n"
        )
    return path


def read_trace(path: str | Path) -> EseemTrace:
    path = Path(path)
    metadata, grid, amp = {}, [], []
    header_seen = False
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "=" in line:
                key, value = (part.strip() for part in line[1:].split("=", 1))
                metadata[key] = _parse_meta_value(value)
            continue
        if line == "delay_s,amplitude":
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"{path}:{lineno}: expected 'delay_s,amplitude'")
        try:
            grid.append(float(parts[0]))
            amp.append(float(parts[1]))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: non-numeric row {line!r}") from exc
    if not header_seen or not grid:
        raise TraceFormatError(f"{path}: missing header or data rows")
    return EseemTrace(np.array(grid), np.array(amp), metadata)


def _parse_meta_value(value: str):
    for parser in (int, float):
        try:
            return parser(value)
        except ValueError:
            pass
    if value.startswith("{") or value.startswith("["):
        try:
            return json.loads(value)
        except json.JSONDecodeError:
            pass
    if value in ("True", "False"):
        return value == "True"
    if value == "None":
        return None
    return value


def write_spectrum(path: str | Path, spectrum: EseemSpectrum,
                   fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        lines = _meta_lines(spectrum.metadata) + ["frequency_hz,re,im,abs"]
        for f, z in zip(spectrum.frequency_hz, spectrum.amplitude):
            lines.append(
                f"{repr(float(f))},{repr(float(z.real))},"
                f"{repr(float(z.imag))},{repr(float(abs(z)))}"
            )
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        payload = {
            "metadata": spectrum.metadata,
            "frequency_hz": [float(f) for f in spectrum.frequency_hz],
            "re": [float(z.real) for z in spectrum.amplitude],
            "im": [float(z.imag) for z in spectrum.amplitude],
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path
