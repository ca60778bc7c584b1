"""Crystal and defect definitions.

Definitions are loaded from structured text files (``key = value`` lines plus
bracketed sections; the ``[basis]`` section is a table of fractional
coordinates). The package ships ``cawo4.crystal``, ``si.crystal`` and the
matching ``*.defect`` files in :mod:`eseem.data`.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import GAMMA_N_PER_G, TWO_PI


class DefinitionError(ValueError):
    """Malformed or inconsistent crystal/defect definition file."""


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def _parse_structured(text: str, path: str) -> dict:
    """Parse the key/value + table format into {section: {key: value} | rows}."""
    sections: dict = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {} if current != "basis" else [])
            continue
        if current == "basis":
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError as exc:
                raise DefinitionError(f"{path}:{lineno}: bad basis row {line!r}") from exc
            if len(row) != 3:
                raise DefinitionError(f"{path}:{lineno}: basis rows need 3 coordinates")
            sections["basis"].append(row)
        else:
            if "=" not in line:
                raise DefinitionError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            sections[current][key] = value
    return sections


def _as_float(section: dict, key: str, path: str) -> float:
    try:
        return float(section[key])
    except KeyError as exc:
        raise DefinitionError(f"{path}: missing key {key!r}") from exc
    except ValueError as exc:
        raise DefinitionError(f"{path}: key {key!r} is not a number") from exc


def _data_path(name: str) -> Path:
    return Path(str(importlib.resources.files("eseem") / "data" / name))


# ---------------------------------------------------------------------------
# crystals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsotopeSpec:
    """Magnetic isotope of the host lattice (spin 1/2 only)."""

    symbol: str
    abundance: float          # occupation probability p of a host site
    g_n: float                # nuclear g-factor, signed
    gamma_n: float            # angular gyromagnetic ratio, rad s^-1 T^-1, signed
    spin: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise DefinitionError(f"abundance {self.abundance} outside [0, 1]")
        if self.spin != 0.5:
            raise DefinitionError("only spin-1/2 bath isotopes are supported")
        expected = self.g_n * GAMMA_N_PER_G
        if abs(self.gamma_n - expected) > 5e-3 * abs(expected):
            raise DefinitionError(
                f"gamma_n = {self.gamma_n:.4e} inconsistent with g_n = {self.g_n}"
                f" (expected {expected:.4e} within 0.5%)"
            )


@dataclass(frozen=True)
class ContactParams:
    """Kohn-Luttinger envelope parameters for the Si donor contact coupling."""

    eta: float                # charge density enhancement per site
    k0: float                 # conduction-band-minimum wavenumber, nm^-1
    a_env_nm: float           # transverse envelope length
    b_env_nm: float           # longitudinal envelope length
    s_scale: float            # donor-specific scaling of both lengths


@dataclass(frozen=True)
class CrystalSystem:
    """Host lattice geometry plus its magnetic isotope."""

    name: str
    lattice_nm: tuple[float, float, float]       # conventional cell edges
    basis: np.ndarray                            # fractional coords, shape (nb, 3)
    isotope: IsotopeSpec
    contact: ContactParams | None = None
    source: str = ""

    def __post_init__(self):
        if min(self.lattice_nm) <= 0:
            raise DefinitionError("lattice constants must be strictly positive")
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] != 3 or basis.shape[0] == 0:
            raise DefinitionError("basis must be a non-empty (n, 3) table")
        if np.any(basis < 0.0) or np.any(basis >= 1.0):
            raise DefinitionError("basis coordinates must lie in [0, 1)")
        object.__setattr__(self, "basis", basis)

    @property
    def cell_vectors(self) -> np.ndarray:
        """Conventional cell vectors in nm, rows are a, b, c."""
        return np.diag(self.lattice_nm)


def load_crystal(path: str | Path) -> CrystalSystem:
    """Load a crystal definition file."""
    path = Path(path)
    sections = _parse_structured(path.read_text(), str(path))
    top = sections[""]
    if int(float(top.get("format_version", "0"))) != 1:
        raise DefinitionError(f"{path}: unsupported format_version")
    iso_sec = sections.get("isotope")
    if not iso_sec:
        raise DefinitionError(f"{path}: missing [isotope] section")
    isotope = IsotopeSpec(
        symbol=iso_sec.get("symbol", "?"),
        abundance=_as_float(iso_sec, "abundance", str(path)),
        g_n=_as_float(iso_sec, "g_n", str(path)),
        gamma_n=_as_float(iso_sec, "gamma_n", str(path)),
        spin=_as_float(iso_sec, "spin", str(path)),
    )
    contact = None
    if "contact" in sections:
        csec = sections["contact"]
        a_nm = _as_float(top, "a_nm", str(path))
        contact = ContactParams(
            eta=_as_float(csec, "eta", str(path)),
            k0=_as_float(csec, "k0_per_2pi_a", str(path)) * TWO_PI / a_nm,
            a_env_nm=_as_float(csec, "a_env_nm", str(path)),
            b_env_nm=_as_float(csec, "b_env_nm", str(path)),
            s_scale=_as_float(csec, "s_scale", str(path)),
        )
    return CrystalSystem(
        name=top.get("name", path.stem),
        lattice_nm=(
            _as_float(top, "a_nm", str(path)),
            _as_float(top, "b_nm", str(path)),
            _as_float(top, "c_nm", str(path)),
        ),
        basis=np.array(sections.get("basis", []), dtype=float),
        isotope=isotope,
        contact=contact,
        source=str(path),
    )


# ---------------------------------------------------------------------------
# defects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefectSpec:
    """Central defect spin system.

    ``kind`` selects the level structure: ``BiSi`` (20 levels), ``ErI0``
    (Kramers doublet, 2 levels) or ``Er167`` (16 levels). ``g`` is the
    diagonal of the electron g-tensor; ``a0`` the diagonal of the defect
    hyperfine tensor in rad/s (empty for ErI0).
    """

    kind: str
    g: tuple[float, float, float]
    a0: tuple[float, float, float] | None = None
    i0: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("BiSi", "ErI0", "Er167"):
            raise DefinitionError(f"unknown defect kind {self.kind!r}")
        expected_i0 = {"BiSi": 4.5, "ErI0": 0.0, "Er167": 3.5}[self.kind]
        if self.i0 != expected_i0:
            raise DefinitionError(f"{self.kind} requires I0 = {expected_i0}")

    @property
    def dimension(self) -> int:
        return 2 * int(2 * self.i0 + 1)

    @property
    def g_tensor(self) -> np.ndarray:
        return np.diag(self.g)

    @property
    def isotropic_g(self) -> bool:
        return self.g[0] == self.g[1] == self.g[2]


def load_defect(path: str | Path) -> DefectSpec:
    """Load a defect definition file."""
    path = Path(path)
    top = _parse_structured(path.read_text(), str(path))[""]
    if int(float(top.get("format_version", "0"))) != 1:
        raise DefinitionError(f"{path}: unsupported format_version")
    kind = top.get("kind")
    if kind == "BiSi":
        a_iso = _as_float(top, "a0_hz", str(path)) * TWO_PI
        g_iso = _as_float(top, "g_e", str(path))
        return DefectSpec(kind=kind, g=(g_iso,) * 3, a0=(a_iso,) * 3,
                          i0=_as_float(top, "i0", str(path)), name=top.get("name", ""))
    if kind == "ErI0":
        g = tuple(_as_float(top, k, str(path)) for k in ("g_xx", "g_yy", "g_zz"))
        return DefectSpec(kind=kind, g=g, a0=None, i0=0.0, name=top.get("name", ""))
    if kind == "Er167":
        g = tuple(_as_float(top, k, str(path)) for k in ("g_xx", "g_yy", "g_zz"))
        a0 = tuple(_as_float(top, k, str(path)) * TWO_PI
                   for k in ("a_xx_hz", "a_yy_hz", "a_zz_hz"))
        return DefectSpec(kind=kind, g=g, a0=a0, i0=_as_float(top, "i0", str(path)),
                          name=top.get("name", ""))
    raise DefinitionError(f"{path}: missing or unknown kind")


# bundled defaults ----------------------------------------------------------

def default_crystal(name: str) -> CrystalSystem:
    """Load a bundled crystal by short name ('cawo4' or 'si')."""
    return load_crystal(_data_path(f"{name.lower()}.crystal"))


def default_defect(name: str) -> DefectSpec:
    """Load a bundled defect by short name ('bi_si', 'er_cawo4', 'er167_cawo4')."""
    return load_defect(_data_path(f"{name.lower()}.defect"))
