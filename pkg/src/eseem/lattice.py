"""Bath-site enumeration around a substitutional defect and isotope sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crystals import CrystalSystem

# grouping tolerance for equidistant shells / duplicate detection, nm
_DIST_TOL = 1e-9


class LatticeConfigError(ValueError):
    """Requested enumeration exceeds the configured safety cap."""


@dataclass(frozen=True)
class SiteList:
    """Candidate bath-spin locations, sorted by distance from the defect.

    ``positions`` are cartesian vectors in nm relative to the defect;
    equidistant sites are ordered lexicographically by (x, y, z) so the
    listing is deterministic.
    """

    positions: np.ndarray      # shape (N, 3), nm
    distances: np.ndarray      # shape (N,), nm

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        dist = np.asarray(self.distances, dtype=float).reshape(-1)
        if pos.shape[0] != dist.shape[0]:
            raise ValueError("positions/distances length mismatch")
        if np.any(np.diff(dist) < -_DIST_TOL):
            raise ValueError("sites must be sorted by nondecreasing distance")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "distances", dist)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    def subset(self, index: np.ndarray) -> "SiteList":
        return SiteList(self.positions[index], self.distances[index])


def _enumerate_within(crystal: CrystalSystem, radius_nm: float) -> np.ndarray:
    """All lattice sites with 0 < |r| <= radius, defect site excluded."""
    cell = crystal.cell_vectors
    # enough whole cells to cover the sphere along each axis
    reach = np.ceil(radius_nm / np.array(crystal.lattice_nm)).astype(int) + 1
    grids = [np.arange(-n, n + 1) for n in reach]
    cells = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, 3)
    pos = (cells[:, None, :] + crystal.basis[None, :, :]).reshape(-1, 3) @ cell
    d2 = np.einsum("ij,ij->i", pos, pos)
    keep = (d2 <= radius_nm**2) & (d2 > _DIST_TOL**2)
    return pos[keep]


def build_neighbor_sites(
    crystal: CrystalSystem,
    n_sites: int,
    max_radius_nm: float = 60.0,
) -> SiteList:
    """Return the ``n_sites`` lattice sites nearest the defect.

    Deterministic for a given crystal: sites are sorted by distance, with
    ties inside a shell broken lexicographically by (x, y, z). The defect's
    own substitution site is never included.

    Raises
    ------
    LatticeConfigError
        If ``n_sites`` would require enumerating beyond ``max_radius_nm``.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    density = crystal.basis.shape[0] / float(np.prod(crystal.lattice_nm))
    radius = 1.3 * (3.0 * n_sites / (4.0 * np.pi * density)) ** (1.0 / 3.0)
    radius = max(radius, 1.5 * max(crystal.lattice_nm))
    if radius > max_radius_nm:
        raise LatticeConfigError(
            f"n_sites = {n_sites} needs enumeration out to ~{radius:.1f} nm,"
            f" beyond the {max_radius_nm:.1f} nm safety cap"
        )
    while True:
        pos = _enumerate_within(crystal, radius)
        if pos.shape[0] >= n_sites:
            break
        radius *= 1.3
        if radius > max_radius_nm:
            raise LatticeConfigError(
                f"enumeration radius exceeded the {max_radius_nm:.1f} nm safety cap"
            )
    dist = np.linalg.norm(pos, axis=1)
    shell = np.round(dist, 9)  # group equal shells before lexicographic tie-break
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0], shell))
    pos, dist = pos[order][:n_sites], dist[order][:n_sites]
    return SiteList(pos, dist)


def sites_within(crystal: CrystalSystem, radius_nm: float) -> SiteList:
    """All sites inside a sphere, sorted like :func:`build_neighbor_sites`."""
    pos = _enumerate_within(crystal, radius_nm)
    dist = np.linalg.norm(pos, axis=1)
    shell = np.round(dist, 9)
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0], shell))
    return SiteList(pos[order], dist[order])


def occupancy_mask(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) occupation of n sites; one uniform draw per site."""
    return rng.random(n) < p


def sample_configuration(sites: SiteList, p: float, seed: int) -> SiteList:
    """Sample a random isotope configuration.

    Each site is occupied independently with probability ``p``; identical
    (sites, p, seed) give bitwise identical subsets.
    """
    if len(sites) == 0:
        raise ValueError("sites must be nonempty")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    mask = occupancy_mask(len(sites), p, rng)
    return sites.subset(np.flatnonzero(mask))
