import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eseem.lattice import (
    LatticeConfigError,
    build_neighbor_sites,
    sample_configuration,
    sites_within,
)


def brute_force_sites(crystal, radius_nm):
    """Independent triple-loop enumeration of all sites within a sphere."""
    a, b, c = crystal.lattice_nm
    na = int(np.ceil(radius_nm / a)) + 1
    nb = int(np.ceil(radius_nm / b)) + 1
    nc = int(np.ceil(radius_nm / c)) + 1
    out = []
    for i in range(-na, na + 1):
        for j in range(-nb, nb + 1):
            for k in range(-nc, nc + 1):
                for frac in crystal.basis:
                    pos = np.array(
                        [(i + frac[0]) * a, (j + frac[1]) * b, (k + frac[2]) * c]
                    )
                    d = np.linalg.norm(pos)
                    if 1e-12 < d <= radius_nm:
                        out.append((d, tuple(pos)))
    out.sort()
    return out


def test_si_nearest_neighbors(si_crystal):
    sites = build_neighbor_sites(si_crystal, 4)
    a = si_crystal.lattice_nm[0]
    assert np.allclose(sites.distances, a * np.sqrt(3) / 4, atol=1e-12)
    assert len(sites) == 4


@pytest.mark.xfail(
    strict=True,
    reason="(13, 6, -7) a/4 has mixed parity and is not a site-to-site vector "
    "of the ideal diamond structure; the quoted reference position cannot "
    "appear in a correct enumeration (see notes on lattice geometry)",
)
def test_quoted_strong_site_is_on_lattice(si_crystal):
    target = np.array([13.0, 6.0, -7.0]) * si_crystal.lattice_nm[0] / 4.0
    sites = build_neighbor_sites(si_crystal, 4000)
    gaps = np.linalg.norm(sites.positions - target, axis=1)
    assert gaps.min() < 1e-9


def test_valid_odd_site_appears_once_shell_covered(si_crystal):
    # (-13, -3, 7) a/4 is a valid A->B sublattice vector (all odd, sum = -9)
    target = np.array([-13.0, -3.0, 7.0]) * si_crystal.lattice_nm[0] / 4.0
    sites = build_neighbor_sites(si_crystal, 3000)
    assert np.linalg.norm(sites.positions - target, axis=1).min() < 1e-9


def test_cawo4_shells_match_brute_force(cawo4_crystal):
    oracle = brute_force_sites(cawo4_crystal, 3.0)
    sites = build_neighbor_sites(cawo4_crystal, 100)
    assert len(oracle) >= 100
    expected = np.array([d for d, _ in oracle[:100]])
    # shell populations must agree even if intra-shell order differs
    assert np.allclose(np.sort(sites.distances), np.sort(expected), atol=1e-9)


def test_sites_within_matches_brute_force_count(cawo4_crystal):
    oracle = brute_force_sites(cawo4_crystal, 2.5)
    sites = sites_within(cawo4_crystal, 2.5)
    assert len(sites) == len(oracle)


def test_si_density_growth(si_crystal):
    a = si_crystal.lattice_nm[0]
    for r in (3.0, 4.0, 5.0):
        count = len(sites_within(si_crystal, r))
        expected = 8.0 / a**3 * 4.0 / 3.0 * np.pi * r**3
        assert abs(count - expected) / expected < 0.05


def test_ordering_is_total_and_reproducible(cawo4_crystal):
    s1 = build_neighbor_sites(cawo4_crystal, 500)
    s2 = build_neighbor_sites(cawo4_crystal, 500)
    assert np.array_equal(s1.positions, s2.positions)
    assert np.all(np.diff(s1.distances) >= -1e-9)
    # no duplicates
    diffs = np.linalg.norm(s1.positions[1:] - s1.positions[:-1], axis=1)
    assert np.all(diffs > 1e-9)


def test_defect_site_excluded(si_crystal):
    sites = build_neighbor_sites(si_crystal, 1000)
    assert sites.distances[0] > 0.1


def test_enumeration_cap_rejected(si_crystal):
    with pytest.raises(LatticeConfigError):
        build_neighbor_sites(si_crystal, 200_000_000)


def test_sampling_edge_probabilities(si_crystal):
    sites = build_neighbor_sites(si_crystal, 200)
    assert len(sample_configuration(sites, 0.0, seed=3)) == 0
    assert len(sample_configuration(sites, 1.0, seed=3)) == len(sites)


def test_sampling_binomial_bound(si_crystal):
    sites = build_neighbor_sites(si_crystal, 10_000)
    occ = sample_configuration(sites, 0.5, seed=99)
    n = len(sites)
    sigma = np.sqrt(0.25 / n)
    assert abs(len(occ) / n - 0.5) < 3 * sigma


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1),
       p=st.floats(min_value=0.0, max_value=1.0))
def test_sampling_bitwise_deterministic(seed, p):
    from eseem.crystals import default_crystal

    sites = build_neighbor_sites(default_crystal("si"), 64)
    first = sample_configuration(sites, p, seed)
    second = sample_configuration(sites, p, seed)
    assert np.array_equal(first.positions, second.positions)
