"""Closed-form per-nucleus echo-modulation kernels and product rules.

All kernels assume ideal instantaneous pulses and an effective spin-1/2
description of the probed transition (see :mod:`eseem.spin_hamiltonian`).
Inputs broadcast over a leading bath-site axis; delay grids broadcast on the
trailing axis, so a kernel evaluated for N sites on a G-point grid returns
an (N, G) array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spin_hamiltonian import FictitiousSpin


class WeightTableError(ValueError):
    """Transition weights do not match the supplied transition amplitudes."""


# ---------------------------------------------------------------------------
# pulse sequences
# ---------------------------------------------------------------------------

def _check_grid(grid: np.ndarray, name: str) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0):
        raise ValueError(f"{name} delays must be >= 0")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class TwoPulse:
    """Hahn echo: pi/2 - tau - pi - echo, scanned over tau."""

    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _check_grid(self.tau, "tau"))

    kind = "2p"

    @property
    def grid(self) -> np.ndarray:
        return self.tau


@dataclass(frozen=True)
class ThreePulse:
    """Stimulated echo: pi/2 - tau - pi/2 - T - pi/2 - echo, scanned over T."""

    tau: float
    t: np.ndarray

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        object.__setattr__(self, "t", _check_grid(self.t, "T"))

    kind = "3p"

    @property
    def grid(self) -> np.ndarray:
        return self.t


@dataclass(frozen=True)
class FivePulse:
    """pi/2 - tau1 - pi - tau1 - pi/2 - T - pi/2 - tau2 - pi - tau2 - echo."""

    tau1: float
    tau2: float
    t: np.ndarray

    def __post_init__(self):
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("tau1/tau2 must be >= 0")
        object.__setattr__(self, "t", _check_grid(self.t, "T"))

    kind = "5p"

    @property
    def grid(self) -> np.ndarray:
        return self.t


PulseSequence = TwoPulse | ThreePulse | FivePulse


# ---------------------------------------------------------------------------
# per-nucleus frequencies and kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuclearFrequencies:
    """Electron-state-conditioned nuclear frequencies and modulation depth."""

    omega_up: np.ndarray | float      # rad/s, >= 0
    omega_dn: np.ndarray | float
    k: np.ndarray | float             # modulation depth in [0, 1]
    eta_up: np.ndarray | float        # quantization-axis tilt angles, rad
    eta_dn: np.ndarray | float
    omega_i_eff: np.ndarray | float = 0.0   # effective nuclear Zeeman, rad/s


@dataclass(frozen=True)
class Branches3p:
    """Per-nucleus pathway factors of the stimulated echo."""

    up: np.ndarray
    dn: np.ndarray


@dataclass(frozen=True)
class Branches5p:
    """Per-nucleus pathway factors of the five-pulse echo."""

    up_plus: np.ndarray
    up_minus: np.ndarray
    dn_plus: np.ndarray
    dn_minus: np.ndarray


def nuclear_frequencies(fs: FictitiousSpin) -> NuclearFrequencies:
    """Conditional nuclear frequencies of one fictitious spin-1/2.

    omega_up/dn are the nuclear precession frequencies for the electron in
    the upper/lower level; k is the usual depth parameter
    [b omega_i_eff / (omega_up omega_dn)]^2, clipped only by floating-point
    roundoff.
    """
    w = np.asarray(fs.omega_i_eff, dtype=float)
    a = np.asarray(fs.a, dtype=float)
    b = np.asarray(fs.b, dtype=float)
    omega_up = np.hypot(w + 0.5 * a, 0.5 * b)
    omega_dn = np.hypot(w - 0.5 * a, 0.5 * b)
    denom = omega_up * omega_dn
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 0.0, (b * w) ** 2 / np.where(denom > 0, denom, 1.0) ** 2, 0.0)
        eta_up = np.arctan2(b, a + 2.0 * w)
        eta_dn = np.arctan2(b, a - 2.0 * w)
    return NuclearFrequencies(omega_up, omega_dn, k, eta_up, eta_dn, w)


def _outer(freq: np.ndarray | float, delay: np.ndarray | float) -> np.ndarray:
    """freq (sites...) x delay (grid) -> (sites..., grid) phase array."""
    return np.asarray(freq, dtype=float)[..., None] * np.atleast_1d(
        np.asarray(delay, dtype=float)
    )


def v2p_single(nf: NuclearFrequencies, tau: np.ndarray | float) -> np.ndarray:
    """Two-pulse modulation factor of one nucleus on a tau grid."""
    pu = _outer(nf.omega_up, tau)
    pd = _outer(nf.omega_dn, tau)
    k = np.asarray(nf.k, dtype=float)[..., None]
    return 1.0 - 0.25 * k * (
        2.0 - 2.0 * np.cos(pu) - 2.0 * np.cos(pd) + np.cos(pu - pd) + np.cos(pu + pd)
    )


def v3p_single(
    nf: NuclearFrequencies, tau: float, t: np.ndarray | float
) -> Branches3p:
    """Three-pulse branch factors on a T grid (fixed tau)."""
    k = np.asarray(nf.k, dtype=float)[..., None]
    wu = np.asarray(nf.omega_up, dtype=float)[..., None]
    wd = np.asarray(nf.omega_dn, dtype=float)[..., None]
    tgrid = np.atleast_1d(np.asarray(t, dtype=float))
    up = 1.0 - 0.5 * k * (1.0 - np.cos(wd * tau)) * (1.0 - np.cos(wu * (tgrid + tau)))
    dn = 1.0 - 0.5 * k * (1.0 - np.cos(wu * tau)) * (1.0 - np.cos(wd * (tgrid + tau)))
    return Branches3p(up, dn)


def _v5p_pathway(
    k, ceta4, seta4, w_t, w_other, tau1, tau2, tgrid
):
    """The T-dependent bracket of one five-pulse branch; w_t is the frequency
    active during T."""
    phi_t_plus = 0.5 * (tau1 + tau2) * w_t
    phi_o_plus = 0.5 * (tau1 + tau2) * w_other
    phi_o_minus = 0.5 * (tau1 - tau2) * w_other
    c_branch = (
        np.cos(0.5 * tau1 * w_t)
        * np.cos(0.5 * tau2 * w_t)
        * np.sin(0.5 * tau1 * w_other)
        * np.sin(0.5 * tau2 * w_other)
    )
    return (
        4.0 * k**2 * c_branch
        - 2.0 * k**2 * np.cos(phi_o_minus) * np.cos(w_t * tgrid + phi_t_plus)
        - 4.0 * k * ceta4 * np.cos(w_t * tgrid + phi_t_plus + phi_o_plus)
        - 4.0 * k * seta4 * np.cos(w_t * tgrid + phi_t_plus - phi_o_plus)
    )


def v5p_single(
    nf: NuclearFrequencies, tau1: float, tau2: float, t: np.ndarray | float
) -> Branches5p:
    """Five-pulse branch factors on a T grid (fixed tau1, tau2).

    cos^2(eta) and sin^2(eta) here are the pathway-transfer weights
    [w^2 - (omega_up - omega_dn)^2/4] / (omega_up omega_dn) and its
    complement, not the tilt angles of :class:`NuclearFrequencies`.
    """
    k = np.asarray(nf.k, dtype=float)[..., None]
    wu = np.asarray(nf.omega_up, dtype=float)[..., None]
    wd = np.asarray(nf.omega_dn, dtype=float)[..., None]
    w2 = np.asarray(nf.omega_i_eff, dtype=float)[..., None] ** 2
    denom = wu * wd
    ceta2 = (w2 - 0.25 * (wu - wd) ** 2) / denom
    seta2 = (0.25 * (wu + wd) ** 2 - w2) / denom
    tgrid = np.atleast_1d(np.asarray(t, dtype=float))
    b5p = (
        np.sin(0.5 * tau1 * wu)
        * np.sin(0.5 * tau2 * wu)
        * np.sin(0.5 * tau1 * wd)
        * np.sin(0.5 * tau2 * wd)
    )
    base = v2p_single(nf, tau1) * v2p_single(nf, tau2)   # (sites, 1) each
    bracket_up = _v5p_pathway(k, ceta2**2, seta2**2, wu, wd, tau1, tau2, tgrid)
    bracket_dn = _v5p_pathway(k, ceta2**2, seta2**2, wd, wu, tau1, tau2, tgrid)
    return Branches5p(
        up_plus=base + b5p * bracket_up,
        up_minus=base - b5p * bracket_up,
        dn_plus=base + b5p * bracket_dn,
        dn_minus=base - b5p * bracket_dn,
    )


def product_combine(per_nucleus, kind: str) -> np.ndarray:
    """Combine per-nucleus factors into the echo amplitude.

    2p: plain product; 3p: average of the two branch products; 5p: the
    four-pathway combination (V_up+ - V_up- + V_dn+ - V_dn-) / 4. Branch
    bookkeeping stays per-nucleus until this final product. An empty bath
    gives 1.
    """
    if kind == "2p":
        values = np.atleast_2d(np.asarray(per_nucleus, dtype=float))
        if values.size == 0:
            return np.ones(1)
        return np.prod(values, axis=0)
    if kind == "3p":
        if isinstance(per_nucleus, Branches3p):
            up, dn = np.atleast_2d(per_nucleus.up), np.atleast_2d(per_nucleus.dn)
        else:
            up = np.asarray([np.ravel(b.up) for b in per_nucleus], dtype=float)
            dn = np.asarray([np.ravel(b.dn) for b in per_nucleus], dtype=float)
        if up.size == 0:
            return np.ones(1)
        return 0.5 * (np.prod(up, axis=0) + np.prod(dn, axis=0))
    if kind == "5p":
        if isinstance(per_nucleus, Branches5p):
            parts = tuple(
                np.atleast_2d(getattr(per_nucleus, name))
                for name in ("up_plus", "up_minus", "dn_plus", "dn_minus")
            )
        else:
            parts = tuple(
                np.asarray([np.ravel(getattr(b, name)) for b in per_nucleus], dtype=float)
                for name in ("up_plus", "up_minus", "dn_plus", "dn_minus")
            )
        if parts[0].size == 0:
            return np.zeros(1)
        pu_p, pu_m, pd_p, pd_m = (np.prod(part, axis=0) for part in parts)
        return 0.25 * (pu_p - pu_m + pd_p - pd_m)
    raise ValueError(f"unknown sequence kind {kind!r}")


def bernoulli_mean(values: np.ndarray, p: float) -> np.ndarray:
    """Exact occupancy average of a per-site factor: 1 - p (1 - V)."""
    return 1.0 - p * (1.0 - np.asarray(values, dtype=float))


def weighted_transition_sum(per_transition: dict, weights: dict) -> np.ndarray:
    """Sum transition amplitudes with their relative weights.

    Keys of both mappings are (m, branch) pairs; the weight table must cover
    every supplied transition and sum to 1 within 2e-3.
    """
    missing = set(per_transition) - set(weights)
    if missing:
        raise WeightTableError(f"weight table missing transitions {sorted(missing)}")
    if set(weights) - set(per_transition):
        raise WeightTableError("weight table lists transitions with no amplitude")
    total_w = sum(weights.values())
    if abs(total_w - 1.0) > 2e-3:
        raise WeightTableError(f"weights sum to {total_w}, expected 1 +- 2e-3")
    out = None
    for key in sorted(per_transition):
        term = weights[key] * np.asarray(per_transition[key], dtype=float)
        out = term if out is None else out + term
    return out
