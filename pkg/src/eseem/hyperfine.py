"""Hyperfine tensors (Fermi contact + dipolar) and their secular reduction.

Couplings are angular frequencies (rad/s); positions in nm. All functions
are vectorized over a leading site axis and accept signed nuclear
gyromagnetic ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import HBAR, MU0, NM, GAMMA_E_PER_G
from .crystals import CrystalSystem

# sites closer than this to the defect are unphysical for a point-dipole model
MIN_SITE_DISTANCE_NM = 0.05


class UnphysicalSiteError(ValueError):
    """Site too close to the defect for the point-dipole hyperfine model."""


@dataclass(frozen=True)
class HyperfineTensor:
    """Full hyperfine tensor of one site: contact scalar plus dipolar part."""

    contact: float             # A_cf, rad/s
    dipolar: np.ndarray        # 3x3, rad/s

    @property
    def total(self) -> np.ndarray:
        return self.contact * np.eye(3) + self.dipolar


@dataclass(frozen=True)
class SecularCouplings:
    """Secular parameters (A_zz, A_zx) of the hyperfine row along the
    electron quantization axis, in the nuclear frame (z along the field,
    x chosen so the y component vanishes; A_zx >= 0)."""

    a_zz: float
    a_zx: float

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.a_zz, self.a_zx))


def quantization_axis(g_tensor: np.ndarray, field_dir: np.ndarray) -> np.ndarray:
    """Electron quantization axis: direction of g^T B0, normalized."""
    axis = np.asarray(g_tensor, dtype=float).T @ np.asarray(field_dir, dtype=float)
    return axis / np.linalg.norm(axis)


def dipolar_tensor(
    r_nm: np.ndarray,
    electron_g: float | np.ndarray,
    gamma_n: float,
) -> np.ndarray:
    """Point-dipole hyperfine tensor(s) in rad/s.

    For scalar ``electron_g`` this is (mu0/4pi) * gamma_e * gamma_n * hbar
    / r^3 * (1 - 3 rr^T/r^2). An anisotropic g-tensor replaces the scalar
    prefactor with the contraction [r^2 g - 3 (g r) r^T] / r^2, which is
    symmetric only in the isotropic case.

    Parameters
    ----------
    r_nm : (3,) or (N, 3) site position(s) relative to the defect, nm.
    electron_g : scalar g-factor or 3x3 g-tensor.
    gamma_n : signed nuclear gyromagnetic ratio, rad s^-1 T^-1.
    """
    r = np.asarray(r_nm, dtype=float)
    single = r.ndim == 1
    r = r.reshape(-1, 3) * NM
    d2 = np.einsum("ij,ij->i", r, r)
    if np.any(d2 < (MIN_SITE_DISTANCE_NM * NM) ** 2):
        raise UnphysicalSiteError(
            f"site closer than {MIN_SITE_DISTANCE_NM} nm to the defect"
        )
    pref = MU0 / (4.0 * np.pi) * GAMMA_E_PER_G * gamma_n * HBAR
    g = np.asarray(electron_g, dtype=float)
    if g.ndim == 0:
        gmat = float(g) * np.eye(3)
    else:
        gmat = g.reshape(3, 3)
    gr = r @ gmat.T
    tens = (
        d2[:, None, None] * gmat[None, :, :]
        - 3.0 * gr[:, :, None] * r[:, None, :]
    ) * (pref / d2[:, None, None] ** 2.5)
    return tens[0] if single else tens


def fermi_contact_si(
    r_nm: np.ndarray,
    crystal: CrystalSystem,
    g_e: float = 2.0,
) -> float | np.ndarray:
    """Fermi contact coupling of a shallow Si donor at lattice site(s), rad/s.

    Uses the Kohn-Luttinger envelope with the valley interference factor
    [cos(k0 x) + cos(k0 y) + cos(k0 z)]^2; parameters come from the crystal
    definition. The result carries the sign of the nuclear gyromagnetic
    ratio.
    """
    cp = crystal.contact
    if cp is None:
        raise ValueError(f"crystal {crystal.name!r} has no contact parameters")
    r = np.asarray(r_nm, dtype=float)
    single = r.ndim == 1
    r = r.reshape(-1, 3)
    sa, sb = cp.s_scale * cp.a_env_nm, cp.s_scale * cp.b_env_nm
    envelope_arg = np.sqrt(
        r[:, 2] ** 2 / sb**2 + (r[:, 0] ** 2 + r[:, 1] ** 2) / sa**2
    )
    f2 = np.exp(-2.0 * envelope_arg) / (np.pi * sa**2 * sb)   # nm^-3
    valley = np.cos(cp.k0 * r[:, 0]) + np.cos(cp.k0 * r[:, 1]) + np.cos(cp.k0 * r[:, 2])
    psi2 = (2.0 / 3.0) * cp.eta * f2 * valley**2 / NM**3       # m^-3
    a_cf = (
        (2.0 / 3.0) * MU0 * (g_e * GAMMA_E_PER_G) * crystal.isotope.gamma_n * HBAR * psi2
    )
    return float(a_cf[0]) if single else a_cf


def secular_params(
    tensor: np.ndarray,
    field_dir: np.ndarray,
    electron_axis: np.ndarray,
) -> SecularCouplings | tuple[np.ndarray, np.ndarray]:
    """Project hyperfine tensor(s) onto the electron quantization axis.

    The row vector electron_axis . A is expressed in the nuclear frame whose
    z axis is ``field_dir``; the perpendicular component defines A_zx >= 0
    (the frame x axis is rotated so the y component vanishes).
    """
    b_hat = np.asarray(field_dir, dtype=float)
    b_hat = b_hat / np.linalg.norm(b_hat)
    n_hat = np.asarray(electron_axis, dtype=float)
    n_hat = n_hat / np.linalg.norm(n_hat)
    tens = np.asarray(tensor, dtype=float)
    single = tens.ndim == 2
    tens = tens.reshape(-1, 3, 3)
    row = np.einsum("i,nij->nj", n_hat, tens)
    a_zz = row @ b_hat
    perp = row - a_zz[:, None] * b_hat[None, :]
    a_zx = np.linalg.norm(perp, axis=1)
    if single:
        return SecularCouplings(float(a_zz[0]), float(a_zx[0]))
    return a_zz, a_zx


def site_secular_couplings(
    positions_nm: np.ndarray,
    crystal: CrystalSystem,
    electron_g: float | np.ndarray,
    field_dir: np.ndarray,
    include_contact: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """(A_zz, A_zx) arrays for many sites in one pass.

    Contact term is included only for crystals that define envelope
    parameters (the Si donor); for a 4f ion like Er it is zero.
    """
    g = np.asarray(electron_g, dtype=float)
    gmat = float(g) * np.eye(3) if g.ndim == 0 else g.reshape(3, 3)
    axis = quantization_axis(gmat, field_dir)
    tens = dipolar_tensor(positions_nm, gmat, crystal.isotope.gamma_n)
    if include_contact:
        g_scalar = float(gmat[0, 0])
        a_cf = fermi_contact_si(positions_nm, crystal, g_e=g_scalar)
        tens = tens + a_cf[:, None, None] * np.eye(3)[None, :, :]
    return secular_params(tens, field_dir, axis)
