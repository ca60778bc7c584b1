"""Physical constants (CODATA 2018) and unit helpers.

All couplings and frequencies are handled internally as angular frequencies
(rad/s); user-facing I/O is in Hz.  Positions are in nm unless noted.
"""

import numpy as np

MU0 = 1.25663706212e-6        # vacuum permeability, T m / A
HBAR = 1.054571817e-34        # reduced Planck constant, J s
BETA_E = 9.2740100783e-24     # Bohr magneton, J / T
BETA_N = 5.0507837461e-27     # nuclear magneton, J / T

# angular gyromagnetic ratio per unit g-factor, rad s^-1 T^-1
GAMMA_E_PER_G = BETA_E / HBAR
GAMMA_N_PER_G = BETA_N / HBAR

NM = 1e-9                     # nm -> m

TWO_PI = 2.0 * np.pi


def hz(angular: float | np.ndarray) -> float | np.ndarray:
    """Convert angular frequency (rad/s) to ordinary frequency (Hz)."""
    return angular / TWO_PI


def angular(freq_hz: float | np.ndarray) -> float | np.ndarray:
    """Convert ordinary frequency (Hz) to angular frequency (rad/s)."""
    return freq_hz * TWO_PI
