"""Defect spin Hamiltonians and their fictitious spin-1/2 reductions.

The bismuth donor (20 levels) is handled in closed form via the
Breit-Rabi-type mixing angles; the erbium systems (2 or 16 levels) by dense
diagonalization. Every EPR transition reduces to a :class:`FictitiousSpin`
carrying the effective nuclear Zeeman and the rescaled secular couplings
that feed the analytic echo kernels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import GAMMA_E_PER_G
from .crystals import DefectSpec
from .hyperfine import quantization_axis
from .spinops import embed, spin_matrices


@dataclass(frozen=True)
class LevelSet:
    """Eigen-decomposition of a defect Hamiltonian.

    Levels are ordered by ascending energy; ``labels`` holds (eta, m) with
    eta = +-1 the manifold and m the projection quantum number used for
    bookkeeping. ``m_s`` is the expectation value of the electron spin
    component along the quantization axis.
    """

    energies: np.ndarray            # (D,), rad/s
    states: np.ndarray              # (D, D), states[:, k] in the product basis
    etas: np.ndarray                # (D,), +-1
    ms: np.ndarray                  # (D,), m label per level
    m_s: np.ndarray                 # (D,), <S_0z'> per level
    thetas: np.ndarray | None = None   # Bi mixing angles per level
    alphas: np.ndarray | None = None   # Bi cos(theta_m) per level

    @property
    def dimension(self) -> int:
        return self.energies.shape[0]

    def index_of(self, eta: int, m: float) -> int:
        hit = np.flatnonzero((self.etas == eta) & (np.abs(self.ms - m) < 1e-9))
        if hit.size != 1:
            raise KeyError(f"no unique level ({eta:+d}, {m})")
        return int(hit[0])


@dataclass(frozen=True)
class FictitiousSpin:
    """One EPR transition reduced to an effective spin-1/2.

    ``omega_i_eff`` (>= 0) is the effective nuclear Zeeman frequency, ``a``
    and ``b`` the secular/pseudosecular couplings with b >= 0; all rad/s.
    Fields may be arrays over bath sites.
    """

    omega_s: float
    omega_i_eff: np.ndarray | float
    a: np.ndarray | float
    b: np.ndarray | float
    provenance: tuple = ()


@dataclass(frozen=True)
class Transition:
    """Bookkeeping for one |-,m> <-> |+,m+branch> transition."""

    m: int
    branch: int                     # +1 or -1
    m_s_alpha: float                # upper level <S_z>
    m_s_beta: float                 # lower level <S_z>
    omega_s: float                  # transition frequency, rad/s
    lower_index: int = -1
    upper_index: int = -1


# ---------------------------------------------------------------------------
# bismuth donor, closed form
# ---------------------------------------------------------------------------

def _bi_theta(m: np.ndarray, x: float) -> np.ndarray:
    # atan2 keeps theta in [0, pi], covering the m = +-5 edge states
    return np.arctan2(np.sqrt(25.0 - m.astype(float) ** 2), m + x)


def bi_alpha(m: np.ndarray | float, b0: float, defect: DefectSpec) -> np.ndarray | float:
    """cos(theta_m): the electron polarization factor of level (+-, m)."""
    a_bi = defect.a0[0]
    x = defect.g[0] * GAMMA_E_PER_G * b0 / a_bi
    return np.cos(_bi_theta(np.asarray(m), x))


def bi_eigensystem(b0: float, defect: DefectSpec) -> LevelSet:
    """Exact 20-level solution of the bismuth donor at field b0 (tesla).

    Eigenstates follow the two-dimensional mixing ansatz in each m subspace;
    the energy zero keeps the -A/4 offset of the closed-form expression.
    """
    if defect.kind != "BiSi":
        raise ValueError("bi_eigensystem needs a BiSi defect")
    a_bi = defect.a0[0]
    gamma_e = defect.g[0] * GAMMA_E_PER_G
    x = gamma_e * b0 / a_bi
    i0 = defect.i0                  # 9/2
    dim = defect.dimension          # 20

    def product_index(ms_sign: int, m_i: float) -> int:
        # basis: |m_s> x |m_i> with m_s = +1/2 first, m_i descending from 9/2
        block = 0 if ms_sign > 0 else int(2 * i0 + 1)
        return block + int(round(i0 - m_i))

    levels = []
    for eta in (-1, +1):
        m_range = np.arange(-4, 5) if eta < 0 else np.arange(-5, 6)
        for m in m_range:
            theta = float(_bi_theta(np.asarray(float(m)), x))
            energy = -a_bi / 4.0 + eta * (a_bi / 2.0) * np.sqrt(
                (m + x) ** 2 + 25.0 - m * m
            )
            vec = np.zeros(dim)
            c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
            if abs(m - 0.5) <= i0:          # |+1/2, m - 1/2> component
                vec[product_index(+1, m - 0.5)] = c if eta > 0 else -s
            if abs(m + 0.5) <= i0:          # |-1/2, m + 1/2> component
                vec[product_index(-1, m + 0.5)] = s if eta > 0 else c
            alpha = np.cos(theta)
            levels.append((energy, eta, m, theta, alpha, vec))

    # ascending energy within each manifold, lower manifold first
    levels.sort(key=lambda t: (t[1], t[0]))
    energies = np.array([t[0] for t in levels])
    etas = np.array([t[1] for t in levels], dtype=int)
    ms = np.array([t[2] for t in levels], dtype=float)
    thetas = np.array([t[3] for t in levels])
    alphas = np.array([t[4] for t in levels])
    states = np.column_stack([t[5] for t in levels]).astype(complex)
    m_s = etas * alphas / 2.0
    return LevelSet(energies, states, etas, ms, m_s, thetas=thetas, alphas=alphas)


def transition_matrix_elements(levels: LevelSet) -> np.ndarray:
    """|<k'|S_0x|k>| between all level pairs (electron spin-1/2 assumed first
    in the product basis)."""
    dim = levels.dimension
    nuclear_dim = dim // 2
    sx = spin_matrices(0.5)[0]
    s0x = embed(sx, [2, nuclear_dim], 0)
    return np.abs(levels.states.conj().T @ s0x @ levels.states)


def bi_transitions(b0: float, defect: DefectSpec, levels: LevelSet | None = None) -> list[Transition]:
    """The 18 |dm| = 1 transitions |-,m> <-> |+,m+branch> with their
    fictitious-spin inputs."""
    if levels is None:
        levels = bi_eigensystem(b0, defect)
    out = []
    for m in range(-4, 5):
        for branch in (+1, -1):
            lo = levels.index_of(-1, m)
            up = levels.index_of(+1, m + branch)
            out.append(
                Transition(
                    m=m,
                    branch=branch,
                    m_s_alpha=float(levels.m_s[up]),
                    m_s_beta=float(levels.m_s[lo]),
                    omega_s=float(levels.energies[up] - levels.energies[lo]),
                    lower_index=lo,
                    upper_index=up,
                )
            )
    return out


# ---------------------------------------------------------------------------
# erbium, dense diagonalization
# ---------------------------------------------------------------------------

def er_eigensystem(b0_vec: np.ndarray, defect: DefectSpec) -> LevelSet:
    """Eigensystem of the erbium defect in an arbitrary field (tesla vector).

    For I0 = 0 the Kramers doublet splits by beta_e |g^T B0|; for 167Er the
    16-level system is diagonalized densely. The defect nuclear Zeeman term
    is omitted. m labels are the dominant nuclear projection (0 for I0 = 0)
    and the quantization axis is the direction of g^T B0.
    """
    b0_vec = np.asarray(b0_vec, dtype=float)
    gmat = defect.g_tensor
    axis = quantization_axis(gmat, b0_vec)
    omega_vec = GAMMA_E_PER_G * (gmat.T @ b0_vec)

    if defect.kind == "ErI0":
        sx, sy, sz = spin_matrices(0.5)
        h = omega_vec[0] * sx + omega_vec[1] * sy + omega_vec[2] * sz
        energies, vecs = np.linalg.eigh(h)
        s_axis = axis[0] * sx + axis[1] * sy + axis[2] * sz
        m_s = np.real(np.einsum("ik,ij,jk->k", vecs.conj(), s_axis, vecs))
        etas = np.where(m_s >= 0, 1, -1)
        return LevelSet(energies, vecs, etas, np.zeros(2), m_s)

    if defect.kind != "Er167":
        raise ValueError("er_eigensystem needs an ErI0 or Er167 defect")

    i0 = defect.i0
    nuclear_dim = int(2 * i0 + 1)
    dims = [2, nuclear_dim]
    s_ops = [embed(op, dims, 0) for op in spin_matrices(0.5)]
    i_ops = [embed(op, dims, 1) for op in spin_matrices(i0)]
    h = sum(omega_vec[k] * s_ops[k] for k in range(3))
    h = h + sum(defect.a0[k] * s_ops[k] @ i_ops[k] for k in range(3))
    energies, vecs = np.linalg.eigh(h)
    s_axis = axis[0] * s_ops[0] + axis[1] * s_ops[1] + axis[2] * s_ops[2]
    m_s = np.real(np.einsum("ik,ij,jk->k", vecs.conj(), s_axis, vecs))
    etas = np.where(m_s >= 0, 1, -1)
    # m label: nuclear projection of the dominant product-basis component
    m_i_of_index = i0 - (np.arange(2 * nuclear_dim) % nuclear_dim)
    ms = m_i_of_index[np.argmax(np.abs(vecs), axis=0)]
    return LevelSet(energies, vecs, etas, ms.astype(float), m_s)


def er_transition(levels: LevelSet, m_i: float = 0.0) -> Transition:
    """The m_I-preserving transition |-, m_I> <-> |+, m_I>."""
    lo = levels.index_of(-1, m_i)
    up = levels.index_of(+1, m_i)
    return Transition(
        m=int(m_i) if float(m_i).is_integer() else m_i,
        branch=0,
        m_s_alpha=float(levels.m_s[up]),
        m_s_beta=float(levels.m_s[lo]),
        omega_s=float(levels.energies[up] - levels.energies[lo]),
        lower_index=lo,
        upper_index=up,
    )


# ---------------------------------------------------------------------------
# fictitious spin-1/2 reduction
# ---------------------------------------------------------------------------

def fictitious_reduction(
    transition: Transition,
    a_zz: np.ndarray | float,
    a_zx: np.ndarray | float,
    omega_i: float,
) -> FictitiousSpin:
    """Reduce bath-site couplings onto one transition's fictitious spin-1/2.

    With delta = m_s_alpha + m_s_beta and abar = m_s_alpha - m_s_beta, the
    conditional nuclear Hamiltonians become
    omega_i_eff I_z +- (a I_z + b I_x)/2 in the rotated nuclear frame. The
    rotation angle satisfies sin(theta) = delta a_zx / (2 omega_i_eff) with
    cos(theta) carrying the sign of (omega_i + delta a_zz / 2), so signed
    nuclear Zeeman frequencies are handled consistently.
    """
    a_zz = np.asarray(a_zz, dtype=float)
    a_zx = np.asarray(a_zx, dtype=float)
    delta = transition.m_s_alpha + transition.m_s_beta
    abar = transition.m_s_alpha - transition.m_s_beta
    wz = omega_i + 0.5 * delta * a_zz
    wx = 0.5 * delta * a_zx
    omega_eff = np.hypot(wz, wx)
    degenerate = omega_eff == 0.0
    safe = np.where(degenerate, 1.0, omega_eff)
    cos_t = np.where(degenerate, 1.0, wz / safe)
    sin_t = np.where(degenerate, 0.0, wx / safe)
    a = abar * (a_zz * cos_t + a_zx * sin_t)
    b = np.abs(abar * (a_zx * cos_t - a_zz * sin_t))
    if np.any(degenerate & (b != 0.0)):
        warnings.warn(
            "degenerate nuclear frame: omega_i_eff = 0 with b != 0",
            RuntimeWarning,
            stacklevel=2,
        )
    if a.ndim == 0:
        omega_eff, a, b = float(omega_eff), float(a), float(b)
    return FictitiousSpin(
        omega_s=transition.omega_s,
        omega_i_eff=omega_eff,
        a=a,
        b=b,
        provenance=(transition.m, transition.branch),
    )
