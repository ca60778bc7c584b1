"""Independent brute-force references used by the test suite.

Everything here is deliberately written from first principles (dense
Kronecker products, explicit coherence-pathway propagation) and shares no
code with the package internals it checks.
"""

from __future__ import annotations

import numpy as np

# ---------------------------------------------------------------------------
# spin operators
# ---------------------------------------------------------------------------

def spin_ops(j: float):
    dim = int(round(2 * j + 1))
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    jp = np.zeros((dim, dim), dtype=complex)
    for i in range(dim - 1):
        jp[i, i + 1] = np.sqrt(j * (j + 1) - m[i + 1] * (m[i + 1] + 1))
    jx = 0.5 * (jp + jp.conj().T)
    jy = -0.5j * (jp - jp.conj().T)
    return jx, jy, jz


def kron(*ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def op_on(op, n_spins, which, dim_each=2):
    mats = [np.eye(dim_each, dtype=complex)] * n_spins
    mats[which] = op
    return kron(*mats)


# ---------------------------------------------------------------------------
# dense defect Hamiltonians
# ---------------------------------------------------------------------------

def bi_hamiltonian(b0, gamma_e, a_bi):
    """20x20 bismuth donor Hamiltonian gamma_e B0 S_z + A_Bi S.I (rad/s)."""
    sx, sy, sz = spin_ops(0.5)
    ix, iy, iz = spin_ops(4.5)
    id_i = np.eye(10, dtype=complex)
    id_s = np.eye(2, dtype=complex)
    h = gamma_e * b0 * kron(sz, id_i)
    h += a_bi * (kron(sx, ix) + kron(sy, iy) + kron(sz, iz))
    return h


def er_hamiltonian(b0_vec, g_diag, a_diag_angular, i0):
    """Erbium defect Hamiltonian (rad/s) via Kronecker products."""
    sx, sy, sz = spin_ops(0.5)
    s_list = [sx, sy, sz]
    dim_i = int(round(2 * i0 + 1))
    i_list = spin_ops(i0)
    gamma_e_per_g = 9.2740100783e-24 / 1.054571817e-34
    omega = gamma_e_per_g * np.asarray(g_diag) * np.asarray(b0_vec)
    h = sum(omega[k] * kron(s_list[k], np.eye(dim_i)) for k in range(3))
    if a_diag_angular is not None:
        h = h + sum(
            a_diag_angular[k] * kron(s_list[k], i_list[k]) for k in range(3)
        )
    return h


def two_spin_secular_hamiltonian(omega_i, a_zz, a_zx, electron_sign):
    """Conditional nuclear Hamiltonian of Eq.-(2)-type models: for electron
    projection +-1/2, H = omega_i I_z +- (a_zz I_z + a_zx I_x)/2."""
    ix, _, iz = spin_ops(0.5)
    return omega_i * iz + 0.5 * electron_sign * (a_zz * iz + a_zx * ix)


# ---------------------------------------------------------------------------
# pathway-selected echo propagation (ideal pulses, pure dephasing)
# ---------------------------------------------------------------------------

def rot(theta, phase):
    """Ideal electron rotation exp(-i theta (cos(phase) Sx + sin(phase) Sy))."""
    sx, sy, _ = spin_ops(0.5)
    axis = np.cos(phase) * sx + np.sin(phase) * sy
    return np.cos(theta / 2) * np.eye(2) - 2j * np.sin(theta / 2) * axis


def echo_amplitude(h_up, h_dn, pulses, segments, select=True):
    """Coherence-pathway-selected echo amplitude 2 Tr[S+ rho].

    Parameters
    ----------
    h_up, h_dn : bath Hamiltonians conditioned on the electron level.
    pulses : list of 2x2 electron rotation matrices, applied in order.
    segments : list of (symbol, duration) free-evolution periods; there is
        one segment after each pulse. Pathways whose electron coherence
        order, summed within each duration symbol, does not cancel are
        discarded: they dephase under inhomogeneous broadening and are
        removed by phase cycling in a measurement.
    """
    dim = h_up.shape[0]
    evals = {}
    for sign, h in ((+1, h_up), (-1, h_dn)):
        w, v = np.linalg.eigh(h)
        evals[sign] = (w, v)

    def u_of(sign, t):
        w, v = evals[sign]
        return (v * np.exp(-1j * w * t)) @ v.conj().T

    def row(sign):
        return 0 if sign > 0 else 1

    # components: {(history, s, s'): bath matrix}; s = +1 (up), -1 (dn);
    # history records the electron coherence order of each past segment
    comps = {((), -1, -1): np.eye(dim, dtype=complex) / dim}
    for pulse, (symbol, duration) in zip(pulses, segments, strict=True):
        mixed = {}
        for (hist, s, sp), mat in comps.items():
            for s2 in (+1, -1):
                for sp2 in (+1, -1):
                    amp = pulse[row(s2), row(s)] * np.conj(pulse[row(sp2), row(sp)])
                    if amp == 0:
                        continue
                    p = (s2 - sp2) // 2
                    key = (hist + ((symbol, p),), s2, sp2)
                    if key in mixed:
                        mixed[key] = mixed[key] + amp * mat
                    else:
                        mixed[key] = amp * mat
        comps = {
            (hist, s, sp): u_of(s, duration) @ mat @ u_of(sp, duration).conj().T
            for (hist, s, sp), mat in mixed.items()
        }

    total = 0.0 + 0.0j
    for (hist, s, sp), mat in comps.items():
        if s == sp:
            continue                      # populations carry no echo signal
        if s != +1 or sp != -1:
            continue                      # S+ detection reads the (up, dn) block
        if select:
            sums = {}
            for symbol, p in hist:
                sums[symbol] = sums.get(symbol, 0) + p
            if any(v != 0 for v in sums.values()):
                continue
        total += 2.0 * np.trace(mat)
    return total


def sequence_spec(kind, tau=None, t=None, tau1=None, tau2=None, variant="table"):
    """(pulses, segments) for the three echo sequences."""
    if kind == "2p":
        pulses = [rot(np.pi / 2, 0.0), rot(np.pi, np.pi / 2)]
        segments = [("tau", tau), ("tau", tau)]
    elif kind == "3p":
        pulses = [rot(np.pi / 2, 0.0)] * 3
        segments = [("tau", tau), ("T", t), ("tau", tau)]
    elif kind == "5p":
        if variant == "table":
            # pi/2(x) - tau1 - pi(x) - tau1 - pi/2(y) - T - pi/2(y) - tau2 - pi(y) - tau2
            pulses = [
                rot(np.pi / 2, 0.0),
                rot(np.pi, 0.0),
                rot(np.pi / 2, np.pi / 2),
                rot(np.pi / 2, np.pi / 2),
                rot(np.pi, np.pi / 2),
            ]
        else:
            # operator-product variant: pi/2(x), pi/2(x), pi/2(y), pi/2(y), pi(y)
            pulses = [
                rot(np.pi / 2, 0.0),
                rot(np.pi / 2, 0.0),
                rot(np.pi / 2, np.pi / 2),
                rot(np.pi / 2, np.pi / 2),
                rot(np.pi, np.pi / 2),
            ]
        segments = [
            ("tau1", tau1),
            ("tau1", tau1),
            ("T", t),
            ("tau2", tau2),
            ("tau2", tau2),
        ]
    else:
        raise ValueError(kind)
    return pulses, segments


def bath_conditionals(spins, omega_i, delta, abar):
    """Many-spin conditional Hamiltonians for a fictitious transition.

    ``spins`` is a list of (a_zz, a_zx); the conditional Hamiltonian on the
    full 2^N bath space is
    sum_j [(omega_i + delta a_zz/2) I_jz + delta a_zx/2 I_jx
           +- abar (a_zz I_jz + a_zx I_jx)/2].
    """
    n = len(spins)
    ix, _, iz = spin_ops(0.5)
    h_up = np.zeros((2**n, 2**n), dtype=complex)
    h_dn = np.zeros_like(h_up)
    for j, (a_zz, a_zx) in enumerate(spins):
        zj = op_on(iz, n, j)
        xj = op_on(ix, n, j)
        base = (omega_i + 0.5 * delta * a_zz) * zj + 0.5 * delta * a_zx * xj
        coup = 0.5 * abar * (a_zz * zj + a_zx * xj)
        h_up += base + coup
        h_dn += base - coup
    return h_up, h_dn


def oracle_trace(kind, spins, omega_i, grid, tau=None, tau1=None, tau2=None,
                 delta=0.0, abar=1.0, variant="table"):
    """Normalized pathway-selected echo trace for N independent spins.

    2p and 3p are normalized by the bare-spin echo of the same sequence
    (-1j and 0.5j respectively). The bare five-pulse echo vanishes
    identically, so 5p is normalized by its fixed pulse-algebra constant:
    1j for the experimental pi/2-pi-pi/2-pi/2-pi sequence ("table"), 0.5j
    for the plain four-pi/2 variant ("printed"); the latter shares the
    stimulated-echo storage scale of the 3p sequence.
    """
    h_up, h_dn = bath_conditionals(spins, omega_i, delta, abar)

    def run(h_u, h_d, tval):
        if kind == "2p":
            pulses, segments = sequence_spec("2p", tau=tval)
        elif kind == "3p":
            pulses, segments = sequence_spec("3p", tau=tau, t=tval)
        else:
            pulses, segments = sequence_spec(
                "5p", t=tval, tau1=tau1, tau2=tau2, variant=variant
            )
        return echo_amplitude(h_u, h_d, pulses, segments)

    if kind == "5p":
        v0 = 1j if variant == "table" else 0.5j
    else:
        ref = np.zeros((1, 1), dtype=complex)
        v0 = run(ref, ref, float(grid[0]))
    out = np.empty(len(grid), dtype=complex)
    for i, g in enumerate(np.asarray(grid, dtype=float)):
        out[i] = run(h_up, h_dn, g)
    return out / v0
