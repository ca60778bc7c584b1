"""Scratch: nail 5p conventions against the pathway oracle."""
import numpy as np
import sys
sys.path.insert(0, "tests")
from oracles import oracle_trace, sequence_spec, echo_amplitude, bath_conditionals
from eseem.spin_hamiltonian import Transition, fictitious_reduction
from eseem.analytic import nuclear_frequencies, v3p_single, v5p_single, product_combine

TWO_PI = 2 * np.pi

omega_i = TWO_PI * 200e3
a_zz, a_zx = TWO_PI * 50e3, TWO_PI * 30e3
tr = Transition(m=0, branch=0, m_s_alpha=0.5, m_s_beta=-0.5, omega_s=0.0)
fs = fictitious_reduction(tr, a_zz, a_zx, omega_i)
nf = nuclear_frequencies(fs)

# raw bare-spin echo amplitudes per sequence
for kind, kwargs in (("2p", dict(tau=3e-6)),
                     ("3p", dict(tau=3e-6, t=5e-6)),
                     ("5p", dict(tau1=3e-6, tau2=3e-6, t=5e-6))):
    ref = np.zeros((1, 1), dtype=complex)
    if kind == "5p":
        for variant in ("table", "printed"):
            pulses, segs = sequence_spec(kind, variant=variant, **kwargs)
            print(f"bare {kind}[{variant}]:", echo_amplitude(ref, ref, pulses, segs))
    else:
        pulses, segs = sequence_spec(kind, **kwargs)
        print(f"bare {kind}:", echo_amplitude(ref, ref, pulses, segs))

# modulated raw 5p vs kernel combination, fitted scale
tau1 = tau2 = 5.1e-6
ts = np.linspace(0.0, 50e-6, 41)
b5 = v5p_single(nf, tau1, tau2, ts)
combo = product_combine(b5, "5p").ravel()
h_up, h_dn = bath_conditionals([(a_zz, a_zx)], omega_i, 0.0, 1.0)
for variant in ("table", "printed"):
    raw = []
    for t in ts:
        pulses, segs = sequence_spec("5p", t=t, tau1=tau1, tau2=tau2, variant=variant)
        raw.append(echo_amplitude(h_up, h_dn, pulses, segs))
    raw = np.array(raw)
    # fit raw ~= c * combo + d (complex constants)
    A = np.column_stack([combo, np.ones_like(combo)])
    coef, res, *_ = np.linalg.lstsq(A, raw, rcond=None)
    c, d = coef
    resid = np.max(np.abs(raw - (c * combo + d)))
    print(f"5p[{variant}]: c={c:.6f} d={d:.6f} resid={resid:.3e}")
    print("   raw head:", np.round(raw[:3], 6))

# compare with bare 3p amplitude (storage scale)
pulses, segs = sequence_spec("3p", tau=3e-6, t=5e-6)
print("bare 3p again:", echo_amplitude(np.zeros((1, 1), complex), np.zeros((1, 1), complex), pulses, segs))
