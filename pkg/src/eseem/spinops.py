"""Angular-momentum operator matrices and small Kronecker helpers."""

from __future__ import annotations

import functools

import numpy as np


@functools.lru_cache(maxsize=None)
def spin_matrices(j: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Jx, Jy, Jz) for spin j in the |j, m> basis with m descending."""
    dim = int(round(2 * j + 1))
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # <j, m+1 | J+ | j, m>
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jplus = np.zeros((dim, dim), dtype=complex)
    jplus[np.arange(dim - 1), np.arange(1, dim)] = ladder
    jx = 0.5 * (jplus + jplus.conj().T)
    jy = -0.5j * (jplus - jplus.conj().T)
    return jx, jy, jz


def kron_all(*ops: np.ndarray) -> np.ndarray:
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def embed(op: np.ndarray, dims: list[int], which: int) -> np.ndarray:
    """Embed a single-subsystem operator into a product space."""
    mats = [np.eye(d, dtype=complex) for d in dims]
    mats[which] = op
    return kron_all(*mats)
