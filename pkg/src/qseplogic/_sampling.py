"""Random matrix and state generators used by tests and the oracle.

Internal module: everything takes an explicit ``numpy`` Generator so
callers control reproducibility.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "density_in_subspace",
    "dirichlet_density",
    "haar_unitary",
    "haar_vector",
]


def haar_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    """Uniformly random unit vector in C^d."""
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed unitary via QR with phase correction."""
    g = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def dirichlet_density(rng: np.random.Generator, d: int,
                      k: int | None = None) -> np.ndarray:
    """Trace-1 density: Dirichlet weights over k Haar-random pure states."""
    k = d if k is None else max(1, int(k))
    w = rng.dirichlet(np.ones(k))
    out = np.zeros((d, d), dtype=complex)
    for i in range(k):
        v = haar_vector(rng, d)
        out += w[i] * np.outer(v, v.conj())
    return out


def density_in_subspace(rng: np.random.Generator, basis: np.ndarray,
                        k: int | None = None) -> np.ndarray:
    """Trace-1 density supported inside the column span of ``basis``."""
    r = basis.shape[1]
    if r == 0:
        raise ValueError("cannot sample a state in the zero subspace")
    sigma = dirichlet_density(rng, r, k)
    return basis @ sigma @ basis.conj().T
