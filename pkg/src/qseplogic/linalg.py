"""Dense complex matrix kernel.

Operators are plain ``numpy`` arrays of ``complex128``; this module supplies
the tensor/partial-trace calculus, spectral helpers, the Loewner order, and
closed subspaces (equivalently projections) with their lattice operations.

All numeric comparisons are absolute, against one global tolerance
(default ``1e-9``). Every public function takes an ``atol`` keyword that
falls back to the global value; :func:`set_tolerance` changes the global
once per process.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LinalgError",
    "Subspace",
    "as_cmatrix",
    "eigenspace_one",
    "get_tolerance",
    "is_hermitian",
    "is_projector_matrix",
    "is_psd",
    "is_unitary",
    "join",
    "loewner_leq",
    "meet",
    "ortho",
    "partial_trace",
    "set_tolerance",
    "support",
    "tensor",
]

_TOLERANCE = 1e-9


class LinalgError(ValueError):
    """Structural error: malformed matrix, dimension mismatch, bad input."""


def get_tolerance() -> float:
    """Return the global absolute tolerance."""
    return _TOLERANCE


def set_tolerance(value: float) -> None:
    """Set the global absolute tolerance (must be positive)."""
    global _TOLERANCE
    value = float(value)
    if not value > 0.0 or not math.isfinite(value):
        raise ValueError(f"tolerance must be positive and finite, got {value}")
    _TOLERANCE = value


def _tol(atol: float | None) -> float:
    return _TOLERANCE if atol is None else float(atol)


def as_cmatrix(m) -> np.ndarray:
    """Coerce to a finite 2-D complex128 array.

    Raises :class:`LinalgError` for non-2-D input or NaN/Inf entries.
    """
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise LinalgError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix has non-finite entries")
    return a


def is_hermitian(m, atol: float | None = None) -> bool:
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= _tol(atol))


def is_psd(m, atol: float | None = None) -> bool:
    """Hermitian with spectrum >= -atol."""
    a = as_cmatrix(m)
    t = _tol(atol)
    if not is_hermitian(a, atol=t):
        return False
    w = np.linalg.eigvalsh(a)
    return bool(w.min(initial=0.0) >= -t)

def is_unitary(m, atol: float | None = None) -> bool:
    a = as_cmatrix(m)
    if a.shape[0] != a.shape[1]:
        return False
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a @ a.conj().T - eye), initial=0.0) <= _tol(atol))


def is_projector_matrix(m, atol: float | None = None) -> bool:
    """Hermitian and idempotent within tolerance."""
    a = as_cmatrix(m)
    t = _tol(atol)
    if not is_hermitian(a, atol=t):
        return False
    return bool(np.max(np.abs(a @ a - a), initial=0.0) <= t)


def tensor(*mats) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    if not mats:
        raise LinalgError("tensor needs at least one matrix")
    out = as_cmatrix(mats[0])
    for m in mats[1:]:
        out = np.kron(out, as_cmatrix(m))
    return out


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Reduce a multi-factor operator to the kept factors.

    Parameters
    ----------
    m : array_like
        Square matrix over the tensor product of ``dims``.
    dims : sequence of int
        Per-factor dimensions, in the factor order of ``m``.
    keep : iterable of int
        Indices of factors to keep; order in the result is factor order.

    Returns
    -------
    numpy.ndarray
        The reduced operator on the kept factors (``1 x 1`` if none).
    """
    a = as_cmatrix(m)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise LinalgError(f"factor dims must be >= 1, got {dims}")
    n = len(dims)
    total = int(np.prod(dims)) if n else 1
    if a.shape != (total, total):
        raise LinalgError(f"matrix shape {a.shape} does not match dims {dims}")
    kept = sorted(set(int(k) for k in keep))
    if kept and (kept[0] < 0 or kept[-1] >= n):
        raise LinalgError(f"keep indices {kept} out of range for {n} factors")
    if n == 0:
        return a.copy()
    kset = set(kept)
    t = a.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in kset else i for i in range(n)]
    out = [i for i in kept] + [n + i for i in kept]
    r = np.einsum(t, row + col, out)
    d_keep = int(np.prod([dims[i] for i in kept])) if kept else 1
    return np.ascontiguousarray(r.reshape(d_keep, d_keep))


class Subspace:
    """A closed subspace of C^d, stored as orthonormal basis columns.

    ``basis`` is a ``(d, r)`` array with orthonormal columns; ``r = 0``
    is the zero subspace. Instances are immutable.
    """

    __slots__ = ("ambient_dim", "basis")

    def __init__(self, ambient_dim: int, basis, *, check: bool = True,
                 atol: float | None = None):
        d = int(ambient_dim)
        b = np.array(basis, dtype=np.complex128)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.size == 0:
            b = b.reshape(d, 0)
        if b.ndim != 2 or b.shape[0] != d:
            raise LinalgError(f"basis shape {b.shape} does not fit ambient dim {d}")
        if b.shape[1] > d:
            raise LinalgError("more basis columns than the ambient dimension")
        if check and b.shape[1]:
            gram = b.conj().T @ b
            # orthonormality gets a looser gate than the global tolerance:
            # bases produced by eigh/svd are good to ~1e-12, user input to ~1e-9
            if np.max(np.abs(gram - np.eye(b.shape[1]))) > max(_tol(atol), 1e-9):
                raise LinalgError("basis columns are not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "ambient_dim", d)
        object.__setattr__(self, "basis", b)

    def __setattr__(self, *args):
        raise AttributeError("Subspace is immutable")

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        """The d x d orthogonal projector onto this subspace."""
        return self.basis @ self.basis.conj().T

    @classmethod
    def zero(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim, np.zeros((ambient_dim, 0)), check=False)

    @classmethod
    def full(cls, ambient_dim: int) -> "Subspace":
        return cls(ambient_dim, np.eye(ambient_dim), check=False)

    @classmethod
    def from_span(cls, vectors, atol: float | None = None) -> "Subspace":
        """Subspace spanned by the columns of ``vectors`` (SVD cleanup)."""
        m = np.asarray(vectors, dtype=np.complex128)
        if m.ndim == 1:
            m = m.reshape(-1, 1)
        if m.ndim != 2:
            raise LinalgError("span input must be a vector or a matrix of columns")
        if m.shape[1] == 0:
            return cls.zero(m.shape[0])
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        return cls(m.shape[0], u[:, s > _tol(atol)], check=False)

    @classmethod
    def from_projector(cls, p, atol: float | None = None) -> "Subspace":
        """Subspace of a projector matrix; rejects non-projectors."""
        a = as_cmatrix(p)
        t = _tol(atol)
        if not is_hermitian(a, atol=t):
            raise LinalgError("projector must be hermitian")
        w, v = np.linalg.eigh(a)
        # a projector's spectrum is {0, 1}; allow a modest numeric halo
        gate = max(t, 1e-9) * 10
        if np.any(np.minimum(np.abs(w), np.abs(w - 1.0)) > gate):
            raise LinalgError("matrix is not a projector (spectrum off {0,1})")
        return cls(a.shape[0], v[:, w > 0.5], check=False)

    def equiv(self, other: "Subspace", atol: float | None = None) -> bool:
        """Equality as subspaces: Frobenius distance of projectors."""
        if self.ambient_dim != other.ambient_dim:
            return False
        if self.rank != other.rank:
            return False
        d = np.linalg.norm(self.projector() - other.projector())
        return bool(d <= _tol(atol) * max(1.0, math.sqrt(self.ambient_dim)))

    def leq(self, other: "Subspace", atol: float | None = None) -> bool:
        """Containment: every basis vector lies in ``other``."""
        if self.ambient_dim != other.ambient_dim:
            raise LinalgError("ambient dims differ")
        if self.rank == 0:
            return True
        resid = self.basis - other.projector() @ self.basis
        return bool(np.max(np.abs(resid)) <= _tol(atol) * 10)

    def contains_vector(self, v, atol: float | None = None) -> bool:
        v = np.asarray(v, dtype=np.complex128).reshape(-1)
        if v.shape[0] != self.ambient_dim:
            raise LinalgError("vector dimension mismatch")
        resid = v - self.projector() @ v
        return bool(np.linalg.norm(resid) <= _tol(atol) * 10 * max(1.0, np.linalg.norm(v)))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Subspace(rank {self.rank} of C^{self.ambient_dim})"


def support(h, atol: float | None = None) -> Subspace:
    """Span of eigenvectors with eigenvalue beyond the rank cutoff.

    ``h`` must be hermitian (intended for PSD operators).
    """
    a = as_cmatrix(h)
    t = _tol(atol)
    if not is_hermitian(a, atol=max(t, 1e-9)):
        raise LinalgError("support needs a hermitian matrix")
    w, v = np.linalg.eigh(a)
    return Subspace(a.shape[0], v[:, np.abs(w) > t], check=False)


def eigenspace_one(a, atol: float | None = None) -> Subspace:
    """Span of eigenvectors with eigenvalue within tolerance of 1."""
    m = as_cmatrix(a)
    t = _tol(atol)
    if not is_hermitian(m, atol=max(t, 1e-9)):
        raise LinalgError("eigenspace_one needs a hermitian matrix")
    w, v = np.linalg.eigh(m)
    return Subspace(m.shape[0], v[:, np.abs(w - 1.0) <= t * 10], check=False)


def loewner_leq(a, b, atol: float | None = None) -> bool:
    """True iff ``b - a`` is PSD within tolerance (a <= b in Loewner order)."""
    x = as_cmatrix(a)
    y = as_cmatrix(b)
    if x.shape != y.shape or x.shape[0] != x.shape[1]:
        raise LinalgError(f"shape mismatch: {x.shape} vs {y.shape}")
    t = _tol(atol)
    if not is_hermitian(x, atol=max(t, 1e-9)) or not is_hermitian(y, atol=max(t, 1e-9)):
        raise LinalgError("loewner_leq needs hermitian matrices")
    d = y - x
    w = np.linalg.eigvalsh((d + d.conj().T) / 2)
    return bool(w.min(initial=0.0) >= -t * 10)


def _same_ambient(p: Subspace, q: Subspace) -> int:
    if p.ambient_dim != q.ambient_dim:
        raise LinalgError(f"ambient dims differ: {p.ambient_dim} vs {q.ambient_dim}")
    return p.ambient_dim


def meet(p: Subspace, q: Subspace, atol: float | None = None) -> Subspace:
    """Intersection, via the kernel of stacked complementary projectors."""
    d = _same_ambient(p, q)
    if d == 0:
        raise LinalgError("empty ambient space")
    eye = np.eye(d)
    stacked = np.vstack([eye - p.projector(), eye - q.projector()])
    _, s, vh = np.linalg.svd(stacked)
    # kernel vectors have singular value ~0; svd sorts descending
    ker = vh.conj().T[:, s <= _tol(atol) * 10]
    return Subspace(d, ker, check=False)


def join(p: Subspace, q: Subspace, atol: float | None = None) -> Subspace:
    """Closure of the span of the union."""
    d = _same_ambient(p, q)
    return Subspace.from_span(np.hstack([p.basis, q.basis]).reshape(d, -1), atol=atol)


def ortho(p: Subspace) -> Subspace:
    """Orthocomplement."""
    d, r = p.ambient_dim, p.rank
    if r == 0:
        return Subspace.full(d)
    if r == d:
        return Subspace.zero(d)
    u, _, _ = np.linalg.svd(p.basis, full_matrices=True)
    return Subspace(d, u[:, r:], check=False)
