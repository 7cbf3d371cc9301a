"""Typed registers and partial density operators.

A register is a named quantum variable with a fixed dimension (qubits are
dim 2, qutrits dim 3, and so on). A state is a positive operator with trace
at most one over a finite register set; trace below one records the weight
of a measurement branch. The empty register set carries 1 x 1 matrices, so
scalars are states too and the unit state is the number 1.

Register sets keep their variables in lexicographic name order and every
matrix in this package is expressed in that canonical factor order. The
three frame operations live here: ``restrict`` (marginals), ``combine``
(tensor of states on disjoint domains, ``UNDEFINED`` on overlap), and
``preceq`` (extension order: sigma extends rho iff restricting sigma to
rho's domain gives back rho).

The module also carries :class:`Projection` (a subspace typed by a register
set), the built-in gate/measurement table, and the JSON manifest format for
user-declared dimensions, unitaries, measurements, and projectors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .linalg import (
    LinalgError,
    Subspace,
    as_cmatrix,
    get_tolerance,
    is_hermitian,
    is_psd,
    is_unitary,
    partial_trace,
    tensor,
)

__all__ = [
    "UNDEFINED",
    "Manifest",
    "MeasurementDecl",
    "Projection",
    "QState",
    "RegSet",
    "StateError",
    "UnitaryDecl",
    "VarDecl",
    "builtin_measurement",
    "builtin_unitary",
    "combine",
    "embed_operator",
    "is_defined",
    "matrix_from_json",
    "matrix_to_json",
    "parse_perm_name",
    "perm_name",
    "permutation_unitary",
    "permute_factors",
    "preceq",
    "restrict",
    "sandwich",
    "states_equal",
]


class StateError(ValueError):
    """Bad register algebra: unknown names, dim clashes, domain mismatches."""


class _UndefinedType:
    """Singleton marker for partial operations (combine on overlap, etc.)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNDEFINED"

    def __bool__(self) -> bool:
        return False


UNDEFINED = _UndefinedType()


def is_defined(x) -> bool:
    return x is not UNDEFINED


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True, order=True)
class VarDecl:
    """A register name with its dimension (>= 2)."""

    name: str
    dim: int

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise StateError(f"bad register name {self.name!r}")
        if not isinstance(self.dim, int) or self.dim < 2:
            raise StateError(f"register {self.name}: dim must be an int >= 2")


class RegSet:
    """An immutable set of registers, iterated in lexicographic name order."""

    __slots__ = ("_decls", "_by_name", "_dim")

    def __init__(self, decls: Iterable[VarDecl] = ()):
        by_name: dict[str, VarDecl] = {}
        for d in decls:
            if not isinstance(d, VarDecl):
                raise StateError(f"expected VarDecl, got {type(d).__name__}")
            old = by_name.get(d.name)
            if old is not None and old.dim != d.dim:
                raise StateError(
                    f"register {d.name} declared with dims {old.dim} and {d.dim}"
                )
            by_name[d.name] = d
        ordered = tuple(by_name[n] for n in sorted(by_name))
        dim = 1
        for d in ordered:
            dim *= d.dim
        object.__setattr__(self, "_decls", ordered)
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_dim", dim)

    def __setattr__(self, *args):
        raise AttributeError("RegSet is immutable")

    @classmethod
    def empty(cls) -> "RegSet":
        return cls(())

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, int]]) -> "RegSet":
        return cls(VarDecl(n, d) for n, d in pairs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self._decls)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d.dim for d in self._decls)

    @property
    def dim(self) -> int:
        """Product of register dimensions (1 for the empty set)."""
        return self._dim

    def decl(self, name: str) -> VarDecl:
        try:
            return self._by_name[name]
        except KeyError:
            raise StateError(f"unknown register {name!r}") from None

    def index(self, name: str) -> int:
        """Position of the register in canonical order."""
        for i, d in enumerate(self._decls):
            if d.name == name:
                return i
        raise StateError(f"unknown register {name!r}")

    def __contains__(self, item) -> bool:
        if isinstance(item, VarDecl):
            return self._by_name.get(item.name) == item
        return item in self._by_name

    def __iter__(self) -> Iterator[VarDecl]:
        return iter(self._decls)

    def __len__(self) -> int:
        return len(self._decls)

    def __eq__(self, other) -> bool:
        return isinstance(other, RegSet) and self._decls == other._decls

    def __hash__(self) -> int:
        return hash(self._decls)

    def __or__(self, other: "RegSet") -> "RegSet":
        return RegSet(self._decls + other._decls)

    def __and__(self, other: "RegSet") -> "RegSet":
        return RegSet(d for d in self._decls if d.name in other._by_name)

    def __sub__(self, other: "RegSet") -> "RegSet":
        return RegSet(d for d in self._decls if d.name not in other._by_name)

    def issubset(self, other: "RegSet") -> bool:
        return all(other._by_name.get(d.name) == d for d in self._decls)

    def isdisjoint(self, other: "RegSet") -> bool:
        return not any(d.name in other._by_name for d in self._decls)

    def restricted_to(self, names: Iterable[str]) -> "RegSet":
        wanted = set(names)
        missing = wanted - set(self.names)
        if missing:
            raise StateError(f"unknown registers {sorted(missing)}")
        return RegSet(d for d in self._decls if d.name in wanted)

    def __repr__(self) -> str:
        body = ", ".join(f"{d.name}:{d.dim}" for d in self._decls)
        return f"RegSet({body})"


def permute_factors(mat: np.ndarray, dims: Sequence[int],
                    order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of a square matrix.

    ``order[k]`` names the input factor that becomes output factor ``k``.
    """
    dims = list(dims)
    n = len(dims)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise StateError(f"order {order} is not a permutation of 0..{n - 1}")
    if order == list(range(n)):
        return np.asarray(mat, dtype=np.complex128)
    t = np.asarray(mat, dtype=np.complex128).reshape(dims + dims)
    t = np.transpose(t, order + [n + k for k in order])
    d = int(np.prod(dims)) if n else 1
    return np.ascontiguousarray(t.reshape(d, d))


class QState:
    """A partial density operator over a register set.

    ``mat`` is a square matrix over ``domain.dim`` in canonical factor
    order: positive semidefinite with trace in [0, 1] when validated.
    Internal code paths that construct states from already-checked
    algebra pass ``validate=False``.
    """

    __slots__ = ("domain", "mat")

    def __init__(self, domain: RegSet, mat, *, validate: bool = True,
                 atol: float | None = None):
        m = as_cmatrix(mat)
        if m.shape != (domain.dim, domain.dim):
            raise StateError(
                f"matrix shape {m.shape} does not match domain dim {domain.dim}"
            )
        if validate:
            t = get_tolerance() if atol is None else float(atol)
            if not is_psd(m, atol=t * 10):
                raise StateError("state matrix is not positive semidefinite")
            if m.trace().real > 1.0 + t * 10:
                raise StateError(f"state trace {m.trace().real} exceeds 1")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "mat", m)

    def __setattr__(self, *args):
        raise AttributeError("QState is immutable")

    @property
    def trace(self) -> float:
        return float(self.mat.trace().real)

    @classmethod
    def unit(cls) -> "QState":
        """The scalar 1 on the empty register set."""
        return cls(RegSet.empty(), np.array([[1.0]]), validate=False)

    @classmethod
    def from_vector(cls, domain: RegSet, vec, weight: float = 1.0) -> "QState":
        v = np.asarray(vec, dtype=np.complex128).reshape(-1, 1)
        if v.shape[0] != domain.dim:
            raise StateError("vector length does not match domain dim")
        return cls(domain, weight * (v @ v.conj().T))

    @classmethod
    def maximally_mixed(cls, domain: RegSet) -> "QState":
        d = domain.dim
        return cls(domain, np.eye(d) / d, validate=False)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"QState({self.domain!r}, trace={self.trace:.6g})"


def restrict(state: QState, regs: RegSet) -> QState:
    """Marginal of the state on ``regs`` (must be a subset of its domain)."""
    if not regs.issubset(state.domain):
        raise StateError(f"{regs!r} is not a subset of {state.domain!r}")
    if regs == state.domain:
        return state
    keep = [state.domain.index(n) for n in regs.names]
    m = partial_trace(state.mat, state.domain.dims, keep)
    return QState(regs, m, validate=False)


def states_equal(a: QState, b: QState, atol: float | None = None) -> bool:
    if a.domain != b.domain:
        return False
    t = get_tolerance() if atol is None else float(atol)
    return bool(np.max(np.abs(a.mat - b.mat), initial=0.0) <= t * 10)


def preceq(a: QState, b: QState, atol: float | None = None) -> bool:
    """Extension order: ``b`` extends ``a`` iff restricting ``b`` to
    ``a``'s domain returns ``a``."""
    if not a.domain.issubset(b.domain):
        return False
    return states_equal(a, restrict(b, a.domain), atol=atol)


def combine(a: QState, b: QState):
    """Tensor of states on disjoint domains; ``UNDEFINED`` if they overlap."""
    if not a.domain.isdisjoint(b.domain):
        return UNDEFINED
    dom = a.domain | b.domain
    raw = np.kron(a.mat, b.mat)
    concat = list(a.domain.names) + list(b.domain.names)
    dims = list(a.domain.dims) + list(b.domain.dims)
    order = [concat.index(n) for n in dom.names]
    return QState(dom, permute_factors(raw, dims, order), validate=False)


def embed_operator(op, sub: RegSet, sup: RegSet) -> np.ndarray:
    """Extend an operator on ``sub`` to ``sup`` by tensoring identity.

    ``op`` is given in ``sub``'s canonical order; the result is in
    ``sup``'s canonical order.
    """
    if not sub.issubset(sup):
        raise StateError(f"{sub!r} is not a subset of {sup!r}")
    m = as_cmatrix(op)
    if m.shape != (sub.dim, sub.dim):
        raise StateError("operator shape does not match sub-domain")
    if sub == sup:
        return m
    rest = sup - sub
    raw = np.kron(m, np.eye(rest.dim))
    concat = list(sub.names) + list(rest.names)
    dims = list(sub.dims) + list(rest.dims)
    order = [concat.index(n) for n in sup.names]
    return permute_factors(raw, dims, order)


def sandwich(mat: np.ndarray, dims: Sequence[int], positions: Sequence[int],
             op: np.ndarray) -> np.ndarray:
    """Compute ``(op (x) I) mat (op (x) I)^dagger`` by tensor contraction.

    ``positions`` are strictly increasing factor indices; ``op`` acts on
    exactly those factors, in that order. Avoids building the embedded
    operator, which matters once domains reach a few hundred dimensions.
    """
    dims = list(dims)
    n = len(dims)
    positions = list(positions)
    if positions != sorted(set(positions)):
        raise StateError("positions must be strictly increasing")
    if positions and (positions[0] < 0 or positions[-1] >= n):
        raise StateError(f"positions {positions} out of range")
    k = len(positions)
    if k == 0:
        return np.asarray(mat, dtype=np.complex128).copy()
    if k == n:
        o = as_cmatrix(op)
        return o @ np.asarray(mat, dtype=np.complex128) @ o.conj().T
    dpos = [dims[p] for p in positions]
    dsub = int(np.prod(dpos))
    o = as_cmatrix(op)
    if o.shape != (dsub, dsub):
        raise StateError("operator shape does not match selected factors")
    t = np.asarray(mat, dtype=np.complex128).reshape(dims + dims)
    ot = o.reshape(dpos + dpos)
    # left multiply: contract op column axes with the row axes of mat
    t = np.tensordot(ot, t, axes=(list(range(k, 2 * k)), positions))
    t = np.moveaxis(t, list(range(k)), positions)
    # right multiply by op^dagger: contract mat column axes with conj(op)
    oc = o.conj().reshape(dpos + dpos)
    t = np.tensordot(t, oc, axes=([n + p for p in positions],
                                  [k + i for i in range(k)]))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)),
                    [n + p for p in positions])
    d = int(np.prod(dims))
    return np.ascontiguousarray(t.reshape(d, d))


class Projection:
    """A subspace typed by the register set it talks about."""

    __slots__ = ("domain", "space")

    def __init__(self, domain: RegSet, space: Subspace):
        if space.ambient_dim != domain.dim:
            raise StateError(
                f"subspace ambient dim {space.ambient_dim} != domain dim {domain.dim}"
            )
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "space", space)

    def __setattr__(self, *args):
        raise AttributeError("Projection is immutable")

    @property
    def rank(self) -> int:
        return self.space.rank

    def matrix(self) -> np.ndarray:
        return self.space.projector()

    @classmethod
    def identity(cls, domain: RegSet) -> "Projection":
        return cls(domain, Subspace.full(domain.dim))

    @classmethod
    def zero(cls, domain: RegSet) -> "Projection":
        return cls(domain, Subspace.zero(domain.dim))

    @classmethod
    def from_matrix(cls, domain: RegSet, mat,
                    atol: float | None = None) -> "Projection":
        return cls(domain, Subspace.from_projector(mat, atol=atol))

    @classmethod
    def from_vector(cls, domain: RegSet, vec,
                    atol: float | None = None) -> "Projection":
        v = np.asarray(vec, dtype=np.complex128).reshape(-1, 1)
        if v.shape[0] != domain.dim:
            raise StateError("vector length does not match domain dim")
        return cls(domain, Subspace.from_span(v, atol=atol))

    def equiv(self, other: "Projection", atol: float | None = None) -> bool:
        return self.domain == other.domain and self.space.equiv(other.space, atol=atol)

    def leq(self, other: "Projection", atol: float | None = None) -> bool:
        if self.domain != other.domain:
            raise StateError("projection domains differ")
        return self.space.leq(other.space, atol=atol)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Projection(rank {self.rank} on {self.domain!r})"


# --- built-in gate table ---------------------------------------------------

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_S = np.diag([1.0, 1.0j])
_T = np.diag([1.0, np.exp(1j * np.pi / 4)])
_CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)


def _qutrit_fourier() -> np.ndarray:
    w = np.exp(2j * np.pi / 3)
    return np.array([[w ** (j * k) for k in range(3)] for j in range(3)]) / np.sqrt(3.0)


def _qutrit_add(mult: int) -> np.ndarray:
    # |j,k> -> |j, k + mult*j mod 3>
    u = np.zeros((9, 9), dtype=complex)
    for j in range(3):
        for k in range(3):
            u[3 * j + (k + mult * j) % 3, 3 * j + k] = 1.0
    return u


def _build_u_enc() -> np.ndarray:
    """Three-qutrit encoder: |i,0,0> -> (1/sqrt 3) sum_k |k, k+i, k+2i>."""
    i3 = np.eye(3, dtype=complex)
    swap3 = np.zeros((9, 9), dtype=complex)
    for a in range(3):
        for b in range(3):
            swap3[3 * b + a, 3 * a + b] = 1.0
    stage1 = np.kron(swap3, i3)
    stage2 = np.kron(_qutrit_fourier(), np.eye(9, dtype=complex))
    stage3 = np.kron(_qutrit_add(1), i3)
    # add 2*p onto r: factors (p, r) of (p, q, r)
    add_pr = permute_factors(np.kron(_qutrit_add(2), i3), [3, 3, 3], [0, 2, 1])
    add_qr = np.kron(i3, _qutrit_add(2))
    return add_qr @ add_pr @ stage3 @ stage2 @ stage1


def _build_u_rec() -> np.ndarray:
    # two-qutrit recovery: |a,b> -> |b - a, 2(a + b)> (mod 3)
    u = np.zeros((9, 9), dtype=complex)
    for a in range(3):
        for b in range(3):
            u[3 * ((b - a) % 3) + (2 * (a + b)) % 3, 3 * a + b] = 1.0
    return u


_FIXED_GATES: dict[str, tuple[np.ndarray, tuple[int, ...]]] = {
    "I": (_I2, (2,)),
    "X": (_X, (2,)),
    "Y": (_Y, (2,)),
    "Z": (_Z, (2,)),
    "H": (_H, (2,)),
    "S": (_S, (2,)),
    "sqrtZ": (_S, (2,)),
    "T": (_T, (2,)),
    "CZ": (_CZ, (2, 2)),
    "CNOT": (_CNOT, (2, 2)),
    "SWAP": (_SWAP, (2, 2)),
    "U_enc": (_build_u_enc(), (3, 3, 3)),
    "U_rec": (_build_u_rec(), (3, 3)),
}

_POW_RE = re.compile(r"^(X|Z|CZ)\^(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)$")


def builtin_gate_dims(name: str) -> tuple[int, ...] | None:
    """Expected factor dims of a built-in gate, or None if not built in."""
    if name in _FIXED_GATES:
        return _FIXED_GATES[name][1]
    m = _POW_RE.match(name)
    if m:
        return (2, 2) if m.group(1) == "CZ" else (2,)
    return None


def builtin_unitary(name: str, dims: Sequence[int]) -> np.ndarray | None:
    """Look up a built-in gate by name, checking the factor dims.

    Power gates embed their exponent in the name: ``Z^0.5`` is
    ``diag(1, exp(i pi 0.5))``, ``X^a = H Z^a H``, and ``CZ^a`` phases
    only ``|11>``. Returns None for unknown names; raises
    :class:`StateError` when the name is known but the dims disagree.
    """
    dims = tuple(int(d) for d in dims)
    fixed = _FIXED_GATES.get(name)
    if fixed is not None:
        mat, want = fixed
        if dims != want:
            raise StateError(f"gate {name} expects dims {want}, got {dims}")
        return mat.copy()
    m = _POW_RE.match(name)
    if m:
        base, a = m.group(1), float(m.group(2))
        want = (2, 2) if base == "CZ" else (2,)
        if dims != want:
            raise StateError(f"gate {name} expects dims {want}, got {dims}")
        phase = np.exp(1j * np.pi * a)
        if base == "Z":
            return np.diag([1.0, phase])
        if base == "X":
            return _H @ np.diag([1.0, phase]) @ _H
        return np.diag([1.0, 1.0, 1.0, phase])
    return None


def power_gate_name(base: str, exponent: float) -> str:
    """Canonical name of a power gate; ``repr`` keeps the float exact."""
    if base not in ("X", "Z", "CZ"):
        raise StateError(f"no power form for gate {base}")
    return f"{base}^{float(exponent)!r}"


def permutation_unitary(dims: Sequence[int], source: Sequence[int]) -> np.ndarray:
    """Unitary moving register contents: new factor k gets old factor
    ``source[k]``. Requires matching dims along each move."""
    dims = [int(d) for d in dims]
    n = len(dims)
    source = [int(s) for s in source]
    if sorted(source) != list(range(n)):
        raise StateError(f"source {source} is not a permutation of 0..{n - 1}")
    for k in range(n):
        if dims[k] != dims[source[k]]:
            raise StateError(
                f"factor {k} (dim {dims[k]}) cannot take factor "
                f"{source[k]} (dim {dims[source[k]]})"
            )
    total = int(np.prod(dims)) if n else 1
    u = np.zeros((total, total), dtype=complex)
    for x in np.ndindex(*dims):
        y = tuple(x[source[k]] for k in range(n))
        u[int(np.ravel_multi_index(y, dims)), int(np.ravel_multi_index(x, dims))] = 1.0
    return u


def perm_name(src_names: Sequence[str], dst_names: Sequence[str]) -> str:
    """Canonical ``perm(a,b->b,a)`` spelling."""
    return f"perm({','.join(src_names)}->{','.join(dst_names)})"


def parse_perm_name(name: str) -> tuple[list[str], list[str]] | None:
    """Split a ``perm(..->..)`` gate name; None if not a perm name."""
    if not (name.startswith("perm(") and name.endswith(")")):
        return None
    body = name[5:-1]
    if "->" not in body:
        raise StateError(f"malformed perm gate {name!r}")
    left, right = body.split("->", 1)
    src = [s.strip() for s in left.split(",")]
    dst = [s.strip() for s in right.split(",")]
    if sorted(src) != sorted(dst) or len(set(src)) != len(src) or not src[0]:
        raise StateError(f"perm gate {name!r} must permute one register list")
    return src, dst


def builtin_measurement(name: str, dims: Sequence[int]) -> dict[str, np.ndarray] | None:
    """Built-in measurements; only ``std`` (computational basis) exists.

    ``std`` on factors with total dim d has outcomes "0" .. "d-1", each
    the rank-1 projector on the corresponding basis state.
    """
    if name != "std":
        return None
    total = int(np.prod([int(d) for d in dims])) if len(dims) else 1
    out: dict[str, np.ndarray] = {}
    for m in range(total):
        p = np.zeros((total, total), dtype=complex)
        p[m, m] = 1.0
        out[str(m)] = p
    return out


# --- manifest --------------------------------------------------------------


def matrix_to_json(m) -> list:
    """Encode a complex matrix as nested [re, im] pairs."""
    a = as_cmatrix(m)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(obj) -> np.ndarray:
    """Decode nested [re, im] pairs into a complex matrix."""
    if not isinstance(obj, list) or not obj:
        raise StateError("matrix JSON must be a non-empty list of rows")
    rows = []
    width = None
    for row in obj:
        if not isinstance(row, list):
            raise StateError("matrix JSON rows must be lists")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise StateError("matrix JSON rows have unequal lengths")
        vals = []
        for cell in row:
            if (not isinstance(cell, (list, tuple)) or len(cell) != 2
                    or not all(isinstance(v, (int, float)) for v in cell)):
                raise StateError("matrix JSON entries must be [re, im] pairs")
            vals.append(complex(cell[0], cell[1]))
        rows.append(vals)
    return np.array(rows, dtype=np.complex128)


@dataclass(frozen=True)
class UnitaryDecl:
    """A named user gate; ``dims`` are its factor dims in application order."""

    name: str
    dims: tuple[int, ...]
    mat: np.ndarray

    def __post_init__(self):
        m = as_cmatrix(self.mat)
        total = int(np.prod(self.dims)) if self.dims else 1
        if m.shape != (total, total):
            raise StateError(f"unitary {self.name}: shape {m.shape} != dims {self.dims}")
        if not is_unitary(m, atol=get_tolerance() * 10):
            raise StateError(f"unitary {self.name}: matrix is not unitary")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


@dataclass(frozen=True)
class MeasurementDecl:
    """A named measurement: labeled operators with sum M^dag M = I."""

    name: str
    dims: tuple[int, ...]
    outcomes: dict[str, np.ndarray]

    def __post_init__(self):
        total = int(np.prod(self.dims)) if self.dims else 1
        if not self.outcomes:
            raise StateError(f"measurement {self.name}: no outcomes")
        acc = np.zeros((total, total), dtype=complex)
        clean: dict[str, np.ndarray] = {}
        for label, op in self.outcomes.items():
            m = as_cmatrix(op)
            if m.shape != (total, total):
                raise StateError(
                    f"measurement {self.name}[{label}]: shape {m.shape} "
                    f"!= dims {self.dims}"
                )
            acc = acc + m.conj().T @ m
            m = m.copy()
            m.setflags(write=False)
            clean[str(label)] = m
        if np.max(np.abs(acc - np.eye(total))) > get_tolerance() * 100:
            raise StateError(f"measurement {self.name}: operators do not sum to I")
        object.__setattr__(self, "outcomes", clean)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


class Manifest:
    """User declarations: register dims, gates, measurements, projectors.

    JSON layout::

        {"dims": {"q": 2},
         "unitaries": {"G": {"dims": [2], "matrix": [[[0,0],[1,0]], ...]}},
         "measurements": {"pm": {"dims": [2],
                                 "outcomes": {"plus": [[...]], ...}}},
         "projectors": {"P": {"dims": [2], "matrix": [[...]]}}}

    Matrices use nested [re, im] pairs. All sections are optional.
    """

    def __init__(self, dims: Mapping[str, int] | None = None,
                 unitaries: Mapping[str, UnitaryDecl] | None = None,
                 measurements: Mapping[str, MeasurementDecl] | None = None,
                 projectors: Mapping[str, tuple[tuple[int, ...], np.ndarray]] | None = None):
        self.dims: dict[str, int] = {}
        for name, d in (dims or {}).items():
            VarDecl(name, int(d))  # reuse the validation
            self.dims[name] = int(d)
        self.unitaries = dict(unitaries or {})
        self.measurements = dict(measurements or {})
        self.projectors = dict(projectors or {})

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Manifest":
        if not isinstance(obj, Mapping):
            raise StateError("manifest must be a JSON object")
        unknown = set(obj) - {"dims", "unitaries", "measurements", "projectors"}
        if unknown:
            raise StateError(f"unknown manifest sections {sorted(unknown)}")
        dims = {str(k): int(v) for k, v in (obj.get("dims") or {}).items()}
        unitaries = {}
        for name, decl in (obj.get("unitaries") or {}).items():
            unitaries[name] = UnitaryDecl(
                name, tuple(int(d) for d in decl["dims"]),
                matrix_from_json(decl["matrix"]),
            )
        measurements = {}
        for name, decl in (obj.get("measurements") or {}).items():
            outs = {lbl: matrix_from_json(m)
                    for lbl, m in decl["outcomes"].items()}
            measurements[name] = MeasurementDecl(
                name, tuple(int(d) for d in decl["dims"]), outs
            )
        projectors = {}
        for name, decl in (obj.get("projectors") or {}).items():
            dimst = tuple(int(d) for d in decl["dims"])
            mat = matrix_from_json(decl["matrix"])
            total = int(np.prod(dimst)) if dimst else 1
            if mat.shape != (total, total):
                raise StateError(f"projector {name}: shape does not match dims")
            if not is_hermitian(mat) or np.max(np.abs(mat @ mat - mat)) > get_tolerance() * 100:
                raise StateError(f"projector {name}: matrix is not a projector")
            projectors[name] = (dimst, mat)
        return cls(dims, unitaries, measurements, projectors)

    @classmethod
    def load(cls, path: str) -> "Manifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def unitary(self, name: str, dims: Sequence[int]) -> np.ndarray | None:
        """Resolve a gate name: user declarations shadow built-ins."""
        decl = self.unitaries.get(name)
        if decl is not None:
            if tuple(int(d) for d in dims) != decl.dims:
                raise StateError(
                    f"gate {name} expects dims {decl.dims}, got {tuple(dims)}"
                )
            return decl.mat.copy()
        return builtin_unitary(name, dims)

    def gate_dims(self, name: str) -> tuple[int, ...] | None:
        decl = self.unitaries.get(name)
        if decl is not None:
            return decl.dims
        return builtin_gate_dims(name)

    def measurement(self, name: str, dims: Sequence[int]) -> dict[str, np.ndarray] | None:
        decl = self.measurements.get(name)
        if decl is not None:
            if tuple(int(d) for d in dims) != decl.dims:
                raise StateError(
                    f"measurement {name} expects dims {decl.dims}, got {tuple(dims)}"
                )
            return {k: v.copy() for k, v in decl.outcomes.items()}
        return builtin_measurement(name, dims)

    def measurement_dims(self, name: str) -> tuple[int, ...] | None:
        decl = self.measurements.get(name)
        if decl is not None:
            return decl.dims
        return None
