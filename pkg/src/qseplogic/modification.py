"""Precondition transformers for assignment-like commands.

Quantum data cannot be copied, so the substitution that powers the
classical assignment rule is replaced by *modification*: a partial
syntactic operation turning a postcondition into the matching
precondition for a unitary application or an initialization, and a
semantic variant for whole channels.

All three entry points return either a formula or the shared
:data:`~qseplogic.state.UNDEFINED` marker; callers decide whether an
undefined modification is an error.  Dimension clashes between the
command and the formula raise instead, since no reading of the input
makes sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assertion import (
    And,
    AtomD,
    AtomProj,
    AtomU,
    Bot,
    Formula,
    FormulaError,
    Imp,
    Or,
    Star,
    Top,
    free,
)
from .linalg import (
    Subspace,
    get_tolerance,
    loewner_leq,
    meet as subspace_meet,
    ortho,
    support,
)
from .program import (
    IfMeasure,
    Init,
    Program,
    ProgramError,
    Seq,
    Skip,
    Stmt,
    Unitary,
    WhileMeasure,
)
from .state import (
    UNDEFINED,
    Projection,
    RegSet,
    VarDecl,
    embed_operator,
    is_defined,
    permute_factors,
    sandwich,
)

__all__ = [
    "QuantumOperation",
    "ceil_contract",
    "e_modify",
    "modify_atomic",
    "modify_formula",
    "operation_of_program",
]


@dataclass(frozen=True)
class QuantumOperation:
    """A completely positive trace-non-increasing map in Kraus form."""

    domain: RegSet
    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        d = self.domain.dim
        acc = np.zeros((d, d), dtype=np.complex128)
        ks = []
        for k in self.kraus:
            m = np.asarray(k, dtype=np.complex128)
            if m.shape != (d, d):
                raise FormulaError(
                    f"Kraus operator shape {m.shape} does not match dim {d}"
                )
            acc += m.conj().T @ m
            m = m.copy()
            m.setflags(write=False)
            ks.append(m)
        if not ks:
            raise FormulaError("a quantum operation needs at least one "
                               "Kraus operator")
        if not loewner_leq(acc, np.eye(d), atol=get_tolerance() * 100):
            raise FormulaError("Kraus operators exceed the identity: the map "
                               "would increase trace")
        object.__setattr__(self, "kraus", tuple(ks))

    def apply(self, mat: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mat, dtype=np.complex128)
        for k in self.kraus:
            out += k @ mat @ k.conj().T
        return out


def _check_cmd_dims(dom: RegSet, names, dims):
    for n, d in zip(names, dims):
        if n in dom and dom.decl(n).dim != d:
            raise FormulaError(
                f"register {n} has dim {dom.decl(n).dim} in the formula "
                f"but {d} in the command"
            )


def _cmd_regs(cmd: Init | Unitary) -> RegSet:
    if isinstance(cmd, Init):
        return RegSet([VarDecl(cmd.var, cmd.dim)])
    return RegSet(VarDecl(n, d) for n, d in zip(cmd.regs, cmd.dims))


def ceil_contract(proj: Projection, q: str) -> Projection:
    """Largest T with ``|0><0|_q (x) T`` inside the projection.

    The join over all such closed subspaces is itself one of them, and
    it equals the q=0 slice of ``meet(P, |0><0|_q (x) full)``: that meet
    collects exactly the vectors ``|0>_q (x) |v>`` lying in P, so slicing
    out the q factor yields the maximal T directly.
    """
    dom = proj.domain
    if q not in dom:
        raise FormulaError(f"register {q} is not in the projection's domain")
    decl = dom.decl(q)
    zero = np.zeros((decl.dim, decl.dim))
    zero[0, 0] = 1.0
    cyl = embed_operator(zero, RegSet([decl]), dom)
    t = subspace_meet(proj.space, Subspace.from_projector(cyl))
    rest = dom - RegSet([decl])
    pos = dom.index(q)
    r = t.basis.shape[1]
    sliced = t.basis.reshape(list(dom.dims) + [r])
    sliced = np.take(sliced, 0, axis=pos)
    basis = sliced.reshape(rest.dim, r)
    # columns stay orthonormal: every meet vector is |0>_q tensor something
    return Projection(rest, Subspace(rest.dim, basis, check=False))


def _modify_proj(p: AtomProj, cmd: Init | Unitary):
    dom = p.proj.domain
    if isinstance(cmd, Unitary):
        _check_cmd_dims(dom, cmd.regs, cmd.dims)
        inside = [n for n in cmd.regs if n in dom]
        if not inside:
            return p
        if len(inside) != len(cmd.regs):
            return UNDEFINED
        # align the gate with canonical register order, then conjugate by
        # the adjoint: the result is the pullback (U+ (x) I) P (U (x) I)
        order = sorted(range(len(cmd.regs)), key=lambda k: cmd.regs[k])
        u = permute_factors(cmd.mat, list(cmd.dims), order)
        positions = sorted(dom.index(n) for n in cmd.regs)
        mat = sandwich(p.proj.matrix(), dom.dims, positions, u.conj().T)
        return AtomProj(Projection(dom, Subspace.from_projector(mat)))
    _check_cmd_dims(dom, (cmd.var,), (cmd.dim,))
    if cmd.var not in dom:
        return p
    contracted = ceil_contract(p.proj, cmd.var)
    return And(AtomD(RegSet([VarDecl(cmd.var, cmd.dim)])),
               AtomProj(contracted))


def _modify_uniform(p: AtomU, cmd: Init | Unitary):
    if isinstance(cmd, Unitary):
        _check_cmd_dims(p.regs, cmd.regs, cmd.dims)
        inside = [n for n in cmd.regs if n in p.regs]
        if not inside or len(inside) == len(cmd.regs):
            return p
        return UNDEFINED
    _check_cmd_dims(p.regs, (cmd.var,), (cmd.dim,))
    if cmd.var not in p.regs:
        return p
    return UNDEFINED


def modify_atomic(p: Formula, cmd: Init | Unitary):
    """Modification of a single atom, or UNDEFINED where no rule applies."""
    if isinstance(p, AtomD):
        return p
    if isinstance(p, AtomProj):
        return _modify_proj(p, cmd)
    if isinstance(p, AtomU):
        return _modify_uniform(p, cmd)
    raise FormulaError(f"not an atom: {p!r}")


def modify_formula(phi: Formula, cmd: Init | Unitary):
    """Structural modification of a formula, or UNDEFINED.

    Conjunction and disjunction distribute.  The separating product
    requires the command to sit inside one side or miss both; an
    initialization whose register occurs on one side additionally
    records that the two sides stay independent apart from the freshly
    reset register.
    """
    if not isinstance(cmd, (Init, Unitary)):
        raise FormulaError(f"not a modifying command: {cmd!r}")
    if isinstance(phi, (Top, Bot)):
        return phi
    if isinstance(phi, (AtomD, AtomU, AtomProj)):
        return modify_atomic(phi, cmd)
    if isinstance(phi, (And, Or)):
        left = modify_formula(phi.left, cmd)
        right = modify_formula(phi.right, cmd)
        if not (is_defined(left) and is_defined(right)):
            return UNDEFINED
        return type(phi)(left, right)
    if isinstance(phi, Star):
        cregs = _cmd_regs(cmd)
        f1, f2 = free(phi.left), free(phi.right)
        _check_cmd_dims(f1 | f2, cregs.names, cregs.dims)
        for f in (f1, f2):
            if not (cregs.issubset(f) or cregs.isdisjoint(f)):
                return UNDEFINED
        left = modify_formula(phi.left, cmd)
        right = modify_formula(phi.right, cmd)
        if not (is_defined(left) and is_defined(right)):
            return UNDEFINED
        if isinstance(cmd, Unitary):
            return Star(left, right)
        q = cmd.var
        if q not in f1 and q not in f2:
            return Star(left, right)
        if q in f1 and q in f2:
            return UNDEFINED
        qset = RegSet([VarDecl(q, cmd.dim)])
        return And(And(left, right), Star(AtomD(f1 - qset), AtomD(f2 - qset)))
    if isinstance(phi, Imp):
        return UNDEFINED
    raise FormulaError(f"unknown formula {phi!r}")


def e_modify(phi: Formula, e: QuantumOperation):
    """Pullback of a formula through a channel, or UNDEFINED.

    Projection atoms over the channel's registers map to the
    orthocomplement of the support of the dual image of their
    complement; this is the weakest projection whose states the channel
    sends into the original one.  Only constants, conjunction,
    disjunction, and projection atoms are covered.
    """
    if isinstance(phi, (Top, Bot)):
        return phi
    if isinstance(phi, (And, Or)):
        left = e_modify(phi.left, e)
        right = e_modify(phi.right, e)
        if not (is_defined(left) and is_defined(right)):
            return UNDEFINED
        return type(phi)(left, right)
    if isinstance(phi, AtomProj):
        dom = phi.proj.domain
        _check_cmd_dims(dom, e.domain.names, e.domain.dims)
        inside = [n for n in e.domain.names if n in dom]
        if not inside:
            return phi
        if len(inside) != len(e.domain):
            return UNDEFINED
        positions = sorted(dom.index(n) for n in e.domain.names)
        comp = np.eye(dom.dim) - phi.proj.matrix()
        acc = np.zeros((dom.dim, dom.dim), dtype=np.complex128)
        for k in e.kraus:
            acc += sandwich(comp, dom.dims, positions, k.conj().T)
        acc = (acc + acc.conj().T) / 2
        space = ortho(support(acc))
        return AtomProj(Projection(dom, space))
    return UNDEFINED


def _stmt_kraus(stmt: Stmt, dom: RegSet) -> list[np.ndarray]:
    if isinstance(stmt, Skip):
        return [np.eye(dom.dim)]
    if isinstance(stmt, Seq):
        ops = [np.eye(dom.dim)]
        for s in stmt.stmts:
            step = _stmt_kraus(s, dom)
            ops = [b @ a for a in ops for b in step]
        return ops
    if isinstance(stmt, Unitary):
        order = sorted(range(len(stmt.regs)), key=lambda k: stmt.regs[k])
        u = permute_factors(stmt.mat, list(stmt.dims), order)
        sub = RegSet(VarDecl(n, d) for n, d in zip(stmt.regs, stmt.dims))
        return [embed_operator(u, sub, dom)]
    if isinstance(stmt, Init):
        decl = dom.decl(stmt.var)
        out = []
        for m in range(decl.dim):
            k = np.zeros((decl.dim, decl.dim))
            k[0, m] = 1.0
            out.append(embed_operator(k, RegSet([decl]), dom))
        return out
    if isinstance(stmt, IfMeasure):
        sub = RegSet(VarDecl(n, d) for n, d in zip(stmt.regs, stmt.dims))
        order = sorted(range(len(stmt.regs)), key=lambda k: stmt.regs[k])
        out = []
        for label, arm in stmt.arms:
            m = permute_factors(stmt.ops[label], list(stmt.dims), order)
            big = embed_operator(m, sub, dom)
            out.extend(k @ big for k in _stmt_kraus(arm, dom))
        return out
    if isinstance(stmt, WhileMeasure):
        raise ProgramError("loops have no finite Kraus decomposition")
    raise ProgramError(f"unknown statement {stmt!r}")


def operation_of_program(prog: Program) -> QuantumOperation:
    """Kraus form of a loop-free program over its declared registers."""
    return QuantumOperation(prog.regs, tuple(_stmt_kraus(prog.body, prog.regs)))
