"""Randomized testing: state samplers and triple validation.

None of this proves anything. The samplers draw states satisfying a
formula, :func:`validate_triple` runs them through a program and checks
the postcondition, and :func:`random_program` builds small loop-free
programs for differential tests. A reported counterexample is always
re-checked before being returned, so those are trustworthy; absence of
counterexamples is just evidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._sampling import density_in_subspace, dirichlet_density, haar_unitary
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
    satisfies,
)
from .linalg import get_tolerance
from .program import Init, IfMeasure, Program, SemanticsConfig, Seq, Skip, Unitary, denote
from .state import (
    QState,
    RegSet,
    VarDecl,
    builtin_measurement,
    builtin_unitary,
    combine,
    is_defined,
    permute_factors,
)

__all__ = [
    "Counterexample",
    "NoCounterexample",
    "random_program",
    "sample_satisfying",
    "validate_triple",
]

_REJECTION_BUDGET = 64


def _random_density(rng: np.random.Generator, regs: RegSet) -> QState:
    if len(regs) == 0:
        return QState.unit()
    return QState(regs, dirichlet_density(rng, regs.dim), validate=False)


def _sample_uniform_on(rng: np.random.Generator, target: RegSet,
                       dom: RegSet) -> QState:
    """State on ``dom`` whose marginal on ``target`` is maximally mixed."""
    rest = dom - target
    d = target.dim
    if len(rest) and rest.dim >= d and rng.random() < 0.5:
        # purification-style draw: correlates target with the rest while
        # keeping the target marginal exactly uniform
        dr = rest.dim
        iso = haar_unitary(rng, dr)[:, :d]
        vec = np.zeros(d * dr, dtype=np.complex128)
        for i in range(d):
            vec += np.kron(np.eye(d)[i], iso[:, i])
        vec /= np.sqrt(d)
        joined = target | rest
        dims = list(target.dims) + list(rest.dims)
        order = [([*target.names, *rest.names]).index(n) for n in joined.names]
        mat = permute_factors(np.outer(vec, vec.conj()), dims, order)
        return QState(joined, mat, validate=False)
    uni = QState.maximally_mixed(target)
    out = combine(uni, _random_density(rng, rest))
    assert is_defined(out)
    return out


def _sample_in_projection(rng: np.random.Generator, atom: AtomProj,
                          dom: RegSet) -> QState | None:
    basis = atom.proj.space.basis
    r = basis.shape[1]
    if r == 0:
        return None
    rest = dom - atom.proj.domain
    if len(rest) == 0:
        return QState(atom.proj.domain, density_in_subspace(rng, basis),
                      validate=False)
    # draw jointly on (subspace coordinates) x rest, then push through the
    # basis so the marginal support stays inside the projection
    dr = rest.dim
    sigma = dirichlet_density(rng, r * dr)
    lift = np.kron(basis, np.eye(dr))
    mat = lift @ sigma @ lift.conj().T
    joined = atom.proj.domain | rest
    dims = list(atom.proj.domain.dims) + list(rest.dims)
    order = [([*atom.proj.domain.names, *rest.names]).index(n)
             for n in joined.names]
    return QState(joined, permute_factors(mat, dims, order), validate=False)


def sample_satisfying(phi: Formula, rng: np.random.Generator,
                      domain: RegSet | None = None,
                      atol: float | None = None) -> QState | None:
    """Draw a state on ``domain`` satisfying ``phi``, or None on failure.

    The domain defaults to the formula's free registers and is widened to
    include them if the given one does not. Every candidate is re-checked
    before being returned.
    """
    t = get_tolerance() if atol is None else float(atol)
    dom = free(phi) if domain is None else (domain | free(phi))
    out = _sample(phi, rng, dom, t)
    if out is None:
        return None
    if not satisfies(out, phi, atol=t):
        return None
    return out


def _sample(phi: Formula, rng: np.random.Generator, dom: RegSet,
            t: float) -> QState | None:
    if isinstance(phi, Bot):
        return None
    if isinstance(phi, (Top, AtomD)):
        return _random_density(rng, dom)
    if isinstance(phi, AtomU):
        return _sample_uniform_on(rng, phi.regs, dom)
    if isinstance(phi, AtomProj):
        return _sample_in_projection(rng, phi, dom)
    if isinstance(phi, Or):
        first, second = (phi.left, phi.right) if rng.random() < 0.5 \
            else (phi.right, phi.left)
        got = _sample(first, rng, dom, t)
        if got is not None and satisfies(got, phi, atol=t):
            return got
        got = _sample(second, rng, dom, t)
        if got is not None and satisfies(got, phi, atol=t):
            return got
        return None
    if isinstance(phi, And):
        for k in range(_REJECTION_BUDGET):
            side = phi.left if k % 2 == 0 else phi.right
            got = _sample(side, rng, dom, t)
            if got is not None and satisfies(got, phi, atol=t):
                return got
        return None
    if isinstance(phi, Star):
        fa, fb = free(phi.left), free(phi.right)
        if not fa.isdisjoint(fb):
            return None
        a = _sample(phi.left, rng, fa, t)
        b = _sample(phi.right, rng, fb, t)
        if a is None or b is None:
            return None
        ab = combine(a, b)
        if not is_defined(ab):
            return None
        rest = dom - (fa | fb)
        if len(rest):
            ab = combine(ab, _random_density(rng, rest))
            if not is_defined(ab):
                return None
        if satisfies(ab, phi, atol=t):
            return ab
        return None
    if isinstance(phi, Imp):
        # material implication between same-domain projection atoms: a
        # full-rank draw usually escapes the antecedent, a draw inside the
        # consequent always works
        for k in range(32):
            got = _sample_in_projection(rng, phi.right, dom) if k % 2 \
                else _random_density(rng, dom)
            if got is None:
                continue
            try:
                ok = satisfies(got, phi, atol=t)
            except FormulaError:
                return None
            if ok:
                return got
        return None
    raise FormulaError(f"cannot sample for {phi!r}")


@dataclass(frozen=True)
class NoCounterexample:
    """All sampled inputs mapped into the postcondition."""

    trials: int


@dataclass(frozen=True)
class Counterexample:
    """An input satisfying the pre whose output violates the post."""

    state: QState
    output: QState


def validate_triple(pre: Formula, prog: Program, post: Formula,
                    rng: np.random.Generator | None = None,
                    trials: int = 100,
                    config: SemanticsConfig | None = None,
                    atol: float | None = None):
    """Empirically test the triple {pre} prog {post} on random inputs.

    Samples states satisfying ``pre`` on the union of the precondition's
    registers and the program's, runs the program, and checks the post
    with a widened margin so numerical drift does not masquerade as a
    violation. Returns :class:`NoCounterexample` or :class:`Counterexample`.
    """
    t = get_tolerance() if atol is None else float(atol)
    gen = rng if rng is not None else np.random.default_rng(11)
    dom = free(pre) | prog.regs
    done = 0
    for _ in range(trials):
        rho = sample_satisfying(pre, gen, domain=dom, atol=t)
        if rho is None:
            continue
        out = denote(prog, rho, config=config)
        done += 1
        if not satisfies(out, post, atol=t * 100):
            if satisfies(rho, pre, atol=t):
                return Counterexample(rho, out)
    return NoCounterexample(done)


_GATE_POOL_1 = ("H", "X", "Y", "Z", "S", "T")
_GATE_POOL_2 = ("CNOT", "CZ", "SWAP")


def random_program(rng: np.random.Generator, regs: RegSet,
                   size: int = 6, allow_measure: bool = True) -> Program:
    """Small loop-free program on the given registers.

    Statements are drawn from init, one- and two-register gates, and
    (optionally) measurement branches whose arms are again random
    programs. Non-qubit registers only receive init.
    """
    names = list(regs.names)
    stmts = []
    for _ in range(max(1, int(size))):
        roll = rng.random()
        qubits = [n for n in names if regs.decl(n).dim == 2]
        if roll < 0.2:
            n = names[int(rng.integers(len(names)))]
            stmts.append(Init(n, regs.decl(n).dim))
        elif roll < 0.55 and qubits:
            n = qubits[int(rng.integers(len(qubits)))]
            g = _GATE_POOL_1[int(rng.integers(len(_GATE_POOL_1)))]
            stmts.append(Unitary((n,), (2,), g, builtin_unitary(g, (2,))))
        elif roll < 0.8 and len(qubits) >= 2:
            pick = rng.choice(len(qubits), size=2, replace=False)
            pair = (qubits[pick[0]], qubits[pick[1]])
            g = _GATE_POOL_2[int(rng.integers(len(_GATE_POOL_2)))]
            stmts.append(Unitary(pair, (2, 2), g, builtin_unitary(g, (2, 2))))
        elif allow_measure and qubits:
            n = qubits[int(rng.integers(len(qubits)))]
            ops = builtin_measurement("std", (2,))
            arms = tuple(
                (m, random_program(rng, regs, size=max(1, size // 3),
                                   allow_measure=False).body)
                for m in sorted(ops)
            )
            stmts.append(IfMeasure("std", (n,), (2,), arms, ops))
        else:
            stmts.append(Skip())
    body = Seq(tuple(stmts)) if len(stmts) > 1 else stmts[0]
    return Program(body, regs)
