"""Assertions over quantum states: a bunched logic with a spatial product.

Atoms
-----
``D[S]``
    The state's domain covers the registers S.
``U[S]``
    The marginal on S is maximally mixed (relative to the state's weight).
``proj P on [S]``
    The support of the marginal on S lies inside the subspace P.

Formulas close under ``/\\``, ``\\/``, the separating product ``*``, and a
restricted implication ``->`` between same-domain projection atoms. A
state with zero weight satisfies the product and the uniformity atom
vacuously; a sub-unit state is compared after scaling by its weight.

``phi * psi`` holds when the free registers of the two sides are disjoint,
both sides hold, and the joint marginal on their union is exactly the
tensor of the two separate marginals.

Syntactic classes: ``in_res`` (no implication anywhere), ``in_sp``
(uniformity atoms, rank-1 projections, constants, products: formulas
with a least satisfying state, see :func:`sp_least_state`), and ``in_cm``
(closed under conjunction with products allowed only against an ``in_sp``
side: the class preserved by convex mixtures).

``entails_global`` checks validity of ``phi => psi`` over all states. It
proves with a set of sound structural rules (projection algebra, domain
accounting, uniformity bookkeeping), refutes with an exact criterion on
same-domain projection pairs or by randomized counterexample search, and
says Unknown otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .linalg import (
    Subspace,
    get_tolerance,
    join as subspace_join,
    meet as subspace_meet,
    partial_trace,
    support,
)
from .state import (
    Manifest,
    Projection,
    QState,
    RegSet,
    StateError,
    VarDecl,
    builtin_unitary,
    combine,
    embed_operator,
    permute_factors,
    restrict,
)

__all__ = [
    "And",
    "AtomD",
    "AtomProj",
    "AtomU",
    "Bot",
    "Entailment",
    "Formula",
    "FormulaError",
    "Imp",
    "Or",
    "Projection",
    "Star",
    "Top",
    "entails_global",
    "formulas_equal",
    "free",
    "in_cm",
    "in_res",
    "in_sp",
    "parse_formula",
    "print_formula",
    "rename_formula",
    "satisfies",
    "sp_least_state",
]


class FormulaError(ValueError):
    """Malformed formula, unsupported connective use, or parse failure."""


class Formula:
    """Base class for assertion syntax trees."""

    __slots__ = ()


@dataclass(frozen=True)
class Top(Formula):
    pass


@dataclass(frozen=True)
class Bot(Formula):
    pass


@dataclass(frozen=True)
class AtomD(Formula):
    regs: RegSet


@dataclass(frozen=True)
class AtomU(Formula):
    regs: RegSet


@dataclass(frozen=True, eq=False)
class AtomProj(Formula):
    """Support of the marginal on the projection's domain lies in it."""

    proj: Projection
    label: str | None = None  # printing hint only; ignored by equality


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Star(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Imp(Formula):
    left: Formula
    right: Formula


def free(phi: Formula) -> RegSet:
    """Registers the formula talks about."""
    if isinstance(phi, (Top, Bot)):
        return RegSet.empty()
    if isinstance(phi, (AtomD, AtomU)):
        return phi.regs
    if isinstance(phi, AtomProj):
        return phi.proj.domain
    if isinstance(phi, (And, Or, Star, Imp)):
        return free(phi.left) | free(phi.right)
    raise FormulaError(f"unknown formula {phi!r}")


def formulas_equal(a: Formula, b: Formula, atol: float | None = None) -> bool:
    """Structural equality; projection atoms compare as subspaces."""
    if type(a) is not type(b):
        return False
    if isinstance(a, (Top, Bot)):
        return True
    if isinstance(a, (AtomD, AtomU)):
        return a.regs == b.regs
    if isinstance(a, AtomProj):
        return a.proj.equiv(b.proj, atol=atol)
    return (formulas_equal(a.left, b.left, atol=atol)
            and formulas_equal(a.right, b.right, atol=atol))


def _rename_regs(regs: RegSet, mapping: Mapping[str, str]) -> RegSet:
    return RegSet(VarDecl(mapping.get(d.name, d.name), d.dim) for d in regs)


def rename_formula(phi: Formula, mapping: Mapping[str, str]) -> Formula:
    """Rename registers; the map must stay injective on each atom's frees."""
    if isinstance(phi, (Top, Bot)):
        return phi
    if isinstance(phi, AtomD):
        return AtomD(_rename_regs(phi.regs, mapping))
    if isinstance(phi, AtomU):
        return AtomU(_rename_regs(phi.regs, mapping))
    if isinstance(phi, AtomProj):
        old = phi.proj.domain
        new = _rename_regs(old, mapping)
        if len(new) != len(old):
            raise FormulaError("register renaming collapses distinct names")
        # a rename can change canonical order: permute the basis factors
        renamed = [mapping.get(n, n) for n in old.names]
        order = [renamed.index(n) for n in new.names]
        b = phi.proj.space.basis
        r = b.shape[1]
        t = b.reshape(list(old.dims) + [r])
        t = np.transpose(t, order + [len(old)])
        basis = t.reshape(new.dim, r)
        return AtomProj(Projection(new, Subspace(new.dim, basis, check=False)),
                        label=phi.label)
    if isinstance(phi, (And, Or, Star, Imp)):
        return type(phi)(rename_formula(phi.left, mapping),
                         rename_formula(phi.right, mapping))
    raise FormulaError(f"unknown formula {phi!r}")


# --- satisfaction ------------------------------------------------------------


def satisfies(rho: QState, phi: Formula, atol: float | None = None) -> bool:
    """Does the state satisfy the formula (see module docstring)."""
    t = get_tolerance() if atol is None else float(atol)
    if isinstance(phi, Top):
        return True
    if isinstance(phi, Bot):
        return False
    if isinstance(phi, AtomD):
        return phi.regs.issubset(rho.domain)
    if isinstance(phi, AtomU):
        if not phi.regs.issubset(rho.domain):
            return False
        w = rho.trace
        if w <= t:
            return True
        m = restrict(rho, phi.regs).mat
        d = phi.regs.dim
        return bool(np.max(np.abs(m - w * np.eye(d) / d)) <= t * 10)
    if isinstance(phi, AtomProj):
        dom = phi.proj.domain
        if not dom.issubset(rho.domain):
            return False
        if rho.trace <= t:
            return True
        m = restrict(rho, dom).mat
        return support((m + m.conj().T) / 2, atol=t).leq(phi.proj.space, atol=t)
    if isinstance(phi, And):
        return satisfies(rho, phi.left, t) and satisfies(rho, phi.right, t)
    if isinstance(phi, Or):
        return satisfies(rho, phi.left, t) or satisfies(rho, phi.right, t)
    if isinstance(phi, Star):
        f1, f2 = free(phi.left), free(phi.right)
        if not f1.isdisjoint(f2):
            return False
        if not (f1 | f2).issubset(rho.domain):
            return False
        if not (satisfies(rho, phi.left, t) and satisfies(rho, phi.right, t)):
            return False
        w = rho.trace
        if w <= t:
            return True
        prod = combine(restrict(rho, f1), restrict(rho, f2))
        joint = restrict(rho, f1 | f2)
        return bool(np.max(np.abs(w * joint.mat - prod.mat)) <= t * 10)
    if isinstance(phi, Imp):
        l, r = phi.left, phi.right
        if not (isinstance(l, AtomProj) and isinstance(r, AtomProj)
                and l.proj.domain == r.proj.domain):
            raise FormulaError(
                "implication is evaluated between projection atoms on the "
                "same registers only"
            )
        return (not satisfies(rho, l, t)) or satisfies(rho, r, t)
    raise FormulaError(f"unknown formula {phi!r}")


# --- syntactic classes --------------------------------------------------------


def in_res(phi: Formula) -> bool:
    """Restriction class: implication-free formulas."""
    if isinstance(phi, (Top, Bot, AtomD, AtomU, AtomProj)):
        return True
    if isinstance(phi, (And, Or, Star)):
        return in_res(phi.left) and in_res(phi.right)
    if isinstance(phi, Imp):
        return False
    raise FormulaError(f"unknown formula {phi!r}")


def in_sp(phi: Formula) -> bool:
    """Formulas with a least satisfying state (products of points)."""
    if isinstance(phi, (Top, Bot, AtomU)):
        return True
    if isinstance(phi, AtomProj):
        return phi.proj.rank == 1
    if isinstance(phi, Star):
        return in_sp(phi.left) and in_sp(phi.right)
    return False


def in_cm(phi: Formula) -> bool:
    """Mixture-closed class: conjunctions of atoms, with products allowed
    only when one side pins a least state (is ``in_sp``)."""
    if isinstance(phi, (Top, Bot, AtomD, AtomU, AtomProj)):
        return True
    if isinstance(phi, And):
        return in_cm(phi.left) and in_cm(phi.right)
    if isinstance(phi, Star):
        return ((in_sp(phi.left) and in_cm(phi.right))
                or (in_sp(phi.right) and in_cm(phi.left)))
    return False


def sp_least_state(phi: Formula) -> QState | None:
    """Least state of an ``in_sp`` formula, or None when unsatisfiable.

    Every unit-weight state satisfying the formula extends the least
    state; the least state itself satisfies the formula.
    """
    if not in_sp(phi):
        raise FormulaError("least states exist for the in_sp class only")
    if isinstance(phi, Top):
        return QState.unit()
    if isinstance(phi, Bot):
        return None
    if isinstance(phi, AtomU):
        return QState.maximally_mixed(phi.regs)
    if isinstance(phi, AtomProj):
        v = phi.proj.space.basis[:, 0]
        return QState.from_vector(phi.proj.domain, v)
    if isinstance(phi, Star):
        a = sp_least_state(phi.left)
        b = sp_least_state(phi.right)
        if a is None or b is None:
            return None
        ab = combine(a, b)
        return ab if isinstance(ab, QState) else None
    raise FormulaError(f"unknown formula {phi!r}")


# --- global entailment --------------------------------------------------------


class Entailment(Enum):
    PROVED = "proved"
    DISPROVED = "disproved"
    UNKNOWN = "unknown"


def _dom_lower(phi: Formula) -> RegSet:
    # registers guaranteed to be inside the domain of any satisfying state
    if isinstance(phi, (Top, Bot)):
        return RegSet.empty()
    if isinstance(phi, (AtomD, AtomU)):
        return phi.regs
    if isinstance(phi, AtomProj):
        return phi.proj.domain
    if isinstance(phi, (And, Star)):
        return _dom_lower(phi.left) | _dom_lower(phi.right)
    if isinstance(phi, Or):
        return _dom_lower(phi.left) & _dom_lower(phi.right)
    if isinstance(phi, Imp):
        return RegSet.empty()
    raise FormulaError(f"unknown formula {phi!r}")


def _u_guarantees(phi: Formula) -> set[RegSet]:
    # register sets whose joint marginal is forced maximally mixed
    if isinstance(phi, AtomU):
        return {phi.regs}
    if isinstance(phi, And):
        return _u_guarantees(phi.left) | _u_guarantees(phi.right)
    if isinstance(phi, Star):
        ga, gb = _u_guarantees(phi.left), _u_guarantees(phi.right)
        out = ga | gb
        for a in ga:
            for b in gb:
                if a.isdisjoint(b):
                    # the product clause factorizes the joint marginal
                    out.add(a | b)
        return out
    if isinstance(phi, Or):
        ga, gb = _u_guarantees(phi.left), _u_guarantees(phi.right)
        out = {g for g in ga if any(g.issubset(h) for h in gb)}
        out |= {h for h in gb if any(h.issubset(g) for g in ga)}
        return out
    return set()


def _conjuncts(phi: Formula) -> list[Formula]:
    # the product implies both sides hold, so it splits like a conjunction
    if isinstance(phi, (And, Star)):
        return _conjuncts(phi.left) + _conjuncts(phi.right)
    return [phi]


def _uniform_marginal_test(proj: Projection, target: RegSet,
                           atol: float) -> bool:
    """Exact test for: every state supported in the projection has a
    maximally mixed marginal on ``target``.

    Criterion: for an orthonormal basis (e_i) of the subspace, the
    partial trace of |e_i><e_j| onto ``target`` is delta_ij I/dim.
    """
    dom = proj.domain
    if not target.issubset(dom):
        return False
    if len(target) == 0:
        return True
    keep = [dom.index(n) for n in target.names]
    dims = dom.dims
    d = target.dim
    b = proj.space.basis
    r = b.shape[1]
    if r == 0:
        return True
    for i in range(r):
        for j in range(i, r):
            m = partial_trace(np.outer(b[:, i], b[:, j].conj()), dims, keep)
            want = np.eye(d) / d if i == j else np.zeros((d, d))
            if np.max(np.abs(m - want)) > atol * 10:
                return False
    return True


@dataclass(frozen=True)
class _NormProj:
    proj: Projection
    exact: bool


def _proj_norm(phi: Formula) -> _NormProj | None:
    # a projection each satisfying state's support must lie in; ``exact``
    # means the converse holds too
    if isinstance(phi, AtomProj):
        return _NormProj(phi.proj, True)
    if isinstance(phi, AtomD):
        return _NormProj(Projection.identity(phi.regs), True)
    if isinstance(phi, AtomU):
        return _NormProj(Projection.identity(phi.regs), False)
    if isinstance(phi, Top):
        return _NormProj(Projection.identity(RegSet.empty()), True)
    if isinstance(phi, Bot):
        return _NormProj(Projection.zero(RegSet.empty()), False)
    if isinstance(phi, (And, Star)):
        a = _proj_norm(phi.left)
        b = _proj_norm(phi.right)
        if a is None or b is None:
            return None
        dom = a.proj.domain | b.proj.domain
        try:
            pa = embed_operator(a.proj.matrix(), a.proj.domain, dom)
            pb = embed_operator(b.proj.matrix(), b.proj.domain, dom)
        except StateError:
            return None
        space = subspace_meet(Subspace.from_projector(pa),
                              Subspace.from_projector(pb))
        exact = a.exact and b.exact and isinstance(phi, And)
        return _NormProj(Projection(dom, space), exact)
    if isinstance(phi, Or):
        a = _proj_norm(phi.left)
        b = _proj_norm(phi.right)
        if a is None or b is None or a.proj.domain != b.proj.domain:
            return None
        return _NormProj(
            Projection(a.proj.domain, subspace_join(a.proj.space, b.proj.space)),
            False,
        )
    return None


def _always_true(phi: Formula) -> bool:
    # satisfied by every state, including ones with unrelated domains
    if isinstance(phi, Top):
        return True
    if isinstance(phi, (AtomD, AtomU)) and len(phi.regs) == 0:
        return True
    if isinstance(phi, AtomProj):
        return len(phi.proj.domain) == 0 and phi.proj.rank == 1
    return False


def _star_u_leaves(phi: Formula) -> list[RegSet] | None:
    # leaves of a product tree when they are all uniformity atoms
    if isinstance(phi, Star):
        a = _star_u_leaves(phi.left)
        b = _star_u_leaves(phi.right)
        if a is None or b is None:
            return None
        return a + b
    if isinstance(phi, AtomU):
        return [phi.regs]
    if _always_true(phi):
        return []
    return None


def _schema_proj_to_u(phi: Formula, target: RegSet, atol: float) -> bool:
    # mixed route to U[target]: a projection conjunct forces uniformity on
    # its part of the target, uniformity guarantees cover the rest
    guarantees = _u_guarantees(phi)
    for c in _conjuncts(phi):
        if not isinstance(c, AtomProj):
            continue
        s1 = target & c.proj.domain
        s2 = target - c.proj.domain
        if len(s2) and not any(s2.issubset(g) for g in guarantees):
            continue
        if _uniform_marginal_test(c.proj, s1, atol):
            return True
    return False


def _prove(phi: Formula, psi: Formula, atol: float, gate: RegSet) -> bool:
    # ``gate`` is the register cover every candidate state's domain is
    # known to include; it never shrinks while decomposing either side
    if isinstance(psi, Top):
        return True
    if isinstance(phi, Bot):
        return True
    if formulas_equal(phi, psi, atol=atol):
        return True
    if isinstance(psi, And):
        if (_prove(phi, psi.left, atol, gate)
                and _prove(phi, psi.right, atol, gate)):
            return True
    if isinstance(phi, Or):
        if (_prove(phi.left, psi, atol, gate)
                and _prove(phi.right, psi, atol, gate)):
            return True
    if isinstance(psi, Or):
        if (_prove(phi, psi.left, atol, gate)
                or _prove(phi, psi.right, atol, gate)):
            return True
    if isinstance(phi, (And, Star)):
        if (_prove(phi.left, psi, atol, gate)
                or _prove(phi.right, psi, atol, gate)):
            return True
    if isinstance(psi, AtomD):
        if psi.regs.issubset(_dom_lower(phi) | gate):
            return True
    if isinstance(psi, AtomProj) and psi.proj.rank == psi.proj.domain.dim:
        if psi.proj.domain.issubset(_dom_lower(phi) | gate):
            return True
    if isinstance(psi, AtomU):
        if len(psi.regs) == 0:
            return True
        if any(psi.regs.issubset(g) for g in _u_guarantees(phi)):
            return True
        if _schema_proj_to_u(phi, psi.regs, atol):
            return True
    if isinstance(psi, Star):
        # dropping a trivially-true empty-free side is only valid when the
        # other side's registers are forced into the domain
        for a, b in ((psi.left, psi.right), (psi.right, psi.left)):
            if (_always_true(a) and len(free(a)) == 0
                    and free(b).issubset(_dom_lower(phi) | gate)
                    and _prove(phi, b, atol, gate)):
                return True
        if isinstance(phi, Star):
            pl, pr = phi.left, phi.right
            for a, b in ((psi.left, psi.right), (psi.right, psi.left)):
                if (free(pl) == free(a) and free(pr) == free(b)
                        and _prove(pl, a, atol, gate)
                        and _prove(pr, b, atol, gate)):
                    return True
        if isinstance(phi, And):
            # a rank-one conjunct pins its registers to a pure marginal,
            # and a pure marginal cannot be correlated with the rest
            for l, r in ((phi.left, phi.right), (phi.right, phi.left)):
                if not (isinstance(r, AtomProj) and r.proj.rank == 1):
                    continue
                for a, b in ((psi.left, psi.right), (psi.right, psi.left)):
                    if (free(b) == free(r)
                            and _prove(r, b, atol, gate)
                            and _prove(l, a, atol, gate)):
                        return True
        leaves = _star_u_leaves(psi)
        if leaves is not None and leaves:
            union = RegSet.empty()
            disjoint = True
            for g in leaves:
                if not union.isdisjoint(g):
                    disjoint = False
                    break
                union = union | g
            if disjoint and _prove(phi, AtomU(union), atol, gate):
                return True
    if isinstance(psi, Imp):
        l, r = psi.left, psi.right
        if (isinstance(l, AtomProj) and isinstance(r, AtomProj)
                and l.proj.domain == r.proj.domain
                and l.proj.leq(r.proj, atol=atol)):
            return True
    np_phi = _proj_norm(phi)
    np_psi = _proj_norm(psi)
    if (np_phi is not None and np_psi is not None and np_psi.exact
            and np_psi.proj.domain.issubset(np_phi.proj.domain)):
        dom = np_phi.proj.domain
        sub = np_psi.proj.domain
        keep = [dom.index(n) for n in sub.names]
        contracted = support(partial_trace(np_phi.proj.matrix(), dom.dims, keep),
                             atol=atol)
        if contracted.leq(np_psi.proj.space, atol=atol):
            return True
    return False


def _direct_disproof(phi: Formula, psi: Formula, atol: float) -> bool:
    # exact on same-domain projection pairs: containment is equivalence
    if (isinstance(phi, AtomProj) and isinstance(psi, AtomProj)
            and phi.proj.domain == psi.proj.domain):
        return not phi.proj.leq(psi.proj, atol=atol)
    return False


def entails_global(phi: Formula, psi: Formula, *,
                   rng: np.random.Generator | None = None,
                   trials: int = 64,
                   atol: float | None = None) -> Entailment:
    """Validity of ``phi => psi`` over states covering both formulas.

    The quantifier ranges over states whose domain includes every register
    free in either formula; smaller states are outside the contract.  A
    domain atom (or full-rank identity projection) whose registers sit
    inside that cover is therefore granted outright.

    Proof search is sound; refutation returns a verdict only when a
    concrete counterexample state is confirmed with a widened tolerance
    margin, so Disproved is trustworthy and Unknown means neither side
    was established within the search budget.
    """
    t = get_tolerance() if atol is None else float(atol)

    def admissible(x: Formula) -> bool:
        if in_res(x):
            return True
        return (isinstance(x, Imp)
                and isinstance(x.left, AtomProj) and isinstance(x.right, AtomProj)
                and x.left.proj.domain == x.right.proj.domain)

    if not admissible(phi) or not admissible(psi):
        raise FormulaError("entailment checking covers implication-free "
                           "formulas (plus top-level projection implications)")
    gate = free(phi) | free(psi)  # raises on a register dimension clash
    if _prove(phi, psi, t, gate):
        return Entailment.PROVED
    if _direct_disproof(phi, psi, t):
        return Entailment.DISPROVED
    if trials > 0:
        from .oracle import sample_satisfying  # deferred: oracle builds on this module

        gen = rng if rng is not None else np.random.default_rng(7)
        misses = 0
        for _ in range(trials):
            # every witness must cover both sides' registers
            cand = sample_satisfying(phi, gen, domain=gate)
            if cand is None:
                misses += 1
                if misses >= 8:  # the sampler cannot hit phi; stop burning budget
                    break
                continue
            misses = 0
            if satisfies(cand, psi, atol=t * 100):
                continue
            if satisfies(cand, phi, atol=t):
                return Entailment.DISPROVED
    return Entailment.UNKNOWN


# --- parsing and printing -----------------------------------------------------

_F_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+|\#[^\n]*)
      | (?P<matrix>\[\[.*?\]\])
      | (?P<land>/\\)
      | (?P<lor>\\/)
      | (?P<imp>->)
      | (?P<star>\*)
      | (?P<name>[A-Za-z_][A-Za-z0-9_.]*(?:[+-](?![\w>+-]))?)
      | (?P<sym>[\[\],()])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class _FTok:
    kind: str
    text: str
    pos: int


def _f_tokenize(text: str) -> list[_FTok]:
    toks = []
    i = 0
    while i < len(text):
        m = _F_TOKEN_RE.match(text, i)
        if not m:
            raise FormulaError(f"cannot read formula at {text[i:i + 12]!r}")
        i = m.end()
        if m.lastgroup == "ws":
            continue
        toks.append(_FTok(m.lastgroup, m.group(), m.start()))
    toks.append(_FTok("eof", "", len(text)))
    return toks


def _parse_complex(s: str) -> complex:
    s = s.strip().replace(" ", "")
    if not s:
        raise FormulaError("empty matrix entry")
    try:
        return complex(s.replace("i", "j"))
    except ValueError:
        raise FormulaError(f"bad matrix entry {s!r}") from None


def _parse_matrix_literal(tok: str) -> np.ndarray:
    inner = re.sub(r"\s+", "", tok[2:-2])
    rows = inner.split("],[")
    out = []
    width = None
    for row in rows:
        entries = [_parse_complex(e) for e in row.split(",")]
        if width is None:
            width = len(entries)
        elif len(entries) != width:
            raise FormulaError("matrix rows have unequal lengths")
        out.append(entries)
    return np.array(out, dtype=np.complex128)


_NATURAL_DIMS = {"Phi+": (2, 2), "Phi-": (2, 2), "PS": (3, 3, 3)}


def _named_subspace(name: str, dims: tuple[int, ...],
                    manifest: Manifest | None) -> Subspace:
    """Named projector as a subspace, in the given factor order."""
    d = int(np.prod(dims)) if dims else 1
    if name == "Id":
        return Subspace.full(d)
    if name == "P0":
        v = np.zeros(d)
        v[0] = 1.0
        return Subspace.from_span(v)
    if name in ("Phi+", "Phi-"):
        if dims != (2, 2):
            raise FormulaError(f"{name} needs two qubits, got dims {dims}")
        v = np.zeros(4)
        v[0] = 1.0
        v[3] = 1.0 if name == "Phi+" else -1.0
        return Subspace.from_span(v / np.sqrt(2))
    if name == "PS":
        if dims != (3, 3, 3):
            raise FormulaError(f"PS needs three qutrits, got dims {dims}")
        u = builtin_unitary("U_enc", (3, 3, 3))
        return Subspace.from_span(u[:, [0, 9, 18]])
    m = re.fullmatch(r"std\.(0|[1-9]\d*)", name)
    if m:
        k = int(m.group(1))
        if k >= d:
            raise FormulaError(f"basis index {k} out of range for dim {d}")
        v = np.zeros(d)
        v[k] = 1.0
        return Subspace.from_span(v)
    if manifest is not None and name in manifest.projectors:
        mdims, mat = manifest.projectors[name]
        if mdims != dims:
            raise FormulaError(
                f"projector {name} expects dims {mdims}, got {dims}"
            )
        return Subspace.from_projector(mat)
    raise FormulaError(f"unknown projector name {name!r}")


class _FParser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _f_tokenize(text)
        self.i = 0

    def peek(self) -> _FTok:
        return self.toks[self.i]

    def take(self, kind: str | None = None, text: str | None = None) -> _FTok:
        tok = self.toks[self.i]
        if kind is not None and tok.kind != kind:
            raise FormulaError(f"expected {kind}, found {tok.text!r}")
        if text is not None and tok.text != text:
            raise FormulaError(f"expected {text!r}, found {tok.text!r}")
        self.i += 1
        return tok

    # raw nodes: ("top",) ("bot",) ("D", names) ("U", names)
    # ("proj", spec, names) with spec ("name", s) or ("matrix", array)
    # ("and"|"or"|"star"|"imp", l, r)

    def parse(self) -> tuple:
        node = self.parse_imp()
        self.take("eof")
        return node

    def parse_imp(self) -> tuple:
        left = self.parse_or()
        if self.peek().kind == "imp":
            self.take()
            return ("imp", left, self.parse_imp())
        return left

    def parse_or(self) -> tuple:
        node = self.parse_star()
        while self.peek().kind == "lor":
            self.take()
            node = ("or", node, self.parse_star())
        return node

    def parse_star(self) -> tuple:
        node = self.parse_and()
        while self.peek().kind == "star":
            self.take()
            node = ("star", node, self.parse_and())
        return node

    def parse_and(self) -> tuple:
        node = self.parse_atom()
        while self.peek().kind == "land":
            self.take()
            node = ("and", node, self.parse_atom())
        return node

    def parse_names(self) -> list[str]:
        self.take("sym", "[")
        names: list[str] = []
        if not (self.peek().kind == "sym" and self.peek().text == "]"):
            names.append(self.take("name").text)
            while self.peek().kind == "sym" and self.peek().text == ",":
                self.take()
                names.append(self.take("name").text)
        self.take("sym", "]")
        if len(set(names)) != len(names):
            raise FormulaError(f"repeated register in {names}")
        return names

    def parse_atom(self) -> tuple:
        tok = self.peek()
        if tok.kind == "sym" and tok.text == "(":
            self.take()
            node = self.parse_imp()
            self.take("sym", ")")
            return node
        if tok.kind == "name":
            if tok.text == "top":
                self.take()
                return ("top",)
            if tok.text == "bot":
                self.take()
                return ("bot",)
            if tok.text in ("D", "U"):
                self.take()
                return (tok.text, self.parse_names())
            if tok.text == "proj":
                self.take()
                nxt = self.peek()
                if nxt.kind == "matrix":
                    self.take()
                    spec = ("matrix", _parse_matrix_literal(nxt.text))
                else:
                    spec = ("name", self.take("name").text)
                self.take("name", "on")
                return ("proj", spec, self.parse_names())
        raise FormulaError(f"expected an atom, found {tok.text!r}")


def _collect_dim_hints(node: tuple, hints: dict[str, int]):
    kind = node[0]
    if kind == "proj":
        spec, names = node[1], node[2]
        if spec[0] == "name" and spec[1] in _NATURAL_DIMS:
            nat = _NATURAL_DIMS[spec[1]]
            if len(nat) == len(names):
                for n, d in zip(names, nat):
                    if hints.setdefault(n, d) != d:
                        raise FormulaError(
                            f"register {n} used with dims {hints[n]} and {d}"
                        )
    elif kind in ("and", "or", "star", "imp"):
        _collect_dim_hints(node[1], hints)
        _collect_dim_hints(node[2], hints)


def _build_formula(node: tuple, dim_of, manifest: Manifest | None) -> Formula:
    kind = node[0]
    if kind == "top":
        return Top()
    if kind == "bot":
        return Bot()
    if kind in ("D", "U"):
        regs = RegSet(VarDecl(n, dim_of(n)) for n in node[1])
        return AtomD(regs) if kind == "D" else AtomU(regs)
    if kind == "proj":
        spec, names = node[1], node[2]
        regs = RegSet(VarDecl(n, dim_of(n)) for n in names)
        listed_dims = [dim_of(n) for n in names]
        # matrices and named spaces are given in the listed register order;
        # RegSet canonicalizes, so permute the factors to match
        order = sorted(range(len(names)), key=lambda k: names[k])
        if spec[0] == "matrix":
            mat = spec[1]
            if mat.shape != (regs.dim, regs.dim):
                raise FormulaError(
                    f"projector matrix shape {mat.shape} does not match "
                    f"registers {names} with dims {listed_dims}"
                )
            mat = permute_factors(mat, listed_dims, order)
            return AtomProj(Projection(regs, Subspace.from_projector(mat)))
        name = spec[1]
        space = _named_subspace(name, tuple(listed_dims), manifest)
        if order != list(range(len(names))):
            mat = permute_factors(space.projector(), listed_dims, order)
            space = Subspace.from_projector(mat)
            # reprinting would apply the name in canonical order: drop it
            return AtomProj(Projection(regs, space))
        return AtomProj(Projection(regs, space), label=name)
    if kind == "and":
        return And(_build_formula(node[1], dim_of, manifest),
                   _build_formula(node[2], dim_of, manifest))
    if kind == "or":
        return Or(_build_formula(node[1], dim_of, manifest),
                  _build_formula(node[2], dim_of, manifest))
    if kind == "star":
        return Star(_build_formula(node[1], dim_of, manifest),
                    _build_formula(node[2], dim_of, manifest))
    if kind == "imp":
        return Imp(_build_formula(node[1], dim_of, manifest),
                   _build_formula(node[2], dim_of, manifest))
    raise FormulaError(f"unknown node {kind!r}")


def parse_formula(text: str,
                  dims: Mapping[str, int] | Manifest | None = None) -> Formula:
    """Parse assertion text.

    Register dims come from ``dims`` (a mapping or a manifest); names
    used by dimension-specific projectors (Phi+, Phi-, PS) are inferred,
    anything else defaults to qubits. Projector atoms accept a named
    projector or an inline matrix like ``proj [[1,0],[0,0]] on [q]``
    (entries are complex, written with ``i``).

    Precedence, tightest first: ``/\\``, ``*``, ``\\/``, ``->``.
    """
    manifest = dims if isinstance(dims, Manifest) else None
    given: Mapping[str, int]
    if manifest is not None:
        given = manifest.dims
    elif dims is None:
        given = {}
    else:
        given = dims
    raw = _FParser(text).parse()
    hints: dict[str, int] = dict(given)
    _collect_dim_hints(raw, hints)

    def dim_of(name: str) -> int:
        return int(hints.get(name, 2))

    return _build_formula(raw, dim_of, manifest)


def _fmt_complex(z: complex) -> str:
    re_, im = float(z.real), float(z.imag)
    if im == 0.0:
        return repr(re_)
    if re_ == 0.0:
        return f"{im!r}i"
    if im < 0:
        return f"{re_!r}-{-im!r}i"
    return f"{re_!r}+{im!r}i"


def _fmt_matrix(m: np.ndarray) -> str:
    rows = [",".join(_fmt_complex(z) for z in row) for row in m]
    return "[[" + "],[".join(rows) + "]]"


def print_formula(phi: Formula) -> str:
    """Formula text that parses back to an equal formula (same dims)."""
    if isinstance(phi, Top):
        return "top"
    if isinstance(phi, Bot):
        return "bot"
    if isinstance(phi, AtomD):
        return f"D[{','.join(phi.regs.names)}]"
    if isinstance(phi, AtomU):
        return f"U[{','.join(phi.regs.names)}]"
    if isinstance(phi, AtomProj):
        ids = ",".join(phi.proj.domain.names)
        if phi.label is not None:
            return f"proj {phi.label} on [{ids}]"
        return f"proj {_fmt_matrix(phi.proj.matrix())} on [{ids}]"
    if isinstance(phi, And):
        return f"({print_formula(phi.left)} /\\ {print_formula(phi.right)})"
    if isinstance(phi, Or):
        return f"({print_formula(phi.left)} \\/ {print_formula(phi.right)})"
    if isinstance(phi, Star):
        return f"({print_formula(phi.left)} * {print_formula(phi.right)})"
    if isinstance(phi, Imp):
        return f"({print_formula(phi.left)} -> {print_formula(phi.right)})"
    raise FormulaError(f"unknown formula {phi!r}")
