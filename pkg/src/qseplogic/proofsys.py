"""Checker for proof trees over quantum while-program triples.

A judgment is a triple ``{pre} prog {post}`` whose assertions are
implication-free. A proof is a tree of named rule applications, and
checking is local: each node is judged against its premises' stated
conclusions only, never against their derivations. Every side condition
of a rule lands in the node's :class:`CheckReport` in the order checked;
checking stops at the first violation.

Two report statuses sit beside "ok" and "failed". An ``Oracle`` leaf
gets "empirical": its judgment was tested on random inputs, not derived,
and :func:`check_proof` lists such leaves even when the proof passes. A
``Weak`` step whose entailment the prover can neither establish nor
refute gets "unproved entailment", which counts as a failure.

Proof scripts are s-expressions, one node per ``(rule ...)`` form::

    (rule Seq
      (pre "top")
      (prog "q := |0>")
      (post "proj std.0 on [q]")
      (premises ...))

A ``pre``, ``post``, or ``prog`` slot written ``_`` is inferred where
the rule determines it: Init, Unit, and Perm compute the precondition
from the postcondition, PEPR computes it from its evidence, and Seq
stitches all three slots from its premises. ``print_proof`` emits
canonical text that reparses to an equal tree, byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .assertion import (
    And,
    AtomProj,
    AtomU,
    Entailment,
    Formula,
    Or,
    Star,
    Top,
    _fmt_matrix,
    _parse_matrix_literal,
    entails_global,
    formulas_equal,
    free,
    in_cm,
    in_res,
    in_sp,
    parse_formula,
    print_formula,
    rename_formula,
)
from .linalg import eigenspace_one, get_tolerance, partial_trace, support
from .modification import QuantumOperation, e_modify, modify_formula
from .program import (
    IfMeasure,
    Init,
    Program,
    Seq,
    Skip,
    Stmt,
    Unitary,
    WhileMeasure,
    flatten,
    parse_program,
    print_program,
    programs_equal,
    stmt_vars,
)
from .state import (
    Manifest,
    Projection,
    RegSet,
    VarDecl,
    embed_operator,
    is_defined,
    parse_perm_name,
    permutation_unitary,
    permute_factors,
)

__all__ = [
    "CheckReport",
    "Judgment",
    "ProofError",
    "ProofNode",
    "ProofReport",
    "RULES",
    "check_proof",
    "check_rule",
    "judgments_equal",
    "parse_proof",
    "print_proof",
]


class ProofError(ValueError):
    """Raised for malformed judgments, nodes, or proof scripts."""


# --- judgments and proof trees ----------------------------------------------


class Judgment:
    """A triple ``{pre} prog {post}``; assertions must be implication-free."""

    __slots__ = ("pre", "prog", "post")

    def __init__(self, pre: Formula, prog: Program, post: Formula):
        if not in_res(pre):
            raise ProofError("precondition contains an implication")
        if not in_res(post):
            raise ProofError("postcondition contains an implication")
        free(pre) | prog.regs | free(post)  # reject dimension clashes up front
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "prog", prog)
        object.__setattr__(self, "post", post)

    def __setattr__(self, *args):
        raise AttributeError("Judgment is immutable")

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (f"{{{print_formula(self.pre)}}} "
                f"{print_program(self.prog)!r} "
                f"{{{print_formula(self.post)}}}")


def judgments_equal(a: Judgment, b: Judgment,
                    atol: float | None = None) -> bool:
    return (formulas_equal(a.pre, b.pre, atol=atol)
            and programs_equal(a.prog, b.prog, atol=atol)
            and formulas_equal(a.post, b.post, atol=atol))


RULES = (
    "Skip", "Init", "Unit", "Seq", "RIf", "RLoop", "Weak", "Conj", "Disj",
    "Const", "Frame", "FrameU", "UnCR", "Perm", "PEPR", "Oracle",
)


@dataclass(frozen=True, eq=False)
class ProofNode:
    """One rule application: a conclusion plus its premise subtrees."""

    rule: str
    conclusion: Judgment
    premises: tuple["ProofNode", ...] = ()
    evidence: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.rule not in RULES:
            raise ProofError(f"unknown rule {self.rule!r}")
        if not isinstance(self.conclusion, Judgment):
            raise ProofError("conclusion must be a Judgment")
        prems = tuple(self.premises)
        for p in prems:
            if not isinstance(p, ProofNode):
                raise ProofError(f"premise is not a ProofNode: {p!r}")
        object.__setattr__(self, "premises", prems)
        object.__setattr__(self, "evidence",
                           MappingProxyType(dict(self.evidence)))


@dataclass(frozen=True)
class CheckReport:
    """Outcome of checking one rule application.

    ``status`` is "ok", "empirical" (Oracle leaf: tested, not derived),
    "unproved entailment" (a Weak step the prover could not settle), or
    "failed". ``conditions`` lists each side condition in the order it
    was checked; a failed report ends at its first violation, named in
    ``detail``.
    """

    rule: str
    status: str
    conditions: tuple[tuple[str, bool], ...]
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("ok", "empirical")


class _Checker:
    # collects (condition, verdict) pairs; goes dead at the first failure
    def __init__(self, rule: str):
        self.rule = rule
        self.conds: list[tuple[str, bool]] = []
        self.detail = ""
        self.alive = True

    def need(self, desc: str, test) -> bool:
        if not self.alive:
            return False
        try:
            ok = bool(test() if callable(test) else test)
        except ValueError as exc:
            ok = False
            self.detail = f"{desc}: {exc}"
        self.conds.append((desc, ok))
        if not ok:
            self.alive = False
            if not self.detail:
                self.detail = desc
        return ok

    def report(self, status: str | None = None) -> CheckReport:
        if status is None:
            status = "ok" if self.alive else "failed"
        return CheckReport(self.rule, status, tuple(self.conds), self.detail)


# --- shared rule plumbing ----------------------------------------------------


def _only_stmt(prog: Program) -> Stmt | None:
    body = flatten(prog.body)
    return body[0] if len(body) == 1 else None


def _listed_regs(names: Sequence[str], dims: Sequence[int]) -> RegSet:
    return RegSet(VarDecl(n, d) for n, d in zip(names, dims))


def _canonical_matrix(names: Sequence[str], dims: Sequence[int],
                      mat: np.ndarray) -> np.ndarray:
    order = sorted(range(len(names)), key=lambda k: names[k])
    return permute_factors(np.asarray(mat), list(dims), order)


def _range_atom(stmt: IfMeasure | WhileMeasure, label: str) -> AtomProj:
    """Projection atom for the column space of one outcome operator."""
    regs = _listed_regs(stmt.regs, stmt.dims)
    m = _canonical_matrix(stmt.regs, stmt.dims, stmt.ops[label])
    return AtomProj(Projection(regs, support(m @ m.conj().T)))


def _split_measured_pre(pre: Formula, regs: RegSet) -> Formula | None:
    # phi * D(regs), with D the identity projection on the measured registers
    if not isinstance(pre, Star):
        return None
    right = pre.right
    if isinstance(right, AtomProj) and right.proj.equiv(Projection.identity(regs)):
        return pre.left
    return None


def _touched(prog: Program) -> RegSet:
    return prog.regs.restricted_to(stmt_vars(prog.body))


def _names_clash(phi: Formula, prog: Program) -> bool:
    return bool(set(free(phi).names) & stmt_vars(prog.body))


# --- the rules ----------------------------------------------------------------


def _check_skip(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Skip")
    c.need("no premises", not node.premises)
    c.need("program is skip", lambda: isinstance(_only_stmt(node.conclusion.prog), Skip))
    c.need("precondition equals the postcondition",
           lambda: formulas_equal(node.conclusion.pre, node.conclusion.post,
                                  atol=atol))
    return c.report()


def _check_init(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Init")
    c.need("no premises", not node.premises)
    stmt = _only_stmt(node.conclusion.prog)
    if not c.need("program is a single initialization", isinstance(stmt, Init)):
        return c.report()
    mod = modify_formula(node.conclusion.post, stmt)
    if not c.need("postcondition modification is defined", is_defined(mod)):
        return c.report()
    c.need("precondition is the modified postcondition",
           lambda: formulas_equal(node.conclusion.pre, mod, atol=atol))
    return c.report()


def _check_unit(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Unit")
    c.need("no premises", not node.premises)
    stmt = _only_stmt(node.conclusion.prog)
    if not c.need("program is a single unitary", isinstance(stmt, Unitary)):
        return c.report()
    mod = modify_formula(node.conclusion.post, stmt)
    if not c.need("postcondition modification is defined", is_defined(mod)):
        return c.report()
    c.need("precondition is the modified postcondition",
           lambda: formulas_equal(node.conclusion.pre, mod, atol=atol))
    return c.report()


def _check_perm(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Perm")
    c.need("no premises", not node.premises)
    stmt = _only_stmt(node.conclusion.prog)
    named = None
    if isinstance(stmt, Unitary) and stmt.gate.startswith("perm("):
        named = parse_perm_name(stmt.gate)
    if not c.need("program is a single permutation gate", named is not None):
        return c.report()
    src, dst = named
    if not c.need("gate names the registers it is applied to",
                  tuple(src) == stmt.regs):
        return c.report()
    t = get_tolerance() if atol is None else float(atol)
    want = permutation_unitary(stmt.dims, [src.index(d) for d in dst])
    c.need("gate matrix is the register permutation",
           lambda: np.max(np.abs(stmt.mat - want), initial=0.0) <= t * 10)
    # after the gate, src[k] holds what dst[k] held, so the talk about
    # src[k] in the post becomes talk about dst[k] in the pre
    c.need("precondition is the renamed postcondition",
           lambda: formulas_equal(
               node.conclusion.pre,
               rename_formula(node.conclusion.post, dict(zip(src, dst))),
               atol=atol))
    return c.report()


def _check_seq(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Seq")
    if not c.need("at least two premises", len(node.premises) >= 2):
        return c.report()
    js = [p.conclusion for p in node.premises]
    for k in range(len(js) - 1):
        if not c.need(f"premises {k} and {k + 1} agree at the seam",
                      lambda k=k: formulas_equal(js[k].post, js[k + 1].pre,
                                                 atol=atol)):
            return c.report()
    c.need("precondition comes from the first premise",
           lambda: formulas_equal(node.conclusion.pre, js[0].pre, atol=atol))
    c.need("postcondition comes from the last premise",
           lambda: formulas_equal(node.conclusion.post, js[-1].post, atol=atol))
    stitched = []
    for j in js:
        stitched.extend(flatten(j.prog.body))
    c.need("premise programs concatenate to the conclusion program",
           lambda: programs_equal(node.conclusion.prog,
                                  Program(Seq(tuple(stitched)),
                                          node.conclusion.prog.regs),
                                  atol=atol))
    return c.report()


def _check_rif(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("RIf")
    stmt = _only_stmt(node.conclusion.prog)
    if not c.need("program is a single measurement branch",
                  isinstance(stmt, IfMeasure)):
        return c.report()
    regs = _listed_regs(stmt.regs, stmt.dims)
    phi = _split_measured_pre(node.conclusion.pre, regs)
    if not c.need("precondition stars the full measured domain",
                  phi is not None):
        return c.report()
    c.need("postcondition admits classical merging",
           lambda: in_cm(node.conclusion.post))
    if not c.need("one premise per outcome",
                  len(node.premises) == len(stmt.arms)):
        return c.report()
    for k, (label, body) in enumerate(stmt.arms):
        jp = node.premises[k].conclusion
        c.need(f"premise {k} runs the {label!r} arm",
               lambda jp=jp, body=body: programs_equal(
                   jp.prog, Program(body, node.conclusion.prog.regs),
                   atol=atol))
        c.need(f"premise {k} assumes the {label!r} outcome range",
               lambda jp=jp, label=label: formulas_equal(
                   jp.pre, Star(phi, _range_atom(stmt, label)), atol=atol))
        c.need(f"premise {k} concludes the postcondition",
               lambda jp=jp: formulas_equal(jp.post, node.conclusion.post,
                                            atol=atol))
    return c.report()


def _check_rloop(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("RLoop")
    stmt = _only_stmt(node.conclusion.prog)
    if not c.need("program is a single measurement loop",
                  isinstance(stmt, WhileMeasure)):
        return c.report()
    regs = _listed_regs(stmt.regs, stmt.dims)
    phi = _split_measured_pre(node.conclusion.pre, regs)
    if not c.need("precondition stars the full guarded domain",
                  phi is not None):
        return c.report()
    c.need("invariant admits classical merging", lambda: in_cm(phi))
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    c.need("premise runs the loop body",
           lambda: programs_equal(jp.prog,
                                  Program(stmt.body, node.conclusion.prog.regs),
                                  atol=atol))
    c.need("premise assumes the continue outcome range",
           lambda: formulas_equal(jp.pre, Star(phi, _range_atom(stmt, "1")),
                                  atol=atol))
    c.need("premise restores the loop precondition",
           lambda: formulas_equal(jp.post, node.conclusion.pre, atol=atol))
    c.need("postcondition is the invariant with the exit outcome range",
           lambda: formulas_equal(node.conclusion.post,
                                  And(phi, _range_atom(stmt, "0")), atol=atol))
    return c.report()


def _check_weak(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Weak")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    sides = (("precondition strengthening", jc.pre, jp.pre),
             ("postcondition weakening", jp.post, jc.post))
    unsettled = refuted = None
    for desc, a, b in sides:
        verdict = entails_global(a, b, atol=atol)
        c.conds.append((f"{desc} is proved", verdict is Entailment.PROVED))
        if verdict is Entailment.DISPROVED and refuted is None:
            refuted = desc
        if verdict is Entailment.UNKNOWN and unsettled is None:
            unsettled = desc
    if refuted is not None:
        c.alive = False
        c.detail = f"{refuted} is refuted"
        return c.report("failed")
    if unsettled is not None:
        c.alive = False
        c.detail = f"{unsettled} is neither proved nor refuted"
        return c.report("unproved entailment")
    return c.report()


def _check_two_sided(node: ProofNode, atol: float | None, ctor,
                     word: str) -> CheckReport:
    c = _Checker("Conj" if ctor is And else "Disj")
    if not c.need("two premises", len(node.premises) == 2):
        return c.report()
    j1, j2 = (p.conclusion for p in node.premises)
    jc = node.conclusion
    c.need("premise programs match the conclusion",
           lambda: programs_equal(jc.prog, j1.prog, atol=atol)
           and programs_equal(jc.prog, j2.prog, atol=atol))
    c.need(f"precondition is the {word} of the premise preconditions",
           lambda: formulas_equal(jc.pre, ctor(j1.pre, j2.pre), atol=atol))
    c.need(f"postcondition is the {word} of the premise postconditions",
           lambda: formulas_equal(jc.post, ctor(j1.post, j2.post), atol=atol))
    return c.report()


def _check_conj(node: ProofNode, atol: float | None) -> CheckReport:
    return _check_two_sided(node, atol, And, "conjunction")


def _check_disj(node: ProofNode, atol: float | None) -> CheckReport:
    return _check_two_sided(node, atol, Or, "disjunction")


def _check_const(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Const")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    if not c.need("precondition conjoins a side assertion",
                  lambda: isinstance(jc.pre, And)
                  and formulas_equal(jc.pre.left, jp.pre, atol=atol)):
        return c.report()
    mu = jc.pre.right
    c.need("postcondition conjoins the same side assertion",
           lambda: formulas_equal(jc.post, And(jp.post, mu), atol=atol))
    c.need("side assertion avoids the program registers",
           lambda: not _names_clash(mu, jc.prog))
    return c.report()


def _check_frame(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Frame")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    if not c.need("precondition stars a frame onto the premise precondition",
                  lambda: isinstance(jc.pre, Star)
                  and formulas_equal(jc.pre.left, jp.pre, atol=atol)):
        return c.report()
    mu = jc.pre.right
    c.need("postcondition stars the same frame",
           lambda: formulas_equal(jc.post, Star(jp.post, mu), atol=atol))
    c.need("frame avoids the program registers",
           lambda: not _names_clash(mu, jc.prog))
    c.need("postcondition stays inside the precondition or is strictly positive",
           lambda: (free(jp.post) | _touched(jp.prog)).issubset(free(jp.pre))
           or in_sp(jp.post))
    return c.report()


def _check_frameu(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("FrameU")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    if not c.need("premise precondition is top", isinstance(jp.pre, Top)):
        return c.report()
    if not c.need("premise postcondition is a uniformity atom",
                  isinstance(jp.post, AtomU)):
        return c.report()
    if not c.need("conclusion precondition is a uniformity atom",
                  isinstance(jc.pre, AtomU)):
        return c.report()
    s1, s2 = jp.post.regs, jc.pre.regs
    c.need("framed registers avoid the program and the premise atom",
           lambda: s2.isdisjoint(_touched(jc.prog) | s1))
    c.need("conclusion postcondition joins the atoms",
           lambda: formulas_equal(jc.post, AtomU(s1 | s2), atol=atol))
    direct_ok = c.alive
    # the same step must also fall out of Frame plus two entailments;
    # disagreement between the two code paths is itself a failure
    try:
        expanded = ProofNode(
            "Frame",
            Judgment(Star(Top(), jc.pre), jc.prog, Star(jp.post, jc.pre)),
            (node.premises[0],),
        )
        expansion_ok = (
            _check_frame(expanded, atol).ok
            and entails_global(jc.pre, Star(Top(), jc.pre),
                               atol=atol) is Entailment.PROVED
            and entails_global(Star(jp.post, jc.pre), AtomU(s1 | s2),
                               atol=atol) is Entailment.PROVED
            and formulas_equal(jc.post, AtomU(s1 | s2), atol=atol)
        )
    except ValueError:
        expansion_ok = False
    agreed = expansion_ok == direct_ok
    c.conds.append(("frame expansion reaches the same verdict", agreed))
    if not agreed:
        c.alive = False
        c.detail = "the direct check and the frame expansion disagree"
    return c.report()


def _check_uncr(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("UnCR")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    op = node.evidence.get("op")
    if not c.need("evidence carries a quantum operation",
                  isinstance(op, QuantumOperation)):
        return c.report()
    c.need("operation registers avoid the program",
           lambda: not (set(op.domain.names) & stmt_vars(jc.prog.body)))
    pre2 = e_modify(jp.pre, op)
    post2 = e_modify(jp.post, op)
    c.need("premise precondition transforms", is_defined(pre2))
    c.need("premise postcondition transforms", is_defined(post2))
    c.need("precondition is the transformed premise precondition",
           lambda: formulas_equal(jc.pre, pre2, atol=atol))
    c.need("postcondition is the transformed premise postcondition",
           lambda: formulas_equal(jc.post, post2, atol=atol))
    return c.report()


def _mirror_projection(q: Projection, both: RegSet,
                       pairs: Sequence[tuple[str, str]]) -> np.ndarray:
    # the same operator on the mirror half, matched up pair by pair
    to_mirror = {a: b for a, b in pairs}
    renamed = [to_mirror[n] for n in q.domain.names]
    mregs = both.restricted_to(renamed)
    order = [renamed.index(n) for n in mregs.names]
    return permute_factors(q.matrix(), list(q.domain.dims), order)


def _pepr_pre(psi: Projection, q: Projection,
              pairs: Sequence[tuple[str, str]]) -> AtomProj:
    """Pull the evidence projection back through the entangled premise."""
    both = psi.domain
    to_mirror = {a: b for a, b in pairs}
    mnames = [to_mirror[n] for n in q.domain.names]
    qm = _mirror_projection(q, both, pairs)
    lifted = embed_operator(qm, both.restricted_to(mnames), both)
    cut = lifted @ psi.matrix() @ lifted
    keep = [both.index(n) for n in q.domain.names]
    reduced = partial_trace(cut, list(both.dims), keep)
    return AtomProj(Projection(q.domain, eigenspace_one(q.domain.dim * reduced)))


def _is_mes(phi: Formula, qregs: RegSet, mregs: RegSet,
            atol: float | None) -> bool:
    # rank-one projection whose halves are both maximally mixed
    if not isinstance(phi, AtomProj):
        return False
    p = phi.proj
    if p.domain != (qregs | mregs) or p.rank != 1:
        return False
    t = get_tolerance() if atol is None else float(atol)
    rho = p.matrix()
    dims = list(p.domain.dims)
    a = partial_trace(rho, dims, [p.domain.index(n) for n in qregs.names])
    b = partial_trace(rho, dims, [p.domain.index(n) for n in mregs.names])
    d1, d2 = qregs.dim, mregs.dim
    return (d1 == d2
            and float(np.max(np.abs(a - np.eye(d1) / d1))) <= t * 10
            and float(np.max(np.abs(b - np.eye(d2) / d2))) <= t * 10)


def _check_pepr(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("PEPR")
    if not c.need("one premise", len(node.premises) == 1):
        return c.report()
    jp = node.premises[0].conclusion
    jc = node.conclusion
    if not c.need("programs match",
                  lambda: programs_equal(jc.prog, jp.prog, atol=atol)):
        return c.report()
    pairs = node.evidence.get("pairs")
    good_pairs = (
        isinstance(pairs, (tuple, list)) and len(pairs) > 0
        and all(isinstance(p, (tuple, list)) and len(p) == 2
                and all(isinstance(n, str) for n in p) for p in pairs)
    )
    if not c.need("evidence pairs system registers with mirrors", good_pairs):
        return c.report()
    pairs = tuple((a, b) for a, b in pairs)
    qnames = [a for a, _ in pairs]
    mnames = [b for _, b in pairs]
    if not c.need("premise precondition is a projection atom",
                  isinstance(jp.pre, AtomProj)):
        return c.report()
    psi = jp.pre.proj
    both = psi.domain
    if not c.need("pairing covers the premise projection exactly",
                  sorted(qnames + mnames) == list(both.names)):
        return c.report()
    c.need("paired registers have matching dimensions",
           lambda: all(both.decl(a).dim == both.decl(b).dim
                       for a, b in pairs))
    qregs = both.restricted_to(qnames)
    mregs = both.restricted_to(mnames)
    c.need("program registers lie in the system half",
           lambda: stmt_vars(jc.prog.body) <= set(qnames))
    if not c.need("conclusion postcondition is a projection on the system half",
                  lambda: isinstance(jc.post, AtomProj)
                  and jc.post.proj.domain == qregs):
        return c.report()
    c.need("premise postcondition is maximally entangled across the halves",
           lambda: _is_mes(jp.post, qregs, mregs, atol))
    c.need("conclusion precondition is the mirrored pullback",
           lambda: formulas_equal(jc.pre, _pepr_pre(psi, jc.post.proj, pairs),
                                  atol=atol))
    return c.report()


def _check_oracle(node: ProofNode, atol: float | None) -> CheckReport:
    c = _Checker("Oracle")
    c.need("no premises", not node.premises)
    trials = node.evidence.get("trials", 100)
    seed = node.evidence.get("seed", 0)
    if not c.need("evidence gives a trial count and a seed",
                  isinstance(trials, int) and trials >= 0
                  and isinstance(seed, int)):
        return c.report()
    from .oracle import Counterexample, validate_triple  # heavy; leaf rule only

    def run():
        verdict = validate_triple(node.conclusion.pre, node.conclusion.prog,
                                  node.conclusion.post,
                                  rng=np.random.default_rng(seed),
                                  trials=trials, atol=atol)
        if isinstance(verdict, Counterexample):
            c.detail = "random search found an input breaking the triple"
            return False
        return True

    c.need(f"no counterexample in {trials} trials", run)
    return c.report("empirical" if c.alive else "failed")


_CHECKERS: dict[str, Callable[[ProofNode, float | None], CheckReport]] = {
    "Skip": _check_skip,
    "Init": _check_init,
    "Unit": _check_unit,
    "Seq": _check_seq,
    "RIf": _check_rif,
    "RLoop": _check_rloop,
    "Weak": _check_weak,
    "Conj": _check_conj,
    "Disj": _check_disj,
    "Const": _check_const,
    "Frame": _check_frame,
    "FrameU": _check_frameu,
    "UnCR": _check_uncr,
    "Perm": _check_perm,
    "PEPR": _check_pepr,
    "Oracle": _check_oracle,
}


def check_rule(node: ProofNode, *, atol: float | None = None) -> CheckReport:
    """Validate one rule application; premise conclusions are taken as given."""
    return _CHECKERS[node.rule](node, atol)


@dataclass(frozen=True)
class ProofReport:
    """Per-node reports for a whole tree, keyed by dotted premise paths."""

    ok: bool
    rows: tuple[tuple[str, CheckReport], ...]

    @property
    def empirical(self) -> tuple[str, ...]:
        """Paths of Oracle leaves: judgments tested, not derived."""
        return tuple(p for p, r in self.rows if r.status == "empirical")

    @property
    def failures(self) -> tuple[str, ...]:
        return tuple(p for p, r in self.rows if not r.ok)


def check_proof(root: ProofNode, *, atol: float | None = None) -> ProofReport:
    """Check every rule application in the tree.

    Paths are dotted premise indices from the root ("0", "0.1", ...).
    Sharing a subtree between branches is fine; a node reachable from
    itself is refused.
    """
    rows: list[tuple[str, CheckReport]] = []

    def walk(node: ProofNode, path: str, above: frozenset[int]):
        if id(node) in above:
            raise ProofError(f"proof graph has a cycle through node {path}")
        rows.append((path, check_rule(node, atol=atol)))
        for k, prem in enumerate(node.premises):
            walk(prem, f"{path}.{k}", above | {id(node)})

    walk(root, "0", frozenset())
    return ProofReport(all(r.ok for _, r in rows), tuple(rows))


# --- proof scripts ------------------------------------------------------------


_SEXP_TOKEN = re.compile(r'\s+|;[^\n]*|[()]|"(?:[^"\\]|\\.)*"|[^\s()";]+')

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n"}


def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{out}"'


def _unquote(tok: str) -> str:
    out = []
    i = 1
    while i < len(tok) - 1:
        ch = tok[i]
        if ch == "\\":
            i += 1
            esc = tok[i]
            if esc not in _ESCAPES:
                raise ProofError(f"unknown escape \\{esc} in string")
            out.append(_ESCAPES[esc])
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _lex_sexp(text: str) -> list[tuple[str, str]]:
    toks: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _SEXP_TOKEN.match(text, pos)
        if m is None:
            raise ProofError(f"bad proof script character at offset {pos}")
        tok = m.group()
        pos = m.end()
        if tok.isspace() or tok.startswith(";"):
            continue
        if tok in "()":
            toks.append((tok, tok))
        elif tok.startswith('"'):
            if len(tok) < 2 or not tok.endswith('"'):
                raise ProofError("unterminated string in proof script")
            toks.append(("str", _unquote(tok)))
        else:
            toks.append(("atom", tok))
    return toks


def _read_sexp(toks: list[tuple[str, str]], at: int):
    kind, val = toks[at]
    if kind == "(":
        items = []
        at += 1
        while at < len(toks) and toks[at][0] != ")":
            item, at = _read_sexp(toks, at)
            items.append(item)
        if at >= len(toks):
            raise ProofError("unbalanced parenthesis in proof script")
        return ("list", items), at + 1
    if kind == ")":
        raise ProofError("stray closing parenthesis in proof script")
    return (kind, val), at + 1


def _formula_scope(manifest: Manifest | None, prog: Program) -> Manifest:
    # formulas see the program's register dims on top of the manifest's
    dims = dict(manifest.dims) if manifest else {}
    for d in prog.regs:
        dims[d.name] = d.dim
    if manifest is None:
        return Manifest(dims=dims)
    return Manifest(dims=dims, unitaries=manifest.unitaries,
                    measurements=manifest.measurements,
                    projectors=manifest.projectors)


def _ev_int(item, head: str) -> int:
    if len(item) != 2 or item[1][0] != "atom":
        raise ProofError(f"evidence ({head} ...) takes one integer")
    try:
        return int(item[1][1])
    except ValueError:
        raise ProofError(f"evidence ({head} ...) takes one integer") from None


def _parse_evidence(rule: str, items, scope: Manifest) -> dict:
    ev: dict[str, object] = {}
    pairs: list[tuple[str, str]] = []
    domain: list[tuple[str, int]] = []
    kraus: list[np.ndarray] = []
    for raw in items:
        if raw[0] != "list" or not raw[1] or raw[1][0][0] != "atom":
            raise ProofError("evidence entries look like (key value ...)")
        entry = raw[1]
        head = entry[0][1]
        if rule == "Oracle" and head in ("trials", "seed"):
            ev[head] = _ev_int(entry, head)
        elif rule == "PEPR" and head == "pair":
            names = [v for k, v in entry[1:] if k == "atom"]
            if len(names) != len(entry) - 1 or len(names) != 2:
                raise ProofError("evidence (pair ...) takes two register names")
            pairs.append((names[0], names[1]))
        elif rule == "UnCR" and head == "domain":
            for kind, val in entry[1:]:
                if kind != "atom":
                    raise ProofError("evidence (domain ...) takes register names")
                name, _, dim = val.partition(":")
                domain.append((name, int(dim) if dim
                               else scope.dims.get(name, 2)))
        elif rule == "UnCR" and head == "kraus":
            for kind, val in entry[1:]:
                if kind != "str":
                    raise ProofError("evidence (kraus ...) takes matrix strings")
                kraus.append(_parse_matrix_literal(re.sub(r"\s+", "", val)))
        else:
            raise ProofError(f"rule {rule} does not take evidence ({head} ...)")
    if pairs:
        ev["pairs"] = tuple(pairs)
    if domain or kraus:
        ev["op"] = QuantumOperation(RegSet.from_pairs(domain), tuple(kraus))
    return ev


def _infer_post(rule: str, pre: Formula | None,
                premises: tuple[ProofNode, ...]) -> Formula:
    if rule == "Skip" and pre is not None:
        return pre
    if rule == "Seq" and premises:
        return premises[-1].conclusion.post
    raise ProofError(f"rule {rule} cannot infer its postcondition")


def _infer_pre(rule: str, prog: Program, post: Formula,
               premises: tuple[ProofNode, ...], evidence: dict) -> Formula:
    if rule == "Skip":
        return post
    if rule == "Seq" and premises:
        return premises[0].conclusion.pre
    if rule in ("Init", "Unit"):
        stmt = _only_stmt(prog)
        if not isinstance(stmt, (Init, Unitary)):
            raise ProofError(f"rule {rule} needs a single command to infer from")
        mod = modify_formula(post, stmt)
        if not is_defined(mod):
            raise ProofError(
                "the postcondition modification is undefined; "
                "give the precondition explicitly")
        return mod
    if rule == "Perm":
        stmt = _only_stmt(prog)
        named = (parse_perm_name(stmt.gate)
                 if isinstance(stmt, Unitary) and stmt.gate.startswith("perm(")
                 else None)
        if named is None:
            raise ProofError("rule Perm needs a permutation gate to infer from")
        src, dst = named
        return rename_formula(post, dict(zip(src, dst)))
    if rule == "PEPR":
        pairs = evidence.get("pairs")
        if not (premises and pairs and isinstance(post, AtomProj)
                and isinstance(premises[0].conclusion.pre, AtomProj)):
            raise ProofError("rule PEPR needs its premise, pairing, and "
                             "projection postcondition to infer from")
        return _pepr_pre(premises[0].conclusion.pre.proj, post.proj, pairs)
    raise ProofError(f"rule {rule} cannot infer its precondition")


def _build_node(sx, manifest: Manifest | None) -> ProofNode:
    if sx[0] != "list" or len(sx[1]) < 2 or sx[1][0] != ("atom", "rule"):
        raise ProofError("each proof node looks like (rule NAME ...)")
    items = sx[1]
    if items[1][0] != "atom" or items[1][1] not in RULES:
        raise ProofError(f"unknown rule {items[1][1]!r}")
    rule = items[1][1]
    slots: dict[str, object] = {}
    for raw in items[2:]:
        if raw[0] != "list" or not raw[1] or raw[1][0][0] != "atom":
            raise ProofError(f"bad slot in (rule {rule} ...)")
        head = raw[1][0][1]
        if head not in ("pre", "prog", "post", "evidence", "premises"):
            raise ProofError(f"unknown slot ({head} ...)")
        if head in slots:
            raise ProofError(f"duplicate slot ({head} ...)")
        slots[head] = raw[1][1:]

    premises = tuple(_build_node(s, manifest)
                     for s in slots.get("premises", []))

    def slot_text(head: str):
        body = slots.get(head)
        if body is None:
            raise ProofError(f"(rule {rule} ...) is missing its ({head} ...) slot")
        if len(body) != 1 or body[0][0] not in ("str", "atom"):
            raise ProofError(f"slot ({head} ...) takes one quoted string or _")
        kind, val = body[0]
        if kind == "atom":
            if val != "_":
                raise ProofError(f"slot ({head} ...) takes one quoted string or _")
            return None
        return val

    prog_text = slot_text("prog")
    if prog_text is None:
        if rule != "Seq" or not premises:
            raise ProofError("only Seq can infer its program from premises")
        stmts: list[Stmt] = []
        regs = RegSet.empty()
        for p in premises:
            stmts.extend(flatten(p.conclusion.prog.body))
            regs = regs | p.conclusion.prog.regs
        prog = Program(Seq(tuple(stmts)), regs)
    else:
        prog = parse_program(prog_text, manifest)
    scope = _formula_scope(manifest, prog)

    evidence = _parse_evidence(rule, slots.get("evidence", []), scope)

    pre_text = slot_text("pre")
    post_text = slot_text("post")
    pre = parse_formula(pre_text, scope) if pre_text is not None else None
    post = parse_formula(post_text, scope) if post_text is not None else None
    if post is None:
        post = _infer_post(rule, pre, premises)
    if pre is None:
        pre = _infer_pre(rule, prog, post, premises, evidence)
    return ProofNode(rule, Judgment(pre, prog, post), premises, evidence)


def parse_proof(text: str, manifest: Manifest | None = None) -> ProofNode:
    """Parse a proof script into its tree (see the module docstring)."""
    toks = _lex_sexp(text)
    if not toks:
        raise ProofError("empty proof script")
    sx, at = _read_sexp(toks, 0)
    if at != len(toks):
        raise ProofError("trailing text after the proof")
    return _build_node(sx, manifest)


def _fmt_evidence(node: ProofNode) -> list[str]:
    items: list[str] = []
    ev = node.evidence
    for key in ev:
        if node.rule == "Oracle" and key in ("trials", "seed"):
            continue
        if node.rule == "PEPR" and key == "pairs":
            continue
        if node.rule == "UnCR" and key == "op":
            continue
        raise ProofError(f"cannot print evidence {key!r} for rule {node.rule}")
    if node.rule == "Oracle" and ev:
        if "trials" in ev:
            items.append(f"(trials {ev['trials']})")
        if "seed" in ev:
            items.append(f"(seed {ev['seed']})")
    elif node.rule == "PEPR" and "pairs" in ev:
        items.extend(f"(pair {a} {b})" for a, b in ev["pairs"])
    elif node.rule == "UnCR" and "op" in ev:
        op = ev["op"]
        names = " ".join(f"{d.name}:{d.dim}" for d in op.domain)
        items.append(f"(domain {names})")
        mats = " ".join(_quote(_fmt_matrix(k)) for k in op.kraus)
        items.append(f"(kraus {mats})")
    return items


def _fmt_node(node: ProofNode, indent: int) -> str:
    pad = "  " * indent
    lines = [
        f"{pad}(rule {node.rule}",
        f"{pad}  (pre {_quote(print_formula(node.conclusion.pre))})",
        f"{pad}  (prog {_quote(print_program(node.conclusion.prog))})",
        f"{pad}  (post {_quote(print_formula(node.conclusion.post))})",
    ]
    ev = _fmt_evidence(node)
    if ev:
        lines.append(f"{pad}  (evidence {' '.join(ev)})")
    if node.premises:
        blocks = [_fmt_node(p, indent + 2) for p in node.premises]
        lines.append(f"{pad}  (premises\n" + "\n".join(blocks) + ")")
    return "\n".join(lines) + ")"


def print_proof(node: ProofNode) -> str:
    """Canonical script text; reparses to an equal tree, byte for byte."""
    return _fmt_node(node, 0) + "\n"
