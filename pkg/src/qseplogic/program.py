"""Quantum while-programs: syntax, parsing, and semantics.

Statements are ``skip``, initialization ``q := |0>``, unitary application
``q,r := G[q,r]``, measurement branching ``if M[q] = l1 -> S1 [] l2 -> S2 fi``
(one arm per outcome), and measurement loops ``while M[q] = 1 do S od``
(outcome "1" continues, "0" exits; both operators must be projectors).
``for i = 1 .. n do ... od`` is sugar: the body is replicated with the
loop index substituted into underscore-separated name segments, so
``q_i`` becomes ``q_1``, ``q_2``, and so on.

Register dimensions are inferred by unification: gate and measurement
arities bind them, permutation gates equate them pairwise, and anything
still free defaults to a qubit. A :class:`~qseplogic.state.Manifest` can
pre-bind dimensions and supply custom gates and measurements.

Denotation maps a state over (at least) the program's registers forward
through the branch sum; loops are summed to a truncation bound and a
:class:`LoopTruncationWarning` reports any unresolved tail weight.
``dual_wp`` pulls a projector backward through a loop-free program via
the adjoint operation and takes the eigenvalue-1 space at the end, which
is exactly the weakest precondition because every statement here is
trace preserving.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .linalg import (
    as_cmatrix,
    eigenspace_one,
    get_tolerance,
    is_projector_matrix,
    partial_trace,
)
from .state import (
    Manifest,
    Projection,
    QState,
    RegSet,
    VarDecl,
    builtin_gate_dims,
    builtin_measurement,
    builtin_unitary,
    embed_operator,
    parse_perm_name,
    perm_name,
    permutation_unitary,
    permute_factors,
    sandwich,
)

__all__ = [
    "IfMeasure",
    "Init",
    "LoopTruncationWarning",
    "Program",
    "ProgramError",
    "SemanticsConfig",
    "Seq",
    "Skip",
    "Stmt",
    "Unitary",
    "WhileMeasure",
    "denote",
    "dual_wp",
    "flatten",
    "parse_program",
    "print_program",
    "program_vars",
    "programs_equal",
    "stmt_vars",
    "stmts_equal",
]


class ProgramError(ValueError):
    """Syntax error, unification failure, or malformed program structure."""


class LoopTruncationWarning(UserWarning):
    """A while-loop sum was cut off with weight still in flight."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SemanticsConfig:
    """Loop truncation policy for :func:`denote`."""

    max_loop_iters: int = 512
    tail_tol: float = 1e-12


class Stmt:
    """Base class for program statements."""

    __slots__ = ()


@dataclass(frozen=True)
class Skip(Stmt):
    pass


@dataclass(frozen=True)
class Init(Stmt):
    """``var := |0>``: trace out the register, then load basis state 0."""

    var: str
    dim: int


@dataclass(frozen=True, eq=False)
class Unitary(Stmt):
    """``regs := gate[regs]``; ``mat`` is in the listed register order."""

    regs: tuple[str, ...]
    dims: tuple[int, ...]
    gate: str
    mat: np.ndarray

    def __post_init__(self):
        m = as_cmatrix(self.mat)
        d = int(np.prod(self.dims))
        if m.shape != (d, d):
            raise ProgramError(f"gate {self.gate}: matrix shape {m.shape} != dims {self.dims}")
        if len(set(self.regs)) != len(self.regs):
            raise ProgramError(f"gate {self.gate}: repeated register in {self.regs}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)


def _freeze_ops(ops: Mapping[str, np.ndarray], dims: Sequence[int],
                what: str) -> Mapping[str, np.ndarray]:
    d = int(np.prod(dims))
    clean = {}
    acc = np.zeros((d, d), dtype=complex)
    for label, op in ops.items():
        m = as_cmatrix(op)
        if m.shape != (d, d):
            raise ProgramError(f"{what}: outcome {label} shape {m.shape} != dims {tuple(dims)}")
        acc = acc + m.conj().T @ m
        m = m.copy()
        m.setflags(write=False)
        clean[str(label)] = m
    if np.max(np.abs(acc - np.eye(d))) > get_tolerance() * 100:
        raise ProgramError(f"{what}: outcome operators do not sum to the identity")
    return MappingProxyType(clean)


@dataclass(frozen=True, eq=False)
class IfMeasure(Stmt):
    """Measure, then run the arm matching the outcome (one arm each)."""

    meas: str
    regs: tuple[str, ...]
    dims: tuple[int, ...]
    arms: tuple[tuple[str, "Stmt"], ...]
    ops: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "ops", _freeze_ops(self.ops, self.dims,
                                                    f"measurement {self.meas}"))
        labels = [l for l, _ in self.arms]
        if sorted(labels) != sorted(self.ops):
            raise ProgramError(
                f"if over {self.meas}: arms {sorted(labels)} do not cover "
                f"outcomes {sorted(self.ops)} exactly"
            )


@dataclass(frozen=True, eq=False)
class WhileMeasure(Stmt):
    """Repeat the body while the projective guard yields outcome 1."""

    meas: str
    regs: tuple[str, ...]
    dims: tuple[int, ...]
    body: "Stmt"
    ops: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "ops", _freeze_ops(self.ops, self.dims,
                                                    f"measurement {self.meas}"))
        if sorted(self.ops) != ["0", "1"]:
            raise ProgramError("while guard needs exactly outcomes 0 and 1")
        for label, m in self.ops.items():
            if not is_projector_matrix(m, atol=get_tolerance() * 10):
                raise ProgramError(f"while guard outcome {label} is not a projector")


@dataclass(frozen=True, eq=False)
class Seq(Stmt):
    stmts: tuple[Stmt, ...]

    def __post_init__(self):
        if not self.stmts:
            raise ProgramError("empty sequence")
        for s in self.stmts:
            if not isinstance(s, Stmt):
                raise ProgramError(f"not a statement: {s!r}")


def stmt_vars(stmt: Stmt) -> frozenset[str]:
    """All register names the statement touches."""
    if isinstance(stmt, Skip):
        return frozenset()
    if isinstance(stmt, Init):
        return frozenset((stmt.var,))
    if isinstance(stmt, Unitary):
        return frozenset(stmt.regs)
    if isinstance(stmt, IfMeasure):
        out = frozenset(stmt.regs)
        for _, s in stmt.arms:
            out |= stmt_vars(s)
        return out
    if isinstance(stmt, WhileMeasure):
        return frozenset(stmt.regs) | stmt_vars(stmt.body)
    if isinstance(stmt, Seq):
        out: frozenset[str] = frozenset()
        for s in stmt.stmts:
            out |= stmt_vars(s)
        return out
    raise ProgramError(f"unknown statement {stmt!r}")


def _stmt_regset(stmt: Stmt) -> RegSet:
    if isinstance(stmt, Init):
        return RegSet([VarDecl(stmt.var, stmt.dim)])
    if isinstance(stmt, (Unitary, IfMeasure, WhileMeasure)):
        rs = RegSet(VarDecl(n, d) for n, d in zip(stmt.regs, stmt.dims))
        if isinstance(stmt, IfMeasure):
            for _, s in stmt.arms:
                rs = rs | _stmt_regset(s)
        if isinstance(stmt, WhileMeasure):
            rs = rs | _stmt_regset(stmt.body)
        return rs
    if isinstance(stmt, Seq):
        rs = RegSet.empty()
        for s in stmt.stmts:
            rs = rs | _stmt_regset(s)
        return rs
    return RegSet.empty()


class Program:
    """A statement with its full register declaration."""

    __slots__ = ("body", "regs")

    def __init__(self, body: Stmt, regs: RegSet):
        used = _stmt_regset(body)
        if not used.issubset(regs):
            raise ProgramError(
                f"program uses {used!r} which is not covered by {regs!r}"
            )
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "regs", regs)

    def __setattr__(self, *args):
        raise AttributeError("Program is immutable")

    @property
    def vars(self) -> RegSet:
        return self.regs

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Program({self.regs!r})"


def program_vars(prog: Program) -> RegSet:
    return prog.regs


def flatten(stmt: Stmt) -> list[Stmt]:
    """Statement list with sequence nesting removed."""
    if isinstance(stmt, Seq):
        out: list[Stmt] = []
        for s in stmt.stmts:
            out.extend(flatten(s))
        return out
    return [stmt]


def _sorted_perm(regs: Sequence[str]) -> list[int]:
    return sorted(range(len(regs)), key=lambda k: regs[k])


def _canonical_op(op: np.ndarray, regs: Sequence[str],
                  dims: Sequence[int]) -> tuple[tuple[str, ...], np.ndarray]:
    order = _sorted_perm(regs)
    names = tuple(regs[k] for k in order)
    return names, permute_factors(op, list(dims), order)


def stmts_equal(a: Stmt, b: Stmt, atol: float | None = None) -> bool:
    """Structural equality up to register order and gate/measurement names.

    Matrices are compared numerically after reordering both sides to
    lexicographic register order; sequences compare flattened.
    """
    t = get_tolerance() if atol is None else float(atol)
    if isinstance(a, Seq) or isinstance(b, Seq):
        fa, fb = flatten(a), flatten(b)
        return len(fa) == len(fb) and all(
            stmts_equal(x, y, atol=t) for x, y in zip(fa, fb)
        )
    if type(a) is not type(b):
        return False
    if isinstance(a, Skip):
        return True
    if isinstance(a, Init):
        return a.var == b.var and a.dim == b.dim
    if isinstance(a, Unitary):
        na, ma = _canonical_op(a.mat, a.regs, a.dims)
        nb, mb = _canonical_op(b.mat, b.regs, b.dims)
        return na == nb and ma.shape == mb.shape and bool(
            np.max(np.abs(ma - mb), initial=0.0) <= t * 10
        )
    if isinstance(a, (IfMeasure, WhileMeasure)):
        if sorted(a.ops) != sorted(b.ops):
            return False
        for label in a.ops:
            na, ma = _canonical_op(a.ops[label], a.regs, a.dims)
            nb, mb = _canonical_op(b.ops[label], b.regs, b.dims)
            if na != nb or ma.shape != mb.shape:
                return False
            if np.max(np.abs(ma - mb), initial=0.0) > t * 10:
                return False
        if isinstance(a, WhileMeasure):
            return stmts_equal(a.body, b.body, atol=t)
        arms_a = dict(a.arms)
        arms_b = dict(b.arms)
        return all(stmts_equal(arms_a[l], arms_b[l], atol=t) for l in arms_a)
    raise ProgramError(f"unknown statement {a!r}")


def programs_equal(a: Program, b: Program, atol: float | None = None) -> bool:
    return stmts_equal(a.body, b.body, atol=atol)


# --- semantics ---------------------------------------------------------------


def _op_positions(domain: RegSet, regs: Sequence[str], op: np.ndarray,
                  dims: Sequence[int]) -> tuple[list[int], np.ndarray]:
    # reorder the operator to canonical register order, positions ascending
    order = sorted(range(len(regs)), key=lambda k: domain.index(regs[k]))
    positions = [domain.index(regs[k]) for k in order]
    return positions, permute_factors(op, list(dims), order)


def _init_forward(mat: np.ndarray, dims: Sequence[int], pos: int) -> np.ndarray:
    n = len(dims)
    keep = [i for i in range(n) if i != pos]
    red = partial_trace(mat, dims, keep)
    dlist = list(dims)
    out = np.zeros(dlist + dlist, dtype=complex)
    idx: list = [slice(None)] * (2 * n)
    idx[pos] = 0
    idx[n + pos] = 0
    rdims = [dims[i] for i in keep]
    out[tuple(idx)] = red.reshape(rdims + rdims)
    d = int(np.prod(dims))
    return out.reshape(d, d)


def _denote_stmt(stmt: Stmt, mat: np.ndarray, domain: RegSet,
                 cfg: SemanticsConfig) -> np.ndarray:
    dims = list(domain.dims)
    if isinstance(stmt, Skip):
        return mat
    if isinstance(stmt, Seq):
        for s in stmt.stmts:
            mat = _denote_stmt(s, mat, domain, cfg)
        return mat
    if isinstance(stmt, Init):
        return _init_forward(mat, dims, domain.index(stmt.var))
    if isinstance(stmt, Unitary):
        pos, op = _op_positions(domain, stmt.regs, stmt.mat, stmt.dims)
        return sandwich(mat, dims, pos, op)
    if isinstance(stmt, IfMeasure):
        acc = np.zeros_like(mat)
        arms = dict(stmt.arms)
        for label, mop in stmt.ops.items():
            pos, op = _op_positions(domain, stmt.regs, mop, stmt.dims)
            acc = acc + _denote_stmt(arms[label], sandwich(mat, dims, pos, op),
                                     domain, cfg)
        return acc
    if isinstance(stmt, WhileMeasure):
        pos0, m0 = _op_positions(domain, stmt.regs, stmt.ops["0"], stmt.dims)
        pos1, m1 = _op_positions(domain, stmt.regs, stmt.ops["1"], stmt.dims)
        acc = np.zeros_like(mat)
        cur = mat
        for _ in range(cfg.max_loop_iters):
            acc = acc + sandwich(cur, dims, pos0, m0)
            cur = _denote_stmt(stmt.body, sandwich(cur, dims, pos1, m1),
                               domain, cfg)
            if float(cur.trace().real) <= cfg.tail_tol:
                break
        else:
            residual = float(cur.trace().real)
            warnings.warn(LoopTruncationWarning(
                f"while-loop sum truncated after {cfg.max_loop_iters} "
                f"iterations with residual weight {residual:.3e}", residual
            ))
        return acc
    raise ProgramError(f"unknown statement {stmt!r}")


def denote(prog: Program, rho: QState,
           config: SemanticsConfig | None = None) -> QState:
    """Run the program on a state whose domain covers its registers."""
    cfg = config or SemanticsConfig()
    if not prog.regs.issubset(rho.domain):
        raise ProgramError(
            f"state domain {rho.domain!r} does not cover program registers "
            f"{prog.regs!r}"
        )
    out = _denote_stmt(prog.body, np.asarray(rho.mat), rho.domain, cfg)
    return QState(rho.domain, out, validate=False)


def _init_dual(mat: np.ndarray, dims: Sequence[int], pos: int) -> np.ndarray:
    # adjoint of init: <0|A|0> on the register, tensored with its identity
    n = len(dims)
    t = mat.reshape(list(dims) + list(dims))
    idx: list = [slice(None)] * (2 * n)
    idx[pos] = 0
    idx[n + pos] = 0
    block = t[tuple(idx)]
    out = np.zeros(list(dims) + list(dims), dtype=complex)
    for v in range(dims[pos]):
        jdx: list = [slice(None)] * (2 * n)
        jdx[pos] = v
        jdx[n + pos] = v
        out[tuple(jdx)] = block
    d = int(np.prod(dims))
    return out.reshape(d, d)


def _dual_stmt(stmt: Stmt, mat: np.ndarray, domain: RegSet) -> np.ndarray:
    dims = list(domain.dims)
    if isinstance(stmt, Skip):
        return mat
    if isinstance(stmt, Seq):
        for s in reversed(stmt.stmts):
            mat = _dual_stmt(s, mat, domain)
        return mat
    if isinstance(stmt, Init):
        return _init_dual(mat, dims, domain.index(stmt.var))
    if isinstance(stmt, Unitary):
        pos, op = _op_positions(domain, stmt.regs, stmt.mat, stmt.dims)
        return sandwich(mat, dims, pos, op.conj().T)
    if isinstance(stmt, IfMeasure):
        acc = np.zeros_like(mat)
        arms = dict(stmt.arms)
        for label, mop in stmt.ops.items():
            pos, op = _op_positions(domain, stmt.regs, mop, stmt.dims)
            inner = _dual_stmt(arms[label], mat, domain)
            acc = acc + sandwich(inner, dims, pos, op.conj().T)
        return acc
    if isinstance(stmt, WhileMeasure):
        raise ProgramError("dual_wp is defined for loop-free programs only")
    raise ProgramError(f"unknown statement {stmt!r}")


def dual_wp(prog: Program, post: Projection) -> Projection:
    """Weakest precondition of a projector post, loop-free programs.

    The postcondition may mention registers beyond the program; the
    result lives on the union domain.
    """
    domain = prog.regs | post.domain
    a = embed_operator(post.matrix(), post.domain, domain)
    a = _dual_stmt(prog.body, a, domain)
    # statements are trace preserving, so the dual is unital and the
    # eigenvalue-1 space of the pulled-back projector is the exact wp
    a = (a + a.conj().T) / 2
    return Projection(domain, eigenspace_one(a))


# --- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+|\#[^\n]*)
      | (?P<perm>perm\([A-Za-z0-9_,\s]*->[A-Za-z0-9_,\s]*\))
      | (?P<init>\|0>)
      | (?P<assign>:=)
      | (?P<arrow>->)
      | (?P<box>\[\])
      | (?P<dots>\.\.)
      | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\^-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)?)
      | (?P<int>\d+)
      | (?P<sym>[;,\[\]=()])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"skip", "if", "fi", "while", "do", "od", "for"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            line = text.count("\n", 0, i) + 1
            raise ProgramError(f"line {line}: cannot read {text[i:i + 12]!r}")
        i = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        toks.append(_Tok(kind, m.group(), m.start()))
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    """Recursive-descent parser producing a raw tree; matrices come later."""

    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind: str | None = None, text: str | None = None) -> _Tok:
        tok = self.toks[self.i]
        if kind is not None and tok.kind != kind:
            self.fail(f"expected {kind}, found {tok.text!r}", tok)
        if text is not None and tok.text != text:
            self.fail(f"expected {text!r}, found {tok.text!r}", tok)
        self.i += 1
        return tok

    def fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        line = self.text.count("\n", 0, tok.pos) + 1
        raise ProgramError(f"line {line}: {msg}")

    def at_name(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "name" and t.text == word

    # raw nodes: ("skip",) ("init", var) ("apply", regs, gate)
    # ("if", meas, regs, [(label, node)]) ("while", meas, regs, node)
    # ("for", var, lo, hi, node) ("seq", [nodes])

    def parse_seq(self, stop: tuple[str, ...]) -> tuple:
        items = [self.parse_stmt()]
        while self.peek().kind == "sym" and self.peek().text == ";":
            self.take()
            t = self.peek()
            if t.kind == "eof" or (t.kind == "name" and t.text in stop) \
                    or t.kind == "box":
                break  # trailing semicolon
            items.append(self.parse_stmt())
        return items[0] if len(items) == 1 else ("seq", items)

    def parse_namelist(self) -> list[str]:
        names = [self.take("name").text]
        while self.peek().kind == "sym" and self.peek().text == ",":
            self.take()
            names.append(self.take("name").text)
        return names

    def parse_label(self) -> str:
        t = self.peek()
        if t.kind == "int":
            self.take()
            if len(t.text) > 1 and t.text[0] == "0":
                self.fail(f"outcome label {t.text!r} has a leading zero", t)
            return t.text
        if t.kind == "name":
            self.take()
            return t.text
        self.fail("expected an outcome label")

    def parse_stmt(self) -> tuple:
        t = self.peek()
        if t.kind == "name" and t.text == "skip":
            self.take()
            return ("skip",)
        if t.kind == "name" and t.text == "if":
            self.take()
            meas = self.take("name").text
            self.take("sym", "[")
            regs = self.parse_namelist()
            self.take("sym", "]")
            self.take("sym", "=")
            arms = [(self.parse_label(), self._arm_body())]
            while self.peek().kind == "box":
                self.take()
                arms.append((self.parse_label(), self._arm_body()))
            self.take("name", "fi")
            return ("if", meas, regs, arms)
        if t.kind == "name" and t.text == "while":
            self.take()
            meas = self.take("name").text
            self.take("sym", "[")
            regs = self.parse_namelist()
            self.take("sym", "]")
            self.take("sym", "=")
            guard = self.take("int")
            if guard.text != "1":
                self.fail("while guard must test outcome 1", guard)
            self.take("name", "do")
            body = self.parse_seq(("od",))
            self.take("name", "od")
            return ("while", meas, regs, body)
        if t.kind == "name" and t.text == "for":
            self.take()
            var = self.take("name").text
            self.take("sym", "=")
            lo = int(self.take("int").text)
            self.take("dots")
            hi = int(self.take("int").text)
            self.take("name", "do")
            body = self.parse_seq(("od",))
            self.take("name", "od")
            return ("for", var, lo, hi, body)
        if t.kind in ("name",):
            regs = self.parse_namelist()
            self.take("assign")
            rt = self.peek()
            if rt.kind == "init":
                self.take()
                if len(regs) != 1:
                    self.fail("initialization takes a single register", rt)
                return ("init", regs[0])
            if rt.kind in ("name", "perm"):
                gate = self.take().text
                self.take("sym", "[")
                args = self.parse_namelist()
                self.take("sym", "]")
                if args != regs:
                    self.fail(
                        f"assignment targets {regs} must repeat as gate "
                        f"arguments, found {args}", rt
                    )
                return ("apply", regs, gate)
            self.fail("expected |0> or a gate application", rt)
        self.fail(f"expected a statement, found {t.text!r}", t)

    def _arm_body(self) -> tuple:
        self.take("arrow")
        return self.parse_seq(("fi",))


def _subst_name(name: str, env: Mapping[str, int]) -> str:
    if not env:
        return name
    perm = parse_perm_name(name) if name.startswith("perm(") else None
    if perm is not None:
        src, dst = perm
        return perm_name([_subst_name(n, env) for n in src],
                         [_subst_name(n, env) for n in dst])
    if "^" in name:
        return name
    parts = name.split("_")
    parts = [str(env[p]) if p in env else p for p in parts]
    return "_".join(parts)


def _expand(node: tuple, env: dict[str, int]) -> tuple:
    kind = node[0]
    if kind == "skip":
        return node
    if kind == "init":
        return ("init", _subst_name(node[1], env))
    if kind == "apply":
        return ("apply", [_subst_name(r, env) for r in node[1]],
                _subst_name(node[2], env))
    if kind == "if":
        return ("if", _subst_name(node[1], env),
                [_subst_name(r, env) for r in node[2]],
                [(label, _expand(body, env)) for label, body in node[3]])
    if kind == "while":
        return ("while", _subst_name(node[1], env),
                [_subst_name(r, env) for r in node[2]],
                _expand(node[3], env))
    if kind == "seq":
        return ("seq", [_expand(s, env) for s in node[1]])
    if kind == "for":
        _, var, lo, hi, body = node
        if var in env:
            raise ProgramError(f"loop index {var} shadows an outer loop")
        items = []
        for v in range(lo, hi + 1):
            items.append(_expand(body, {**env, var: v}))
        if not items:
            return ("skip",)
        return items[0] if len(items) == 1 else ("seq", items)
    raise ProgramError(f"unknown node {kind!r}")


class _Unifier:
    """Union-find over register names with optional dim bindings."""

    def __init__(self, seed: Mapping[str, int]):
        self.parent: dict[str, str] = {}
        self.bound: dict[str, int] = {}
        for name, d in seed.items():
            self.bind(name, int(d))

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def bind(self, x: str, d: int):
        r = self.find(x)
        old = self.bound.get(r)
        if old is not None and old != d:
            raise ProgramError(f"register {x} used with dims {old} and {d}")
        self.bound[r] = d

    def union(self, x: str, y: str):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        dx, dy = self.bound.get(rx), self.bound.get(ry)
        if dx is not None and dy is not None and dx != dy:
            raise ProgramError(
                f"registers {x} (dim {dx}) and {y} (dim {dy}) must match"
            )
        self.parent[rx] = ry
        if dx is not None:
            self.bind(ry, dx)

    def dim_of(self, x: str) -> int:
        return self.bound.get(self.find(x), 2)  # unconstrained: qubit


def _collect_names(node: tuple, out: set[str]):
    kind = node[0]
    if kind == "init":
        out.add(node[1])
    elif kind == "apply":
        out.update(node[1])
    elif kind == "if":
        out.update(node[2])
        for _, body in node[3]:
            _collect_names(body, out)
    elif kind == "while":
        out.update(node[2])
        _collect_names(node[3], out)
    elif kind == "seq":
        for s in node[1]:
            _collect_names(s, out)


def _unify(node: tuple, uf: _Unifier, manifest: Manifest | None):
    kind = node[0]
    if kind == "apply":
        regs, gate = node[1], node[2]
        perm = parse_perm_name(gate) if gate.startswith("perm(") else None
        if perm is not None:
            src, dst = perm
            if src != list(regs):
                raise ProgramError(
                    f"perm gate {gate} must list the applied registers {regs}"
                )
            for a, b in zip(src, dst):
                uf.union(a, b)
            return
        dims = manifest.gate_dims(gate) if manifest else builtin_gate_dims(gate)
        if dims is None:
            raise ProgramError(f"unknown gate {gate!r}")
        if len(dims) != len(regs):
            raise ProgramError(
                f"gate {gate} takes {len(dims)} registers, got {len(regs)}"
            )
        for r, d in zip(regs, dims):
            uf.bind(r, d)
    elif kind == "if":
        meas, regs = node[1], node[2]
        dims = manifest.measurement_dims(meas) if manifest else None
        if dims is not None:
            if len(dims) != len(regs):
                raise ProgramError(
                    f"measurement {meas} takes {len(dims)} registers, got {len(regs)}"
                )
            for r, d in zip(regs, dims):
                uf.bind(r, d)
        for _, body in node[3]:
            _unify(body, uf, manifest)
    elif kind == "while":
        meas, regs = node[1], node[2]
        dims = manifest.measurement_dims(meas) if manifest else None
        if dims is not None:
            for r, d in zip(regs, dims):
                uf.bind(r, d)
        elif meas == "std" and len(regs) == 1:
            uf.bind(regs[0], 2)  # std loop guard needs outcomes exactly 0,1
        _unify(node[3], uf, manifest)
    elif kind == "seq":
        for s in node[1]:
            _unify(s, uf, manifest)


def _resolve(node: tuple, dim_of: Mapping[str, int],
             manifest: Manifest | None) -> Stmt:
    kind = node[0]
    if kind == "skip":
        return Skip()
    if kind == "init":
        return Init(node[1], dim_of[node[1]])
    if kind == "apply":
        regs, gate = tuple(node[1]), node[2]
        dims = tuple(dim_of[r] for r in regs)
        perm = parse_perm_name(gate) if gate.startswith("perm(") else None
        if perm is not None:
            src, dst = perm
            source = [src.index(d) for d in dst]
            mat = permutation_unitary(list(dims), source)
        else:
            mat = (manifest.unitary(gate, dims) if manifest
                   else builtin_unitary(gate, dims))
            if mat is None:
                raise ProgramError(f"unknown gate {gate!r}")
        return Unitary(regs, dims, gate, mat)
    if kind in ("if", "while"):
        meas, regs = node[1], tuple(node[2])
        dims = tuple(dim_of[r] for r in regs)
        ops = (manifest.measurement(meas, dims) if manifest
               else builtin_measurement(meas, dims))
        if ops is None:
            raise ProgramError(f"unknown measurement {meas!r}")
        if kind == "while":
            body = _resolve(node[3], dim_of, manifest)
            return WhileMeasure(meas, regs, dims, body, ops)
        arms = []
        seen = set()
        for label, body in node[3]:
            if label in seen:
                raise ProgramError(f"duplicate arm for outcome {label}")
            seen.add(label)
            if label not in ops:
                raise ProgramError(
                    f"measurement {meas} has no outcome {label!r} "
                    f"(outcomes: {sorted(ops)})"
                )
            arms.append((label, _resolve(body, dim_of, manifest)))
        return IfMeasure(meas, regs, dims, tuple(arms), ops)
    if kind == "seq":
        return Seq(tuple(_resolve(s, dim_of, manifest) for s in node[1]))
    raise ProgramError(f"unknown node {kind!r}")


def parse_program(text: str, manifest: Manifest | None = None) -> Program:
    """Parse program text; infer register dims (see module docstring)."""
    parser = _Parser(text)
    raw = parser.parse_seq(())
    parser.take("eof")
    raw = _expand(raw, {})
    uf = _Unifier(manifest.dims if manifest else {})
    _unify(raw, uf, manifest)
    names: set[str] = set()
    _collect_names(raw, names)
    dim_of = {n: uf.dim_of(n) for n in names}
    body = _resolve(raw, dim_of, manifest)
    regs = RegSet(VarDecl(n, d) for n, d in dim_of.items())
    return Program(body, regs)


def _fmt_stmt(stmt: Stmt, indent: int) -> str:
    pad = "  " * indent
    if isinstance(stmt, Skip):
        return pad + "skip"
    if isinstance(stmt, Init):
        return f"{pad}{stmt.var} := |0>"
    if isinstance(stmt, Unitary):
        names = ",".join(stmt.regs)
        return f"{pad}{names} := {stmt.gate}[{names}]"
    if isinstance(stmt, Seq):
        return ";\n".join(_fmt_stmt(s, indent) for s in stmt.stmts)
    if isinstance(stmt, IfMeasure):
        head = f"{pad}if {stmt.meas}[{','.join(stmt.regs)}] ="
        lines = []
        for k, (label, body) in enumerate(stmt.arms):
            lead = f"{pad}  " + ("" if k == 0 else "[] ") + f"{label} ->"
            lines.append(lead + "\n" + _fmt_stmt(body, indent + 2))
        return head + "\n" + "\n".join(lines) + f"\n{pad}fi"
    if isinstance(stmt, WhileMeasure):
        head = f"{pad}while {stmt.meas}[{','.join(stmt.regs)}] = 1 do"
        return head + "\n" + _fmt_stmt(stmt.body, indent + 1) + f"\n{pad}od"
    raise ProgramError(f"unknown statement {stmt!r}")


def print_program(prog: Program | Stmt) -> str:
    """Program text that parses back to an equal program."""
    stmt = prog.body if isinstance(prog, Program) else prog
    return _fmt_stmt(stmt, 0)
