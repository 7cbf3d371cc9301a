"""Builders and regression targets for the bundled case studies.

Four protocol families are covered: the quantum one-time pad, qutrit
secret sharing, secret sharing against an eavesdropper who intercepts a
random share, and a variational circuit for a 2D Ising model.  Each
family gets a program builder plus the numeric checks its security or
energy claim rests on.  The variational pipeline additionally rebuilds
its precondition through checked proof trees, so the derivation itself
is validated and not just the final numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assertion import (
    And,
    AtomProj,
    AtomU,
    Entailment,
    Formula,
    Top,
    entails_global,
    parse_formula,
)
from .modification import modify_formula
from .program import Program, denote, dual_wp, flatten, parse_program
from .program import Seq as SeqStmt
from .proofsys import Judgment, ProofNode, check_proof, parse_proof
from .proofsys import _pepr_pre  # shares the mirrored-pullback transport
from .state import (
    Manifest,
    Projection,
    QState,
    RegSet,
    VarDecl,
    embed_operator,
    power_gate_name,
    restrict,
)

__all__ = [
    "CaseReport",
    "CaseStudyError",
    "IsingInstance",
    "SpectralData",
    "build_qotp",
    "build_qss",
    "build_qss_e",
    "build_vqa",
    "energy_bound",
    "fixture_manifest",
    "fixture_text",
    "ising_hamiltonian",
    "qotp_uniformity_residual",
    "qss_e_uniformity_residual",
    "qss_residuals",
    "run_case",
    "spectrum",
    "tutorial_instance",
    "tutorial_overlap_curves",
    "vqa_energy",
    "vqa_preconditions",
    "VqaPreconditions",
]


class CaseStudyError(ValueError):
    """Raised for invalid instances or a failed internal derivation."""


# --- fixtures ----------------------------------------------------------------


def fixture_text(name: str) -> str:
    """Contents of a bundled fixture file (program, proof, or manifest)."""
    return (resources.files(__package__) / "fixtures" / name).read_text()


def fixture_manifest(name: str) -> Manifest:
    return Manifest.from_dict(json.loads(fixture_text(name)))


# --- one-time pad and secret sharing builders ---------------------------------


def _check_rounds(n: int):
    if not (isinstance(n, int) and n >= 1):
        raise CaseStudyError(f"round count must be a positive integer, got {n!r}")


_OTP_ROUND = (
    "{a} := |0>; {b} := |0>; {a} := H[{a}]; {b} := H[{b}]; "
    "if std[{a},{b}] = 0 -> skip "
    "[] 1 -> {q} := Z[{q}] "
    "[] 2 -> {q} := X[{q}] "
    "[] 3 -> {q} := Z[{q}]; {q} := X[{q}] fi"
)


def build_qotp(n: int) -> Program:
    """Key generation plus Pauli encryption on ``n`` payload qubits.

    A fresh key pair per payload qubit: both keys are reset, put into
    uniform superposition, and measured in the computational basis; the
    four outcomes select which Pauli mask hits the payload.
    """
    _check_rounds(n)
    if n == 1:
        return parse_program(_OTP_ROUND.format(a="a", b="b", q="q"))
    body = _OTP_ROUND.format(a="a_i", b="b_i", q="q_i")
    return parse_program(f"for i = 1 .. {n} do {body} od")


_QSS_ROUND = "{q} := |0>; {r} := |0>; {p},{q},{r} := U_enc[{p},{q},{r}]"


def build_qss(n: int) -> Program:
    """Threshold encoding of ``n`` qutrit secrets into three shares each."""
    _check_rounds(n)
    if n == 1:
        return parse_program(_QSS_ROUND.format(p="p", q="q", r="r"))
    body = _QSS_ROUND.format(p="p_i", q="q_i", r="r_i")
    return parse_program(f"for i = 1 .. {n} do {body} od")


def build_qss_e(n: int) -> Program:
    """Secret sharing with an eavesdropper grabbing one share per round.

    Each round re-encodes the secret, flips a fair coin, and hands the
    eavesdropper register ``h_i`` either the first or the second share;
    the remaining two shares are recombined or shuffled accordingly.
    """
    _check_rounds(n)
    round_ = (
        f"{_QSS_ROUND.format(p='p', q='q', r='r')}; "
        "c := |0>; c := H[c]; "
        "if std[c] = 0 -> "
        "p,h_i := perm(p,h_i->h_i,p)[p,h_i]; "
        "q,r := U_rec[q,r]; "
        "p,q := perm(p,q->q,p)[p,q] "
        "[] 1 -> "
        "q,h_i := perm(q,h_i->h_i,q)[q,h_i]; "
        "p,r := perm(p,r->r,p)[p,r] fi"
    )
    return parse_program(f"for i = 1 .. {n} do {round_} od")


# --- Ising instances -----------------------------------------------------------


def _sign_grid(rows: Iterable[Iterable[int]], nrows: int, ncols: int,
               what: str) -> tuple[tuple[int, ...], ...]:
    grid = tuple(tuple(int(x) for x in row) for row in rows)
    if len(grid) != nrows or any(len(row) != ncols for row in grid):
        raise CaseStudyError(f"{what} must be {nrows}x{ncols}")
    if any(x not in (-1, 1) for row in grid for x in row):
        raise CaseStudyError(f"{what} entries must be +1 or -1")
    return grid


@dataclass(frozen=True)
class IsingInstance:
    """A 2D +/-1 Ising grid together with the circuit angles.

    ``h`` holds the on-site signs, ``jr`` the vertical couplings (site
    (i,j) with (i+1,j)), ``jc`` the horizontal ones (site (i,j) with
    (i,j+1)); all entries are +1 or -1.  Angles are in units of pi.
    """

    n: int
    h: tuple[tuple[int, ...], ...]
    jr: tuple[tuple[int, ...], ...]
    jc: tuple[tuple[int, ...], ...]
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not (isinstance(self.n, int) and 1 <= self.n <= 9):
            raise CaseStudyError(f"grid size must be in 1..9, got {self.n!r}")
        n = self.n
        object.__setattr__(self, "h", _sign_grid(self.h, n, n, "h"))
        object.__setattr__(self, "jr", _sign_grid(self.jr, max(n - 1, 0), n, "jr"))
        object.__setattr__(self, "jc", _sign_grid(self.jc, n, max(n - 1, 0), "jc"))

    def site(self, i: int, j: int) -> str:
        # 1-based grid coordinates; single digits keep names unambiguous
        return f"q{i}{j}"

    def sites(self) -> tuple[str, ...]:
        return tuple(self.site(i, j)
                     for i in range(1, self.n + 1)
                     for j in range(1, self.n + 1))


def tutorial_instance(alpha: float, beta: float = 0.0,
                      gamma: float = 0.0) -> IsingInstance:
    """The 2x2 instance from Google Cirq's QAOA tutorial."""
    return IsingInstance(
        n=2,
        h=((-1, -1), (1, 1)),
        jr=((-1, 1),),
        jc=((-1,), (-1,)),
        alpha=alpha,
        beta=beta,
        gamma=gamma,
    )


def ising_hamiltonian(inst: IsingInstance) -> np.ndarray:
    """Dense diagonal Hamiltonian sum of Z and ZZ terms over the grid."""
    sites = inst.sites()
    dim = 2 ** len(sites)
    idx = np.arange(dim)
    # Z eigenvalue per site in canonical (row-major) factor order
    z = {}
    for pos, s in enumerate(sites):
        shift = len(sites) - 1 - pos
        z[s] = 1.0 - 2.0 * ((idx >> shift) & 1)
    diag = np.zeros(dim)
    for i in range(1, inst.n + 1):
        for j in range(1, inst.n + 1):
            diag += inst.h[i - 1][j - 1] * z[inst.site(i, j)]
    for i in range(1, inst.n):
        for j in range(1, inst.n + 1):
            diag += inst.jr[i - 1][j - 1] * z[inst.site(i, j)] * z[inst.site(i + 1, j)]
    for i in range(1, inst.n + 1):
        for j in range(1, inst.n):
            diag += inst.jc[i - 1][j - 1] * z[inst.site(i, j)] * z[inst.site(i, j + 1)]
    return np.diag(diag).astype(np.complex128)


@dataclass(frozen=True)
class SpectralData:
    """Sorted eigenvalues with one projection per merged eigenspace."""

    eigenvalues: tuple[float, ...]
    projections: tuple[np.ndarray, ...]

    def excited_projector(self, level: int) -> np.ndarray:
        """Projector onto all eigenspaces strictly above ``level``."""
        if not 0 <= level < len(self.eigenvalues):
            raise CaseStudyError(f"no eigenvalue level {level}")
        dim = self.projections[0].shape[0]
        low = sum(self.projections[k] for k in range(level + 1))
        return np.eye(dim) - low


def spectrum(h: np.ndarray, merge_tol: float = 1e-8) -> SpectralData:
    """Spectral decomposition with nearly-degenerate eigenvalues merged."""
    mat = np.asarray(h, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise CaseStudyError("hamiltonian must be a square matrix")
    if float(np.max(np.abs(mat - mat.conj().T), initial=0.0)) > 1e-9:
        raise CaseStudyError("hamiltonian must be hermitian")
    vals, vecs = np.linalg.eigh(mat)
    levels: list[float] = []
    projs: list[np.ndarray] = []
    k = 0
    while k < len(vals):
        group = [k]
        while group[-1] + 1 < len(vals) and vals[group[-1] + 1] - vals[k] <= merge_tol:
            group.append(group[-1] + 1)
        block = vecs[:, group]
        levels.append(float(np.mean(vals[group])))
        projs.append(block @ block.conj().T)
        k = group[-1] + 1
    return SpectralData(tuple(levels), tuple(projs))


def energy_bound(spectral: SpectralData, deltas: Sequence[float]) -> float:
    """Floor on the reachable energy: E0 plus gap-weighted excitation floors.

    ``deltas[i]`` must sit at or below the output weight above level
    ``i`` for every circuit in the family under study.  Weight parked
    above the last bounded level only raises the true energy, so the
    truncated sum stays a valid lower bound.
    """
    es = spectral.eigenvalues
    ds = [float(d) for d in deltas]
    if len(ds) > len(es) - 1:
        raise CaseStudyError("more deltas than spectral gaps")
    if any(not 0.0 <= d <= 1.0 for d in ds):
        raise CaseStudyError("deltas must lie in [0, 1]")
    return es[0] + sum((es[i + 1] - es[i]) * d for i, d in enumerate(ds))


# --- the variational circuit ---------------------------------------------------


def _column_lines(inst: IsingInstance, j: int) -> list[str]:
    xa = power_gate_name("X", inst.alpha)
    zb = power_gate_name("Z", inst.beta)
    czg = power_gate_name("CZ", inst.gamma)
    lines = []
    for i in range(1, inst.n + 1):
        s = inst.site(i, j)
        lines.append(f"{s} := {xa}[{s}]")
        if inst.h[i - 1][j - 1] == 1:
            lines.append(f"{s} := {zb}[{s}]")
    for i in range(1, inst.n):
        a, b = inst.site(i, j), inst.site(i + 1, j)
        flip = inst.jr[i - 1][j - 1] == -1
        if flip:
            lines += [f"{a} := X[{a}]", f"{b} := X[{b}]"]
        lines.append(f"{a},{b} := {czg}[{a},{b}]")
        if flip:
            lines += [f"{a} := X[{a}]", f"{b} := X[{b}]"]
    return lines


def _row_lines(inst: IsingInstance, i: int) -> list[str]:
    czg = power_gate_name("CZ", inst.gamma)
    lines = []
    for j in range(1, inst.n):
        a, b = inst.site(i, j), inst.site(i, j + 1)
        flip = inst.jc[i - 1][j - 1] == -1
        if flip:
            lines += [f"{a} := X[{a}]", f"{b} := X[{b}]"]
        lines.append(f"{a},{b} := {czg}[{a},{b}]")
        if flip:
            lines += [f"{a} := X[{a}]", f"{b} := X[{b}]"]
    return lines


def _vqa_lines(inst: IsingInstance) -> tuple[list[str], list[str]]:
    col = [ln for j in range(1, inst.n + 1) for ln in _column_lines(inst, j)]
    row = [ln for i in range(1, inst.n + 1) for ln in _row_lines(inst, i)]
    return col, row


def build_vqa(inst: IsingInstance) -> Program:
    """The grid ansatz: per-column phase pass, then per-row couplers.

    Negative couplings are realized by conjugating the two-qubit phase
    gate with X on both wires; the on-site phase applies only where the
    field sign is positive.
    """
    col, row = _vqa_lines(inst)
    return parse_program("; ".join(col + row))


def tutorial_overlap_curves(alpha: float) -> tuple[float, float]:
    """Closed-form output weights above the two lowest levels (2x2 grid)."""
    s = math.sin(math.pi * alpha)
    p0 = 1.0 - s ** 4 / 16.0
    p1 = 1.0 - (7.0 + math.cos(2.0 * math.pi * alpha)) * s ** 2 / 32.0
    return p0, p1


def vqa_energy(inst: IsingInstance) -> float:
    """Energy expectation of the circuit output from the all-zeros input."""
    prog = build_vqa(inst)
    dim = prog.regs.dim
    vec = np.zeros(dim)
    vec[0] = 1.0
    out = denote(prog, QState.from_vector(prog.regs, vec))
    h = ising_hamiltonian(inst)
    return float(np.real(np.trace(h @ out.mat)))


# transport scaffolding: every site is paired with a mirror register


def _mirror(name: str) -> str:
    return name + "m"


_BELL2 = np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0)


def _pair_regs(sites: Sequence[str]) -> RegSet:
    decls = [VarDecl(s, 2) for s in sites] + [VarDecl(_mirror(s), 2) for s in sites]
    return RegSet(decls)


def _pair_mes(sites: Sequence[str]) -> Projection:
    # per-pair Bell states; site and mirror are adjacent in canonical order
    regs = _pair_regs(sites)
    vec = np.array([1.0])
    for _ in sites:
        vec = np.kron(vec, _BELL2)
    return Projection.from_vector(regs, vec)


def _single_stmt_program(stmt) -> Program:
    return Program(stmt, RegSet(VarDecl(n, d)
                                for n, d in zip(stmt.regs, stmt.dims)))


def _unit_chain(prog: Program, post: AtomProj) -> ProofNode:
    # pull the postcondition back through each unitary in turn
    nodes: list[ProofNode] = []
    tail: Formula = post
    for stmt in reversed(flatten(prog.body)):
        pre = modify_formula(tail, stmt)
        nodes.append(ProofNode("Unit", Judgment(pre, _single_stmt_program(stmt), tail)))
        tail = pre
    nodes.reverse()
    if len(nodes) == 1:
        return nodes[0]
    return ProofNode("Seq", Judgment(tail, prog, post), tuple(nodes))


def _glue_subprograms(parts: Sequence[tuple[Program, ProofNode]],
                      phase: Program) -> ProofNode:
    """Combine disjoint subprogram derivations into one over their Seq.

    Each step frames the not-yet-run precondition (or the already
    established postcondition) as a side assertion, then commutes the
    conjunction back into shape.  The result keeps conjunction-shaped
    ends; the caller converts them to single projection atoms.
    """
    acc, acc_pre, acc_post = (parts[0][1], parts[0][1].conclusion.pre,
                              parts[0][1].conclusion.post)
    stitched = [parts[0][0]]
    for prog_k, chain_k in parts[1:]:
        psi_k = chain_k.conclusion.pre
        mes_k = chain_k.conclusion.post
        g_acc = ProofNode("Const", Judgment(And(acc_pre, psi_k),
                                            _cat(stitched),
                                            And(acc_post, psi_k)), (acc,))
        g_k = ProofNode("Const", Judgment(And(psi_k, acc_post), prog_k,
                                          And(mes_k, acc_post)), (chain_k,))
        w_k = ProofNode("Weak", Judgment(And(acc_post, psi_k), prog_k,
                                         And(mes_k, acc_post)), (g_k,))
        stitched.append(prog_k)
        acc_pre = And(acc_pre, psi_k)
        acc_post = And(mes_k, acc_post)
        acc = ProofNode("Seq", Judgment(acc_pre, _cat(stitched), acc_post),
                        (g_acc, w_k))
    return acc


def _cat(progs: Sequence[Program]) -> Program:
    stmts = []
    regs = RegSet.empty()
    for p in progs:
        stmts.extend(flatten(p.body))
        regs = regs | p.regs
    return Program(SeqStmt(tuple(stmts)), regs)


def _phase_pepr(inst: IsingInstance, subprogs: Sequence[Program],
                phase: Program, target: Projection) -> ProofNode:
    """One transport step: derive {pullback(target)} phase {target}."""
    sites = inst.sites()
    pairs = tuple((s, _mirror(s)) for s in sites)
    parts: list[tuple[Program, ProofNode]] = []
    for sp in subprogs:
        local = sorted(sp.regs.names)
        chain = _unit_chain(sp, AtomProj(_pair_mes(local)))
        parts.append((sp, chain))
    glued = _glue_subprograms(parts, phase)

    # collapse the conjunction-shaped ends into single projection atoms
    big = _pair_regs(sites)
    pre_mat = np.eye(big.dim, dtype=np.complex128)
    for _, chain in parts:
        p = chain.conclusion.pre.proj
        pre_mat = pre_mat @ embed_operator(p.matrix(), p.domain, big)
    psi = Projection.from_matrix(big, pre_mat)
    mes = _pair_mes(sites)
    squeezed = ProofNode("Weak", Judgment(AtomProj(psi), phase, AtomProj(mes)),
                         (glued,))
    pre = _pepr_pre(psi, target, pairs)
    return ProofNode("PEPR", Judgment(pre, phase, AtomProj(target)),
                     (squeezed,), {"pairs": pairs})


@dataclass(frozen=True)
class VqaPreconditions:
    """Transported preconditions for the two lowest excitation targets."""

    spectral: SpectralData
    p0: Projection
    p1: Projection
    overlaps: tuple[float, float]
    proofs: tuple[ProofNode, ProofNode]


def vqa_preconditions(inst: IsingInstance, *, check: bool = True) -> VqaPreconditions:
    """Pull the excited-space targets back through the whole circuit.

    Per excitation level the pipeline derives each subprogram's triple
    against an entangled postcondition, glues the pieces, and applies
    the entangled-postcondition transport once per circuit phase.  With
    ``check`` set the resulting trees are run through the proof checker
    and the transported preconditions are compared against the dual
    weakest-precondition route; disagreement raises.
    """
    col_lines, row_lines = _vqa_lines(inst)
    col_phase = parse_program("; ".join(col_lines))
    row_phase = parse_program("; ".join(row_lines))
    full = parse_program("; ".join(col_lines + row_lines))
    col_subs = [parse_program("; ".join(_column_lines(inst, j)))
                for j in range(1, inst.n + 1)]
    row_subs = [parse_program("; ".join(_row_lines(inst, i)))
                for i in range(1, inst.n + 1)]

    spectral = spectrum(ising_hamiltonian(inst))
    sregs = RegSet(VarDecl(s, 2) for s in inst.sites())
    projs: list[Projection] = []
    trees: list[ProofNode] = []
    for level in (0, 1):
        target = Projection.from_matrix(sregs, spectral.excited_projector(level))
        row_node = _phase_pepr(inst, row_subs, row_phase, target)
        mid = row_node.conclusion.pre.proj
        col_node = _phase_pepr(inst, col_subs, col_phase, mid)
        root = ProofNode("Seq", Judgment(col_node.conclusion.pre, full,
                                         AtomProj(target)),
                         (col_node, row_node))
        got = col_node.conclusion.pre.proj
        if check:
            report = check_proof(root)
            if not report.ok:
                raise CaseStudyError(
                    f"transport derivation failed at {report.failures[0]}")
            if not got.equiv(dual_wp(full, target)):
                raise CaseStudyError(
                    "transported precondition disagrees with the dual route")
        projs.append(got)
        trees.append(root)
    overlaps = tuple(float(np.real(p.matrix()[0, 0])) for p in projs)
    return VqaPreconditions(spectral, projs[0], projs[1],
                            (overlaps[0], overlaps[1]),
                            (trees[0], trees[1]))


# --- uniformity regressions ----------------------------------------------------


def _haar_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _basis0(dim: int) -> np.ndarray:
    v = np.zeros(dim)
    v[0] = 1.0
    return v


def _input_state(domain: RegSet, payload: Mapping[str, np.ndarray]) -> QState:
    vec = np.array([1.0], dtype=np.complex128)
    for d in domain:
        vec = np.kron(vec, payload.get(d.name, _basis0(d.dim)))
    return QState.from_vector(domain, vec)


def qotp_uniformity_residual(n: int, samples: int = 50,
                             rng: np.random.Generator | None = None) -> float:
    """Worst payload-marginal distance from I/2^n after encryption."""
    gen = rng or np.random.default_rng(0)
    prog = build_qotp(n)
    qnames = ["q"] if n == 1 else [f"q_{i}" for i in range(1, n + 1)]
    qregs = prog.regs.restricted_to(qnames)
    target = np.eye(qregs.dim) / qregs.dim
    worst = 0.0
    for _ in range(samples):
        psi = _haar_vector(gen, qregs.dim)
        payload = _split_payload(qregs, psi)
        out = denote(prog, _input_state(prog.regs, payload))
        marg = restrict(out, qregs).mat
        worst = max(worst, float(np.max(np.abs(marg - target))))
    return worst


def _split_payload(regs: RegSet, vec: np.ndarray) -> Mapping[str, np.ndarray]:
    # joint payload state: since the payload block is contiguous in
    # canonical order, hand the joint vector to the first register
    names = regs.names
    out: dict[str, np.ndarray] = {names[0]: vec}
    for n in names[1:]:
        out[n] = np.array([1.0])
    return out


def qss_residuals(samples: int = 50,
                  rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Worst share-marginal distance from I/3 and code-space leakage."""
    gen = rng or np.random.default_rng(0)
    prog = build_qss(1)
    ps = parse_formula("proj PS on [p,q,r]",
                       dims={"p": 3, "q": 3, "r": 3}).proj.matrix()
    dim3 = np.eye(3) / 3.0
    worst_marg = 0.0
    worst_leak = 0.0
    for _ in range(samples):
        payload = {"p": _haar_vector(gen, 3)}
        out = denote(prog, _input_state(prog.regs, payload))
        for wire in ("p", "q", "r"):
            marg = restrict(out, prog.regs.restricted_to([wire])).mat
            worst_marg = max(worst_marg, float(np.max(np.abs(marg - dim3))))
        leak = float(np.real(np.trace(out.mat) - np.trace(ps @ out.mat @ ps)))
        worst_leak = max(worst_leak, abs(leak))
    return worst_marg, worst_leak


def qss_e_uniformity_residual(n: int, samples: int = 50,
                              rng: np.random.Generator | None = None) -> float:
    """Worst eavesdropper joint-marginal distance from I/3^n."""
    gen = rng or np.random.default_rng(0)
    prog = build_qss_e(n)
    hregs = prog.regs.restricted_to([f"h_{i}" for i in range(1, n + 1)])
    target = np.eye(hregs.dim) / hregs.dim
    worst = 0.0
    for _ in range(samples):
        payload = {"p": _haar_vector(gen, 3)}
        out = denote(prog, _input_state(prog.regs, payload))
        marg = restrict(out, hregs).mat
        worst = max(worst, float(np.max(np.abs(marg - target))))
    return worst


# --- case reports ---------------------------------------------------------------


@dataclass(frozen=True)
class CaseReport:
    """Printable outcome of one case-study regression."""

    name: str
    ok: bool
    lines: tuple[str, ...]


def _fmt(x: float) -> str:
    return f"{x:.3e}"


def _proof_line(rows: list[str], name: str,
                manifest_name: str | None = None) -> bool:
    manifest = fixture_manifest(manifest_name) if manifest_name else None
    root = parse_proof(fixture_text(name), manifest)
    report = check_proof(root)
    verdict = "pass" if report.ok else f"FAIL at {report.failures[0]}"
    rows.append(f"proof script {name}: {verdict}")
    return report.ok


def _case_qotp(seed: int, trials: int) -> CaseReport:
    from .oracle import NoCounterexample, validate_triple

    lines: list[str] = []
    ok = True
    for n in (1, 2, 3):
        prog = build_qotp(n)
        qnames = ["q"] if n == 1 else [f"q_{i}" for i in range(1, n + 1)]
        post = AtomU(prog.regs.restricted_to(qnames))
        verdict = validate_triple(Top(), prog, post,
                                  rng=np.random.default_rng(seed + n),
                                  trials=trials)
        good = isinstance(verdict, NoCounterexample)
        ok &= good
        lines.append(f"uniform payload after {n}-qubit encryption: "
                     f"{trials} trials, {'ok' if good else 'COUNTEREXAMPLE'}")
    res = qotp_uniformity_residual(3, rng=np.random.default_rng(seed))
    ok &= res <= 1e-9
    lines.append(f"payload marginal residual (n=3, 50 pure inputs): {_fmt(res)}"
                 f" (target 1e-9)")
    ok &= _proof_line(lines, "qotp1.proof")
    ok &= _proof_line(lines, "qotp3.proof")
    return CaseReport("qotp", ok, tuple(lines))


def _case_qss(seed: int, trials: int) -> CaseReport:
    lines: list[str] = []
    marg, leak = qss_residuals(rng=np.random.default_rng(seed))
    ok = marg <= 1e-9 and leak <= 1e-9
    lines.append(f"share marginals vs I/3 (50 inputs): {_fmt(marg)} (target 1e-9)")
    lines.append(f"code-space leakage: {_fmt(leak)} (target 1e-9)")
    dims = {"p": 3, "q": 3, "r": 3}
    verdict = entails_global(
        parse_formula("proj PS on [p,q,r]", dims=dims),
        parse_formula("U[p] /\\ U[q] /\\ U[r]", dims=dims),
        trials=0,
    )
    ok &= verdict is Entailment.PROVED
    lines.append(f"code space forces uniform shares: {verdict.name}")
    ok &= _proof_line(lines, "qss2.proof", "qss.manifest.json")
    return CaseReport("qss", ok, tuple(lines))


def _case_qss_e(seed: int, trials: int) -> CaseReport:
    lines: list[str] = []
    ok = True
    for n in (1, 2):
        res = qss_e_uniformity_residual(n, rng=np.random.default_rng(seed + n))
        ok &= res <= 1e-9
        lines.append(f"eavesdropper joint marginal vs I/3^{n} (50 inputs): "
                     f"{_fmt(res)} (target 1e-9)")
    ok &= _proof_line(lines, "qsse2.proof", "qss_e.manifest.json")
    return CaseReport("qss_e", ok, tuple(lines))


def _case_vqa(seed: int, trials: int) -> CaseReport:
    lines: list[str] = []
    inst = tutorial_instance(0.5, 0.25, 0.75)
    spectral = spectrum(ising_hamiltonian(inst))
    want = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0)
    got = spectral.eigenvalues
    ok = (len(got) == len(want)
          and max(abs(a - b) for a, b in zip(got, want)) <= 1e-9)
    lines.append("eigenvalues: target " + " ".join(f"{v:g}" for v in want)
                 + ", computed " + " ".join(f"{v:g}" for v in got))

    grid = [k / 20.0 for k in range(21)]
    dev = 0.0
    mins = [1.0, 1.0]
    for a in grid:
        pre = vqa_preconditions(tutorial_instance(a, 0.3, 0.6), check=False)
        t0, t1 = tutorial_overlap_curves(a)
        dev = max(dev, abs(pre.overlaps[0] - t0), abs(pre.overlaps[1] - t1))
        mins[0] = min(mins[0], pre.overlaps[0])
        mins[1] = min(mins[1], pre.overlaps[1])
    ok &= dev <= 1e-8
    lines.append(f"overlap curves on 21-point grid: max deviation {_fmt(dev)}"
                 f" (target 1e-8)")
    lines.append(f"grid minima: {mins[0]:.6f} (>= 15/16), {mins[1]:.6f} (>= 13/16)")
    ok &= mins[0] >= 15.0 / 16.0 - 1e-8 and mins[1] >= 13.0 / 16.0 - 1e-8

    vqa_preconditions(tutorial_instance(0.5, 0.25, 0.75))
    lines.append("transport derivation at alpha=0.5: checked, "
                 "agrees with the dual route")
    bound = energy_bound(spectral, mins)
    ok &= bound >= -2.5 - 1e-8
    lines.append(f"energy bound from worst-case overlaps: {bound:.6f}"
                 f" (target >= -2.5, ground energy {spectral.eigenvalues[0]:g})")

    gen = np.random.default_rng(seed)
    spread = 0.0
    for a in (0.2, 0.5, 0.85):
        vals = [vqa_energy(tutorial_instance(a, gen.uniform(), gen.uniform()))
                for _ in range(5)]
        spread = max(spread, max(vals) - min(vals))
    ok &= spread <= 1e-9
    lines.append(f"expectation spread over random beta,gamma: {_fmt(spread)}"
                 f" (target 1e-9)")

    ok &= _proof_line(lines, "bell_pepr.proof", "bell.manifest.json")
    phi_plus = parse_formula("proj Phi+ on [q1,q2]").proj.matrix()
    man = fixture_manifest("bell.manifest.json")
    root = parse_proof(fixture_text("bell_pepr.proof"), man)
    frob = float(np.linalg.norm(root.conclusion.pre.proj.matrix() - phi_plus))
    ok &= frob <= 1e-9
    lines.append(f"phase-pair pullback vs Phi+: Frobenius {_fmt(frob)}"
                 f" (target 1e-9)")
    return CaseReport("vqa", ok, tuple(lines))


_CASES = {
    "qotp": _case_qotp,
    "qss": _case_qss,
    "qss_e": _case_qss_e,
    "vqa": _case_vqa,
}


def run_case(name: str, *, seed: int = 7, trials: int = 100) -> CaseReport:
    """Run one named case-study regression and collect printable lines."""
    try:
        fn = _CASES[name]
    except KeyError:
        raise CaseStudyError(
            f"unknown case {name!r}; pick one of {sorted(_CASES)}") from None
    return fn(seed, trials)
