import numpy as np
import pytest

from qseplogic.assertion import (
    And,
    AtomD,
    AtomProj,
    AtomU,
    Bot,
    FormulaError,
    Imp,
    Or,
    Star,
    Top,
    formulas_equal,
    free,
    parse_formula,
    satisfies,
)
from qseplogic.linalg import Subspace
from qseplogic.modification import (
    QuantumOperation,
    ceil_contract,
    e_modify,
    modify_atomic,
    modify_formula,
    operation_of_program,
)
from qseplogic.oracle import sample_satisfying
from qseplogic.program import Init, Unitary, denote, parse_program
from qseplogic.state import (
    Projection,
    QState,
    RegSet,
    VarDecl,
    builtin_unitary,
    is_defined,
    restrict,
    states_equal,
)


def regs(*pairs):
    return RegSet(VarDecl(n, d) for n, d in pairs)


P = regs(("p", 2))
Q = regs(("q", 2))
PQ = regs(("p", 2), ("q", 2))


def unitary_cmd(gate, *names, dims=None):
    dims = dims or tuple(2 for _ in names)
    return Unitary(tuple(names), tuple(dims), gate,
                   builtin_unitary(gate, tuple(dims)))


def plus_atom(name="p"):
    return parse_formula(f"proj [[0.5,0.5],[0.5,0.5]] on [{name}]")


class TestAtomicModification:
    def test_domain_atom_unchanged(self):
        d = AtomD(PQ)
        assert modify_atomic(d, unitary_cmd("H", "p")) is d
        assert modify_atomic(d, Init("p", 2)) is d
        assert modify_atomic(d, Init("z", 2)) is d

    def test_projection_pullback_through_gate(self):
        got = modify_atomic(plus_atom(), unitary_cmd("H", "p"))
        # H maps |0> to |+>, so the precondition of "ends up at |+>" is |0>
        assert formulas_equal(got, parse_formula("proj std.0 on [p]"))

    def test_projection_gate_disjoint_unchanged(self):
        atom = plus_atom()
        assert modify_atomic(atom, unitary_cmd("X", "q")) is atom

    def test_projection_gate_partial_overlap_undefined(self):
        bell = parse_formula("proj Phi+ on [p,q]")
        got = modify_atomic(bell, unitary_cmd("CNOT", "q", "r"))
        assert not is_defined(got)

    def test_projection_two_register_pullback(self):
        bell = parse_formula("proj Phi+ on [p,q]")
        got = modify_atomic(bell, unitary_cmd("CNOT", "p", "q"))
        want = parse_formula("proj [[0.5,0,0.5,0],[0,0,0,0],"
                             "[0.5,0,0.5,0],[0,0,0,0]] on [p,q]")
        assert formulas_equal(got, want)

    def test_init_inside_support(self):
        # ceil of |0>_q<0| (x) T is T itself
        t = np.array([[0.5, 0.5], [0.5, 0.5]])
        mat = np.kron(t, np.diag([1.0, 0.0]))  # canonical order (p, q)
        atom = AtomProj(Projection(PQ, Subspace.from_projector(mat)))
        got = modify_atomic(atom, Init("q", 2))
        assert isinstance(got, And)
        assert formulas_equal(got.left, AtomD(Q))
        assert formulas_equal(got.right, plus_atom())

    def test_init_outside_free_unchanged(self):
        atom = plus_atom()
        assert modify_atomic(atom, Init("q", 2)) is atom

    def test_init_empty_contract(self):
        # nothing of the form |0>(x)T fits under |11><11|
        v = np.array([0.0, 0, 0, 1.0])
        atom = AtomProj(Projection(PQ, Subspace.from_span(v)))
        got = modify_atomic(atom, Init("q", 2))
        assert isinstance(got, And)
        assert got.right.proj.rank == 0

    def test_uniform_atom_cases(self):
        u = AtomU(PQ)
        assert modify_atomic(u, unitary_cmd("CNOT", "p", "q")) is u
        assert modify_atomic(u, unitary_cmd("H", "r")) is u
        assert not is_defined(modify_atomic(u, unitary_cmd("CNOT", "q", "r")))
        assert modify_atomic(u, Init("r", 2)) is u
        assert not is_defined(modify_atomic(u, Init("q", 2)))

    def test_dim_clash_raises(self):
        with pytest.raises(FormulaError):
            modify_atomic(AtomU(PQ), Init("q", 3))


class TestCeilContract:
    def test_maximality(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            mat = np.zeros((8, 8), dtype=complex)
            v = rng.normal(size=8) + 1j * rng.normal(size=8)
            w = rng.normal(size=8) + 1j * rng.normal(size=8)
            space = Subspace.from_span(np.stack([v, w], axis=1))
            proj = Projection(regs(("a", 2), ("b", 2), ("c", 2)), space)
            t = ceil_contract(proj, "b")
            pos = 1
            # containment: |0>_b (x) T sits inside P
            for k in range(t.rank):
                col = t.space.basis[:, k].reshape(2, 2)
                lifted = np.zeros((2, 2, 2), dtype=complex)
                lifted[:, 0, :] = col
                assert proj.space.contains_vector(lifted.reshape(8))

    def test_outside_vector_breaks_containment(self):
        rng = np.random.default_rng(1)
        t = np.array([[1.0, 0.0], [0.0, 0.0]])
        mat = np.kron(np.diag([1.0, 0.0]), t)  # (q, r) order: |0>_q (x) |0><0|_r
        proj = Projection(regs(("q", 2), ("r", 2)),
                          Subspace.from_projector(mat))
        got = ceil_contract(proj, "q")
        assert got.rank == 1
        for _ in range(10):
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            v /= np.linalg.norm(v)
            if got.space.contains_vector(v):
                continue
            lifted = np.kron(np.array([1.0, 0.0]), v)
            assert not proj.space.contains_vector(lifted)


class TestFormulaModification:
    def test_constants(self):
        cmd = Init("p", 2)
        assert modify_formula(Top(), cmd) == Top()
        assert modify_formula(Bot(), cmd) == Bot()

    def test_and_or_distribute(self):
        f = And(plus_atom(), Or(AtomD(Q), AtomU(Q)))
        got = modify_formula(f, unitary_cmd("H", "p"))
        assert isinstance(got, And) and isinstance(got.right, Or)
        assert formulas_equal(got.left, parse_formula("proj std.0 on [p]"))

    def test_undefined_propagates(self):
        f = And(AtomU(PQ), Top())
        assert not is_defined(modify_formula(f, Init("q", 2)))

    def test_star_unitary_per_side(self):
        f = Star(plus_atom("p"), plus_atom("q"))
        got = modify_formula(f, unitary_cmd("H", "p"))
        assert isinstance(got, Star)
        assert formulas_equal(got.left, parse_formula("proj std.0 on [p]"))
        assert formulas_equal(got.right, plus_atom("q"))

    def test_star_unitary_straddling_undefined(self):
        f = Star(plus_atom("p"), plus_atom("q"))
        assert not is_defined(modify_formula(f, unitary_cmd("CNOT", "p", "q")))

    def test_star_init_untouched_register(self):
        f = Star(plus_atom("p"), plus_atom("q"))
        got = modify_formula(f, Init("r", 2))
        assert isinstance(got, Star)
        assert formulas_equal(got, f)

    def test_star_init_one_side(self):
        f = Star(parse_formula("proj Phi+ on [p,q]"), plus_atom("r"))
        got = modify_formula(f, Init("q", 2))
        # shape: (left[cmd] /\ right[cmd]) /\ (D[p] * D[r])
        assert isinstance(got, And)
        assert isinstance(got.left, And)
        assert isinstance(got.right, Star)
        assert free(got.right.left) == P
        assert free(got.right.right) == regs(("r", 2))
        assert formulas_equal(got.left.right, plus_atom("r"))

    def test_star_init_shared_register_undefined(self):
        f = Star(AtomD(P), AtomD(P))
        assert not is_defined(modify_formula(f, Init("p", 2)))

    def test_implication_undefined(self):
        f = Imp(plus_atom(), plus_atom())
        assert not is_defined(modify_formula(f, Init("p", 2)))

    def test_free_registers_preserved(self):
        cases = [
            (parse_formula("proj Phi+ on [p,q]"), unitary_cmd("CNOT", "p", "q")),
            (parse_formula("proj Phi+ on [p,q]"), Init("q", 2)),
            (And(AtomD(PQ), AtomU(P)), unitary_cmd("H", "p")),
            (Star(plus_atom("p"), AtomU(Q)), Init("p", 2)),
            (parse_formula("U[p,q] \\/ D[p,q]"), unitary_cmd("CZ", "p", "q")),
        ]
        for f, cmd in cases:
            got = modify_formula(f, cmd)
            assert is_defined(got)
            assert free(got) == free(f)

    def test_unsatisfiable_when_command_cannot_establish(self):
        # no state right after q := |0> is entangled with q, and the
        # modification knows it: the contracted projection collapses
        post = parse_formula("proj Phi+ on [p,q]")
        pre = modify_formula(post, Init("q", 2))
        assert is_defined(pre)
        rng = np.random.default_rng(6)
        assert sample_satisfying(pre, rng, domain=PQ) is None

    def test_modified_states_run_into_original(self):
        # the defining property: satisfy the modification, run the
        # command, land in the original formula
        rng = np.random.default_rng(2)
        prog_of = {
            "h": parse_program("p := H[p]"),
            "cx": parse_program("p, q := CNOT[p, q]"),
            "init": parse_program("q := |0>"),
        }
        plus_zero = parse_formula("proj [[0.5,0,0.5,0],[0,0,0,0],"
                                  "[0.5,0,0.5,0],[0,0,0,0]] on [p,q]")
        cases = [
            (plus_atom("p"), prog_of["h"].body, prog_of["h"]),
            (parse_formula("proj Phi+ on [p,q]"), prog_of["cx"].body,
             prog_of["cx"]),
            (plus_zero, prog_of["init"].body, prog_of["init"]),
            (Star(plus_atom("p"), parse_formula("proj std.0 on [q]")),
             prog_of["init"].body, prog_of["init"]),
        ]
        for post, cmd, prog in cases:
            pre = modify_formula(post, cmd)
            assert is_defined(pre)
            dom = free(post) | prog.regs
            hits = 0
            for _ in range(40):
                rho = sample_satisfying(pre, rng, domain=dom)
                if rho is None:
                    continue
                hits += 1
                assert satisfies(denote(prog, rho), post, atol=1e-7)
            assert hits > 0


def depolarizing(p_regs):
    d = p_regs.dim
    paulis = [np.eye(2), np.array([[0, 1], [1, 0]]),
              np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
    return QuantumOperation(p_regs, tuple(m / 2 for m in paulis))


class TestEModify:
    def test_identity_channel(self):
        e = QuantumOperation(P, (np.eye(2),))
        atom = plus_atom()
        got = e_modify(atom, e)
        assert formulas_equal(got, atom)

    def test_unitary_channel_matches_modification(self):
        h = builtin_unitary("H", (2,))
        e = QuantumOperation(P, (h,))
        got = e_modify(plus_atom(), e)
        want = modify_atomic(plus_atom(), unitary_cmd("H", "p"))
        assert formulas_equal(got, want)

    def test_depolarizing_kills_proper_projection(self):
        got = e_modify(parse_formula("proj std.0 on [p]"), depolarizing(P))
        assert got.proj.rank == 0

    def test_depolarizing_keeps_identity(self):
        got = e_modify(parse_formula("proj Id on [p]"), depolarizing(P))
        assert got.proj.rank == 2

    def test_disjoint_channel_unchanged(self):
        atom = plus_atom()
        e = QuantumOperation(Q, (np.eye(2),))
        assert e_modify(atom, e) is atom

    def test_partial_overlap_undefined(self):
        bell = parse_formula("proj Phi+ on [p,q]")
        paulis = [np.eye(2), np.array([[0, 1], [1, 0]]),
                  np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
        e = QuantumOperation(regs(("q", 2), ("r", 2)),
                             tuple(np.kron(m / 2, np.eye(2)) for m in paulis))
        assert not is_defined(e_modify(bell, e))

    def test_star_and_atoms_uncovered(self):
        e = QuantumOperation(P, (np.eye(2),))
        assert not is_defined(e_modify(Star(Top(), Top()), e))
        assert not is_defined(e_modify(AtomD(P), e))
        assert not is_defined(e_modify(AtomU(P), e))

    def test_biconditional_on_unital_channel(self):
        # phase damping is unital: check both directions of the pullback
        rng = np.random.default_rng(3)
        k0 = np.diag([1.0, np.sqrt(0.5)])
        k1 = np.diag([0.0, np.sqrt(0.5)])
        e = QuantumOperation(P, (k0, k1))
        post = parse_formula("proj std.1 on [p]")
        pre = e_modify(post, e)
        assert is_defined(pre)
        for _ in range(30):
            rho = sample_satisfying(Top(), rng, domain=PQ)
            out = QState(PQ, _apply_on(e, rho), validate=False)
            assert satisfies(rho, pre, atol=1e-8) == satisfies(out, post,
                                                               atol=1e-8)

    def test_trace_increasing_rejected(self):
        with pytest.raises(FormulaError):
            QuantumOperation(P, (2 * np.eye(2),))


def _apply_on(e, rho):
    from qseplogic.state import sandwich

    positions = sorted(rho.domain.index(n) for n in e.domain.names)
    out = np.zeros_like(rho.mat)
    for k in e.kraus:
        out = out + sandwich(rho.mat, rho.domain.dims, positions, k)
    return out


class TestOperationOfProgram:
    def test_matches_denotation(self):
        rng = np.random.default_rng(4)
        texts = [
            "p := H[p]; q := |0>; p, q := CNOT[p, q]",
            "if std[p] = 0 -> q := X[q] [] 1 -> skip fi",
            "p := |0>; if std[q] = 0 -> skip [] 1 -> q := Z[q] fi; p := H[p]",
        ]
        for text in texts:
            prog = parse_program(text)
            op = operation_of_program(prog)
            assert op.domain == prog.regs
            for _ in range(5):
                rho = sample_satisfying(Top(), rng, domain=prog.regs)
                via_kraus = QState(prog.regs, op.apply(rho.mat),
                                   validate=False)
                assert states_equal(via_kraus, denote(prog, rho))

    def test_loops_rejected(self):
        prog = parse_program("while std[p] = 1 do p := H[p] od")
        with pytest.raises(Exception):
            operation_of_program(prog)
