"""Rule checking, proof walking, and proof-script round-trips."""

import numpy as np
import pytest

from qseplogic.assertion import (
    And,
    AtomProj,
    AtomU,
    Or,
    Star,
    Top,
    formulas_equal,
    parse_formula,
    print_formula,
)
from qseplogic.linalg import eigenspace_one, partial_trace
from qseplogic.modification import QuantumOperation, modify_formula
from qseplogic.oracle import NoCounterexample, validate_triple
from qseplogic.program import Program, dual_wp, parse_program
from qseplogic.proofsys import (
    Judgment,
    ProofError,
    ProofNode,
    check_proof,
    check_rule,
    judgments_equal,
    parse_proof,
    print_proof,
)
from qseplogic.state import Projection, RegSet, StateError, embed_operator


def triple(pre: str, prog_text: str, post: str, dims=None) -> Judgment:
    prog = parse_program(prog_text)
    scope = {d.name: d.dim for d in prog.regs}
    scope.update(dims or {})
    return Judgment(parse_formula(pre, scope), prog, parse_formula(post, scope))


def leaf(pre: str, prog: str, post: str, trials: int = 0) -> ProofNode:
    # a vacuous Oracle leaf; handy as a given premise in local checks
    return ProofNode("Oracle", triple(pre, prog, post),
                     evidence={"trials": trials, "seed": 0})


def failed_condition(report) -> str:
    names = [d for d, ok in report.conditions if not ok]
    assert names, f"nothing failed in {report!r}"
    return names[0]


PLUS = "proj [[0.5,0.5],[0.5,0.5]] on [q]"

# sends every input to the uniform qubit: reset, rotate, measure
RANDOMIZE_Q = "q := |0>; q := H[q]; if std[q] = 0 -> skip [] 1 -> skip fi"


class TestJudgment:
    def test_rejects_implication_in_pre(self):
        prog = parse_program("skip")
        phi = parse_formula("proj std.0 on [q] -> proj std.0 on [q]")
        with pytest.raises(ProofError):
            Judgment(phi, prog, Top())

    def test_rejects_implication_in_post(self):
        prog = parse_program("skip")
        phi = parse_formula("proj std.0 on [q] -> proj std.0 on [q]")
        with pytest.raises(ProofError):
            Judgment(Top(), prog, phi)

    def test_rejects_dimension_clash(self):
        prog = parse_program("p,q,r := U_enc[p,q,r]")  # forces p to a qutrit
        with pytest.raises(StateError):
            Judgment(parse_formula("U[p]"), prog, Top())

    def test_judgments_equal(self):
        a = triple("top", "q := H[q]", "U[q]")
        b = triple("top", "q := H[q]", "U[q]")
        c = triple("top", "q := X[q]", "U[q]")
        assert judgments_equal(a, b)
        assert not judgments_equal(a, c)


class TestSkipRule:
    def test_ok(self):
        n = ProofNode("Skip", triple("proj Phi+ on [p,q]", "skip",
                                     "proj Phi+ on [p,q]"))
        assert check_rule(n).status == "ok"

    def test_pre_post_mismatch(self):
        n = ProofNode("Skip", triple("proj std.0 on [q]", "skip",
                                     "proj std.1 on [q]"))
        r = check_rule(n)
        assert r.status == "failed"
        assert failed_condition(r) == "precondition equals the postcondition"

    def test_wrong_program(self):
        n = ProofNode("Skip", triple("top", "q := H[q]", "top"))
        assert failed_condition(check_rule(n)) == "program is skip"


class TestInitRule:
    def test_untouched_uniformity(self):
        n = ProofNode("Init", triple("U[p]", "q := |0>", "U[p]"))
        assert check_rule(n).ok

    def test_undefined_modification(self):
        n = ProofNode("Init", triple("U[q]", "q := |0>", "U[q]"))
        r = check_rule(n)
        assert not r.ok
        assert failed_condition(r) == "postcondition modification is defined"

    def test_projection_contraction(self):
        prog = parse_program("q := |0>")
        post = parse_formula("proj Phi+ on [p,q]")
        pre = modify_formula(post, prog.body)
        assert check_rule(ProofNode("Init", Judgment(pre, prog, post))).ok
        bad = ProofNode("Init", Judgment(post, prog, post))
        assert not check_rule(bad).ok


class TestUnitRule:
    def test_hadamard_pullback(self):
        n = ProofNode("Unit", triple(PLUS, "q := H[q]", "proj std.0 on [q]"))
        assert check_rule(n).ok

    def test_cnot_bell_pullback(self):
        plus0 = np.zeros((4, 4), dtype=complex)
        v = np.array([1, 0, 1, 0], dtype=complex) / np.sqrt(2)  # |+>|0>
        plus0 = np.outer(v, v.conj())
        rows = ",".join("[" + ",".join(repr(float(x.real)) for x in row) + "]"
                        for row in plus0)
        n = ProofNode("Unit", triple(f"proj [{rows}] on [p,q]",
                                     "p,q := CNOT[p,q]", "proj Phi+ on [p,q]"))
        assert check_rule(n).ok

    def test_wrong_pre(self):
        n = ProofNode("Unit", triple("proj std.0 on [q]", "q := H[q]",
                                     "proj std.0 on [q]"))
        r = check_rule(n)
        assert failed_condition(r) == "precondition is the modified postcondition"


class TestPermRule:
    CYCLE = "a,b,c := perm(a,b,c->b,c,a)[a,b,c]"

    def test_three_cycle(self):
        n = ProofNode("Perm", triple("proj std.1 on [b]", self.CYCLE,
                                     "proj std.1 on [a]"))
        assert check_rule(n).ok

    def test_matches_weakest_precondition(self):
        # the renaming direction agrees with the dual-channel oracle
        prog = parse_program(self.CYCLE)
        post = parse_formula("proj std.1 on [a]")
        pre = parse_formula("proj std.1 on [b]")
        lifted = embed_operator(post.proj.matrix(), post.proj.domain, prog.regs)
        wp = dual_wp(prog, Projection.from_matrix(prog.regs, lifted))
        want = embed_operator(pre.proj.matrix(), pre.proj.domain, prog.regs)
        assert wp.equiv(Projection.from_matrix(prog.regs, want))

    def test_wrong_direction(self):
        n = ProofNode("Perm", triple("proj std.1 on [c]", self.CYCLE,
                                     "proj std.1 on [a]"))
        assert not check_rule(n).ok

    def test_gate_must_name_its_registers(self):
        # the text parser refuses this shape, so build the gate by hand
        from qseplogic.program import Unitary
        from qseplogic.state import permutation_unitary

        stmt = Unitary(("a", "b"), (2, 2), "perm(b,a->a,b)",
                       permutation_unitary([2, 2], [1, 0]))
        prog = Program(stmt, RegSet.from_pairs([("a", 2), ("b", 2)]))
        dims = {"a": 2, "b": 2}
        n = ProofNode("Perm", Judgment(parse_formula("proj std.0 on [a]", dims),
                                       prog,
                                       parse_formula("proj std.0 on [b]", dims)))
        r = check_rule(n)
        assert failed_condition(r) == "gate names the registers it is applied to"

    def test_not_a_permutation(self):
        n = ProofNode("Perm", triple("top", "q := H[q]", "top"))
        assert failed_condition(check_rule(n)) == "program is a single permutation gate"


class TestSeqRule:
    def test_chain(self):
        p1 = leaf("top", "q := |0>", "proj std.0 on [q]")
        p2 = leaf("proj std.0 on [q]", "q := H[q]", PLUS)
        n = ProofNode("Seq", triple("top", "q := |0>; q := H[q]", PLUS),
                      (p1, p2))
        assert check_rule(n).ok

    def test_seam_mismatch(self):
        p1 = leaf("top", "q := |0>", "proj std.1 on [q]")
        p2 = leaf("proj std.0 on [q]", "q := H[q]", PLUS)
        n = ProofNode("Seq", triple("top", "q := |0>; q := H[q]", PLUS),
                      (p1, p2))
        assert failed_condition(check_rule(n)) == "premises 0 and 1 agree at the seam"

    def test_program_mismatch(self):
        p1 = leaf("top", "q := |0>", "proj std.0 on [q]")
        p2 = leaf("proj std.0 on [q]", "q := H[q]", PLUS)
        n = ProofNode("Seq", triple("top", "q := |0>", PLUS), (p1, p2))
        r = check_rule(n)
        assert failed_condition(r) == "premise programs concatenate to the conclusion program"

    def test_needs_two(self):
        p1 = leaf("top", "skip", "top")
        n = ProofNode("Seq", triple("top", "skip", "top"), (p1,))
        assert failed_condition(check_rule(n)) == "at least two premises"


MEASURE_FIX = "if std[q] = 0 -> skip [] 1 -> q := X[q] fi"


def rif_node() -> ProofNode:
    p0 = leaf("top * proj std.0 on [q]", "skip", "proj std.0 on [q]")
    p1 = leaf("top * proj std.1 on [q]", "q := X[q]", "proj std.0 on [q]")
    return ProofNode("RIf", triple("top * proj Id on [q]", MEASURE_FIX,
                                   "proj std.0 on [q]"), (p0, p1))


class TestRIfRule:
    def test_measure_and_correct(self):
        assert check_rule(rif_node()).ok

    def test_post_must_merge(self):
        p0 = leaf("top * proj std.0 on [q]", "skip",
                  "proj std.0 on [q] \\/ proj std.1 on [q]")
        p1 = leaf("top * proj std.1 on [q]", "q := X[q]",
                  "proj std.0 on [q] \\/ proj std.1 on [q]")
        n = ProofNode("RIf", triple("top * proj Id on [q]", MEASURE_FIX,
                                    "proj std.0 on [q] \\/ proj std.1 on [q]"),
                      (p0, p1))
        r = check_rule(n)
        assert failed_condition(r) == "postcondition admits classical merging"

    def test_pre_needs_full_domain_star(self):
        n = ProofNode("RIf", triple("top", MEASURE_FIX, "proj std.0 on [q]"))
        r = check_rule(n)
        assert failed_condition(r) == "precondition stars the full measured domain"

    def test_wrong_arm_program(self):
        p0 = leaf("top * proj std.0 on [q]", "q := Z[q]", "proj std.0 on [q]")
        p1 = leaf("top * proj std.1 on [q]", "q := X[q]", "proj std.0 on [q]")
        n = ProofNode("RIf", triple("top * proj Id on [q]", MEASURE_FIX,
                                    "proj std.0 on [q]"), (p0, p1))
        assert failed_condition(check_rule(n)) == "premise 0 runs the '0' arm"

    def test_premise_count(self):
        p0 = leaf("top * proj std.0 on [q]", "skip", "proj std.0 on [q]")
        n = ProofNode("RIf", triple("top * proj Id on [q]", MEASURE_FIX,
                                    "proj std.0 on [q]"), (p0,))
        assert failed_condition(check_rule(n)) == "one premise per outcome"


FLIP_LOOP = "while std[q] = 1 do q := X[q] od"


def rloop_node() -> ProofNode:
    body = leaf("top * proj std.1 on [q]", "q := X[q]", "top * proj Id on [q]")
    return ProofNode("RLoop", triple("top * proj Id on [q]", FLIP_LOOP,
                                     "top /\\ proj std.0 on [q]"), (body,))


class TestRLoopRule:
    def test_flip_until_zero(self):
        assert check_rule(rloop_node()).ok

    def test_invariant_must_merge(self):
        inv = "(proj std.0 on [p] \\/ proj std.1 on [p])"
        body = leaf(f"{inv} * proj std.1 on [q]", "q := X[q]",
                    f"{inv} * proj Id on [q]")
        n = ProofNode("RLoop", triple(f"{inv} * proj Id on [q]", FLIP_LOOP,
                                      f"{inv} /\\ proj std.0 on [q]"), (body,))
        assert failed_condition(check_rule(n)) == "invariant admits classical merging"

    def test_exit_post_shape(self):
        body = leaf("top * proj std.1 on [q]", "q := X[q]",
                    "top * proj Id on [q]")
        n = ProofNode("RLoop", triple("top * proj Id on [q]", FLIP_LOOP,
                                      "top /\\ proj std.1 on [q]"), (body,))
        r = check_rule(n)
        assert failed_condition(r) == "postcondition is the invariant with the exit outcome range"


class TestWeakRule:
    def test_proved_both_sides(self):
        prem = leaf("proj Phi+ on [p,q]", "skip", "proj Phi+ on [p,q]")
        n = ProofNode("Weak", triple("proj Phi+ on [p,q]", "skip", "U[p]"),
                      (prem,))
        assert check_rule(n).status == "ok"

    def test_unsettled_entailment(self):
        span = "proj [[1,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,1]] on [p,q]"
        prem = leaf("top", "skip", f"{span} /\\ U[q]")
        n = ProofNode("Weak", triple("top", "skip", "U[p]"), (prem,))
        r = check_rule(n)
        assert r.status == "unproved entailment"
        assert not r.ok

    def test_refuted_entailment(self):
        prem = leaf("top", "skip", "proj std.0 on [q]")
        n = ProofNode("Weak", triple("top", "skip", "proj std.1 on [q]"),
                      (prem,))
        r = check_rule(n)
        assert r.status == "failed"
        assert "refuted" in r.detail


class TestConjDisj:
    def premises(self):
        return (leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]"),
                leaf("proj Id on [q]", "q := X[q]", "proj Id on [q]"))

    def test_conj(self):
        n = ProofNode("Conj", triple("proj std.0 on [q] /\\ proj Id on [q]",
                                     "q := X[q]",
                                     "proj std.1 on [q] /\\ proj Id on [q]"),
                      self.premises())
        assert check_rule(n).ok

    def test_disj(self):
        n = ProofNode("Disj", triple("proj std.0 on [q] \\/ proj Id on [q]",
                                     "q := X[q]",
                                     "proj std.1 on [q] \\/ proj Id on [q]"),
                      self.premises())
        assert check_rule(n).ok

    def test_wrong_connective(self):
        n = ProofNode("Conj", triple("proj std.0 on [q] \\/ proj Id on [q]",
                                     "q := X[q]",
                                     "proj std.1 on [q] \\/ proj Id on [q]"),
                      self.premises())
        assert not check_rule(n).ok


class TestConstRule:
    def test_adds_untouched_conjunct(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("Const", triple("proj std.0 on [q] /\\ U[r]", "q := X[q]",
                                      "proj std.1 on [q] /\\ U[r]"), (prem,))
        assert check_rule(n).ok

    def test_conjunct_must_avoid_program(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("Const", triple("proj std.0 on [q] /\\ U[q]", "q := X[q]",
                                      "proj std.1 on [q] /\\ U[q]"), (prem,))
        r = check_rule(n)
        assert failed_condition(r) == "side assertion avoids the program registers"

    def test_same_conjunct_on_both_sides(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("Const", triple("proj std.0 on [q] /\\ U[r]", "q := X[q]",
                                      "proj std.1 on [q] /\\ U[p]"), (prem,))
        assert failed_condition(check_rule(n)) == "postcondition conjoins the same side assertion"


class TestFrameRule:
    def test_containment_route(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("Frame", triple("proj std.0 on [q] * proj std.0 on [r]",
                                      "q := X[q]",
                                      "proj std.1 on [q] * proj std.0 on [r]"),
                      (prem,))
        assert check_rule(n).ok

    def test_strictly_positive_route(self):
        # post registers escape the empty pre, so only SP membership admits it
        prem = leaf("top", "q := H[q]", "U[q]")
        n = ProofNode("Frame", triple("top * proj std.0 on [r]", "q := H[q]",
                                      "U[q] * proj std.0 on [r]"), (prem,))
        assert check_rule(n).ok

    def test_escaping_non_sp_post_rejected(self):
        prem = leaf("top", "q := H[q]",
                    "proj std.0 on [q] \\/ proj std.1 on [q]")
        n = ProofNode("Frame",
                      triple("top * proj std.0 on [r]", "q := H[q]",
                             "(proj std.0 on [q] \\/ proj std.1 on [q])"
                             " * proj std.0 on [r]"),
                      (prem,))
        r = check_rule(n)
        assert failed_condition(r) == (
            "postcondition stays inside the precondition or is strictly positive")

    def test_frame_must_avoid_program(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("Frame", triple("proj std.0 on [q] * proj Id on [q,r]",
                                      "q := X[q]",
                                      "proj std.1 on [q] * proj Id on [q,r]"),
                      (prem,))
        assert failed_condition(check_rule(n)) == "frame avoids the program registers"


def frameu_node() -> ProofNode:
    prem = leaf("top", RANDOMIZE_Q, "U[q]")
    return ProofNode("FrameU", triple("U[r]", RANDOMIZE_Q, "U[q,r]"), (prem,))


class TestFrameURule:
    def test_scales_uniformity(self):
        r = check_rule(frameu_node())
        assert r.status == "ok"
        assert ("frame expansion reaches the same verdict", True) in r.conditions

    def test_freshness_violation(self):
        prem = leaf("top", RANDOMIZE_Q, "U[q]")
        n = ProofNode("FrameU", triple("U[q]", RANDOMIZE_Q, "U[q]"), (prem,))
        r = check_rule(n)
        assert not r.ok
        assert ("frame expansion reaches the same verdict", True) in r.conditions

    def test_wrong_joint_post(self):
        prem = leaf("top", RANDOMIZE_Q, "U[q]")
        n = ProofNode("FrameU", triple("U[r]", RANDOMIZE_Q, "U[q]"), (prem,))
        r = check_rule(n)
        assert not r.ok
        assert ("frame expansion reaches the same verdict", True) in r.conditions

    def test_premise_pre_must_be_top(self):
        prem = leaf("U[q]", RANDOMIZE_Q, "U[q]")
        n = ProofNode("FrameU", triple("U[r]", RANDOMIZE_Q, "U[q,r]"), (prem,))
        assert failed_condition(check_rule(n)) == "premise precondition is top"


def phase_damp(names: tuple[str, ...]) -> QuantumOperation:
    regs = RegSet.from_pairs((n, 2) for n in names)
    ks = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    full = []
    for k in ks:
        m = k
        for _ in names[1:]:
            m = np.kron(m, np.eye(2))
        full.append(m)
    return QuantumOperation(regs, tuple(full))


class TestUnCRRule:
    def test_disjoint_channel_is_inert(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("UnCR", triple("proj std.0 on [q]", "q := X[q]",
                                     "proj std.1 on [q]"), (prem,),
                      evidence={"op": phase_damp(("r",))})
        assert check_rule(n).ok

    def test_channel_must_avoid_program(self):
        prem = leaf("proj std.0 on [q]", "q := X[q]", "proj std.1 on [q]")
        n = ProofNode("UnCR", triple("proj std.0 on [q]", "q := X[q]",
                                     "proj std.1 on [q]"), (prem,),
                      evidence={"op": phase_damp(("q",))})
        assert failed_condition(check_rule(n)) == "operation registers avoid the program"

    def test_partial_overlap_is_undefined(self):
        prem = leaf("proj std.0 on [q]", "p := X[p]", "proj std.0 on [q]")
        n = ProofNode("UnCR", triple("proj std.0 on [q]", "p := X[p]",
                                     "proj std.0 on [q]"), (prem,),
                      evidence={"op": phase_damp(("q", "r"))})
        assert failed_condition(check_rule(n)) == "premise precondition transforms"

    def test_needs_operation_evidence(self):
        prem = leaf("top", "skip", "top")
        n = ProofNode("UnCR", triple("top", "skip", "top"), (prem,))
        assert failed_condition(check_rule(n)) == "evidence carries a quantum operation"


def pepr_bell_node() -> ProofNode:
    prem = leaf("proj Phi+ on [p,m]", "p := Z[p]", "proj Phi- on [p,m]")
    return ProofNode("PEPR", triple("proj std.0 on [p]", "p := Z[p]",
                                    "proj std.0 on [p]"), (prem,),
                     evidence={"pairs": (("p", "m"),)})


class TestPEPRRule:
    def test_bell_pullback(self):
        assert check_rule(pepr_bell_node()).ok

    def test_complex_evidence_matches_hand_computation(self):
        # Q = |v><v| with v = (|0> + i|1>)/sqrt(2); the pulled-back
        # precondition is 2 tr_m((Q_m (x) I) Phi+ (Q_m (x) I))
        v = np.array([1.0, 1.0j]) / np.sqrt(2)
        q = np.outer(v, v.conj())
        bell = np.zeros((4, 4), dtype=complex)
        for i in (0, 3):
            for j in (0, 3):
                bell[i, j] = 0.5
        lifted = np.kron(q, np.eye(2))  # canonical order [m, p]
        red = 2 * partial_trace(lifted @ bell @ lifted, [2, 2], [1])
        regs_p = RegSet.from_pairs([("p", 2)])
        pre = AtomProj(Projection(regs_p, eigenspace_one(red)))
        post = AtomProj(Projection(regs_p, eigenspace_one(q)))
        prem = leaf("proj Phi+ on [p,m]", "skip", "proj Phi+ on [p,m]")
        prog = parse_program("skip")
        good = ProofNode("PEPR", Judgment(pre, prog, post), (prem,),
                         evidence={"pairs": (("p", "m"),)})
        assert check_rule(good).ok
        # the conjugate transport is not the identity on complex evidence
        bad = ProofNode("PEPR", Judgment(post, prog, post), (prem,),
                        evidence={"pairs": (("p", "m"),)})
        assert not check_rule(bad).ok

    def test_pair_order_drives_the_transport(self):
        # mirror of (a, b) is (y, x), so the pairing crosses canonical order
        vec = np.zeros(16, dtype=complex)
        dims = (2, 2, 2, 2)  # canonical [a, b, x, y]
        for i in range(2):
            for j in range(2):
                vec[np.ravel_multi_index((i, j, j, i), dims)] = 0.5
        regs = RegSet.from_pairs([("a", 2), ("b", 2), ("x", 2), ("y", 2)])
        psi = AtomProj(Projection.from_vector(regs, vec))
        regs_ab = RegSet.from_pairs([("a", 2), ("b", 2)])
        q01 = np.zeros((4, 4), dtype=complex)
        q01[1, 1] = 1.0  # |01><01| on [a, b]
        q = AtomProj(Projection.from_matrix(regs_ab, q01))
        prog = parse_program("skip")
        prem = ProofNode("Skip", Judgment(psi, prog, psi))
        good = ProofNode("PEPR", Judgment(q, prog, q), (prem,),
                         evidence={"pairs": (("a", "y"), ("b", "x"))})
        assert check_rule(good).ok
        crossed = ProofNode("PEPR", Judgment(q, prog, q), (prem,),
                            evidence={"pairs": (("a", "x"), ("b", "y"))})
        assert not check_rule(crossed).ok

    def test_premise_post_must_be_entangled(self):
        prem = leaf("proj Phi+ on [p,m]", "p := Z[p]",
                    "proj [[1,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]] on [p,m]")
        n = ProofNode("PEPR", triple("proj std.0 on [p]", "p := Z[p]",
                                     "proj std.0 on [p]"), (prem,),
                      evidence={"pairs": (("p", "m"),)})
        r = check_rule(n)
        assert failed_condition(r) == (
            "premise postcondition is maximally entangled across the halves")

    def test_program_must_stay_in_system_half(self):
        prem = leaf("proj Phi+ on [p,m]", "m := Z[m]", "proj Phi- on [p,m]")
        n = ProofNode("PEPR", triple("proj std.0 on [p]", "m := Z[m]",
                                     "proj std.0 on [p]"), (prem,),
                      evidence={"pairs": (("p", "m"),)})
        assert failed_condition(check_rule(n)) == "program registers lie in the system half"

    def test_pairing_must_cover_premise(self):
        prem = leaf("proj Phi+ on [p,m]", "p := Z[p]", "proj Phi- on [p,m]")
        n = ProofNode("PEPR", triple("proj std.0 on [p]", "p := Z[p]",
                                     "proj std.0 on [p]"), (prem,),
                      evidence={"pairs": (("p", "w"),)})
        assert failed_condition(check_rule(n)) == "pairing covers the premise projection exactly"


class TestOracleRule:
    def test_empirical_pass(self):
        n = ProofNode("Oracle", triple("top", RANDOMIZE_Q, "U[q]"),
                      evidence={"trials": 40, "seed": 3})
        r = check_rule(n)
        assert r.status == "empirical"
        assert r.ok

    def test_counterexample_fails(self):
        n = ProofNode("Oracle", triple("top", "q := H[q]", "U[q]"),
                      evidence={"trials": 40, "seed": 3})
        r = check_rule(n)
        assert r.status == "failed"
        assert "breaking the triple" in r.detail

    def test_bad_evidence(self):
        n = ProofNode("Oracle", triple("top", "skip", "top"),
                      evidence={"trials": -1, "seed": 0})
        assert not check_rule(n).ok


class TestCheckProof:
    def tree(self) -> ProofNode:
        init = leaf("top", "q := |0>", "proj std.0 on [q]", trials=15)
        unit = ProofNode("Unit", triple("proj std.0 on [q]", "q := H[q]", PLUS))
        return ProofNode("Seq", triple("top", "q := |0>; q := H[q]", PLUS),
                         (init, unit))

    def test_full_tree(self):
        rep = check_proof(self.tree())
        assert rep.ok
        assert [p for p, _ in rep.rows] == ["0", "0.0", "0.1"]
        assert rep.empirical == ("0.0",)
        assert rep.failures == ()

    def test_checking_is_local(self):
        # the broken premise fails on its own; the parent still lines up
        bad = ProofNode("Skip", triple("proj std.0 on [q]", "skip",
                                       "proj std.1 on [q]"))
        tail = leaf("proj std.1 on [q]", "q := X[q]", "proj std.0 on [q]")
        root = ProofNode("Seq", triple("proj std.0 on [q]", "skip; q := X[q]",
                                       "proj std.0 on [q]"), (bad, tail))
        rep = check_proof(root)
        assert not rep.ok
        assert rep.failures == ("0.0",)
        assert dict(rep.rows)["0"].ok

    def test_cycle_detection(self):
        node = ProofNode("Skip", triple("top", "skip", "top"))
        object.__setattr__(node, "premises", (node,))
        with pytest.raises(ProofError, match="cycle"):
            check_proof(node)

    def test_unknown_rule_rejected(self):
        with pytest.raises(ProofError):
            ProofNode("Sorcery", triple("top", "skip", "top"))


class TestScripts:
    def test_parse_with_inference_and_comments(self):
        text = """
        ; resetting q cannot disturb uniformity elsewhere
        (rule Init (pre _) (prog "q := |0>") (post "U[p]"))
        """
        n = parse_proof(text)
        assert n.rule == "Init"
        assert formulas_equal(n.conclusion.pre, AtomU(RegSet.from_pairs([("p", 2)])))
        assert check_rule(n).ok

    def test_unit_inference(self):
        n = parse_proof('(rule Unit (pre _) (prog "q := H[q]")'
                        ' (post "proj std.0 on [q]"))')
        assert check_rule(n).ok

    def test_perm_inference(self):
        n = parse_proof('(rule Perm (pre _)'
                        ' (prog "a,b,c := perm(a,b,c->b,c,a)[a,b,c]")'
                        ' (post "proj std.1 on [a]"))')
        assert check_rule(n).ok
        assert print_formula(n.conclusion.pre) == "proj std.1 on [b]"

    def test_seq_stitching(self):
        text = """
        (rule Seq (pre _) (prog _) (post _)
          (premises
            (rule Init (pre _) (prog "q := |0>") (post "proj std.0 on [q]"))
            (rule Unit (pre _) (prog "q := H[q]")
              (post "proj [[0.5,0.5],[0.5,0.5]] on [q]"))))
        """
        n = parse_proof(text)
        assert check_proof(n).ok
        want = parse_formula("D[q] /\\ proj [[1.0]] on []", {"q": 2})
        assert formulas_equal(n.conclusion.pre, want)

    def test_pepr_inference(self):
        text = """
        (rule PEPR (pre _) (prog "p := Z[p]") (post "proj std.0 on [p]")
          (evidence (pair p m))
          (premises
            (rule Oracle (pre "proj Phi+ on [p,m]") (prog "p := Z[p]")
              (post "proj Phi- on [p,m]") (evidence (trials 20) (seed 1)))))
        """
        n = parse_proof(text)
        assert check_proof(n).ok
        want = parse_formula("proj std.0 on [p]", {"p": 2})
        assert formulas_equal(n.conclusion.pre, want)

    def test_inference_needs_leverage(self):
        with pytest.raises(ProofError):
            parse_proof('(rule Weak (pre _) (prog "skip") (post "top"))')
        with pytest.raises(ProofError):
            parse_proof('(rule Init (pre _) (prog "q := |0>") (post "U[q]"))')

    def test_roundtrips(self):
        nodes = [
            rif_node(),
            rloop_node(),
            frameu_node(),
            pepr_bell_node(),
            ProofNode("UnCR", triple("proj std.0 on [q]", "q := X[q]",
                                     "proj std.1 on [q]"),
                      (leaf("proj std.0 on [q]", "q := X[q]",
                            "proj std.1 on [q]"),),
                      evidence={"op": phase_damp(("r",))}),
            ProofNode("Oracle", triple("top", RANDOMIZE_Q, "U[q]"),
                      evidence={"trials": 25, "seed": 9}),
        ]
        for node in nodes:
            text = print_proof(node)
            again = parse_proof(text)
            assert print_proof(again) == text
            assert judgments_equal(node.conclusion, again.conclusion)
            assert len(again.premises) == len(node.premises)

    def test_reparsed_oracle_checks_identically(self):
        node = ProofNode("Oracle", triple("top", RANDOMIZE_Q, "U[q]"),
                         evidence={"trials": 25, "seed": 9})
        again = parse_proof(print_proof(node))
        assert again.evidence["trials"] == 25
        assert again.evidence["seed"] == 9
        assert check_rule(again).status == "empirical"

    def test_uncr_evidence_roundtrip(self):
        node = ProofNode("UnCR", triple("proj std.0 on [q]", "q := X[q]",
                                        "proj std.1 on [q]"),
                         (leaf("proj std.0 on [q]", "q := X[q]",
                               "proj std.1 on [q]"),),
                         evidence={"op": phase_damp(("r",))})
        again = parse_proof(print_proof(node))
        op = again.evidence["op"]
        assert op.domain.names == ("r",)
        assert len(op.kraus) == 2
        assert check_rule(again).ok

    @pytest.mark.parametrize("text", [
        "",
        "(rule Sorcery (pre \"top\") (prog \"skip\") (post \"top\"))",
        "(rule Skip (pre \"top\") (prog \"skip\"))",
        "(rule Skip (pre \"top\") (pre \"top\") (prog \"skip\") (post \"top\"))",
        "(rule Skip (pre \"top\") (prog \"skip\") (post \"top\")",
        "(rule Skip (pre \"top\") (prog \"skip\") (post \"top\"))) extra",
        "(rule Skip (pre \"top\") (prog \"skip\") (post \"top\") (evidence (seed 1)))",
        '(rule Skip (pre "t\\qop") (prog "skip") (post "top"))',
    ])
    def test_script_errors(self, text):
        with pytest.raises(ProofError):
            parse_proof(text)

    def test_builtin_qutrit_gate_scope(self):
        # the program fixes p,q,r at dimension three; formulas follow
        text = """
        (rule Unit (pre _) (prog "p,q,r := U_enc[p,q,r]")
          (post "proj PS on [p,q,r]"))
        """
        n = parse_proof(text)
        assert check_rule(n).ok
        assert n.conclusion.prog.regs.dims == (3, 3, 3)


class TestEmpiricalSoundness:
    def passing_nodes(self) -> list[ProofNode]:
        nodes = [
            ProofNode("Skip", triple("proj Phi+ on [p,q]", "skip",
                                     "proj Phi+ on [p,q]")),
            ProofNode("Init", triple("U[p]", "q := |0>", "U[p]")),
            ProofNode("Unit", triple(PLUS, "q := H[q]", "proj std.0 on [q]")),
            ProofNode("Perm", triple("proj std.1 on [b]",
                                     "a,b,c := perm(a,b,c->b,c,a)[a,b,c]",
                                     "proj std.1 on [a]")),
            rif_node(),
            rloop_node(),
            frameu_node(),
            pepr_bell_node(),
            ProofNode("Weak", triple("proj Phi+ on [p,q]", "skip", "U[p]"),
                      (leaf("proj Phi+ on [p,q]", "skip",
                            "proj Phi+ on [p,q]"),)),
            # the side assertion D[r] keeps the conjunction samplable
            ProofNode("Const", triple("proj std.0 on [q] /\\ D[r]",
                                      "q := X[q]",
                                      "proj std.1 on [q] /\\ D[r]"),
                      (leaf("proj std.0 on [q]", "q := X[q]",
                            "proj std.1 on [q]"),)),
            ProofNode("Frame", triple("proj std.0 on [q] * proj std.0 on [r]",
                                      "q := X[q]",
                                      "proj std.1 on [q] * proj std.0 on [r]"),
                      (leaf("proj std.0 on [q]", "q := X[q]",
                            "proj std.1 on [q]"),)),
        ]
        return nodes

    def test_checked_rules_hold_on_random_inputs(self):
        # rule applications that pass the checker and whose premises are
        # true must yield true conclusions; 100 random inputs per node
        rng = np.random.default_rng(20240817)
        for node in self.passing_nodes():
            assert check_rule(node).ok, node.rule
            j = node.conclusion
            verdict = validate_triple(j.pre, j.prog, j.post, rng=rng,
                                      trials=100)
            assert isinstance(verdict, NoCounterexample), node.rule
            assert verdict.trials > 0, node.rule
